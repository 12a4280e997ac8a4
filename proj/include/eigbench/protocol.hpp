#pragma once

// Client side of the backend wire protocol.
//
// Every message is a frame: a 4-byte big-endian unsigned payload length
// followed by exactly that many bytes of UTF-8 JSON. The payload is a single
// JSON object carrying a string "type". Tensors travel as base64 text of
// row-major little-endian float32 values next to a "shape": [h, w] field.
//
//   -> {"type":"hello","protocol_version":1}
//   <- {"type":"hello_ack","name":...,"num_heads":K,"protocol_version":1}
//   -> {"type":"set_image","width":W,"height":H,"channels":C,"pixels":<b64>}
//   <- {"type":"ack"}
//   -> {"type":"predict","prompts":[{"row":i,"col":j,"label":0|1},...]}
//   <- {"type":"prediction","heads":[<b64>,...],"shape":[H,W],"scores":[...]?}
//
// Any side may answer with {"type":"error","message":...}.

#include <fcntl.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eigbench/backend.hpp"
#include "eigbench/core.hpp"

namespace eigbench {

using json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = std::size_t{64} << 20;
inline constexpr double kProbabilitySlack = 1e-6;

struct ProtocolError : Error {
  using Error::Error;
};

struct FramingError : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct ConnectionError : Error {
  using Error::Error;
};

/// The backend answered with an error frame.
struct BackendError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct SessionPoisoned : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Base64 and tensor codec
// ---------------------------------------------------------------------------

namespace base64 {

inline constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

/// Strict decoder: canonical padded input only.
inline std::vector<std::uint8_t> decode(std::string_view text) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (std::size_t i = 0; i < kAlphabet.size(); ++i) t[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
    return t;
  }();
  if (text.size() % 4 != 0) throw ProtocolError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    if (last && text[i + 3] == '=') pad = text[i + 2] == '=' ? 2 : 1;
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      int d = 0;
      if (j >= 4 - static_cast<std::size_t>(pad)) {
        d = 0;
      } else {
        d = table[static_cast<unsigned char>(text[i + j])];
        if (d < 0) throw ProtocolError("base64: invalid character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace base64

inline std::string encode_tensor(std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    bytes[4 * i + 0] = static_cast<std::uint8_t>(bits);
    bytes[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
    bytes[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
    bytes[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
  }
  return base64::encode(bytes);
}

inline std::vector<float> decode_tensor(std::string_view text, std::size_t expected_count) {
  const auto bytes = base64::decode(text);
  if (bytes.size() != 4 * expected_count) {
    throw ProtocolError("tensor: decoded " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(4 * expected_count));
  }
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    const std::uint32_t bits = bytes[4 * i] | (bytes[4 * i + 1] << 8) | (bytes[4 * i + 2] << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Framing
// ---------------------------------------------------------------------------

inline std::string encode_frame(const json& message) {
  const std::string payload = message.dump();
  if (payload.size() > kMaxFrameBytes) throw ProtocolError("frame: payload exceeds 64 MiB");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>(n >> 16));
  out.push_back(static_cast<char>(n >> 8));
  out.push_back(static_cast<char>(n));
  out += payload;
  return out;
}

inline json parse_payload(std::string_view payload) {
  json message = json::parse(payload, nullptr, /*allow_exceptions=*/false);
  if (message.is_discarded()) throw FramingError("frame: payload is not valid JSON");
  if (!message.is_object()) throw FramingError("frame: payload is not a JSON object");
  const auto it = message.find("type");
  if (it == message.end() || !it->is_string()) throw FramingError("frame: missing string \"type\"");
  return message;
}

inline std::uint32_t read_length_prefix(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

/// Incremental frame parser over an arbitrary chunking of a byte stream.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

  /// Next complete frame, or nullopt when more bytes are needed.
  std::optional<json> next() {
    if (buffer_.size() - offset_ < 4) return std::nullopt;
    const std::uint32_t n = read_length_prefix(buffer_.data() + offset_);
    if (n > kMaxFrameBytes) throw ProtocolError("frame: declared length exceeds 64 MiB");
    if (buffer_.size() - offset_ - 4 < n) return std::nullopt;
    const std::string_view payload(reinterpret_cast<const char*>(buffer_.data() + offset_ + 4), n);
    json message = parse_payload(payload);
    offset_ += 4 + n;
    if (offset_ == buffer_.size()) {
      buffer_.clear();
      offset_ = 0;
    }
    return message;
  }

  /// Bytes received but not yet consumed by a complete frame.
  std::size_t pending() const { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_all(std::string_view bytes) = 0;
  /// Reads up to n bytes, blocking until n are available or the stream ends.
  virtual std::size_t read_some_exact(std::uint8_t* out, std::size_t n) = 0;
};

namespace detail {

inline void write_fd(int fd, std::string_view bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError(std::string("transport write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(w);
  }
}

inline std::size_t read_fd(int fd, std::uint8_t* out, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    const ssize_t r = ::read(fd, out + done, n - done);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError(std::string("transport read failed: ") + std::strerror(errno));
    }
    if (r == 0) break;
    done += static_cast<std::size_t>(r);
  }
  return done;
}

}  // namespace detail

/// Writes and reads frames over a pair of already-open file descriptors.
class FdTransport : public Transport {
 public:
  FdTransport(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

  void write_all(std::string_view bytes) override { detail::write_fd(write_fd_, bytes); }
  std::size_t read_some_exact(std::uint8_t* out, std::size_t n) override {
    return detail::read_fd(read_fd_, out, n);
  }

 protected:
  int read_fd_ = -1;
  int write_fd_ = -1;
};

/// Backend launched as `/bin/sh -c <command>` speaking frames on stdin/stdout.
class ChildProcessTransport final : public FdTransport {
 public:
  explicit ChildProcessTransport(const std::string& command) : FdTransport(-1, -1) {
    // A backend that exits early must surface as a write error, not a signal.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw ConnectionError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ConnectionError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw ConnectionError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
  }

  ChildProcessTransport(const ChildProcessTransport&) = delete;
  ChildProcessTransport& operator=(const ChildProcessTransport&) = delete;

  ~ChildProcessTransport() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      // Closing stdin asks the backend to exit; escalate if it lingers.
      for (int i = 0; i < 200; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

 private:
  pid_t pid_ = -1;
};

class TcpTransport final : public FdTransport {
 public:
  TcpTransport(const std::string& host, const std::string& port) : FdTransport(-1, -1) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &result) != 0) {
      throw ConnectionError("cannot resolve " + host + ":" + port);
    }
    int fd = -1;
    for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(result);
    if (fd < 0) throw ConnectionError("cannot connect to " + host + ":" + port);
    read_fd_ = write_fd_ = fd;
  }

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  ~TcpTransport() override {
    if (read_fd_ >= 0) ::close(read_fd_);
  }
};

inline void write_frame(Transport& t, const json& message) { t.write_all(encode_frame(message)); }

inline json read_frame(Transport& t) {
  std::array<std::uint8_t, 4> prefix{};
  const std::size_t got = t.read_some_exact(prefix.data(), 4);
  if (got == 0) throw ConnectionError("backend closed the connection");
  if (got < 4) throw FramingError("frame: truncated length prefix (" + std::to_string(got) + " bytes)");
  const std::uint32_t n = read_length_prefix(prefix.data());
  if (n > kMaxFrameBytes) throw ProtocolError("frame: declared length exceeds 64 MiB");
  std::string payload(n, '\0');
  if (t.read_some_exact(reinterpret_cast<std::uint8_t*>(payload.data()), n) != n) {
    throw FramingError("frame: truncated payload");
  }
  return parse_payload(payload);
}

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

struct BackendDescriptor {
  std::string name;
  std::size_t num_heads = 0;
  int protocol_version = 0;
};

inline json hello_message() { return {{"type", "hello"}, {"protocol_version", kProtocolVersion}}; }

inline std::vector<float> image_channels_as_float(const Image& image) {
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(image.pixels[i]);
  return out;
}

inline json set_image_message(const Image& image) {
  return {{"type", "set_image"},
          {"width", image.width},
          {"height", image.height},
          {"channels", image.channels},
          {"pixels", encode_tensor(image_channels_as_float(image))}};
}

inline json predict_message(const PromptTrace& trace) {
  json prompts = json::array();
  for (const auto& p : trace) {
    prompts.push_back({{"row", p.design.row}, {"col", p.design.col}, {"label", p.label}});
  }
  return {{"type", "predict"}, {"prompts", std::move(prompts)}};
}

inline PromptTrace parse_prompts(const json& prompts) {
  if (!prompts.is_array()) throw ProtocolError("prompts must be an array");
  PromptTrace trace;
  for (const auto& p : prompts) {
    if (!p.is_object() || !p.contains("row") || !p.contains("col") || !p.contains("label") ||
        !p["row"].is_number_unsigned() || !p["col"].is_number_unsigned() ||
        !p["label"].is_number_integer()) {
      throw ProtocolError("prompt entries need unsigned row, col and integer label");
    }
    const int label = p["label"].get<int>();
    check_label(label);
    trace.push_back({{p["row"].get<std::size_t>(), p["col"].get<std::size_t>()}, label});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// External session
// ---------------------------------------------------------------------------

/// SegmenterSession backed by an external adapter process. One request is in
/// flight at a time. Any failure poisons the session.
class ExternalSession final : public SegmenterSession {
 public:
  explicit ExternalSession(std::unique_ptr<Transport> transport)
      : transport_(std::move(transport)) {}

  /// Launches `command` as a child process and performs the handshake.
  static std::unique_ptr<ExternalSession> launch(const std::string& command) {
    auto s = std::make_unique<ExternalSession>(std::make_unique<ChildProcessTransport>(command));
    s->handshake();
    return s;
  }

  /// Connects to `host:port` over TCP and performs the handshake.
  static std::unique_ptr<ExternalSession> connect(const std::string& host, const std::string& port) {
    auto s = std::make_unique<ExternalSession>(std::make_unique<TcpTransport>(host, port));
    s->handshake();
    return s;
  }

  const BackendDescriptor& handshake() {
    guarded([&] {
      const json reply = request(hello_message(), "hello_ack");
      BackendDescriptor d;
      if (!reply.contains("protocol_version") || !reply["protocol_version"].is_number_integer()) {
        throw ProtocolError("hello_ack: missing protocol_version");
      }
      d.protocol_version = reply["protocol_version"].get<int>();
      if (d.protocol_version != kProtocolVersion) {
        throw ProtocolError("hello_ack: protocol version " + std::to_string(d.protocol_version) +
                            " != " + std::to_string(kProtocolVersion));
      }
      if (!reply.contains("name") || !reply["name"].is_string()) {
        throw ProtocolError("hello_ack: missing name");
      }
      d.name = reply["name"].get<std::string>();
      if (!reply.contains("num_heads") || !reply["num_heads"].is_number_integer() ||
          reply["num_heads"].get<long long>() < 1) {
        throw ProtocolError("hello_ack: num_heads must be an integer >= 1");
      }
      d.num_heads = reply["num_heads"].get<std::size_t>();
      descriptor_ = d;
    });
    return *descriptor_;
  }

  bool handshaken() const { return descriptor_.has_value(); }
  bool poisoned() const { return poisoned_; }
  const std::optional<BackendDescriptor>& descriptor() const { return descriptor_; }

  std::string name() const override { return descriptor_ ? descriptor_->name : "external"; }
  std::size_t num_heads() const override { return descriptor_ ? descriptor_->num_heads : 0; }

  void set_image(const Image& image) override {
    check_usable();
    if (!descriptor_) throw SessionStateError("set_image before handshake");
    guarded([&] {
      request(set_image_message(image), "ack");
      image_shape_ = {image.height, image.width};
    });
  }

  BeliefEnsemble predict(const PromptTrace& trace) override {
    check_usable();
    if (!descriptor_) throw SessionStateError("predict before handshake");
    if (!image_shape_) throw SessionStateError("predict before set_image");
    BeliefEnsemble result;
    guarded([&] { result = parse_prediction(request(predict_message(trace), "prediction")); });
    return result;
  }

  /// Sends arbitrary bytes; used to exercise backend error handling.
  void send_raw(std::string_view bytes) {
    check_usable();
    guarded([&] { transport_->write_all(bytes); });
  }

  json receive() {
    check_usable();
    json out;
    guarded([&] { out = read_frame(*transport_); });
    return out;
  }

 private:
  void check_usable() const {
    if (poisoned_) throw SessionPoisoned("session is unusable after an earlier error: " + poison_reason_);
  }

  template <class F>
  void guarded(F&& body) {
    check_usable();
    try {
      body();
    } catch (const std::exception& e) {
      poisoned_ = true;
      poison_reason_ = e.what();
      throw;
    }
  }

  json request(const json& message, std::string_view expected_type) {
    write_frame(*transport_, message);
    json reply = read_frame(*transport_);
    const auto type = reply["type"].get<std::string>();
    if (type == "error") {
      const std::string msg = reply.contains("message") && reply["message"].is_string()
                                  ? reply["message"].get<std::string>()
                                  : std::string("(no message)");
      throw BackendError("backend error: " + msg);
    }
    if (type != expected_type) {
      throw ProtocolError("expected \"" + std::string(expected_type) + "\" frame, got \"" + type + "\"");
    }
    return reply;
  }

  BeliefEnsemble parse_prediction(const json& reply) const {
    const auto [height, width] = *image_shape_;
    if (!reply.contains("shape") || !reply["shape"].is_array() || reply["shape"].size() != 2 ||
        !reply["shape"][0].is_number_unsigned() || !reply["shape"][1].is_number_unsigned()) {
      throw ProtocolError("prediction: missing shape [h, w]");
    }
    const auto h = reply["shape"][0].get<std::size_t>();
    const auto w = reply["shape"][1].get<std::size_t>();
    if (h != height || w != width) {
      throw ProtocolError("prediction: shape " + std::to_string(h) + "x" + std::to_string(w) +
                          " does not match image " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
    if (!reply.contains("heads") || !reply["heads"].is_array()) {
      throw ProtocolError("prediction: missing heads");
    }
    const auto& heads_json = reply["heads"];
    if (heads_json.size() != descriptor_->num_heads) {
      throw ProtocolError("prediction: " + std::to_string(heads_json.size()) + " heads, expected " +
                          std::to_string(descriptor_->num_heads));
    }
    std::vector<ProbabilityMap> heads;
    for (const auto& hj : heads_json) {
      if (!hj.is_string()) throw ProtocolError("prediction: head is not a base64 string");
      auto values = decode_tensor(hj.get<std::string>(), h * w);
      for (float& v : values) {
        if (!(v >= -kProbabilitySlack && v <= 1.0 + kProbabilitySlack)) {
          throw ValidationError("prediction: head value outside [0,1]");
        }
        v = std::clamp(v, 0.0f, 1.0f);
      }
      heads.emplace_back(h, w, std::move(values));
    }
    std::optional<std::vector<double>> scores;
    if (reply.contains("scores") && !reply["scores"].is_null()) {
      if (!reply["scores"].is_array()) throw ProtocolError("prediction: scores must be an array");
      scores.emplace();
      for (const auto& s : reply["scores"]) {
        if (!s.is_number()) throw ProtocolError("prediction: non-numeric score");
        scores->push_back(s.get<double>());
      }
      if (scores->size() != heads.size()) throw ProtocolError("prediction: score count != head count");
    }
    return BeliefEnsemble(std::move(heads), std::move(scores));
  }

  std::unique_ptr<Transport> transport_;
  std::optional<BackendDescriptor> descriptor_;
  std::optional<std::pair<std::size_t, std::size_t>> image_shape_;
  bool poisoned_ = false;
  std::string poison_reason_;
};

}  // namespace eigbench
