// Reference echo backend on stdin/stdout: one head, constant 0.5.
// Fault switches let tests provoke each client-side error path.

#include <cstdlib>
#include <string>
#include <string_view>

#include "eigbench/protocol.hpp"

using namespace eigbench;

namespace {

struct Options {
  std::string name = "echo";
  std::size_t declared_heads = 1;
  std::size_t sent_heads = 1;
  int version = kProtocolVersion;
  bool truncate_prefix = false;
  bool wrong_shape = false;
  float value = 0.5f;
  bool scores = false;
  bool garbage = false;
};

Options parse(int argc, char** argv) {
  Options o;
  bool sent_set = false;
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    const auto next = [&] { return std::string(i + 1 < argc ? argv[++i] : ""); };
    if (a == "--num-heads") {
      o.declared_heads = std::stoul(next());
      if (!sent_set) o.sent_heads = std::max<std::size_t>(o.declared_heads, 1);
    } else if (a == "--send-heads") {
      o.sent_heads = std::stoul(next());
      sent_set = true;
    } else if (a == "--version") {
      o.version = std::stoi(next());
    } else if (a == "--name") {
      o.name = next();
    } else if (a == "--truncate-prefix") {
      o.truncate_prefix = true;
    } else if (a == "--wrong-shape") {
      o.wrong_shape = true;
    } else if (a == "--value") {
      o.value = std::stof(next());
    } else if (a == "--scores") {
      o.scores = true;
    } else if (a == "--garbage") {
      o.garbage = true;
    }
  }
  return o;
}

void send_error(Transport& t, const std::string& message) {
  write_frame(t, {{"type", "error"}, {"message", message}});
}

}  // namespace

int main(int argc, char** argv) {
  const Options opt = parse(argc, argv);
  FdTransport io(0, 1);
  std::size_t height = 0, width = 0;
  bool have_image = false;

  for (;;) {
    json msg;
    try {
      msg = read_frame(io);
    } catch (const ConnectionError&) {
      return 0;
    } catch (const std::exception& e) {
      send_error(io, std::string("malformed frame: ") + e.what());
      return 1;
    }
    const std::string type = msg["type"].get<std::string>();

    if (type == "hello") {
      if (opt.truncate_prefix) {
        io.write_all(std::string_view("\x00\x00\x01", 3));
        return 0;
      }
      if (opt.garbage) {
        const std::string payload = "not json";
        std::string frame = {0, 0, 0, static_cast<char>(payload.size())};
        io.write_all(frame + payload);
        continue;
      }
      write_frame(io, {{"type", "hello_ack"},
                       {"name", opt.name},
                       {"num_heads", opt.declared_heads},
                       {"protocol_version", opt.version}});
    } else if (type == "set_image") {
      try {
        const auto w = msg.at("width").get<std::size_t>();
        const auto h = msg.at("height").get<std::size_t>();
        const auto c = msg.at("channels").get<std::size_t>();
        const auto bytes = base64::decode(msg.at("pixels").get<std::string>());
        if (bytes.size() != 4 * w * h * c) {
          send_error(io, "pixel payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(4 * w * h * c));
          continue;
        }
        height = h;
        width = w;
        have_image = true;
        write_frame(io, {{"type", "ack"}});
      } catch (const std::exception& e) {
        send_error(io, std::string("bad set_image: ") + e.what());
      }
    } else if (type == "predict") {
      if (!have_image) {
        send_error(io, "predict before set_image");
        continue;
      }
      try {
        parse_prompts(msg.at("prompts"));
      } catch (const std::exception& e) {
        send_error(io, std::string("bad prompts: ") + e.what());
        continue;
      }
      const std::size_t h = opt.wrong_shape ? height + 1 : height;
      const std::vector<float> head(h * width, opt.value);
      json heads = json::array();
      for (std::size_t k = 0; k < opt.sent_heads; ++k) heads.push_back(encode_tensor(head));
      json reply = {{"type", "prediction"}, {"heads", heads}, {"shape", {h, width}}};
      if (opt.scores) {
        json scores = json::array();
        for (std::size_t k = 0; k < opt.sent_heads; ++k) scores.push_back(0.1 * static_cast<double>(k));
        reply["scores"] = scores;
      }
      write_frame(io, reply);
    } else {
      send_error(io, "unknown message type '" + type + "'");
    }
  }
}
