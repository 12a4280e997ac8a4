#pragma once

// Conformance probe for external backends: handshake, set_image, predict and
// error signalling, each reported as a named check.

#include <functional>
#include <string>
#include <vector>

#include "eigbench/protocol.hpp"

namespace eigbench {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  std::string backend_name;
  std::size_t num_heads = 0;

  bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return !checks.empty();
  }
};

/// `connect` opens a fresh, not yet handshaken session each time it is called.
inline ConformanceReport protocol_check(const std::function<std::unique_ptr<ExternalSession>()>& connect) {
  ConformanceReport report;
  const auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    try {
      report.checks.push_back({name, true, body()});
    } catch (const std::exception& e) {
      report.checks.push_back({name, false, e.what()});
    }
  };

  std::unique_ptr<ExternalSession> session;
  run("launch", [&] {
    session = connect();
    return std::string("connected");
  });
  if (!session) return report;

  run("handshake", [&] {
    const auto& d = session->handshake();
    report.backend_name = d.name;
    report.num_heads = d.num_heads;
    return "name=" + d.name + " num_heads=" + std::to_string(d.num_heads) +
           " protocol_version=" + std::to_string(d.protocol_version);
  });
  if (!session->handshaken()) return report;

  const Image gray{2, 2, 1, {0, 64, 128, 255}};
  run("set_image 2x2 gray", [&] {
    session->set_image(gray);
    return std::string("ack");
  });

  const auto check_ensemble = [&](const BeliefEnsemble& e, std::size_t h, std::size_t w) {
    if (e.num_heads() != report.num_heads) throw ProtocolError("head count mismatch");
    if (e.height() != h || e.width() != w) throw ProtocolError("shape mismatch");
    return std::to_string(e.num_heads()) + " heads of " + std::to_string(h) + "x" + std::to_string(w);
  };

  run("predict empty trace", [&] { return check_ensemble(session->predict({}), 2, 2); });
  run("predict one prompt", [&] { return check_ensemble(session->predict({{{1, 0}, 1}}), 2, 2); });

  const Image rgb = [] {
    Image im{5, 7, 3, std::vector<std::uint8_t>(5 * 7 * 3)};
    for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<std::uint8_t>(i * 7);
    return im;
  }();
  run("set_image 5x7 rgb", [&] {
    session->set_image(rgb);
    return std::string("ack");
  });
  run("predict after new image", [&] {
    return check_ensemble(session->predict({{{4, 6}, 0}, {{0, 0}, 1}}), 5, 7);
  });

  run("rejects bad pixel payload", [&] {
    auto probe = connect();
    probe->handshake();
    json bad = set_image_message(gray);
    bad["pixels"] = encode_tensor(std::vector<float>(3, 0.0f));
    probe->send_raw(encode_frame(bad));
    const json reply = probe->receive();
    if (reply["type"] != "error") throw ProtocolError("expected an error frame, got \"" + reply["type"].get<std::string>() + "\"");
    return std::string("error frame returned");
  });
  return report;
}

inline ConformanceReport protocol_check(const std::string& command) {
  return protocol_check([&] { return std::make_unique<ExternalSession>(std::make_unique<ChildProcessTransport>(command)); });
}

}  // namespace eigbench
