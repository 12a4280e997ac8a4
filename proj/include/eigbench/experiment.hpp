#pragma once

// Experiment orchestration: JSON run configuration, backend construction,
// results.csv and manifest.json output.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eigbench/backend.hpp"
#include "eigbench/dataset.hpp"
#include "eigbench/heatmap.hpp"
#include "eigbench/protocol.hpp"
#include "eigbench/simulation.hpp"

namespace eigbench {

struct ConfigError : Error {
  using Error::Error;
};

inline constexpr const char* kBackendCmdEnv = "EIGBENCH_BACKEND_CMD";

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

enum class BackendType { kernel, overconfident, blind, external };

inline std::string to_string(BackendType t) {
  switch (t) {
    case BackendType::kernel: return "kernel";
    case BackendType::overconfident: return "overconfident";
    case BackendType::blind: return "blind";
    case BackendType::external: return "external";
  }
  return "?";
}

inline BackendType parse_backend_type(const std::string& s) {
  if (s == "kernel") return BackendType::kernel;
  if (s == "overconfident") return BackendType::overconfident;
  if (s == "blind" || s == "prompt_blind") return BackendType::blind;
  if (s == "external") return BackendType::external;
  throw ConfigError("unknown backend type '" + s + "'");
}

struct BackendSpec {
  BackendType type = BackendType::kernel;
  /// Launch command for external backends, or tcp://host:port.
  std::string cmd;
  KernelBackendConfig kernel;
  OverconfidentBackendConfig overconfident;
  PromptBlindBackendConfig blind;

  std::string label() const { return to_string(type); }
};

/// Parses "kernel", "overconfident", "blind" or "external:<cmd>".
inline BackendSpec parse_backend_spec(const std::string& text) {
  BackendSpec spec;
  const auto colon = text.find(':');
  spec.type = parse_backend_type(text.substr(0, colon));
  if (spec.type == BackendType::external) {
    if (colon == std::string::npos || colon + 1 == text.size()) {
      throw ConfigError("external backend needs a command: external:<cmd>");
    }
    spec.cmd = text.substr(colon + 1);
  } else if (colon != std::string::npos) {
    throw ConfigError("backend '" + spec.label() + "' takes no command");
  }
  return spec;
}

/// Session for a backend spec. External sessions are launched and handshaken.
inline std::unique_ptr<SegmenterSession> make_session(const BackendSpec& spec) {
  switch (spec.type) {
    case BackendType::kernel: return std::make_unique<KernelSession>(spec.kernel);
    case BackendType::overconfident: return std::make_unique<OverconfidentSession>(spec.overconfident);
    case BackendType::blind: return std::make_unique<PromptBlindSession>(spec.blind);
    case BackendType::external: {
      if (spec.cmd.empty()) throw ConfigError("external backend requires a command");
      constexpr std::string_view tcp = "tcp://";
      if (spec.cmd.starts_with(tcp)) {
        const std::string rest = spec.cmd.substr(tcp.size());
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos) throw ConfigError("tcp backend needs tcp://host:port");
        return ExternalSession::connect(rest.substr(0, colon), rest.substr(colon + 1));
      }
      return ExternalSession::launch(spec.cmd);
    }
  }
  throw ConfigError("unhandled backend type");
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string run_id = "run";
  std::filesystem::path dataset;
  BackendSpec backend;
  EpisodeConfig episode;
  std::vector<Policy> policies{Policy::eig_guided, Policy::oracle};
  std::filesystem::path output = "results";
  bool heatmaps = false;
  /// Fill wall_ms; timings make results.csv non-reproducible.
  bool timing = false;
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json backend_to_json(const BackendSpec& b) {
  nlohmann::json j = {{"type", b.label()}};
  switch (b.type) {
    case BackendType::kernel:
      j["bandwidths"] = b.kernel.bandwidths;
      j["prior_weight"] = b.kernel.prior_weight;
      j["prior"] = b.kernel.prior;
      break;
    case BackendType::overconfident:
      j["bandwidth"] = b.overconfident.bandwidth;
      j["prior_weight"] = b.overconfident.prior_weight;
      j["prior"] = b.overconfident.prior;
      j["temperature"] = b.overconfident.temperature;
      j["num_heads"] = b.overconfident.num_heads;
      break;
    case BackendType::blind:
      j["num_heads"] = b.blind.num_heads;
      j["seed"] = b.blind.seed;
      j["feature_size"] = b.blind.feature_size;
      j["gain"] = b.blind.gain;
      break;
    case BackendType::external: j["cmd"] = b.cmd; break;
  }
  return j;
}

inline BackendSpec backend_from_json(const nlohmann::json& j, std::uint64_t run_seed) {
  using detail::get_or;
  if (!j.is_object()) throw ConfigError("config 'backend' must be an object");
  if (!j.contains("type")) throw ConfigError("config 'backend' needs a 'type'");
  BackendSpec b;
  b.type = parse_backend_type(j["type"].get<std::string>());
  switch (b.type) {
    case BackendType::kernel:
      detail::reject_unknown_keys(j, {"type", "bandwidths", "prior_weight", "prior"}, "backend.");
      b.kernel.bandwidths = get_or(j, "bandwidths", b.kernel.bandwidths);
      b.kernel.prior_weight = get_or(j, "prior_weight", b.kernel.prior_weight);
      b.kernel.prior = get_or(j, "prior", b.kernel.prior);
      b.kernel.validate();
      break;
    case BackendType::overconfident:
      detail::reject_unknown_keys(
          j, {"type", "bandwidth", "prior_weight", "prior", "temperature", "num_heads"}, "backend.");
      b.overconfident.bandwidth = get_or(j, "bandwidth", b.overconfident.bandwidth);
      b.overconfident.prior_weight = get_or(j, "prior_weight", b.overconfident.prior_weight);
      b.overconfident.prior = get_or(j, "prior", b.overconfident.prior);
      b.overconfident.temperature = get_or(j, "temperature", b.overconfident.temperature);
      b.overconfident.num_heads = get_or(j, "num_heads", b.overconfident.num_heads);
      break;
    case BackendType::blind:
      detail::reject_unknown_keys(j, {"type", "num_heads", "seed", "feature_size", "gain"}, "backend.");
      b.blind.num_heads = get_or(j, "num_heads", b.blind.num_heads);
      b.blind.seed = get_or(j, "seed", run_seed);
      b.blind.feature_size = get_or(j, "feature_size", b.blind.feature_size);
      b.blind.gain = get_or(j, "gain", b.blind.gain);
      break;
    case BackendType::external:
      detail::reject_unknown_keys(j, {"type", "cmd"}, "backend.");
      b.cmd = get_or(j, "cmd", std::string{});
      break;
  }
  return b;
}

/// Parses a run configuration (or a manifest written by run_experiment).
/// Relative paths resolve against `base_dir`. EIGBENCH_BACKEND_CMD, when set,
/// overrides the external backend command.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_or;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"run_id", "dataset", "backend", "steps", "grid", "estimator", "nmc", "seed",
                               "policies", "output", "heatmaps", "timing",
                               // manifest-only keys
                               "tool", "items", "skipped", "failures", "rows"},
                              "");
  RunConfig c;
  c.run_id = get_or(j, "run_id", c.run_id);
  if (!j.contains("dataset")) throw ConfigError("config needs 'dataset'");
  const auto resolve = [&](const std::filesystem::path& p) {
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  c.dataset = resolve(get_or(j, "dataset", std::string{}));
  c.output = resolve(get_or(j, "output", c.output.string()));
  c.episode.seed = get_or(j, "seed", std::uint64_t{0});
  c.backend = backend_from_json(j.contains("backend") ? j["backend"] : nlohmann::json{{"type", "kernel"}},
                                c.episode.seed);
  if (c.backend.type == BackendType::external) {
    if (const char* env = std::getenv(kBackendCmdEnv); env != nullptr && *env != '\0') c.backend.cmd = env;
    if (c.backend.cmd.empty()) {
      throw ConfigError("external backend requires backend.cmd or " + std::string(kBackendCmdEnv));
    }
  }
  c.episode.steps = get_or(j, "steps", c.episode.steps);
  c.episode.grid = get_or(j, "grid", c.episode.grid);
  c.episode.estimator = parse_estimator(get_or(j, "estimator", std::string("exact")));
  if (j.contains("nmc")) {
    const auto& n = j["nmc"];
    detail::reject_unknown_keys(n, {"outer_n", "inner_m", "seed", "clamp_eps"}, "nmc.");
    c.episode.nmc.outer_n = get_or(n, "outer_n", c.episode.nmc.outer_n);
    if (n.contains("inner_m") && n["inner_m"].is_string()) {
      if (n["inner_m"].get<std::string>() != "auto") throw ConfigError("nmc.inner_m must be a count or \"auto\"");
      c.episode.nmc.inner_m = ceil_sqrt(c.episode.nmc.outer_n);
    } else {
      c.episode.nmc.inner_m = get_or(n, "inner_m", ceil_sqrt(c.episode.nmc.outer_n));
    }
    c.episode.nmc.seed = get_or(n, "seed", c.episode.nmc.seed);
    c.episode.nmc.clamp_eps = get_or(n, "clamp_eps", c.episode.nmc.clamp_eps);
  }
  if (j.contains("policies")) {
    c.policies.clear();
    for (const auto& p : j["policies"]) c.policies.push_back(parse_policy(p.get<std::string>()));
    if (c.policies.empty()) throw ConfigError("config 'policies' is empty");
  }
  c.heatmaps = get_or(j, "heatmaps", c.heatmaps);
  c.timing = get_or(j, "timing", c.timing);
  try {
    c.episode.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return run_config_from_json(j, path.parent_path());
}

/// Fully resolved configuration; feeding it back reproduces the run.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json policies = nlohmann::json::array();
  for (auto p : c.policies) policies.push_back(to_string(p));
  return {{"run_id", c.run_id},
          {"dataset", std::filesystem::absolute(c.dataset).lexically_normal().string()},
          {"backend", backend_to_json(c.backend)},
          {"steps", c.episode.steps},
          {"grid", c.episode.grid},
          {"estimator", to_string(c.episode.estimator)},
          {"nmc",
           {{"outer_n", c.episode.nmc.outer_n},
            {"inner_m", c.episode.nmc.inner_m},
            {"seed", c.episode.nmc.seed},
            {"clamp_eps", c.episode.nmc.clamp_eps}}},
          {"seed", c.episode.seed},
          {"policies", policies},
          {"output", std::filesystem::absolute(c.output).lexically_normal().string()},
          {"heatmaps", c.heatmaps},
          {"timing", c.timing}};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

/// Shortest round-trip decimal, independent of locale.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kResultsHeader =
    "run_id,image_id,backend,policy,step,design_row,design_col,prompt_label,dice,max_eig_nats,wall_ms";

inline std::string csv_rows(const RunConfig& cfg, const std::string& image_id, const EpisodeRecord& rec) {
  std::string out;
  for (const auto& s : rec.steps) {
    out += csv_field(cfg.run_id) + ',' + csv_field(image_id) + ',' + csv_field(cfg.backend.label()) + ',' +
           to_string(rec.policy) + ',' + std::to_string(s.step) + ',' + std::to_string(s.design.row) + ',' +
           std::to_string(s.design.col) + ',' + std::to_string(s.label) + ',' + format_number(s.dice) + ',' +
           (s.max_eig ? format_number(*s.max_eig) : std::string{}) + ',' +
           (cfg.timing ? format_number(s.wall_ms) : std::string{}) + "\r\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct ItemFailure {
  std::string image_id;
  std::string policy;
  std::string error;
};

struct RunSummary {
  std::filesystem::path results_csv;
  std::filesystem::path manifest;
  std::size_t rows = 0;
  std::size_t items = 0;
  std::vector<SkippedItem> skipped;
  std::vector<ItemFailure> failures;
  /// Completed episodes in CSV order, for callers that want the numbers.
  std::vector<std::pair<std::string, EpisodeRecord>> episodes;
};

inline std::string heatmap_stem(const std::string& image_id, std::size_t step) {
  std::ostringstream os;
  os << image_id << ".eig_guided.step" << (step < 10 ? "0" : "") << step;
  return os.str();
}

/// Runs every (item, policy) episode in order and writes results.csv and
/// manifest.json into cfg.output. Item failures are recorded and skipped.
inline RunSummary run_experiment(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(cfg.dataset)) throw ConfigError("dataset directory not found: " + cfg.dataset.string());
  if (cfg.backend.type == BackendType::external && cfg.backend.cmd.empty()) {
    throw ConfigError("external backend requires a command");
  }
  cfg.episode.validate();

  const Dataset data = load_dataset(cfg.dataset);
  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output.string() + ": " + ec.message());

  RunSummary summary;
  summary.results_csv = cfg.output / "results.csv";
  summary.manifest = cfg.output / "manifest.json";
  summary.skipped = data.skipped;
  summary.items = data.items.size();
  for (const auto& s : data.skipped) std::cerr << "warning: skipping item '" << s.id << "': " << s.reason << '\n';

  std::ofstream csv(summary.results_csv, std::ios::binary);
  if (!csv) throw IoError("cannot write " + summary.results_csv.string());
  csv << kResultsHeader << "\r\n";

  for (const auto& item : data.items) {
    for (Policy policy : cfg.policies) {
      EpisodeConfig ec2 = cfg.episode;
      ec2.policy = policy;
      EpisodeRecord rec;
      try {
        auto session = make_session(cfg.backend);
        EigMapObserver observer;
        if (cfg.heatmaps) {
          observer = [&](std::size_t step, const EigMap& m) {
            export_heatmap(m, cfg.output / "heatmaps" / heatmap_stem(item.id, step));
          };
        }
        rec = run_episode(*session, item.image, item.gt, ec2, observer);
      } catch (const std::exception& e) {
        rec.policy = policy;
        rec.incomplete = true;
        rec.error = e.what();
      }
      csv << csv_rows(cfg, item.id, rec);
      summary.rows += rec.steps.size();
      if (rec.incomplete) {
        std::cerr << "warning: " << item.id << " / " << to_string(policy) << " failed: " << rec.error << '\n';
        summary.failures.push_back({item.id, to_string(policy), rec.error});
      }
      summary.episodes.emplace_back(item.id, std::move(rec));
    }
  }
  csv.close();
  if (!csv) throw IoError("failed writing " + summary.results_csv.string());

  nlohmann::json manifest = run_config_to_json(cfg);
  manifest["tool"] = "eigbench";
  manifest["items"] = nlohmann::json::array();
  for (const auto& item : data.items) manifest["items"].push_back(item.id);
  manifest["skipped"] = nlohmann::json::array();
  for (const auto& s : data.skipped) manifest["skipped"].push_back({{"id", s.id}, {"reason", s.reason}});
  manifest["failures"] = nlohmann::json::array();
  for (const auto& f : summary.failures) {
    manifest["failures"].push_back({{"image_id", f.image_id}, {"policy", f.policy}, {"error", f.error}});
  }
  manifest["rows"] = summary.rows;
  std::ofstream out(summary.manifest);
  if (!out) throw IoError("cannot write " + summary.manifest.string());
  out << manifest.dump(2) << '\n';
  return summary;
}

}  // namespace eigbench
