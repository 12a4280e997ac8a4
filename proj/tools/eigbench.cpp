// eigbench command-line interface.
//
//   eigbench run --config <path> [--out <dir>]
//   eigbench eig-map --image <p> --mask <p> --backend <spec> --prompts <json> --out <prefix>
//   eigbench validate-nmc --seeds <k> --n <N> --m <M|auto>
//   eigbench protocol-check --backend-cmd <cmd>
//   eigbench make-blobs --out <dir> [--count 10] [--size 64] [--seed 7]
//
// Exit status: 0 success, 1 operational failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "eigbench/eigbench.hpp"

namespace {

using namespace eigbench;

int cmd_run(const std::string& config_path, const std::string& out_override) {
  RunConfig cfg = load_run_config(config_path);
  if (!out_override.empty()) cfg.output = out_override;
  const RunSummary s = run_experiment(cfg);
  std::cout << "items: " << s.items << "  skipped: " << s.skipped.size() << "  failures: " << s.failures.size()
            << "  rows: " << s.rows << '\n'
            << "results:  " << s.results_csv.string() << '\n'
            << "manifest: " << s.manifest.string() << '\n';
  return 0;
}

PromptTrace load_prompts(const std::string& arg, const BinaryMask& gt) {
  nlohmann::json j;
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream in(arg);
    j = nlohmann::json::parse(in, nullptr, false);
  } else {
    j = nlohmann::json::parse(arg, nullptr, false);
  }
  if (j.is_discarded()) throw ConfigError("--prompts is neither a JSON file nor inline JSON");
  if (j.is_object() && j.contains("prompts")) j = j["prompts"];
  if (!j.is_array()) throw ConfigError("--prompts must be a JSON array of {row, col[, label]}");
  PromptTrace trace;
  for (const auto& p : j) {
    if (!p.is_object() || !p.contains("row") || !p.contains("col")) {
      throw ConfigError("each prompt needs row and col");
    }
    const Design d{p["row"].get<std::size_t>(), p["col"].get<std::size_t>()};
    // Unlabelled prompts take the annotator's label from the mask.
    const int label = p.contains("label") ? p["label"].get<int>() : annotator_label(gt, d);
    check_label(label);
    trace.push_back({d, label});
  }
  return trace;
}

int cmd_eig_map(const std::string& image_path, const std::string& mask_path, const std::string& backend,
                const std::string& prompts, const std::string& out, std::size_t grid_size,
                const std::string& estimator, std::size_t n, const std::string& m, std::uint64_t seed) {
  const Image image = read_pnm(image_path);
  const BinaryMask gt = read_mask(mask_path);
  if (image.height != gt.height() || image.width != gt.width()) {
    throw ShapeError("image and mask dimensions differ");
  }
  const PromptTrace trace = load_prompts(prompts, gt);
  for (const auto& p : trace) check_in_bounds(p.design, image.height, image.width);

  auto session = make_session(parse_backend_spec(backend));
  session->set_image(image);
  const BeliefEnsemble ensemble = session->predict(trace);

  DesignGrid grid(grid_size, grid_size, image.height, image.width);
  for (const auto& p : trace) {
    if (const auto cell = grid.find(p.design)) grid.mark_used(*cell);
  }
  NmcConfig nmc = NmcConfig::auto_schedule(n, seed);
  if (m != "auto") nmc.inner_m = std::stoul(m);
  const EigMap map = eig_map(ensemble, grid, parse_estimator(estimator), nmc);
  const HeatmapFiles files = export_heatmap(map, out);

  std::cout << "dice: " << dice(proposal_mask(ensemble), gt) << '\n';
  if (grid.unused_count() > 0) {
    const DesignChoice next = select_design(map, grid);
    std::cout << "next design: (" << next.design.row << ", " << next.design.col << ")  eig: " << next.eig
              << " nats\n";
  }
  std::cout << "wrote " << files.raw.string() << ", " << files.sidecar.string() << ", "
            << files.preview.string() << '\n';
  return 0;
}

int cmd_validate_nmc(std::size_t seeds, std::size_t n, const std::string& m) {
  std::optional<std::size_t> inner;
  if (m != "auto") inner = std::stoul(m);
  const NmcValidation v = validate_nmc(seeds, n, inner);
  std::printf("%8s %6s %12s\n", "N", "M", "mean RMSE");
  for (const auto& p : v.schedule) std::printf("%8zu %6zu %12.6f\n", p.outer_n, p.inner_m, p.mean_rmse);
  std::printf("strictly decreasing: %s\n", v.strictly_decreasing ? "yes" : "no");
  std::printf("final RMSE <= %.2f nats: %s\n", kNmcRmseTolerance, v.within_tolerance ? "yes" : "no");
  std::printf("elapsed: %.2f s\n", v.seconds);
  return v.passed() ? 0 : 1;
}

int cmd_protocol_check(const std::string& cmd) {
  const ConformanceReport r = protocol_check(cmd);
  for (const auto& c : r.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  std::cout << (r.passed() ? "conformant" : "NOT conformant") << '\n';
  return r.passed() ? 0 : 1;
}

int cmd_make_blobs(const std::string& out, std::size_t count, std::size_t size, std::uint64_t seed) {
  write_dataset(out, make_blob_dataset(count, size, seed));
  std::cout << "wrote " << count << " items to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eigbench: expected-information-gain evaluation of interactive segmenters"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  auto* run = app.add_subcommand("run", "Run EIG-guided and oracle episodes over a dataset");
  run->add_option("--config", config_path, "Run configuration (JSON) or a previous manifest.json")->required();
  run->add_option("--out", run_out, "Override the output directory");

  std::string image, mask, backend, prompts, out, estimator = "exact", m_arg = "auto";
  std::size_t grid = 30, n = 4096;
  std::uint64_t seed = 0;
  auto* eig = app.add_subcommand("eig-map", "Compute and export one EIG map for a prompt trace");
  eig->add_option("--image", image, "Image (PGM/PPM)")->required();
  eig->add_option("--mask", mask, "Ground-truth mask (PGM)")->required();
  eig->add_option("--backend", backend, "kernel | overconfident | blind | external:<cmd>")->required();
  eig->add_option("--prompts", prompts, "JSON array of {row, col[, label]}, inline or a file")->required();
  eig->add_option("--out", out, "Output path prefix for .f32/.json/.pgm")->required();
  eig->add_option("--grid", grid, "Grid cells per side")->capture_default_str();
  eig->add_option("--estimator", estimator, "exact | nmc")->capture_default_str();
  eig->add_option("--n", n, "NMC outer samples")->capture_default_str();
  eig->add_option("--m", m_arg, "NMC inner samples or auto")->capture_default_str();
  eig->add_option("--seed", seed, "NMC seed")->capture_default_str();

  std::size_t seeds = 50, vn = 4096;
  std::string vm = "auto";
  auto* val = app.add_subcommand("validate-nmc", "Check NMC convergence to the exact EIG");
  val->add_option("--seeds", seeds, "Number of random ensembles")->capture_default_str();
  val->add_option("--n", vn, "Final outer sample count")->capture_default_str();
  val->add_option("--m", vm, "Final inner sample count or auto")->capture_default_str();

  std::string backend_cmd;
  auto* check = app.add_subcommand("protocol-check", "Probe an external backend for protocol conformance");
  check->add_option("--backend-cmd", backend_cmd, "Backend launch command")->required();

  std::string blobs_out;
  std::size_t blob_count = 10, blob_size = 64;
  std::uint64_t blob_seed = 7;
  auto* blobs = app.add_subcommand("make-blobs", "Write a synthetic blob dataset");
  blobs->add_option("--out", blobs_out, "Dataset directory")->required();
  blobs->add_option("--count", blob_count)->capture_default_str();
  blobs->add_option("--size", blob_size)->capture_default_str();
  blobs->add_option("--seed", blob_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(config_path, run_out);
    if (*eig) return cmd_eig_map(image, mask, backend, prompts, out, grid, estimator, n, m_arg, seed);
    if (*val) {
      if (vm != "auto" && vm.find_first_not_of("0123456789") != std::string::npos) {
        std::cerr << "--m must be a count or auto\n";
        return 2;
      }
      return cmd_validate_nmc(seeds, vn, vm);
    }
    if (*check) return cmd_protocol_check(backend_cmd);
    if (*blobs) return cmd_make_blobs(blobs_out, blob_count, blob_size, blob_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
