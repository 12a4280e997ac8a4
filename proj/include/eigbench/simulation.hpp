#pragma once

// Prompt-sequence episodes against a SegmenterSession with a noiseless
// simulated annotator. Both policies start from the ground-truth mask center
// and then add one point prompt per step from a fixed design grid:
//   eig_guided  the unused cell with maximal EIG under the current ensemble
//   oracle      the unused cell whose committed prompt maximizes next-step Dice

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eigbench/backend.hpp"
#include "eigbench/core.hpp"
#include "eigbench/eig.hpp"

namespace eigbench {

enum class Policy { eig_guided, oracle };

inline std::string to_string(Policy p) { return p == Policy::eig_guided ? "eig_guided" : "oracle"; }

inline Policy parse_policy(const std::string& s) {
  if (s == "eig_guided") return Policy::eig_guided;
  if (s == "oracle") return Policy::oracle;
  throw DomainError("unknown policy '" + s + "'");
}

struct EpisodeConfig {
  std::size_t steps = 10;
  std::size_t grid = 30;
  Policy policy = Policy::eig_guided;
  Estimator estimator = Estimator::exact;
  NmcConfig nmc = NmcConfig::auto_schedule(4096);
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1) throw DomainError("episode config: steps must be >= 1");
    if (grid < 1) throw DomainError("episode config: grid must be >= 1");
    if (grid * grid < steps + 1) throw DomainError("episode config: grid^2 must be >= steps + 1");
    if (estimator == Estimator::nmc) nmc.validate();
  }
};

struct StepRecord {
  std::size_t step = 0;
  Design design;
  int label = 0;
  double dice = 0.0;
  // Max EIG among unused cells before the prompt; eig_guided steps >= 1 only.
  std::optional<double> max_eig;
  double wall_ms = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeRecord {
  Policy policy = Policy::eig_guided;
  std::vector<StepRecord> steps;
  bool incomplete = false;
  std::string error;
};

/// Called with (step, map) for every EIG map an eig_guided episode computes.
using EigMapObserver = std::function<void(std::size_t, const EigMap&)>;

inline int annotator_label(const BinaryMask& gt, const Design& d) {
  check_in_bounds(d, gt.height(), gt.width());
  return gt(d.row, d.col);
}

/// Foreground centroid rounded half-up; if that pixel is background, the
/// nearest foreground pixel (Euclidean, ties row-major).
inline Design mask_center(const BinaryMask& gt) {
  double sum_r = 0.0, sum_c = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < gt.height(); ++r) {
    for (std::size_t c = 0; c < gt.width(); ++c) {
      if (gt(r, c)) {
        sum_r += static_cast<double>(r);
        sum_c += static_cast<double>(c);
        ++n;
      }
    }
  }
  if (n == 0) throw DomainError("mask_center: empty mask");
  const auto round_half_up = [](double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); };
  const Design centroid{round_half_up(sum_r / static_cast<double>(n)),
                        round_half_up(sum_c / static_cast<double>(n))};
  if (gt(centroid.row, centroid.col)) return centroid;

  Design best{};
  std::optional<std::size_t> best_d2;
  for (std::size_t r = 0; r < gt.height(); ++r) {
    for (std::size_t c = 0; c < gt.width(); ++c) {
      if (!gt(r, c)) continue;
      const auto dr = static_cast<long long>(r) - static_cast<long long>(centroid.row);
      const auto dc = static_cast<long long>(c) - static_cast<long long>(centroid.col);
      const auto d2 = static_cast<std::size_t>(dr * dr + dc * dc);
      if (!best_d2 || d2 < *best_d2) {
        best_d2 = d2;
        best = {r, c};
      }
    }
  }
  return best;
}

/// Highest-scoring head (lowest index on ties) if scores exist, else the
/// ensemble mean; thresholded at >= 0.5.
inline BinaryMask proposal_mask(const BeliefEnsemble& e) {
  if (e.empty()) throw DomainError("proposal_mask: empty ensemble");
  const auto threshold = [](const ProbabilityMap& m) {
    std::vector<std::uint8_t> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] >= 0.5f ? 1 : 0;
    return BinaryMask(m.height(), m.width(), std::move(out));
  };
  if (const auto& scores = e.scores()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores->size(); ++k) {
      if ((*scores)[k] > (*scores)[best]) best = k;
    }
    return threshold(e.head(best));
  }
  return threshold(ensemble_mean(e));
}

struct OracleChoice {
  std::size_t cell = 0;
  Design design;
  int label = 0;
  double dice = 0.0;
};

/// Exhaustive one-step search: for every unused cell, predict with that cell
/// appended (labelled by the annotator) and keep the best Dice, ties row-major.
inline OracleChoice oracle_step(SegmenterSession& session, const BinaryMask& gt,
                                const PromptTrace& trace, const DesignGrid& grid) {
  std::optional<OracleChoice> best;
  PromptTrace candidate = trace;
  candidate.emplace_back();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid.is_used(j)) continue;
    const Design& d = grid.cell(j);
    const int label = annotator_label(gt, d);
    candidate.back() = {d, label};
    const double score = dice(proposal_mask(session.predict(candidate)), gt);
    if (!best || score > best->dice) best = OracleChoice{j, d, label, score};
  }
  if (!best) throw ExhaustedDesigns("oracle_step: every grid cell has been prompted");
  return *best;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Shared episode loop; `choose` picks the next (cell, max_eig) for a step.
template <class Choose>
EpisodeRecord run_episode_loop(SegmenterSession& session, const Image& image, const BinaryMask& gt,
                               const EpisodeConfig& cfg, Choose&& choose) {
  EpisodeRecord record;
  record.policy = cfg.policy;
  try {
    cfg.validate();
    if (image.height != gt.height() || image.width != gt.width()) {
      throw ShapeError("episode: image and mask dimensions differ");
    }
    DesignGrid grid(cfg.grid, cfg.grid, gt.height(), gt.width());

    auto start = Clock::now();
    session.set_image(image);
    const Design center = mask_center(gt);
    PromptTrace trace{{center, annotator_label(gt, center)}};
    if (const auto cell = grid.find(center)) grid.mark_used(*cell);
    BeliefEnsemble ensemble = session.predict(trace);
    record.steps.push_back(
        {0, center, trace.back().label, dice(proposal_mask(ensemble), gt), std::nullopt, elapsed_ms(start)});

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
      start = Clock::now();
      const auto [cell, max_eig] = choose(step, ensemble, grid, trace);
      grid.mark_used(cell);
      const Design d = grid.cell(cell);
      trace.push_back({d, annotator_label(gt, d)});
      ensemble = session.predict(trace);
      record.steps.push_back(
          {step, d, trace.back().label, dice(proposal_mask(ensemble), gt), max_eig, elapsed_ms(start)});
    }
  } catch (const std::exception& e) {
    record.incomplete = true;
    record.error = e.what();
  }
  return record;
}

}  // namespace detail

inline EpisodeRecord run_eig_guided_episode(SegmenterSession& session, const Image& image,
                                            const BinaryMask& gt, EpisodeConfig cfg,
                                            const EigMapObserver& observer = {}) {
  cfg.policy = Policy::eig_guided;
  return detail::run_episode_loop(
      session, image, gt, cfg,
      [&](std::size_t step, const BeliefEnsemble& ensemble, const DesignGrid& grid, const PromptTrace&) {
        NmcConfig nmc = cfg.nmc;
        nmc.seed = mix_key(cfg.nmc.seed ^ cfg.seed, step);
        const EigMap map = eig_map(ensemble, grid, cfg.estimator, nmc);
        if (observer) observer(step, map);
        const DesignChoice choice = select_design(map, grid);
        return std::pair<std::size_t, std::optional<double>>{choice.cell, choice.eig};
      });
}

inline EpisodeRecord run_oracle_episode(SegmenterSession& session, const Image& image,
                                        const BinaryMask& gt, EpisodeConfig cfg) {
  cfg.policy = Policy::oracle;
  return detail::run_episode_loop(
      session, image, gt, cfg,
      [&](std::size_t, const BeliefEnsemble&, const DesignGrid& grid, const PromptTrace& trace) {
        const OracleChoice choice = oracle_step(session, gt, trace, grid);
        return std::pair<std::size_t, std::optional<double>>{choice.cell, std::nullopt};
      });
}

inline EpisodeRecord run_episode(SegmenterSession& session, const Image& image, const BinaryMask& gt,
                                 const EpisodeConfig& cfg, const EigMapObserver& observer = {}) {
  return cfg.policy == Policy::eig_guided ? run_eig_guided_episode(session, image, gt, cfg, observer)
                                          : run_oracle_episode(session, image, gt, cfg);
}

}  // namespace eigbench
