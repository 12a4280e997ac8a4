#pragma once

// Convergence check of the nested Monte Carlo estimator against the exact
// finite-ensemble EIG on seeded random ensembles.

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include "eigbench/eig.hpp"

namespace eigbench {

inline constexpr double kNmcRmseTolerance = 0.05;

struct NmcSchedulePoint {
  std::size_t outer_n = 0;
  std::size_t inner_m = 0;
  double mean_rmse = 0.0;
};

struct NmcValidation {
  std::vector<NmcSchedulePoint> schedule;
  bool strictly_decreasing = false;
  bool within_tolerance = false;
  double seconds = 0.0;

  bool passed() const { return strictly_decreasing && within_tolerance; }
};

/// K heads of height x width, each value uniform on [lo, hi].
inline BeliefEnsemble random_ensemble(std::size_t k, std::size_t height, std::size_t width,
                                      std::uint64_t seed, double lo = 0.01, double hi = 0.99) {
  Rng rng(seed);
  std::vector<ProbabilityMap> heads;
  for (std::size_t h = 0; h < k; ++h) {
    std::vector<float> v(height * width);
    for (float& x : v) x = static_cast<float>(lo + (hi - lo) * rng.uniform());
    heads.emplace_back(height, width, std::move(v));
  }
  return BeliefEnsemble(std::move(heads));
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// Schedule ending at (outer_n, inner_m): outer counts N/16, N/4, N. With
/// inner_m unset every point uses M = ceil(sqrt(N)); a fixed M is scaled by
/// the same sqrt ratio (M/4, M/2, M).
inline std::vector<std::pair<std::size_t, std::size_t>> nmc_schedule(std::size_t outer_n,
                                                                     std::optional<std::size_t> inner_m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t div : {16u, 4u, 1u}) {
    const std::size_t n = std::max<std::size_t>(1, outer_n / div);
    std::size_t m = 0;
    if (inner_m) {
      m = std::max<std::size_t>(1, *inner_m / ceil_sqrt(div));
    } else {
      m = ceil_sqrt(n);
    }
    out.emplace_back(n, m);
  }
  return out;
}

/// Mean over seeds of the per-ensemble RMSE between NMC and exact EIG, for
/// K-head `size` x `size` ensembles with theta ~ U[0.01, 0.99].
inline NmcValidation validate_nmc(std::size_t seeds, std::size_t outer_n, std::optional<std::size_t> inner_m,
                                  std::size_t k = 4, std::size_t size = 16, std::uint64_t base_seed = 2024) {
  const auto start = std::chrono::steady_clock::now();
  NmcValidation out;
  const auto schedule = nmc_schedule(outer_n, inner_m);
  for (const auto& [n, m] : schedule) out.schedule.push_back({n, m, 0.0});

  const DesignGrid grid(size, size, size, size);
  for (std::size_t s = 0; s < seeds; ++s) {
    const BeliefEnsemble e = random_ensemble(k, size, size, mix_key(base_seed, s));
    const EigMap exact = exact_eig_map(e, grid);
    for (auto& point : out.schedule) {
      NmcConfig c;
      c.outer_n = point.outer_n;
      c.inner_m = point.inner_m;
      c.seed = mix_key(base_seed ^ 0x5EED, s, point.outer_n);
      point.mean_rmse += rmse(nmc_eig_map(e, grid, c).values, exact.values);
    }
  }
  for (auto& point : out.schedule) point.mean_rmse /= static_cast<double>(std::max<std::size_t>(seeds, 1));

  out.strictly_decreasing = true;
  for (std::size_t i = 1; i < out.schedule.size(); ++i) {
    out.strictly_decreasing = out.strictly_decreasing && out.schedule[i].mean_rmse < out.schedule[i - 1].mean_rmse;
  }
  out.within_tolerance = out.schedule.back().mean_rmse <= kNmcRmseTolerance;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace eigbench
