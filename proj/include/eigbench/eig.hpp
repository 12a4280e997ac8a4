#pragma once

// Per-design expected information gain over a finite belief ensemble.
//
// Two estimators are provided:
//  * exact_eig_map: mutual information between the head index k ~ Unif{1..K}
//    and a pixel label y ~ Bernoulli(theta_k(d)), which for a uniform finite
//    mixture reduces to H_b(mean_k theta_k(d)) - mean_k H_b(theta_k(d)).
//  * nmc_eig_map: the nested Monte Carlo estimator
//      (1/N) sum_n [ log p(y_n | theta_n0) - log (1/M) sum_m p(y_n | theta_nm) ]
//    with theta drawn uniformly from the heads and y_n drawn from theta_n0.
//
// All designs are evaluated from the same head draws of each outer sample.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "eigbench/core.hpp"

namespace eigbench {

// ---------------------------------------------------------------------------
// Counter-based random numbers
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stateless hash of (seed, a, b) used to key draws by sample and design so
/// that results do not depend on evaluation order.
inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ull));
}

inline double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// SplitMix64 stream. Fully specified, so draws are identical on every
/// platform (unlike std:: distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() { return to_unit_interval(next()); }

  /// Uniform on {0, ..., n-1}; Lemire's multiply-shift with rejection.
  std::size_t index(std::size_t n) {
    const auto bound = static_cast<std::uint64_t>(n);
    auto product = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::size_t>(product >> 64);
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

/// Smallest m with m*m >= n.
inline std::size_t ceil_sqrt(std::size_t n) {
  auto m = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (m * m < n) ++m;
  while (m > 0 && (m - 1) * (m - 1) >= n) --m;
  return m;
}

struct NmcConfig {
  std::size_t outer_n = 4096;
  std::size_t inner_m = 64;
  std::uint64_t seed = 0;
  double clamp_eps = 1e-6;

  /// Inner count tied to the outer count as M = ceil(sqrt(N)).
  static NmcConfig auto_schedule(std::size_t outer_n, std::uint64_t seed = 0) {
    NmcConfig c;
    c.outer_n = outer_n;
    c.inner_m = ceil_sqrt(outer_n);
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (outer_n < 1 || inner_m < 1) throw DomainError("nmc config: outer_n and inner_m must be >= 1");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw DomainError("nmc config: clamp_eps must lie in (0, 0.5)");
  }
};

enum class Estimator { exact, nmc };

inline std::string to_string(Estimator e) { return e == Estimator::exact ? "exact" : "nmc"; }

inline Estimator parse_estimator(const std::string& s) {
  if (s == "exact") return Estimator::exact;
  if (s == "nmc") return Estimator::nmc;
  throw DomainError("unknown estimator '" + s + "'");
}

/// EIG in nats per design grid cell, row-major over the grid.
struct EigMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  Estimator estimator = Estimator::exact;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  double max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    return m;
  }
  double min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values) m = std::min(m, v);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

namespace detail {

inline void check_grid(const BeliefEnsemble& e, const DesignGrid& g) {
  if (e.empty()) throw DomainError("eig: empty ensemble");
  if (g.size() == 0) throw DomainError("eig: empty design grid");
  for (const auto& d : g.cells()) check_in_bounds(d, e.height(), e.width());
}

}  // namespace detail

inline EigMap exact_eig_map(const BeliefEnsemble& e, const DesignGrid& g) {
  detail::check_grid(e, g);
  const std::size_t k = e.num_heads();
  EigMap out{g.rows(), g.cols(), std::vector<double>(g.size()), Estimator::exact};
  std::vector<double> theta(k);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const Design& d = g.cell(j);
    for (std::size_t h = 0; h < k; ++h) theta[h] = e.head(h)(d.row, d.col);
    // Sorted accumulation makes the result independent of head order.
    std::sort(theta.begin(), theta.end());
    double mean = 0.0, mean_entropy = 0.0;
    for (double t : theta) {
      mean += t;
      mean_entropy += binary_entropy(t);
    }
    mean /= static_cast<double>(k);
    mean_entropy /= static_cast<double>(k);
    out.values[j] = std::max(0.0, binary_entropy(std::min(mean, 1.0)) - mean_entropy);
  }
  return out;
}

struct ThetaSample {
  std::size_t outer_head = 0;
  int y = 0;
  std::vector<std::size_t> inner_heads;
};

/// One draw of (theta_n0, y_n, theta_n1..theta_nM) at a single design:
/// outer head uniform over heads, then p ~ U(0,1) with y = [p < theta_n0(d)],
/// then M inner heads uniform with replacement.
inline ThetaSample sample_theta_and_y(const BeliefEnsemble& e, const Design& d,
                                      std::size_t inner_m, Rng& rng) {
  if (e.empty()) throw DomainError("sample_theta_and_y: empty ensemble");
  check_in_bounds(d, e.height(), e.width());
  ThetaSample s;
  s.outer_head = rng.index(e.num_heads());
  const double p = rng.uniform();
  s.y = p < static_cast<double>(e.head(s.outer_head)(d.row, d.col)) ? 1 : 0;
  s.inner_heads.resize(inner_m);
  for (auto& h : s.inner_heads) h = rng.index(e.num_heads());
  return s;
}

/// Nested Monte Carlo EIG. Head draws for outer sample n come from the stream
/// keyed by (seed, n) and are shared by every design; the label uniform for
/// (n, design j) is keyed by (seed, n, j). Output is therefore bit-identical
/// for a given configuration regardless of evaluation order.
inline EigMap nmc_eig_map(const BeliefEnsemble& e, const DesignGrid& g, const NmcConfig& c) {
  detail::check_grid(e, g);
  c.validate();
  const std::size_t k = e.num_heads();
  const std::size_t nd = g.size();

  // Clamped likelihood of y = 1 per (head, design).
  std::vector<double> p1(k * nd);
  for (std::size_t h = 0; h < k; ++h) {
    for (std::size_t j = 0; j < nd; ++j) {
      const Design& d = g.cell(j);
      p1[h * nd + j] = std::clamp(static_cast<double>(e.head(h)(d.row, d.col)), c.clamp_eps,
                                  1.0 - c.clamp_eps);
    }
  }

  std::vector<double> acc(nd, 0.0);
  std::vector<double> weight(k);
  const double inv_m = 1.0 / static_cast<double>(c.inner_m);
  for (std::size_t n = 0; n < c.outer_n; ++n) {
    Rng stream(mix_key(c.seed, n));
    const std::size_t outer = stream.index(k);
    // The inner average only depends on how often each head was drawn.
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t m = 0; m < c.inner_m; ++m) ++counts[stream.index(k)];
    for (std::size_t h = 0; h < k; ++h) weight[h] = static_cast<double>(counts[h]) * inv_m;

    const double* outer_p = &p1[outer * nd];
    for (std::size_t j = 0; j < nd; ++j) {
      const Design& d = g.cell(j);
      const double u = to_unit_interval(mix_key(c.seed ^ 0xA5A5A5A5A5A5A5A5ull, n, j));
      const bool y = u < static_cast<double>(e.head(outer)(d.row, d.col));
      const double ref = y ? outer_p[j] : 1.0 - outer_p[j];
      // Inner mean written as ref + sum_h w_h (p_h - ref): equal heads cancel exactly.
      double inner = ref;
      for (std::size_t h = 0; h < k; ++h) {
        if (counts[h] == 0) continue;
        const double ph = y ? p1[h * nd + j] : 1.0 - p1[h * nd + j];
        inner += weight[h] * (ph - ref);
      }
      acc[j] += std::log(ref) - std::log(inner);
    }
  }

  EigMap out{g.rows(), g.cols(), std::move(acc), Estimator::nmc};
  for (double& v : out.values) v /= static_cast<double>(c.outer_n);
  return out;
}

inline EigMap eig_map(const BeliefEnsemble& e, const DesignGrid& g, Estimator estimator,
                      const NmcConfig& nmc = {}) {
  return estimator == Estimator::exact ? exact_eig_map(e, g) : nmc_eig_map(e, g, nmc);
}

struct DesignChoice {
  std::size_t cell = 0;
  Design design;
  double eig = 0.0;
};

/// Arg-max over unused grid cells; ties go to the lowest row-major index.
inline DesignChoice select_design(const EigMap& m, const DesignGrid& g) {
  if (m.values.size() != g.size()) throw ShapeError("select_design: map and grid sizes differ");
  std::optional<DesignChoice> best;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.is_used(j)) continue;
    if (!best || m.values[j] > best->eig) best = DesignChoice{j, g.cell(j), m.values[j]};
  }
  if (!best) throw ExhaustedDesigns("select_design: every grid cell has been prompted");
  return *best;
}

}  // namespace eigbench
