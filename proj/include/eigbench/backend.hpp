#pragma once

// Segmenter session contract and the built-in synthetic backends.
//
// The synthetic backends ignore image content. Each one reproduces a regime
// observed with real prompt-driven segmenters:
//   kernel        multi-scale prompt-responsive heads that disagree away from
//                 prompts (well-calibrated point-prompt understanding)
//   overconfident one sharpened head copied K times (collapsed ensemble)
//   prompt_blind  a fixed smooth random ensemble that ignores prompts

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eigbench/core.hpp"
#include "eigbench/eig.hpp"

namespace eigbench {

class SegmenterSession {
 public:
  virtual ~SegmenterSession() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_heads() const = 0;
  virtual void set_image(const Image& image) = 0;
  virtual BeliefEnsemble predict(const PromptTrace& trace) = 0;

  /// True when predict leaves no state behind for a fixed image, so candidate
  /// evaluations may be reordered or fanned out.
  virtual bool side_effect_free() const { return true; }
};

struct KernelBackendConfig {
  std::vector<double> bandwidths{4.0, 8.0, 16.0, 32.0};
  double prior_weight = 0.1;
  double prior = 0.5;

  void validate() const {
    if (bandwidths.empty()) throw DomainError("kernel backend: no bandwidths");
    for (double s : bandwidths) {
      if (!(s > 0.0)) throw DomainError("kernel backend: bandwidths must be positive");
    }
    if (!(prior_weight > 0.0)) throw DomainError("kernel backend: prior_weight must be positive");
    if (!(prior > 0.0 && prior < 1.0)) throw DomainError("kernel backend: prior must lie in (0,1)");
  }
};

struct OverconfidentBackendConfig {
  double bandwidth = 8.0;
  double prior_weight = 0.1;
  double prior = 0.5;
  double temperature = 6.0;
  std::size_t num_heads = 4;
};

struct PromptBlindBackendConfig {
  std::size_t num_heads = 4;
  std::uint64_t seed = 0;
  /// Lattice spacing of the value noise, in pixels.
  double feature_size = 16.0;
  /// Logit gain applied to noise in [-1, 1] before squashing.
  double gain = 4.0;
};

/// Nadaraya-Watson style vote of the prompts with a Gaussian kernel of the
/// given bandwidth, shrunk toward `prior` with pseudo-count `prior_weight`:
///   theta(p) = (sum_i w_i l_i + a * prior) / (sum_i w_i + a),
///   w_i = exp(-|p - x_i|^2 / (2 sigma^2)).
inline std::vector<double> kernel_head(std::size_t height, std::size_t width,
                                       const PromptTrace& trace, double bandwidth,
                                       double prior_weight, double prior) {
  std::vector<double> num(height * width, prior_weight * prior);
  std::vector<double> den(height * width, prior_weight);
  std::vector<double> row_w(height), col_w(width);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (const auto& p : trace) {
    // The 2-D Gaussian factorizes into row and column terms.
    for (std::size_t r = 0; r < height; ++r) {
      const double dr = static_cast<double>(r) - static_cast<double>(p.design.row);
      row_w[r] = std::exp(-dr * dr * inv);
    }
    for (std::size_t c = 0; c < width; ++c) {
      const double dc = static_cast<double>(c) - static_cast<double>(p.design.col);
      col_w[c] = std::exp(-dc * dc * inv);
    }
    const double label = p.label;
    for (std::size_t r = 0; r < height; ++r) {
      double* nr = &num[r * width];
      double* dr = &den[r * width];
      for (std::size_t c = 0; c < width; ++c) {
        const double w = row_w[r] * col_w[c];
        nr[c] += w * label;
        dr[c] += w;
      }
    }
  }
  for (std::size_t i = 0; i < num.size(); ++i) num[i] /= den[i];
  return num;
}

inline ProbabilityMap to_probability_map(std::size_t height, std::size_t width,
                                         const std::vector<double>& values) {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(values[i], 0.0, 1.0));
  }
  return ProbabilityMap(height, width, std::move(out));
}

/// Logit sharpening 1 / (1 + exp(-t * logit(p))), written as p^t / (p^t + (1-p)^t)
/// so that 0 and 1 are fixed points.
inline double sharpen(double p, double temperature) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double logit = std::log(p) - std::log1p(-p);
  return 1.0 / (1.0 + std::exp(-temperature * logit));
}

namespace detail {

class SyntheticSession : public SegmenterSession {
 public:
  void set_image(const Image& image) override {
    if (image.height == 0 || image.width == 0) throw ShapeError("set_image: empty image");
    height_ = image.height;
    width_ = image.width;
    has_image_ = true;
    on_image();
  }

 protected:
  virtual void on_image() {}

  void check_trace(const PromptTrace& trace) const {
    if (!has_image_) throw SessionStateError(name() + ": predict called before set_image");
    for (const auto& p : trace) {
      check_in_bounds(p.design, height_, width_);
      check_label(p.label);
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  bool has_image_ = false;
};

}  // namespace detail

class KernelSession final : public detail::SyntheticSession {
 public:
  explicit KernelSession(KernelBackendConfig config = {}) : config_(std::move(config)) {
    config_.validate();
  }

  std::string name() const override { return "kernel"; }
  std::size_t num_heads() const override { return config_.bandwidths.size(); }

  BeliefEnsemble predict(const PromptTrace& trace) override {
    check_trace(trace);
    std::vector<ProbabilityMap> heads;
    heads.reserve(config_.bandwidths.size());
    for (double sigma : config_.bandwidths) {
      heads.push_back(to_probability_map(
          height_, width_,
          kernel_head(height_, width_, trace, sigma, config_.prior_weight, config_.prior)));
    }
    return BeliefEnsemble(std::move(heads));
  }

  const KernelBackendConfig& config() const { return config_; }

 private:
  KernelBackendConfig config_;
};

class OverconfidentSession final : public detail::SyntheticSession {
 public:
  explicit OverconfidentSession(OverconfidentBackendConfig config = {}) : config_(config) {
    if (config_.num_heads == 0) throw DomainError("overconfident backend: num_heads must be >= 1");
    if (!(config_.temperature > 0.0)) throw DomainError("overconfident backend: temperature must be positive");
    KernelBackendConfig{{config_.bandwidth}, config_.prior_weight, config_.prior}.validate();
  }

  std::string name() const override { return "overconfident"; }
  std::size_t num_heads() const override { return config_.num_heads; }

  BeliefEnsemble predict(const PromptTrace& trace) override {
    check_trace(trace);
    auto head = kernel_head(height_, width_, trace, config_.bandwidth, config_.prior_weight,
                            config_.prior);
    for (double& v : head) v = sharpen(v, config_.temperature);
    const ProbabilityMap sharp = to_probability_map(height_, width_, head);
    return BeliefEnsemble(std::vector<ProbabilityMap>(config_.num_heads, sharp));
  }

 private:
  OverconfidentBackendConfig config_;
};

/// Smooth value noise in [-1, 1]: random lattice values, smoothstep-blended.
inline std::vector<double> value_noise(std::size_t height, std::size_t width, double feature_size,
                                       std::uint64_t seed) {
  const auto lattice_h = static_cast<std::size_t>(std::ceil(height / feature_size)) + 2;
  const auto lattice_w = static_cast<std::size_t>(std::ceil(width / feature_size)) + 2;
  std::vector<double> lattice(lattice_h * lattice_w);
  Rng rng(seed);
  for (double& v : lattice) v = 2.0 * rng.uniform() - 1.0;

  const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  std::vector<double> out(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    const double fr = static_cast<double>(r) / feature_size;
    const auto r0 = static_cast<std::size_t>(fr);
    const double tr = smooth(fr - static_cast<double>(r0));
    for (std::size_t c = 0; c < width; ++c) {
      const double fc = static_cast<double>(c) / feature_size;
      const auto c0 = static_cast<std::size_t>(fc);
      const double tc = smooth(fc - static_cast<double>(c0));
      const double v00 = lattice[r0 * lattice_w + c0];
      const double v01 = lattice[r0 * lattice_w + c0 + 1];
      const double v10 = lattice[(r0 + 1) * lattice_w + c0];
      const double v11 = lattice[(r0 + 1) * lattice_w + c0 + 1];
      const double top = v00 + (v01 - v00) * tc;
      const double bottom = v10 + (v11 - v10) * tc;
      out[r * width + c] = top + (bottom - top) * tr;
    }
  }
  return out;
}

class PromptBlindSession final : public detail::SyntheticSession {
 public:
  explicit PromptBlindSession(PromptBlindBackendConfig config = {}) : config_(config) {
    if (config_.num_heads == 0) throw DomainError("prompt_blind backend: num_heads must be >= 1");
    if (!(config_.feature_size > 0.0)) throw DomainError("prompt_blind backend: feature_size must be positive");
  }

  std::string name() const override { return "blind"; }
  std::size_t num_heads() const override { return config_.num_heads; }

  BeliefEnsemble predict(const PromptTrace& trace) override {
    check_trace(trace);
    return ensemble_;
  }

 private:
  void on_image() override {
    std::vector<ProbabilityMap> heads;
    for (std::size_t k = 0; k < config_.num_heads; ++k) {
      auto field = value_noise(height_, width_, config_.feature_size, mix_key(config_.seed, k));
      for (double& v : field) v = 1.0 / (1.0 + std::exp(-config_.gain * v));
      heads.push_back(to_probability_map(height_, width_, field));
    }
    ensemble_ = BeliefEnsemble(std::move(heads));
  }

  PromptBlindBackendConfig config_;
  BeliefEnsemble ensemble_;
};

}  // namespace eigbench
