#pragma once

// Domain types shared by every eigbench module: probability maps, belief
// ensembles, point prompts, binary masks and the candidate design grid,
// plus the entropy and Dice primitives built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace eigbench {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ExhaustedDesigns : Error {
  using Error::Error;
};

struct SessionStateError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline constexpr double kLn2 = 0.69314718055994530942;

// ---------------------------------------------------------------------------
// Maps
// ---------------------------------------------------------------------------

/// Row-major field of per-pixel probabilities p(y = 1), row 0 at the top.
/// Stored in single precision; all accumulation elsewhere is double.
class ProbabilityMap {
 public:
  ProbabilityMap() = default;

  ProbabilityMap(std::size_t height, std::size_t width, float fill = 0.5f)
      : height_(height), width_(width), values_(height * width, fill) {
    check_value(fill);
  }

  ProbabilityMap(std::size_t height, std::size_t width, std::vector<float> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height_ * width_) {
      throw ShapeError("probability map: expected " + std::to_string(height_ * width_) +
                       " values, got " + std::to_string(values_.size()));
    }
    for (float v : values_) check_value(v);
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  float operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  float operator[](std::size_t index) const { return values_[index]; }
  std::span<const float> values() const { return values_; }

  bool same_shape(const ProbabilityMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const ProbabilityMap&, const ProbabilityMap&) = default;

 private:
  static void check_value(float v) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DomainError("probability map: value outside [0,1]");
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

/// K prediction heads treated as a uniform distribution over beliefs.
class BeliefEnsemble {
 public:
  BeliefEnsemble() = default;

  explicit BeliefEnsemble(std::vector<ProbabilityMap> heads,
                          std::optional<std::vector<double>> scores = std::nullopt)
      : heads_(std::move(heads)), scores_(std::move(scores)) {
    if (heads_.empty()) throw DomainError("belief ensemble: no heads");
    for (const auto& h : heads_) {
      if (!h.same_shape(heads_.front())) {
        throw ShapeError("belief ensemble: heads have mismatched dimensions");
      }
    }
    if (scores_ && scores_->size() != heads_.size()) {
      throw ShapeError("belief ensemble: " + std::to_string(scores_->size()) + " scores for " +
                       std::to_string(heads_.size()) + " heads");
    }
  }

  std::size_t num_heads() const { return heads_.size(); }
  std::size_t height() const { return heads_.empty() ? 0 : heads_.front().height(); }
  std::size_t width() const { return heads_.empty() ? 0 : heads_.front().width(); }
  bool empty() const { return heads_.empty(); }

  const ProbabilityMap& head(std::size_t k) const { return heads_[k]; }
  const std::vector<ProbabilityMap>& heads() const { return heads_; }
  const std::optional<std::vector<double>>& scores() const { return scores_; }

  friend bool operator==(const BeliefEnsemble&, const BeliefEnsemble&) = default;

 private:
  std::vector<ProbabilityMap> heads_;
  std::optional<std::vector<double>> scores_;
};

class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : height_(height), width_(width), values_(height * width, fill ? 1 : 0) {}

  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height_ * width_) {
      throw ShapeError("binary mask: expected " + std::to_string(height_ * width_) +
                       " values, got " + std::to_string(values_.size()));
    }
    for (auto v : values_) {
      if (v > 1) throw DomainError("binary mask: value outside {0,1}");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  std::uint8_t operator()(std::size_t row, std::size_t col) const {
    return values_[row * width_ + col];
  }
  std::uint8_t operator[](std::size_t index) const { return values_[index]; }
  void set(std::size_t row, std::size_t col, bool on) { values_[row * width_ + col] = on ? 1 : 0; }
  std::span<const std::uint8_t> values() const { return values_; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image&, const Image&) = default;
};

// ---------------------------------------------------------------------------
// Prompts and designs
// ---------------------------------------------------------------------------

struct Design {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const Design&, const Design&) = default;
};

struct PointPrompt {
  Design design;
  int label = 0;

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

using PromptTrace = std::vector<PointPrompt>;

inline void check_label(int label) {
  if (label != 0 && label != 1) throw DomainError("prompt label must be 0 or 1");
}

inline void check_in_bounds(const Design& d, std::size_t height, std::size_t width) {
  if (d.row >= height || d.col >= width) {
    throw ShapeError("design (" + std::to_string(d.row) + "," + std::to_string(d.col) +
                     ") outside " + std::to_string(height) + "x" + std::to_string(width) +
                     " image");
  }
}

/// Candidate design set: a rows x cols lattice of cell-center pixels.
/// Cell (r, c) maps to pixel (floor((r+0.5)*H/rows), floor((c+0.5)*W/cols)).
class DesignGrid {
 public:
  DesignGrid() = default;

  DesignGrid(std::size_t rows, std::size_t cols, std::size_t image_height, std::size_t image_width)
      : rows_(rows), cols_(cols), height_(image_height), width_(image_width) {
    if (rows == 0 || cols == 0) throw DomainError("design grid: empty grid");
    if (rows > image_height || cols > image_width) {
      throw ShapeError("design grid: " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " grid does not fit a " + std::to_string(image_height) + "x" +
                       std::to_string(image_width) + " image");
    }
    cells_.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        cells_.push_back({cell_center(r, rows, image_height), cell_center(c, cols, image_width)});
      }
    }
  }

  /// Grid over explicit pixel designs; used by tests and external callers.
  DesignGrid(std::size_t rows, std::size_t cols, std::vector<Design> cells,
             std::size_t image_height, std::size_t image_width)
      : rows_(rows), cols_(cols), height_(image_height), width_(image_width),
        cells_(std::move(cells)) {
    if (cells_.empty()) throw DomainError("design grid: empty grid");
    if (cells_.size() != rows * cols) throw ShapeError("design grid: cell count mismatch");
    for (const auto& d : cells_) check_in_bounds(d, image_height, image_width);
    for (std::size_t i = 1; i < cells_.size(); ++i) {
      const auto key = [this](const Design& d) { return d.row * width_ + d.col; };
      if (key(cells_[i]) <= key(cells_[i - 1])) {
        throw DomainError("design grid: cells must be strictly increasing row-major");
      }
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return cells_.size(); }
  std::size_t image_height() const { return height_; }
  std::size_t image_width() const { return width_; }

  const Design& cell(std::size_t index) const { return cells_[index]; }
  const std::vector<Design>& cells() const { return cells_; }

  bool is_used(std::size_t index) const { return used_.contains(index); }
  void mark_used(std::size_t index) { used_.insert(index); }
  std::size_t used_count() const { return used_.size(); }
  std::size_t unused_count() const { return cells_.size() - used_.size(); }

  /// Index of the cell at pixel d, if any.
  std::optional<std::size_t> find(const Design& d) const {
    const auto it = std::lower_bound(cells_.begin(), cells_.end(), d,
                                     [this](const Design& a, const Design& b) {
                                       return a.row * width_ + a.col < b.row * width_ + b.col;
                                     });
    if (it != cells_.end() && *it == d) return static_cast<std::size_t>(it - cells_.begin());
    return std::nullopt;
  }

 private:
  static std::size_t cell_center(std::size_t index, std::size_t count, std::size_t extent) {
    // Exact in integers: floor((2*index + 1) * extent / (2 * count)).
    return ((2 * index + 1) * extent) / (2 * count);
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<Design> cells_;
  std::unordered_set<std::size_t> used_;
};

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// Entropy of Bernoulli(p) in nats, with 0 ln 0 = 0.
inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy: p outside [0,1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return std::clamp(h, 0.0, kLn2);
}

inline ProbabilityMap ensemble_mean(const BeliefEnsemble& e) {
  if (e.empty()) throw DomainError("ensemble_mean: empty ensemble");
  const std::size_t n = e.head(0).size();
  const double k = static_cast<double>(e.num_heads());
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& h : e.heads()) sum += h[i];
    out[i] = static_cast<float>(sum / k);
  }
  return ProbabilityMap(e.height(), e.width(), std::move(out));
}

/// Per-pixel entropy of the marginal predictive, in nats (double precision).
inline std::vector<double> predictive_entropy_map(const BeliefEnsemble& e) {
  const ProbabilityMap mean = ensemble_mean(e);
  std::vector<double> out(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) out[i] = binary_entropy(mean[i]);
  return out;
}

/// 2|a & b| / (|a| + |b|); two empty masks score 1.
inline double dice(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("dice: mask dimensions differ");
  }
  std::size_t inter = 0, total = 0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    inter += av[i] & bv[i];
    total += av[i] + bv[i];
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace eigbench
