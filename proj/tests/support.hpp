#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. They deliberately avoid the library's grid, proposal and
// Dice helpers so that agreement is meaningful.

#include <unistd.h>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "eigbench/eigbench.hpp"

namespace eigbench::testing {

/// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("eigbench_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

inline std::size_t ref_center_pixel(std::size_t i, std::size_t count, std::size_t extent) {
  return static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(extent) /
                                  static_cast<double>(count));
}

inline double ref_dice(const BeliefEnsemble& e, const BinaryMask& gt) {
  std::size_t inter = 0, pred = 0, truth = 0;
  for (std::size_t r = 0; r < gt.height(); ++r) {
    for (std::size_t c = 0; c < gt.width(); ++c) {
      double mean = 0.0;
      for (const auto& h : e.heads()) mean += h(r, c);
      mean /= static_cast<double>(e.num_heads());
      const bool p = static_cast<float>(mean) >= 0.5f;
      const bool t = gt(r, c) != 0;
      inter += p && t;
      pred += p;
      truth += t;
    }
  }
  if (pred + truth == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(pred + truth);
}

struct RefChoice {
  Design design;
  double dice = -1.0;
};

/// Exhaustive next-prompt search written from scratch over a rows x rows grid.
inline RefChoice ref_oracle_choice(SegmenterSession& s, const BinaryMask& gt, const PromptTrace& trace,
                                   std::size_t rows) {
  RefChoice best;
  bool found = false;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < rows; ++c) {
      const Design d{ref_center_pixel(r, rows, gt.height()), ref_center_pixel(c, rows, gt.width())};
      bool used = false;
      for (const auto& p : trace) used = used || p.design == d;
      if (used) continue;
      PromptTrace t = trace;
      t.push_back({d, gt(d.row, d.col)});
      const double score = ref_dice(s.predict(t), gt);
      if (!found || score > best.dice) {
        best = {d, score};
        found = true;
      }
    }
  }
  return best;
}

inline PromptTrace trace_of(const EpisodeRecord& rec, std::size_t up_to_step) {
  PromptTrace t;
  for (std::size_t i = 0; i <= up_to_step && i < rec.steps.size(); ++i) {
    t.push_back({rec.steps[i].design, rec.steps[i].label});
  }
  return t;
}

/// Number of steps where oracle Dice from the EIG episode's state fell below
/// the Dice the EIG-selected design actually achieved.
inline std::size_t dominance_violations(SegmenterSession& s, const BinaryMask& gt, const EpisodeRecord& eig,
                                        std::size_t rows) {
  std::size_t bad = 0;
  for (std::size_t step = 1; step < eig.steps.size(); ++step) {
    DesignGrid grid(rows, rows, gt.height(), gt.width());
    const PromptTrace prefix = trace_of(eig, step - 1);
    for (const auto& p : prefix) {
      if (const auto cell = grid.find(p.design)) grid.mark_used(*cell);
    }
    const OracleChoice oc = oracle_step(s, gt, prefix, grid);
    if (!(oc.dice >= eig.steps[step].dice)) ++bad;
  }
  return bad;
}

}  // namespace eigbench::testing
