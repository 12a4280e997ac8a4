#include <gtest/gtest.h>

#include <cmath>

#include "eigbench/core.hpp"
#include "eigbench/eig.hpp"

namespace eb = eigbench;

namespace {

eb::BeliefEnsemble pixel_ensemble(std::initializer_list<float> values) {
  std::vector<eb::ProbabilityMap> heads;
  for (float v : values) heads.emplace_back(1, 1, std::vector<float>{v});
  return eb::BeliefEnsemble(std::move(heads));
}

eb::BinaryMask mask_from(std::size_t h, std::size_t w, std::initializer_list<int> bits) {
  std::vector<std::uint8_t> v;
  for (int b : bits) v.push_back(static_cast<std::uint8_t>(b));
  return eb::BinaryMask(h, w, std::move(v));
}

}  // namespace

TEST(BinaryEntropy, Examples) {
  EXPECT_EQ(eb::binary_entropy(0.0), 0.0);
  EXPECT_EQ(eb::binary_entropy(1.0), 0.0);
  EXPECT_NEAR(eb::binary_entropy(0.5), std::log(2.0), 1e-15);
  const double direct = -0.2 * std::log(0.2) - 0.8 * std::log(0.8);
  EXPECT_NEAR(direct, 0.500402, 1e-6);
  EXPECT_NEAR(eb::binary_entropy(0.2), direct, 1e-15);
}

TEST(BinaryEntropy, RejectsOutOfRange) {
  EXPECT_THROW(eb::binary_entropy(-1e-9), eb::DomainError);
  EXPECT_THROW(eb::binary_entropy(1.5), eb::DomainError);
  EXPECT_THROW(eb::binary_entropy(std::nan("")), eb::DomainError);
}

TEST(BinaryEntropy, SymmetricAndBounded) {
  eb::Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform();
    const double h = eb::binary_entropy(p);
    EXPECT_NEAR(h, eb::binary_entropy(1.0 - p), 1e-12);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, eb::kLn2);
  }
}

TEST(EnsembleMean, Examples) {
  const eb::ProbabilityMap single(2, 3, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  EXPECT_EQ(eb::ensemble_mean(eb::BeliefEnsemble({single})), single);
  EXPECT_FLOAT_EQ(eb::ensemble_mean(pixel_ensemble({0.2f, 0.8f}))[0], 0.5f);
  EXPECT_FLOAT_EQ(eb::ensemble_mean(pixel_ensemble({0.1f, 0.5f, 0.9f}))[0], 0.5f);
}

TEST(EnsembleMean, MismatchedHeadsRejected) {
  std::vector<eb::ProbabilityMap> heads{eb::ProbabilityMap(2, 2), eb::ProbabilityMap(2, 3)};
  EXPECT_THROW(eb::BeliefEnsemble{std::move(heads)}, eb::ShapeError);
  EXPECT_THROW(eb::BeliefEnsemble{std::vector<eb::ProbabilityMap>{}}, eb::DomainError);
}

TEST(EnsembleMean, BoundedByHeadExtremes) {
  eb::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.index(5);
    std::vector<eb::ProbabilityMap> heads;
    for (std::size_t h = 0; h < k; ++h) {
      std::vector<float> v(16);
      for (float& x : v) x = static_cast<float>(rng.uniform());
      heads.emplace_back(4, 4, std::move(v));
    }
    const eb::BeliefEnsemble e(heads);
    const auto mean = eb::ensemble_mean(e);
    for (std::size_t i = 0; i < 16; ++i) {
      float lo = 1.0f, hi = 0.0f;
      for (const auto& h : heads) {
        lo = std::min(lo, h[i]);
        hi = std::max(hi, h[i]);
      }
      EXPECT_GE(mean[i], lo);
      EXPECT_LE(mean[i], hi);
    }
  }
}

TEST(PredictiveEntropy, Examples) {
  std::vector<eb::ProbabilityMap> ones(3, eb::ProbabilityMap(2, 2, 1.0f));
  for (double v : eb::predictive_entropy_map(eb::BeliefEnsemble(ones))) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(eb::predictive_entropy_map(pixel_ensemble({0.2f, 0.8f}))[0], std::log(2.0), 1e-12);
  EXPECT_NEAR(eb::predictive_entropy_map(pixel_ensemble({0.2f}))[0], 0.500402, 1e-6);
}

TEST(PredictiveEntropy, WithinBounds) {
  eb::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<eb::ProbabilityMap> heads;
    for (int h = 0; h < 3; ++h) {
      std::vector<float> v(9);
      for (float& x : v) x = static_cast<float>(rng.uniform());
      heads.emplace_back(3, 3, std::move(v));
    }
    for (double v : eb::predictive_entropy_map(eb::BeliefEnsemble(heads))) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, eb::kLn2);
    }
  }
}

TEST(Dice, Examples) {
  const auto a = mask_from(2, 4, {1, 1, 1, 1, 0, 0, 0, 0});
  EXPECT_EQ(eb::dice(a, a), 1.0);
  const auto b = mask_from(2, 4, {0, 0, 0, 0, 1, 1, 1, 1});
  EXPECT_EQ(eb::dice(a, b), 0.0);
  const auto c = mask_from(2, 4, {0, 0, 1, 1, 1, 1, 0, 0});
  EXPECT_EQ(eb::dice(a, c), 0.5);
}

TEST(Dice, EmptyMaskConventions) {
  const eb::BinaryMask empty(3, 3);
  EXPECT_EQ(eb::dice(empty, empty), 1.0);
  eb::BinaryMask one(3, 3);
  one.set(1, 1, true);
  EXPECT_EQ(eb::dice(empty, one), 0.0);
  EXPECT_EQ(eb::dice(one, empty), 0.0);
}

TEST(Dice, ShapeMismatch) {
  EXPECT_THROW(eb::dice(eb::BinaryMask(2, 2), eb::BinaryMask(2, 3)), eb::ShapeError);
}

TEST(Dice, SymmetricAndOneOnlyWhenEqual) {
  eb::Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    eb::BinaryMask a(4, 4), b(4, 4);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        a.set(r, c, rng.uniform() < 0.4);
        b.set(r, c, rng.uniform() < 0.4);
      }
    }
    EXPECT_EQ(eb::dice(a, b), eb::dice(b, a));
    if (a.count() > 0 || b.count() > 0) {
      EXPECT_EQ(eb::dice(a, b) == 1.0, a == b);
    }
  }
}

TEST(ProbabilityMap, RejectsInvalidValues) {
  EXPECT_THROW(eb::ProbabilityMap(1, 2, std::vector<float>{0.5f, 1.2f}), eb::DomainError);
  EXPECT_THROW(eb::ProbabilityMap(1, 2, std::vector<float>{0.5f}), eb::ShapeError);
  EXPECT_THROW(eb::ProbabilityMap(1, 1, std::vector<float>{std::nanf("")}), eb::DomainError);
}

TEST(BinaryMask, RejectsNonBinary) {
  EXPECT_THROW(eb::BinaryMask(1, 2, std::vector<std::uint8_t>{0, 2}), eb::DomainError);
}

TEST(BeliefEnsemble, ScoreCountMustMatch) {
  std::vector<eb::ProbabilityMap> heads(2, eb::ProbabilityMap(1, 1));
  EXPECT_THROW(eb::BeliefEnsemble(heads, std::vector<double>{1.0}), eb::ShapeError);
  EXPECT_NO_THROW(eb::BeliefEnsemble(heads, std::vector<double>{1.0, 2.0}));
}

TEST(DesignGrid, CellCentersOn300PixelImage) {
  const eb::DesignGrid g(30, 30, 300, 300);
  ASSERT_EQ(g.size(), 900u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(g.cell(i).col, 5 + 10 * i);
    EXPECT_EQ(g.cell(i * 30).row, 5 + 10 * i);
  }
  EXPECT_EQ(g.cell(899), (eb::Design{295, 295}));
}

TEST(DesignGrid, IdentityWhenGridMatchesImage) {
  const eb::DesignGrid g(7, 5, 7, 5);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(g.cell(r * 5 + c), (eb::Design{r, c}));
  }
}

TEST(DesignGrid, StrictlyIncreasingAndInBounds) {
  for (std::size_t n : {1u, 3u, 8u, 30u}) {
    for (std::size_t size : {30u, 31u, 64u, 97u}) {
      const eb::DesignGrid g(n, n, size, size);
      for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_LT(g.cell(i).row, size);
        EXPECT_LT(g.cell(i).col, size);
        if (i > 0) {
          EXPECT_LT(g.cell(i - 1).row * size + g.cell(i - 1).col, g.cell(i).row * size + g.cell(i).col);
        }
        EXPECT_EQ(g.find(g.cell(i)), i);
      }
    }
  }
}

TEST(DesignGrid, Errors) {
  EXPECT_THROW(eb::DesignGrid(0, 3, 10, 10), eb::DomainError);
  EXPECT_THROW(eb::DesignGrid(11, 3, 10, 10), eb::ShapeError);
  EXPECT_THROW(eb::DesignGrid(1, 1, std::vector<eb::Design>{{10, 0}}, 10, 10), eb::ShapeError);
  EXPECT_THROW(eb::DesignGrid(1, 2, std::vector<eb::Design>{{1, 1}, {1, 0}}, 10, 10), eb::DomainError);
}

TEST(DesignGrid, UsedTracking) {
  eb::DesignGrid g(2, 2, 4, 4);
  EXPECT_EQ(g.unused_count(), 4u);
  g.mark_used(2);
  EXPECT_TRUE(g.is_used(2));
  EXPECT_FALSE(g.is_used(1));
  EXPECT_EQ(g.unused_count(), 3u);
}
