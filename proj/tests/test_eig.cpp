#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eigbench/eig.hpp"
#include "eigbench/validation.hpp"

namespace eb = eigbench;

namespace {

eb::BeliefEnsemble pixel_ensemble(std::initializer_list<float> values) {
  std::vector<eb::ProbabilityMap> heads;
  for (float v : values) heads.emplace_back(1, 1, std::vector<float>{v});
  return eb::BeliefEnsemble(std::move(heads));
}

eb::DesignGrid full_grid(const eb::BeliefEnsemble& e) {
  return eb::DesignGrid(e.height(), e.width(), e.height(), e.width());
}

// Enumeration of E_{k,y}[log p(y|k) - log E_k' p(y|k')] over the uniform
// head mixture; independent of the entropy-difference route.
double enumerated_eig(const std::vector<double>& theta) {
  const double k = static_cast<double>(theta.size());
  double total = 0.0;
  for (int y = 0; y <= 1; ++y) {
    double marginal = 0.0;
    for (double t : theta) marginal += (y ? t : 1.0 - t) / k;
    for (double t : theta) {
      const double like = y ? t : 1.0 - t;
      if (like > 0.0) total += (like / k) * (std::log(like) - std::log(marginal));
    }
  }
  return total;
}

// Direct nested Monte Carlo, one design at a time, with the inner average
// taken literally over M drawn heads.
double naive_nmc(const eb::BeliefEnsemble& e, const eb::Design& d, std::size_t n, std::size_t m,
                 std::uint64_t seed, double eps = 1e-6) {
  eb::Rng rng(seed);
  double acc = 0.0;
  const auto like = [&](std::size_t head, int y) {
    const double t = std::clamp(static_cast<double>(e.head(head)(d.row, d.col)), eps, 1.0 - eps);
    return y ? t : 1.0 - t;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = eb::sample_theta_and_y(e, d, m, rng);
    double inner = 0.0;
    for (auto h : s.inner_heads) inner += like(h, s.y);
    acc += std::log(like(s.outer_head, s.y)) - std::log(inner / static_cast<double>(m));
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST(ExactEig, AnalyticExamples) {
  const auto one = [](std::initializer_list<float> v) {
    const auto e = pixel_ensemble(v);
    return eb::exact_eig_map(e, full_grid(e)).values[0];
  };
  EXPECT_EQ(one({0.3f, 0.3f, 0.3f}), 0.0);
  EXPECT_NEAR(enumerated_eig({0.2, 0.8}), 0.192745, 1e-6);
  EXPECT_NEAR(one({0.2f, 0.8f}), 0.192745, 1e-6);
  EXPECT_NEAR(enumerated_eig({0.1, 0.5, 0.9}), 0.245376, 1e-6);
  EXPECT_NEAR(one({0.1f, 0.5f, 0.9f}), 0.245376, 1e-6);
  EXPECT_NEAR(one({0.0f, 1.0f}), std::log(2.0), 1e-6);
}

TEST(ExactEig, MatchesEnumerationOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t k = 1 + seed % 5;
    const auto e = eb::random_ensemble(k, 6, 5, seed, 0.0, 1.0);
    const auto grid = full_grid(e);
    const auto m = eb::exact_eig_map(e, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      std::vector<double> theta;
      for (std::size_t h = 0; h < k; ++h) theta.push_back(e.head(h)(grid.cell(j).row, grid.cell(j).col));
      EXPECT_NEAR(m.values[j], enumerated_eig(theta), 1e-12);
    }
  }
}

TEST(ExactEig, BoundsOverRandomEnsembles) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto e = eb::random_ensemble(1 + seed % 6, 4, 4, seed, 0.0, 1.0);
    for (double v : eb::exact_eig_map(e, full_grid(e)).values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, std::log(2.0) + 1e-12);
    }
  }
}

TEST(ExactEig, PermutationInvariant) {
  const auto e = eb::random_ensemble(5, 8, 8, 77);
  const auto base = eb::exact_eig_map(e, full_grid(e)).values;
  std::vector<std::size_t> order(5);
  std::iota(order.begin(), order.end(), 0);
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<eb::ProbabilityMap> heads;
    for (auto i : order) heads.push_back(e.head(i));
    const eb::BeliefEnsemble permuted(heads);
    EXPECT_EQ(eb::exact_eig_map(permuted, full_grid(permuted)).values, base);
  }
}

TEST(ExactEig, GridErrors) {
  const auto e = eb::random_ensemble(2, 4, 4, 1);
  EXPECT_THROW(eb::exact_eig_map(e, eb::DesignGrid{}), eb::DomainError);
  EXPECT_THROW(eb::exact_eig_map(e, eb::DesignGrid(2, 2, 8, 8)), eb::ShapeError);
  EXPECT_THROW(eb::exact_eig_map(eb::BeliefEnsemble{}, eb::DesignGrid(2, 2, 4, 4)), eb::DomainError);
}

TEST(SampleThetaAndY, DegenerateHeads) {
  eb::Rng rng(1);
  const auto ones = pixel_ensemble({1.0f, 1.0f});
  const auto zeros = pixel_ensemble({0.0f});
  for (int i = 0; i < 2000; ++i) {
    EXPECT_EQ(eb::sample_theta_and_y(ones, {0, 0}, 4, rng).y, 1);
    EXPECT_EQ(eb::sample_theta_and_y(zeros, {0, 0}, 4, rng).y, 0);
  }
}

TEST(SampleThetaAndY, LabelFrequencyFollowsHead) {
  eb::Rng rng(2);
  const auto e = pixel_ensemble({0.7f});
  double sum = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) sum += eb::sample_theta_and_y(e, {0, 0}, 1, rng).y;
  EXPECT_NEAR(sum / draws, 0.7, 0.01);
}

TEST(SampleThetaAndY, HeadsUniformAndDeterministic) {
  const auto e = pixel_ensemble({0.1f, 0.4f, 0.6f, 0.9f});
  eb::Rng rng(3);
  std::vector<double> outer(4, 0.0), inner(4, 0.0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const auto s = eb::sample_theta_and_y(e, {0, 0}, 8, rng);
    ASSERT_EQ(s.inner_heads.size(), 8u);
    outer[s.outer_head] += 1.0 / draws;
    for (auto h : s.inner_heads) inner[h] += 1.0 / (8.0 * draws);
  }
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(outer[k], 0.25, 0.01);
    EXPECT_NEAR(inner[k], 0.25, 0.005);
  }
  eb::Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    const auto sa = eb::sample_theta_and_y(e, {0, 0}, 5, a);
    const auto sb = eb::sample_theta_and_y(e, {0, 0}, 5, b);
    EXPECT_EQ(sa.outer_head, sb.outer_head);
    EXPECT_EQ(sa.y, sb.y);
    EXPECT_EQ(sa.inner_heads, sb.inner_heads);
  }
}

TEST(SampleThetaAndY, BoundsChecked) {
  eb::Rng rng(0);
  EXPECT_THROW(eb::sample_theta_and_y(pixel_ensemble({0.5f}), {1, 0}, 2, rng), eb::ShapeError);
}

TEST(NmcEig, IdenticalHeadsGiveExactZero) {
  const auto base = eb::random_ensemble(1, 8, 8, 4);
  const eb::BeliefEnsemble same(std::vector<eb::ProbabilityMap>(4, base.head(0)));
  for (auto [n, m] : {std::pair<std::size_t, std::size_t>{1, 1}, {17, 3}, {256, 16}}) {
    eb::NmcConfig c{n, m, 5, 1e-6};
    for (double v : eb::nmc_eig_map(same, full_grid(same), c).values) EXPECT_EQ(v, 0.0);
    for (double v : eb::nmc_eig_map(base, full_grid(base), c).values) EXPECT_EQ(v, 0.0);
  }
}

TEST(NmcEig, ApproachesExactOnTwoHeads) {
  const auto e = pixel_ensemble({0.2f, 0.8f});
  const eb::NmcConfig c{4096, 64, 12, 1e-6};
  EXPECT_NEAR(eb::nmc_eig_map(e, full_grid(e), c).values[0], 0.192745, 0.05);
}

TEST(NmcEig, AgreesWithNaiveEstimatorInDistribution) {
  const auto e = eb::random_ensemble(3, 4, 4, 21);
  const auto grid = full_grid(e);
  const auto fast = eb::nmc_eig_map(e, grid, {8192, 91, 8, 1e-6});
  const auto exact = eb::exact_eig_map(e, grid);
  for (std::size_t j = 0; j < grid.size(); j += 5) {
    const double naive = naive_nmc(e, grid.cell(j), 8192, 91, 100 + j);
    EXPECT_NEAR(naive, exact.values[j], 0.03);
    EXPECT_NEAR(fast.values[j], exact.values[j], 0.03);
  }
}

TEST(NmcEig, ClampedExtremesStayFinite) {
  const auto e = pixel_ensemble({0.0f, 1.0f});
  const double v = eb::nmc_eig_map(e, full_grid(e), {2048, 46, 1, 1e-6}).values[0];
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, std::log(2.0), 0.05);
}

TEST(NmcEig, DeterministicPerSeed) {
  const auto e = eb::random_ensemble(4, 10, 10, 8);
  const eb::NmcConfig c{300, 17, 42, 1e-6};
  const auto a = eb::nmc_eig_map(e, full_grid(e), c);
  const auto b = eb::nmc_eig_map(e, full_grid(e), c);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.estimator, eb::Estimator::nmc);
  auto other = c;
  other.seed = 43;
  EXPECT_NE(eb::nmc_eig_map(e, full_grid(e), other).values, a.values);
}

TEST(NmcEig, DesignValueIndependentOfGridSubset) {
  // A design's estimate depends on (seed, sample, design index) only, so the
  // same cell in the same position of a grid gets the same value.
  const auto e = eb::random_ensemble(3, 6, 6, 2);
  const eb::NmcConfig c{200, 15, 3, 1e-6};
  const auto full = eb::nmc_eig_map(e, full_grid(e), c);
  const std::vector<eb::Design> prefix{{0, 0}, {0, 1}, {0, 2}};
  const eb::DesignGrid partial(1, 3, prefix, 6, 6);
  const auto part = eb::nmc_eig_map(e, partial, c);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(part.values[j], full.values[j]);
}

TEST(NmcEig, ConvergesAlongSchedule) {
  for (std::size_t k : {2u, 3u, 5u}) {
    const auto v = eb::validate_nmc(50, 4096, std::nullopt, k, 8, 1000 + k);
    ASSERT_EQ(v.schedule.size(), 3u);
    EXPECT_EQ(v.schedule[0].outer_n, 256u);
    EXPECT_EQ(v.schedule[0].inner_m, 16u);
    EXPECT_EQ(v.schedule[2].inner_m, 64u);
    EXPECT_TRUE(v.strictly_decreasing) << v.schedule[0].mean_rmse << " " << v.schedule[1].mean_rmse << " "
                                       << v.schedule[2].mean_rmse;
    EXPECT_LE(v.schedule.back().mean_rmse, 0.05);
  }
}

TEST(NmcConfig, AutoScheduleAndValidation) {
  EXPECT_EQ(eb::NmcConfig::auto_schedule(4096).inner_m, 64u);
  EXPECT_EQ(eb::NmcConfig::auto_schedule(1000).inner_m, 32u);
  EXPECT_EQ(eb::NmcConfig::auto_schedule(1).inner_m, 1u);
  EXPECT_EQ(eb::NmcConfig::auto_schedule(2).inner_m, 2u);
  EXPECT_THROW((eb::NmcConfig{0, 1, 0, 1e-6}.validate()), eb::DomainError);
  EXPECT_THROW((eb::NmcConfig{1, 0, 0, 1e-6}.validate()), eb::DomainError);
  EXPECT_THROW((eb::NmcConfig{1, 1, 0, 0.0}.validate()), eb::DomainError);
  EXPECT_THROW((eb::NmcConfig{1, 1, 0, 0.5}.validate()), eb::DomainError);
}

TEST(SelectDesign, Examples) {
  eb::DesignGrid g(10, 10, 10, 10);
  eb::EigMap m{10, 10, std::vector<double>(100, 0.3), eb::Estimator::exact};
  EXPECT_EQ(eb::select_design(m, g).cell, 0u);
  g.mark_used(0);
  g.mark_used(1);
  EXPECT_EQ(eb::select_design(m, g).cell, 2u);

  m.values[7 * 10 + 3] = 0.5;
  const auto choice = eb::select_design(m, g);
  EXPECT_EQ(choice.design, (eb::Design{7, 3}));
  EXPECT_EQ(choice.eig, 0.5);

  for (std::size_t j = 0; j < 100; ++j) {
    if (j != 55) g.mark_used(j);
  }
  EXPECT_EQ(eb::select_design(m, g).cell, 55u);
  g.mark_used(55);
  EXPECT_THROW(eb::select_design(m, g), eb::ExhaustedDesigns);
}

TEST(SelectDesign, InvariantToConstantShift) {
  eb::Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    eb::DesignGrid g(5, 5, 5, 5);
    for (std::size_t j = 0; j < 25; ++j) {
      if (rng.uniform() < 0.3) g.mark_used(j);
    }
    if (g.unused_count() == 0) continue;
    eb::EigMap m{5, 5, std::vector<double>(25), eb::Estimator::exact};
    // Coarse values so ties occur.
    for (double& v : m.values) v = std::floor(rng.uniform() * 4.0) / 8.0;
    const auto base = eb::select_design(m, g);
    auto shifted = m;
    for (double& v : shifted.values) v += 0.25;
    EXPECT_EQ(eb::select_design(shifted, g).cell, base.cell);
  }
}
