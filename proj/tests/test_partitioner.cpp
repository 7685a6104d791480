#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fedcarbon/fedcarbon.hpp"
#include "oracles.hpp"

using namespace fedcarbon;

TEST(Prior, Uniform) {
  EXPECT_EQ(uniform_prior(10).proportions, std::vector<double>(10, 0.1));
  EXPECT_EQ(uniform_prior(2).proportions, (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(uniform_prior(1), domain_error);
}

TEST(Prior, Empirical) {
  const std::vector<std::uint64_t> speech{32550, 23646};
  EXPECT_NEAR(empirical_prior(speech).proportions[0], 0.579, 0.0005);
  const std::vector<std::uint64_t> even{1, 1, 1, 1};
  EXPECT_EQ(empirical_prior(even).proportions, std::vector<double>(4, 0.25));
  const std::vector<std::uint64_t> skew{3, 1};
  EXPECT_EQ(empirical_prior(skew).proportions, (std::vector<double>{0.75, 0.25}));
  const std::vector<std::uint64_t> single{5, 0, 0};
  EXPECT_THROW(empirical_prior(single), domain_error);
}

TEST(Dirichlet, SimplexAndDeterminism) {
  const std::vector<double> a{0.01, 0.5, 3.0, 200.0};
  Rng r1(7), r2(7);
  for (int i = 0; i < 100; ++i) {
    const auto q = sample_dirichlet(a, r1);
    EXPECT_EQ(q, sample_dirichlet(a, r2));
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-9);
    for (double x : q) EXPECT_GE(x, 0.0);
  }
  const std::vector<double> bad{1.0, 0.0};
  EXPECT_THROW(sample_dirichlet(bad, r1), domain_error);
}

TEST(Dirichlet, LargeConcentrationMean) {
  const std::vector<double> a(5, 1e6);
  Rng rng(3);
  std::vector<double> mean(5, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const auto q = sample_dirichlet(a, rng);
    for (int k = 0; k < 5; ++k) mean[k] += q[k] / 1000.0;
  }
  for (double m : mean) EXPECT_NEAR(m, 0.2, 0.01);
}

TEST(Dirichlet, MomentsAgreeWithStdGammaSampler) {
  // Our sampler vs an independent std::gamma_distribution sampler vs the
  // analytic marginal moments, on an asymmetric small-shape vector.
  const std::vector<double> a{0.3, 1.7, 4.0};
  Rng rng(12);
  std::mt19937_64 eng(12);
  constexpr int n = 40000;
  std::vector<double> m1(3, 0), m2(3, 0), s1(3, 0), s2(3, 0);
  for (int i = 0; i < n; ++i) {
    const auto p = sample_dirichlet(a, rng);
    const auto q = oracle::dirichlet_std(a, eng);
    for (int k = 0; k < 3; ++k) {
      m1[k] += p[k];
      s1[k] += p[k] * p[k];
      m2[k] += q[k];
      s2[k] += q[k] * q[k];
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const auto mom = oracle::dirichlet_marginal(a, k);
    const double se = std::sqrt(mom.variance / n);
    EXPECT_NEAR(m1[k] / n, mom.mean, 5 * se);
    EXPECT_NEAR(m2[k] / n, mom.mean, 5 * se);
    const double v1 = s1[k] / n - std::pow(m1[k] / n, 2);
    EXPECT_NEAR(v1 / mom.variance, 1.0, 0.05);
  }
}

TEST(Lda, IidRegimeWithinBand) {
  // P(|q_i - 0.1| > 0.05) for the Beta(100, 900) marginal, times 10
  // components, bounds the per-client miss probability.
  const double miss = 1.0 - oracle::beta_interval(100.0, 900.0, 0.05, 0.15);
  ASSERT_LT(10.0 * miss, 0.01);
  const Partition p = lda_partition(uniform_prior(10), 1000.0, 500, 10, 42);
  std::size_t within = 0;
  for (const auto& q : p.per_client) {
    bool ok = true;
    for (double x : q) ok = ok && std::abs(x - 0.1) <= 0.05;
    within += ok ? 1 : 0;
  }
  EXPECT_GE(within, 495u);
}

TEST(Lda, HeterogeneousRegime) {
  const Partition p = lda_partition(uniform_prior(10), 0.1, 10000, 10, 43);
  double mean_max = 0.0;
  for (const auto& q : p.per_client) mean_max += *std::max_element(q.begin(), q.end()) / 10000.0;
  EXPECT_GT(mean_max, 0.5);
}

TEST(Lda, SingleClientAndErrors) {
  const Partition p = lda_partition(uniform_prior(3), 1.0, 1, 5, 1);
  EXPECT_EQ(p.clients(), 1u);
  EXPECT_EQ(p.samples_per_client, 5u);
  EXPECT_THROW(lda_partition(uniform_prior(3), 0.0, 1, 5, 1), domain_error);
  EXPECT_THROW(lda_partition(uniform_prior(3), 1.0, 0, 5, 1), domain_error);
  EXPECT_THROW(lda_partition(uniform_prior(3), 1.0, 1, 0, 1), domain_error);
}

TEST(Lda, ClientsIndependentOfCount) {
  const Partition small = lda_partition(uniform_prior(4), 0.5, 3, 5, 9);
  const Partition large = lda_partition(uniform_prior(4), 0.5, 8, 5, 9);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(small.per_client[k], large.per_client[k]);
}

TEST(Assign, OneHotClient) {
  Partition p;
  p.alpha = 1.0;
  p.prior = uniform_prior(3);
  p.per_client = {{0.0, 1.0, 0.0}};
  p.samples_per_client = 20;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 90; ++i) labels.push_back(i % 3);
  const Assignment a = assign_samples(labels, p, 1);
  for (auto i : a.per_client[0]) EXPECT_EQ(labels[i], 1u);
  EXPECT_EQ(a.warnings, 0u);
}

TEST(Assign, UniformFrequencies) {
  // Each class count ~ Binomial(10000, 0.1); [0.08, 0.12] holds with
  // probability far above 0.99.
  const double inside = oracle::binomial_interval(10000, 0.1, 800, 1200);
  ASSERT_GT(std::pow(inside, 10), 0.99);
  Partition p;
  p.alpha = 1.0;
  p.prior = uniform_prior(10);
  p.per_client = {std::vector<double>(10, 0.1)};
  p.samples_per_client = 10000;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 30000; ++i) labels.push_back(i % 10);
  const Assignment a = assign_samples(labels, p, 2);
  std::vector<double> freq(10, 0.0);
  for (auto i : a.per_client[0]) freq[labels[i]] += 1.0 / 10000.0;
  for (double f : freq) {
    EXPECT_GE(f, 0.08);
    EXPECT_LE(f, 0.12);
  }
}

TEST(Assign, ExhaustionAndFallback) {
  Partition p;
  p.alpha = 1.0;
  p.prior = uniform_prior(2);
  p.per_client = {{1.0, 0.0}};
  p.samples_per_client = 10;
  const std::vector<std::size_t> five{0, 1, 0, 1, 0};
  EXPECT_THROW(assign_samples(five, p, 1), exhaustion_error);

  // Only 3 samples of the preferred class: the rest come from class 1 and
  // each renormalised draw is counted.
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  const Assignment a = assign_samples(labels, p, 1);
  EXPECT_EQ(a.per_client[0].size(), 10u);
  EXPECT_EQ(a.warnings, 7u);
  EXPECT_EQ(std::set<std::size_t>(a.per_client[0].begin(), a.per_client[0].end()).size(), 10u);
}
