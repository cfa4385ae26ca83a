#include "capeval/stats.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

#include "capeval/rng.hpp"

namespace capeval {
namespace {

TEST(KendallTauB, PerfectConcordance) {
  std::vector<double> x{1, 2, 3}, y{1, 2, 3};
  auto r = kendall_tau_b(x, y);
  EXPECT_DOUBLE_EQ(r.tau, 1.0);
  EXPECT_EQ(r.concordant, 3u);
  EXPECT_EQ(r.discordant, 0u);
}

TEST(KendallTauB, PerfectDiscordance) {
  std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau_b(x, y).tau, -1.0);
}

TEST(KendallTauB, WorkedTieExample) {
  // x=[1,1,2], y=[1,2,3]: n_c=2, n_d=0, one tied pair in x, none in y.
  std::vector<double> x{1, 1, 2}, y{1, 2, 3};
  auto r = kendall_tau_b(x, y);
  EXPECT_EQ(r.concordant, 2u);
  EXPECT_EQ(r.discordant, 0u);
  EXPECT_EQ(r.ties_x, 1u);
  EXPECT_EQ(r.ties_y, 0u);
  EXPECT_NEAR(r.tau, 2.0 / std::sqrt(6.0), 1e-15);
}

TEST(KendallTauC, PerfectConcordance) {
  std::vector<double> x{1, 2, 3}, y{1, 2, 3};
  auto r = kendall_tau_c(x, y);
  EXPECT_DOUBLE_EQ(r.tau, 1.0);
  EXPECT_EQ(r.min_distinct_levels, 3u);
}

TEST(KendallTauC, WorkedTieExample) {
  // n_c - n_d = 2, m = 2: tau_c = 2*2*2 / (9*1) = 8/9.
  std::vector<double> x{1, 1, 2}, y{1, 2, 3};
  auto r = kendall_tau_c(x, y);
  EXPECT_EQ(r.min_distinct_levels, 2u);
  EXPECT_NEAR(r.tau, 8.0 / 9.0, 1e-15);
}

TEST(KendallTauC, PerfectDiscordance) {
  std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau_c(x, y).tau, -1.0);
}

TEST(KendallTau, ErrorCases) {
  std::vector<double> x{1, 2, 3}, y{1, 2};
  EXPECT_THROW(kendall_tau_b(x, y), Error);
  std::vector<double> c{2, 2, 2}, v{1, 2, 3};
  EXPECT_THROW(kendall_tau_b(c, v), Error);
  EXPECT_THROW(kendall_tau_b(v, c), Error);
  EXPECT_THROW(kendall_tau_c(c, v), Error);
  std::vector<double> one{1};
  EXPECT_THROW(kendall_tau_b(one, one), Error);
}

TEST(BruteForceTau, IdentityInput) {
  std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_DOUBLE_EQ(brute_force_tau(x, x, TauVariant::b), 1.0);
  EXPECT_DOUBLE_EQ(brute_force_tau(x, x, TauVariant::c), 1.0);
}

std::vector<double> random_vector(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<double> v(n);
  for (auto& e : v)
    e = with_ties ? static_cast<double>(rng.bounded(8)) : rng.next_unit();
  return v;
}

TEST(KendallTau, AgreesWithBruteForceOracle) {
  Rng rng(20240601);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.bounded(120);
    bool ties = trial % 2 == 0;
    std::vector<double> x = random_vector(rng, n, ties);
    std::vector<double> y = random_vector(rng, n, ties);
    double expected_b, expected_c;
    try {
      expected_b = brute_force_tau(x, y, TauVariant::b);
      expected_c = brute_force_tau(x, y, TauVariant::c);
    } catch (const Error&) {
      continue;  // degenerate draw
    }
    EXPECT_NEAR(kendall_tau_b(x, y).tau, expected_b, 1e-12);
    EXPECT_NEAR(kendall_tau_c(x, y).tau, expected_c, 1e-12);
  }
}

TEST(KendallTau, SymmetryAndTransformInvariance) {
  Rng rng(77);
  std::vector<double> x = random_vector(rng, 60, true);
  std::vector<double> y = random_vector(rng, 60, true);
  EXPECT_NEAR(kendall_tau_b(x, y).tau, kendall_tau_b(y, x).tau, 1e-15);

  // Strictly increasing transforms leave both variants unchanged.
  std::vector<double> fx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) fx[i] = std::exp(x[i]) + 3.0 * x[i];
  EXPECT_NEAR(kendall_tau_b(fx, y).tau, kendall_tau_b(x, y).tau, 1e-12);
  EXPECT_NEAR(kendall_tau_c(fx, y).tau, kendall_tau_c(x, y).tau, 1e-12);
}

TEST(KendallTau, SignAntisymmetryWithoutTies) {
  Rng rng(91);
  std::vector<double> x = random_vector(rng, 50, false);
  std::vector<double> y = random_vector(rng, 50, false);
  std::vector<double> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  EXPECT_NEAR(kendall_tau_b(neg, y).tau, -kendall_tau_b(x, y).tau, 1e-12);
  EXPECT_NEAR(kendall_tau_c(neg, y).tau, -kendall_tau_c(x, y).tau, 1e-12);
}

TEST(KendallTau, PairBookkeepingInvariant) {
  Rng rng(5);
  std::vector<double> x = random_vector(rng, 80, true);
  std::vector<double> y = random_vector(rng, 80, true);
  auto r = kendall_tau_b(x, y);
  std::uint64_t total = static_cast<std::uint64_t>(r.n) * (r.n - 1) / 2;
  EXPECT_EQ(r.concordant + r.discordant + r.ties_x + r.ties_y - r.ties_xy, total);
  EXPECT_LE(std::abs(r.tau), 1.0 + 1e-15);
}

// --- pascal-50s ------------------------------------------------------------

std::vector<PairwisePreferenceTask> synthetic_tasks(std::size_t per_category, Rng& rng) {
  std::vector<PairwisePreferenceTask> tasks;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < per_category; ++i) {
      PairwisePreferenceTask t;
      t.image_ref = str_printf("img-%zu-%zu", c, i);
      t.candidate_a = "candidate a";
      t.candidate_b = "candidate b";
      t.category = static_cast<PascalCategory>(c);
      t.human_choice = rng.bounded(2) == 0 ? Choice::A : Choice::B;
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

TEST(Pascal50s, OracleMetricScoresPerfectly) {
  Rng rng(123);
  auto tasks = synthetic_tasks(50, rng);
  std::vector<PairScores> scores;
  for (const auto& t : tasks)
    scores.push_back(t.human_choice == Choice::A ? PairScores{0.9, 0.1} : PairScores{0.1, 0.9});
  auto report = pascal50s_accuracy(tasks, scores);
  for (double acc : report.category_accuracy) EXPECT_DOUBLE_EQ(acc, 1.0);
  EXPECT_DOUBLE_EQ(report.macro_average, 1.0);
  EXPECT_EQ(report.tie_count, 0u);
}

TEST(Pascal50s, AllTiesScoreHalf) {
  Rng rng(124);
  auto tasks = synthetic_tasks(25, rng);
  std::vector<PairScores> scores(tasks.size(), PairScores{0.5, 0.5});
  auto report = pascal50s_accuracy(tasks, scores);
  for (double acc : report.category_accuracy) EXPECT_DOUBLE_EQ(acc, 0.5);
  EXPECT_DOUBLE_EQ(report.macro_average, 0.5);
  EXPECT_EQ(report.tie_count, tasks.size());

  auto strict = pascal50s_accuracy(tasks, scores, TiePolicy::count_incorrect);
  EXPECT_DOUBLE_EQ(strict.macro_average, 0.0);
}

TEST(Pascal50s, TransformInvariance) {
  Rng rng(125);
  auto tasks = synthetic_tasks(30, rng);
  std::vector<PairScores> scores, transformed;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    double a = rng.next_unit(), b = rng.next_unit();
    scores.push_back(PairScores{a, b});
    transformed.push_back(PairScores{std::exp(3.0 * a), std::exp(3.0 * b)});
  }
  auto base = pascal50s_accuracy(tasks, scores);
  auto mapped = pascal50s_accuracy(tasks, transformed);
  for (std::size_t c = 0; c < 4; ++c)
    EXPECT_DOUBLE_EQ(base.category_accuracy[c], mapped.category_accuracy[c]);
}

TEST(Pascal50s, ErrorCases) {
  Rng rng(126);
  auto tasks = synthetic_tasks(2, rng);
  std::vector<PairScores> short_scores(tasks.size() - 1, PairScores{0.1, 0.2});
  EXPECT_THROW(pascal50s_accuracy(tasks, short_scores), Error);

  // Remove every HI task: empty category must be reported.
  std::vector<PairwisePreferenceTask> missing;
  for (const auto& t : tasks)
    if (t.category != PascalCategory::HI) missing.push_back(t);
  std::vector<PairScores> scores(missing.size(), PairScores{0.1, 0.2});
  EXPECT_THROW(pascal50s_accuracy(missing, scores), Error);
}

TEST(AssignedStatistic, FollowsDatasetKind) {
  EXPECT_EQ(assigned_statistic(DatasetKind::flickr8k_cf), TauVariant::b);
  EXPECT_EQ(assigned_statistic(DatasetKind::voted), TauVariant::b);
  EXPECT_EQ(assigned_statistic(DatasetKind::flickr8k_ex), TauVariant::c);
  EXPECT_EQ(assigned_statistic(DatasetKind::composite), TauVariant::c);
  EXPECT_EQ(assigned_statistic(DatasetKind::polaris), TauVariant::c);
  EXPECT_EQ(assigned_statistic(DatasetKind::nebula), TauVariant::c);
}

}  // namespace
}  // namespace capeval
