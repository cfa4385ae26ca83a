#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_set>
#include <vector>

#include "capeval/error.hpp"
#include "capeval/judgments.hpp"

namespace capeval {

enum class TauVariant { b, c };

inline std::string_view to_string(TauVariant v) { return v == TauVariant::b ? "tau_b" : "tau_c"; }

/// Statistic assignment per benchmark: tau_b for vote-proportion data
/// (Flickr8k-CF), tau_c elsewhere.
inline TauVariant assigned_statistic(DatasetKind k) {
  return uses_votes(k) ? TauVariant::b : TauVariant::c;
}

/// Correlation value plus the pair bookkeeping it was computed from, kept
/// for auditability. ties_x / ties_y count pairs tied in that variable
/// (including pairs tied in both, which are also counted in ties_xy).
struct CorrelationResult {
  double tau = 0.0;
  std::size_t n = 0;
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
  std::uint64_t ties_x = 0;
  std::uint64_t ties_y = 0;
  std::uint64_t ties_xy = 0;
  std::size_t min_distinct_levels = 0;  // m, used by tau_c
};

namespace detail {

inline void validate_tau_input(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(str_printf("kendall tau: input lengths differ (%zu vs %zu)", x.size(), y.size()));
  if (x.size() < 2) throw Error("kendall tau: need at least 2 observations");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x)) throw Error("kendall tau: x is constant (degenerate input)");
  if (constant(y)) throw Error("kendall tau: y is constant (degenerate input)");
}

// Counts pairs (i<j) with v[i] > v[j] via merge sort. Equal elements do
// not count, so y-ties never register as discordances.
inline std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& tmp,
                                      std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t count = count_inversions(v, tmp, lo, mid) + count_inversions(v, tmp, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      count += mid - i;
      tmp[k++] = v[j++];
    } else {
      tmp[k++] = v[i++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo), tmp.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return count;
}

struct PairCounts {
  std::uint64_t total = 0;
  std::uint64_t ties_x = 0;
  std::uint64_t ties_y = 0;
  std::uint64_t ties_xy = 0;
  std::uint64_t discordant = 0;
  std::uint64_t concordant = 0;
  std::size_t distinct_x = 0;
  std::size_t distinct_y = 0;
};

/// Knight-style O(n log n) pair classification: sort by (x, y), count tied
/// pairs from run lengths, count discordant pairs as y-inversions.
inline PairCounts count_pairs(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  auto tied_pairs = [](std::uint64_t t) { return t * (t - 1) / 2; };

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  PairCounts c;
  c.total = tied_pairs(n);

  std::uint64_t run_x = 1, run_xy = 1;
  c.distinct_x = 1;
  for (std::size_t k = 1; k < n; ++k) {
    if (x[idx[k]] == x[idx[k - 1]]) {
      ++run_x;
      if (y[idx[k]] == y[idx[k - 1]]) {
        ++run_xy;
      } else {
        c.ties_xy += tied_pairs(run_xy);
        run_xy = 1;
      }
    } else {
      c.ties_x += tied_pairs(run_x);
      c.ties_xy += tied_pairs(run_xy);
      run_x = run_xy = 1;
      ++c.distinct_x;
    }
  }
  c.ties_x += tied_pairs(run_x);
  c.ties_xy += tied_pairs(run_xy);

  std::vector<double> ys(n), tmp(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y[idx[k]];
  c.discordant = count_inversions(ys, tmp, 0, n);

  std::vector<double> ysorted(y.begin(), y.end());
  std::sort(ysorted.begin(), ysorted.end());
  std::uint64_t run_y = 1;
  c.distinct_y = 1;
  for (std::size_t k = 1; k < n; ++k) {
    if (ysorted[k] == ysorted[k - 1]) {
      ++run_y;
    } else {
      c.ties_y += tied_pairs(run_y);
      run_y = 1;
      ++c.distinct_y;
    }
  }
  c.ties_y += tied_pairs(run_y);

  // Pairs untied in both variables split into concordant and discordant.
  c.concordant = c.total - c.ties_x - c.ties_y + c.ties_xy - c.discordant;
  return c;
}

inline CorrelationResult to_result(const PairCounts& c, std::size_t n) {
  CorrelationResult r;
  r.n = n;
  r.concordant = c.concordant;
  r.discordant = c.discordant;
  r.ties_x = c.ties_x;
  r.ties_y = c.ties_y;
  r.ties_xy = c.ties_xy;
  r.min_distinct_levels = std::min(c.distinct_x, c.distinct_y);
  return r;
}

}  // namespace detail

/// Tie-adjusted Kendall tau-b:
///   tau_b = (n_c - n_d) / sqrt((n0 - n1) (n0 - n2))
/// with n0 = n(n-1)/2 and n1/n2 the tied-pair counts in x/y.
inline CorrelationResult kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  detail::validate_tau_input(x, y);
  auto c = detail::count_pairs(x, y);
  CorrelationResult r = detail::to_result(c, x.size());
  double num = static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
  double denom = std::sqrt(static_cast<double>(c.total - c.ties_x)) *
                 std::sqrt(static_cast<double>(c.total - c.ties_y));
  r.tau = num / denom;
  return r;
}

/// Stuart's tau-c for rectangular contingency:
///   tau_c = 2 m (n_c - n_d) / (n^2 (m - 1))
/// with m the smaller of the two distinct-level counts.
inline CorrelationResult kendall_tau_c(std::span<const double> x, std::span<const double> y) {
  detail::validate_tau_input(x, y);
  auto c = detail::count_pairs(x, y);
  CorrelationResult r = detail::to_result(c, x.size());
  std::size_t m = r.min_distinct_levels;
  if (m < 2) throw Error("kendall tau_c: fewer than 2 distinct levels");
  double num = static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
  double n = static_cast<double>(x.size());
  r.tau = 2.0 * static_cast<double>(m) * num / (n * n * static_cast<double>(m - 1));
  return r;
}

/// O(n^2) pair-enumeration oracle computing the same statistics as the
/// implementations above. Kept independent of them on purpose; used by the
/// test suites. Input length is capped to keep runaway calls obvious.
inline double brute_force_tau(std::span<const double> x, std::span<const double> y, TauVariant v) {
  if (x.size() != y.size())
    throw Error(str_printf("brute_force_tau: input lengths differ (%zu vs %zu)", x.size(), y.size()));
  if (x.size() < 2) throw Error("brute_force_tau: need at least 2 observations");
  if (x.size() > 2000) throw Error("brute_force_tau: input too large (max 2000)");

  const std::size_t n = x.size();
  std::uint64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dx = x[i] - x[j];
      double dy = y[i] - y[j];
      if (dx == 0.0) ++ties_x;
      if (dy == 0.0) ++ties_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (ties_x == total) throw Error("brute_force_tau: x is constant (degenerate input)");
  if (ties_y == total) throw Error("brute_force_tau: y is constant (degenerate input)");
  double num = static_cast<double>(concordant) - static_cast<double>(discordant);
  if (v == TauVariant::b) {
    return num / (std::sqrt(static_cast<double>(total - ties_x)) *
                  std::sqrt(static_cast<double>(total - ties_y)));
  }
  std::unordered_set<double> dx(x.begin(), x.end());
  std::unordered_set<double> dy(y.begin(), y.end());
  std::size_t m = std::min(dx.size(), dy.size());
  if (m < 2) throw Error("brute_force_tau: fewer than 2 distinct levels");
  double nn = static_cast<double>(n);
  return 2.0 * static_cast<double>(m) * num / (nn * nn * static_cast<double>(m - 1));
}

// ---------------------------------------------------------------------------
// Pascal-50S pairwise accuracy

enum class TiePolicy {
  half_credit,      // exact metric ties contribute 0.5
  count_incorrect,  // exact metric ties contribute 0
};

struct PairwiseAccuracyReport {
  std::array<double, 4> category_accuracy{};    // indexed by category_index()
  std::array<std::size_t, 4> category_count{};
  double macro_average = 0.0;
  std::size_t tie_count = 0;
};

/// A task counts as correct when the metric's higher-scored candidate is
/// the human choice. Per-category accuracy, plus the unweighted mean over
/// the four categories.
inline PairwiseAccuracyReport pascal50s_accuracy(std::span<const PairwisePreferenceTask> tasks,
                                                 std::span<const PairScores> scores,
                                                 TiePolicy ties = TiePolicy::half_credit) {
  if (tasks.size() != scores.size())
    throw Error(str_printf("pascal50s_accuracy: %zu tasks but %zu score pairs (missing scores)",
                           tasks.size(), scores.size()));
  std::array<double, 4> credit{};
  PairwiseAccuracyReport report;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    std::size_t c = category_index(tasks[i].category);
    ++report.category_count[c];
    const PairScores& s = scores[i];
    if (s.a == s.b) {
      ++report.tie_count;
      credit[c] += ties == TiePolicy::half_credit ? 0.5 : 0.0;
      continue;
    }
    Choice predicted = s.a > s.b ? Choice::A : Choice::B;
    if (predicted == tasks[i].human_choice) credit[c] += 1.0;
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    if (report.category_count[c] == 0)
      throw Error(str_printf("pascal50s_accuracy: no tasks in category %s",
                             std::string(to_string(static_cast<PascalCategory>(c))).c_str()));
    report.category_accuracy[c] = credit[c] / static_cast<double>(report.category_count[c]);
    sum += report.category_accuracy[c];
  }
  report.macro_average = sum / 4.0;
  return report;
}

}  // namespace capeval
