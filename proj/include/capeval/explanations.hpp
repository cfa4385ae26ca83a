#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "capeval/error.hpp"
#include "capeval/judgments.hpp"
#include "capeval/rng.hpp"
#include "capeval/text.hpp"

namespace capeval {

/// The three criterion texts a structured explanation consists of.
struct StructuredExplanation {
  std::string fluency;
  std::string relevance;
  std::string descriptiveness;

  bool operator==(const StructuredExplanation&) const = default;
};

namespace detail {

inline constexpr std::array<std::string_view, 3> kCriterionPrefixes = {
    "Fluency:", "Relevance:", "Descriptiveness:"};

// Characters tolerated in front of a criterion prefix (markdown headings,
// bullets, bold markers) and the subset that may also decorate the text
// right after the prefix ("**Fluency:** good").
inline constexpr std::string_view kLeadDecoration = " \t*#>`_-";
inline constexpr std::string_view kInlineDecoration = "*`_";

struct PrefixMatch {
  std::size_t criterion;
  std::string_view remainder;  // text after the prefix, decoration stripped
};

inline std::optional<PrefixMatch> match_criterion_line(std::string_view line) {
  std::size_t lead = 0;
  while (lead < line.size() && kLeadDecoration.find(line[lead]) != std::string_view::npos) ++lead;
  std::string_view body = line.substr(lead);
  for (std::size_t c = 0; c < kCriterionPrefixes.size(); ++c) {
    if (!body.starts_with(kCriterionPrefixes[c])) continue;
    std::string_view rest = body.substr(kCriterionPrefixes[c].size());
    bool decorated = line.substr(0, lead).find_first_of(kInlineDecoration) != std::string_view::npos;
    if (decorated) {
      while (!rest.empty() && kInlineDecoration.find(rest.front()) != std::string_view::npos)
        rest.remove_prefix(1);
    }
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    return PrefixMatch{c, rest};
  }
  return std::nullopt;
}

inline std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.pop_back();
  return s;
}

}  // namespace detail

/// A valid explanation has three nonempty, fully trimmed criterion texts,
/// none of whose lines would themselves be taken for a criterion line.
inline void validate_explanation(const StructuredExplanation& expl) {
  const std::array<const std::string*, 3> bodies = {&expl.fluency, &expl.relevance,
                                                    &expl.descriptiveness};
  for (std::size_t c = 0; c < 3; ++c) {
    const std::string& body = *bodies[c];
    if (trim_view(body).empty())
      throw Error(str_printf("explanation: empty text for criterion '%.*s'",
                             static_cast<int>(detail::kCriterionPrefixes[c].size() - 1),
                             detail::kCriterionPrefixes[c].data()));
    if (std::string(trim_view(body)) != body)
      throw Error("explanation: criterion text has leading or trailing whitespace");
    for (std::string_view line : split_lines(body)) {
      if (detail::match_criterion_line(line))
        throw Error("explanation: criterion text contains another criterion's line prefix");
    }
  }
}

/// Parses model output of the form
///   Fluency: ...\nRelevance: ...\nDescriptiveness: ...
/// The three lines must appear in that order; bodies may continue over
/// following lines until the next prefix. Lines before the Fluency line
/// are ignored, and markdown decoration around a prefix is tolerated.
inline StructuredExplanation parse_explanation(std::string_view text) {
  std::array<std::string, 3> bodies;
  std::size_t expected = 0;
  std::size_t current = 3;  // 3 = preamble, nothing open yet
  for (std::string_view line : split_lines(text)) {
    auto m = detail::match_criterion_line(line);
    if (m) {
      if (m->criterion < expected)
        throw Error(str_printf("parse_explanation: duplicate criterion line '%.*s'",
                               static_cast<int>(detail::kCriterionPrefixes[m->criterion].size()),
                               detail::kCriterionPrefixes[m->criterion].data()));
      if (m->criterion > expected)
        throw Error(str_printf("parse_explanation: criterion lines out of order ('%.*s' before '%.*s')",
                               static_cast<int>(detail::kCriterionPrefixes[m->criterion].size()),
                               detail::kCriterionPrefixes[m->criterion].data(),
                               static_cast<int>(detail::kCriterionPrefixes[expected].size()),
                               detail::kCriterionPrefixes[expected].data()));
      current = m->criterion;
      expected = m->criterion + 1;
      bodies[current] = std::string(m->remainder);
    } else if (current < 3) {
      bodies[current] += '\n';
      bodies[current] += line;
    }
  }
  if (expected < 3)
    throw Error(str_printf("parse_explanation: missing criterion line '%.*s'",
                           static_cast<int>(detail::kCriterionPrefixes[expected].size()),
                           detail::kCriterionPrefixes[expected].data()));
  StructuredExplanation expl;
  expl.fluency = detail::rtrim(std::move(bodies[0]));
  expl.relevance = detail::rtrim(std::move(bodies[1]));
  expl.descriptiveness = detail::rtrim(std::move(bodies[2]));
  validate_explanation(expl);
  return expl;
}

// ---------------------------------------------------------------------------
// Human ratings of explanation quality

enum class RatingCriterion { consistency, factuality, informativeness };

inline std::string_view to_string(RatingCriterion c) {
  switch (c) {
    case RatingCriterion::consistency: return "consistency";
    case RatingCriterion::factuality: return "factuality";
    case RatingCriterion::informativeness: return "informativeness";
  }
  return "?";
}

inline RatingCriterion parse_rating_criterion(std::string_view s) {
  if (s == "consistency") return RatingCriterion::consistency;
  if (s == "factuality") return RatingCriterion::factuality;
  if (s == "informativeness") return RatingCriterion::informativeness;
  throw Error(str_printf("unknown rating criterion \"%.*s\"", static_cast<int>(s.size()), s.data()));
}

/// One annotator rating on the 4-point scale; a missing value is the
/// disagreement marker, which only informativeness admits.
struct RatingRecord {
  std::string instance_id;
  std::string annotator_id;
  RatingCriterion criterion = RatingCriterion::consistency;
  std::optional<int> value;  // 1..4, nullopt = disagreement
};

inline RatingRecord make_rating_record(std::string instance_id, std::string annotator_id,
                                       RatingCriterion criterion, std::optional<int> value) {
  if (value) {
    if (*value < 1 || *value > 4)
      throw Error(str_printf("rating value %d outside the 4-point scale", *value));
  } else if (criterion != RatingCriterion::informativeness) {
    throw Error("the disagreement marker is only valid for informativeness");
  }
  return RatingRecord{std::move(instance_id), std::move(annotator_id), criterion, value};
}

/// Ratings file: one record per line with
/// {instance, annotator, criterion, value | "disagreement"}.
inline std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  std::vector<RatingRecord> out;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      std::string instance = detail::require_string(j, "instance");
      std::string annotator = detail::require_string(j, "annotator");
      RatingCriterion criterion = parse_rating_criterion(detail::require_string(j, "criterion"));
      std::optional<int> value;
      if (!j.contains("value")) throw Error("missing field \"value\"");
      if (j["value"].is_string()) {
        if (j["value"] != "disagreement")
          throw Error("value must be an integer 1..4 or \"disagreement\"");
      } else if (j["value"].is_number_integer()) {
        value = j["value"].get<int>();
      } else {
        throw Error("value must be an integer 1..4 or \"disagreement\"");
      }
      out.push_back(make_rating_record(std::move(instance), std::move(annotator), criterion, value));
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean: resample with replacement, take the
/// empirical ((1-level)/2, 1-(1-level)/2) quantiles of the resampled means.
/// Deterministic under the seed.
inline Interval bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                             std::uint64_t seed) {
  if (values.empty()) throw Error("bootstrap_ci: empty input");
  if (resamples < 1000) throw Error("bootstrap_ci: need at least 1000 resamples");
  if (!(level > 0.0 && level < 1.0)) throw Error(str_printf("bootstrap_ci: bad level %g", level));

  Rng rng(derive_seed(seed, "bootstrap-ci"));
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += values[rng.bounded(n)];
    means[r] = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    double pos = q * static_cast<double>(resamples - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, resamples - 1);
    double frac = pos - static_cast<double>(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  double alpha = (1.0 - level) / 2.0;
  return Interval{quantile(alpha), quantile(1.0 - alpha)};
}

enum class StdDevEstimator { population, sample };

struct CriterionSummary {
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t count = 0;          // retained ratings (disagreements excluded)
  std::size_t disagreements = 0;
  Interval ci95;
};

struct QualityReport {
  std::array<CriterionSummary, 3> per_criterion{};  // indexed by RatingCriterion

  const CriterionSummary& operator[](RatingCriterion c) const {
    return per_criterion[static_cast<std::size_t>(c)];
  }
};

struct AggregateOptions {
  StdDevEstimator estimator = StdDevEstimator::population;
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Pools ratings per criterion across annotators and instances, excluding
/// disagreement-marked records, and reports mean, standard deviation and a
/// bootstrap confidence interval for each criterion.
inline QualityReport aggregate_ratings(std::span<const RatingRecord> records,
                                       const AggregateOptions& opts = {}) {
  std::array<std::vector<double>, 3> pooled;
  std::array<std::size_t, 3> disagreements{};
  for (const auto& r : records) {
    std::size_t c = static_cast<std::size_t>(r.criterion);
    if (r.value) {
      if (*r.value < 1 || *r.value > 4)
        throw Error(str_printf("rating value %d outside the 4-point scale", *r.value));
      pooled[c].push_back(static_cast<double>(*r.value));
    } else {
      if (r.criterion != RatingCriterion::informativeness)
        throw Error("the disagreement marker is only valid for informativeness");
      ++disagreements[c];
    }
  }

  QualityReport report;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& values = pooled[c];
    auto criterion = static_cast<RatingCriterion>(c);
    if (values.empty())
      throw Error(str_printf("aggregate_ratings: no retained ratings for %s",
                             std::string(to_string(criterion)).c_str()));
    CriterionSummary& s = report.per_criterion[c];
    s.count = values.size();
    s.disagreements = disagreements[c];
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    if (opts.estimator == StdDevEstimator::population) {
      s.std_dev = std::sqrt(sq / static_cast<double>(values.size()));
    } else {
      if (values.size() < 2)
        throw Error("aggregate_ratings: sample std dev needs at least 2 ratings");
      s.std_dev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    s.ci95 = bootstrap_ci(values, opts.resamples, opts.level,
                          derive_seed(opts.seed, to_string(criterion)));
  }
  return report;
}

/// Table mirroring the criterion / average / std-dev layout of the
/// dataset-quality summary, with the bootstrap interval appended.
inline std::string format_quality_report(const QualityReport& report) {
  std::string out = str_printf("%-17s %-9s %-10s %-7s %s\n", "criterion", "average", "std_dev",
                               "count", "ci95");
  for (std::size_t c = 0; c < 3; ++c) {
    const CriterionSummary& s = report.per_criterion[c];
    out += str_printf("%-17s %-9.2f %-10.2f %-7zu [%.3f, %.3f]\n",
                      std::string(to_string(static_cast<RatingCriterion>(c))).c_str(), s.mean,
                      s.std_dev, s.count, s.ci95.lo, s.ci95.hi);
  }
  std::size_t excluded = 0;
  for (const auto& s : report.per_criterion) excluded += s.disagreements;
  if (excluded > 0) out += str_printf("disagreements excluded: %zu\n", excluded);
  return out;
}

}  // namespace capeval
