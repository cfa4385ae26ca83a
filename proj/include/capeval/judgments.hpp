#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "capeval/error.hpp"
#include "capeval/rng.hpp"
#include "capeval/text.hpp"

namespace capeval {

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error(str_printf("unknown split \"%.*s\" (expected train|val|test)",
                         static_cast<int>(s.size()), s.data()));
}

/// Scale a raw human score was collected on: a closed interval [lo, hi],
/// or the "proportion" marker for crowd yes/no data whose score is
/// already a fraction in [0,1].
struct RawScale {
  bool is_proportion = false;
  double lo = 0.0;
  double hi = 1.0;

  static RawScale interval(double lo, double hi) {
    if (!(lo < hi)) throw Error(str_printf("invalid scale [%g, %g]: lo must be < hi", lo, hi));
    return RawScale{false, lo, hi};
  }
  static RawScale proportion() { return RawScale{true, 0.0, 1.0}; }

  bool operator==(const RawScale&) const = default;
};

/// One image-caption pair with its human judgment, normalized to [0,1].
struct JudgmentInstance {
  std::string id;
  std::string image_ref;  // opaque path-or-URI; never decoded here
  std::string caption;
  double raw_score = 0.0;
  RawScale raw_scale;
  double norm_score = 0.0;
  std::string source;
  Split split = Split::test;
  std::optional<int> annotator_count;
};

/// Linear map of a raw score onto [0,1]; proportion scores pass through.
inline double normalize_score(double raw, const RawScale& scale) {
  if (scale.is_proportion) {
    if (raw < 0.0 || raw > 1.0)
      throw Error(str_printf("proportion score %g outside [0,1]", raw));
    return raw;
  }
  if (raw < scale.lo || raw > scale.hi)
    throw Error(str_printf("score outside declared scale [%g, %g]: %g", scale.lo, scale.hi, raw));
  return (raw - scale.lo) / (scale.hi - scale.lo);
}

/// Fraction of `yes` votes in a nonempty list of binary judgments.
inline double cf_proportion(const std::vector<bool>& votes) {
  if (votes.empty()) throw Error("cf_proportion: empty vote list");
  std::size_t yes = 0;
  for (bool v : votes)
    if (v) ++yes;
  return static_cast<double>(yes) / static_cast<double>(votes.size());
}

enum class DatasetKind {
  flickr8k_ex,
  flickr8k_cf,
  composite,
  polaris,
  nebula,
  scaled,  // generic dataset with per-record interval scales
  voted,   // generic dataset with yes/no vote lists
};

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::flickr8k_ex: return "flickr8k-ex";
    case DatasetKind::flickr8k_cf: return "flickr8k-cf";
    case DatasetKind::composite: return "composite";
    case DatasetKind::polaris: return "polaris";
    case DatasetKind::nebula: return "nebula";
    case DatasetKind::scaled: return "scaled";
    case DatasetKind::voted: return "voted";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  for (DatasetKind k : {DatasetKind::flickr8k_ex, DatasetKind::flickr8k_cf, DatasetKind::composite,
                        DatasetKind::polaris, DatasetKind::nebula, DatasetKind::scaled,
                        DatasetKind::voted}) {
    if (s == to_string(k)) return k;
  }
  throw Error(str_printf("unknown dataset kind \"%.*s\"", static_cast<int>(s.size()), s.data()));
}

/// Crowdflower-style datasets carry vote lists instead of interval scores.
inline bool uses_votes(DatasetKind k) {
  return k == DatasetKind::flickr8k_cf || k == DatasetKind::voted;
}

// ---------------------------------------------------------------------------
// Pascal-50S pairwise preference data

enum class PascalCategory { HC, HI, HM, MM };

inline std::string_view to_string(PascalCategory c) {
  switch (c) {
    case PascalCategory::HC: return "HC";
    case PascalCategory::HI: return "HI";
    case PascalCategory::HM: return "HM";
    case PascalCategory::MM: return "MM";
  }
  return "?";
}

inline std::size_t category_index(PascalCategory c) { return static_cast<std::size_t>(c); }

inline PascalCategory parse_pascal_category(std::string_view s) {
  if (s == "HC") return PascalCategory::HC;
  if (s == "HI") return PascalCategory::HI;
  if (s == "HM") return PascalCategory::HM;
  if (s == "MM") return PascalCategory::MM;
  throw Error(str_printf("unknown pascal-50s category \"%.*s\" (expected HC|HI|HM|MM)",
                         static_cast<int>(s.size()), s.data()));
}

enum class Choice { A, B };

struct PairwisePreferenceTask {
  std::string image_ref;
  std::string candidate_a;
  std::string candidate_b;
  PascalCategory category = PascalCategory::HC;
  Choice human_choice = Choice::A;
};

/// Metric scores for one pairwise task, aligned with the task list.
struct PairScores {
  double a = 0.0;
  double b = 0.0;
};

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline nlohmann::json parse_json_line(const std::filesystem::path& path, std::size_t lineno,
                                      const std::string& line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(str_printf("%s:%zu: malformed record: %s", path.string().c_str(), lineno, e.what()));
  }
}

template <typename Fn>
void for_each_jsonl_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(str_printf("cannot open file: %s", path.string().c_str()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    fn(lineno, parse_json_line(path, lineno, line));
  }
}

[[noreturn]] inline void record_error(const std::filesystem::path& path, std::size_t lineno,
                                      const std::string& what) {
  throw Error(str_printf("%s:%zu: %s", path.string().c_str(), lineno, what.c_str()));
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw Error(str_printf("missing or non-string field \"%s\"", key));
  return j[key].get<std::string>();
}

inline double require_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw Error(str_printf("missing or non-numeric field \"%s\"", key));
  return j[key].get<double>();
}

}  // namespace detail

struct LoadOptions {
  /// Instance ids to drop at load time (declarative exclusion filter).
  const std::unordered_set<std::string>* exclude = nullptr;
};

/// Exclusion filter file: one instance id per line, blank lines ignored.
inline std::unordered_set<std::string> load_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(str_printf("cannot open exclusion file: %s", path.string().c_str()));
  std::unordered_set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    std::string id = trim(line);
    if (!id.empty()) ids.insert(std::move(id));
  }
  return ids;
}

/// Loads a line-delimited judgment dataset. Records of `voted` kinds carry
/// a votes[] array of "yes"/"no" (or booleans); all other kinds carry
/// raw_score with scale_lo/scale_hi. File order is preserved.
inline std::vector<JudgmentInstance> load_dataset(const std::filesystem::path& path,
                                                  DatasetKind kind, const LoadOptions& opts = {}) {
  std::vector<JudgmentInstance> out;
  std::unordered_set<std::string> seen_ids;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      JudgmentInstance inst;
      inst.id = detail::require_string(j, "id");
      if (inst.id.empty()) throw Error("empty id");
      if (opts.exclude && opts.exclude->count(inst.id)) return;
      if (!seen_ids.insert(inst.id).second)
        throw Error(str_printf("duplicate id \"%s\"", inst.id.c_str()));
      inst.image_ref = detail::require_string(j, "image");
      if (inst.image_ref.empty()) throw Error("empty image reference");
      inst.caption = detail::require_string(j, "caption");
      if (trim_view(inst.caption).empty()) throw Error("empty caption");
      inst.source = detail::require_string(j, "source");
      if (inst.source.empty()) throw Error("empty source");
      inst.split = parse_split(detail::require_string(j, "split"));
      if (j.contains("annotator_count")) {
        if (!j["annotator_count"].is_number_integer() || j["annotator_count"].get<int>() <= 0)
          throw Error("annotator_count must be a positive integer");
        inst.annotator_count = j["annotator_count"].get<int>();
      }

      if (uses_votes(kind)) {
        if (j.contains("raw_score") || j.contains("scale_lo") || j.contains("scale_hi"))
          throw Error("voted record must not carry raw_score/scale fields");
        if (!j.contains("votes") || !j["votes"].is_array() || j["votes"].empty())
          throw Error("missing or empty votes[]");
        std::vector<bool> votes;
        for (const auto& v : j["votes"]) {
          if (v.is_boolean()) {
            votes.push_back(v.get<bool>());
          } else if (v.is_string() && (v == "yes" || v == "no")) {
            votes.push_back(v == "yes");
          } else {
            throw Error("votes[] entries must be \"yes\"/\"no\" or booleans");
          }
        }
        inst.raw_scale = RawScale::proportion();
        inst.raw_score = cf_proportion(votes);
        inst.norm_score = inst.raw_score;
        if (!inst.annotator_count) inst.annotator_count = static_cast<int>(votes.size());
      } else {
        if (j.contains("votes")) throw Error("scaled record must not carry votes[]");
        double raw = detail::require_number(j, "raw_score");
        double lo = detail::require_number(j, "scale_lo");
        double hi = detail::require_number(j, "scale_hi");
        inst.raw_scale = RawScale::interval(lo, hi);
        inst.raw_score = raw;
        inst.norm_score = normalize_score(raw, inst.raw_scale);
      }
      out.push_back(std::move(inst));
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return out;
}

/// Pascal-50S triplet file: one record per line with
/// {image, a, b, category, choice}.
inline std::vector<PairwisePreferenceTask> load_pascal50s(const std::filesystem::path& path) {
  std::vector<PairwisePreferenceTask> out;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      PairwisePreferenceTask t;
      t.image_ref = detail::require_string(j, "image");
      t.candidate_a = detail::require_string(j, "a");
      t.candidate_b = detail::require_string(j, "b");
      if (t.candidate_a == t.candidate_b) throw Error("candidates a and b are identical");
      t.category = parse_pascal_category(detail::require_string(j, "category"));
      std::string choice = detail::require_string(j, "choice");
      if (choice == "A") {
        t.human_choice = Choice::A;
      } else if (choice == "B") {
        t.human_choice = Choice::B;
      } else {
        throw Error(str_printf("choice must be \"A\" or \"B\", got \"%s\"", choice.c_str()));
      }
      out.push_back(std::move(t));
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return out;
}

/// Metric score file for pascal-50s: one {a, b} record per task line.
inline std::vector<PairScores> load_pair_scores(const std::filesystem::path& path) {
  std::vector<PairScores> out;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      out.push_back(PairScores{detail::require_number(j, "a"), detail::require_number(j, "b")});
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Duplicate merging

namespace detail {
inline std::string dedup_key(const JudgmentInstance& inst) {
  std::string key = inst.image_ref;
  key.push_back('\x1f');
  key += inst.caption;
  return key;
}
}  // namespace detail

/// Merges instances that share (image_ref, caption) into one instance whose
/// norm_score is the arithmetic mean of the group. Single-element groups
/// pass through unchanged, which makes the operation idempotent. Merged
/// instances are re-expressed on the [0,1] scale and their source becomes
/// the sorted union of group sources joined with '+'.
inline std::vector<JudgmentInstance> merge_duplicates(const std::vector<JudgmentInstance>& in) {
  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::string key = detail::dedup_key(in[i]);
    auto [it, inserted] = group_of.emplace(std::move(key), groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  std::vector<JudgmentInstance> out;
  out.reserve(groups.size());
  for (const auto& group : groups) {
    if (group.size() == 1) {
      out.push_back(in[group.front()]);
      continue;
    }
    const JudgmentInstance& first = in[group.front()];
    JudgmentInstance merged;
    merged.id = first.id;
    merged.image_ref = first.image_ref;
    merged.caption = first.caption;
    merged.split = first.split;
    double sum = 0.0;
    std::vector<std::string> sources;
    for (std::size_t i : group) {
      sum += in[i].norm_score;
      sources.push_back(in[i].source);
    }
    merged.norm_score = sum / static_cast<double>(group.size());
    merged.raw_score = merged.norm_score;
    merged.raw_scale = RawScale::interval(0.0, 1.0);
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
    merged.source = sources.front();
    for (std::size_t s = 1; s < sources.size(); ++s) merged.source += "+" + sources[s];
    merged.annotator_count = static_cast<int>(group.size());
    out.push_back(std::move(merged));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified sampling

/// One sampling stratum: an interval [lo, hi) over normalized scores (the
/// final interval in a list is closed on the right), or a discrete raw-score
/// level. sample_count instances are drawn uniformly without replacement.
struct ScoreStratum {
  enum class Kind { interval, level };
  Kind kind = Kind::interval;
  double lo = 0.0;
  double hi = 1.0;
  double level = 0.0;
  std::size_t sample_count = 0;

  static ScoreStratum interval(double lo, double hi, std::size_t count) {
    if (!(lo < hi)) throw Error(str_printf("invalid stratum interval [%g, %g)", lo, hi));
    ScoreStratum s;
    s.kind = Kind::interval;
    s.lo = lo;
    s.hi = hi;
    s.sample_count = count;
    return s;
  }
  static ScoreStratum level_value(double level, std::size_t count) {
    ScoreStratum s;
    s.kind = Kind::level;
    s.level = level;
    s.sample_count = count;
    return s;
  }

  std::string describe() const {
    return kind == Kind::interval ? str_printf("[%g, %g)", lo, hi) : str_printf("level %g", level);
  }
};

namespace detail {
inline void validate_strata(std::span<const ScoreStratum> strata) {
  if (strata.empty()) throw Error("no strata given");
  const ScoreStratum* prev = nullptr;
  for (const auto& s : strata) {
    if (s.kind != ScoreStratum::Kind::interval) continue;
    if (prev && s.lo < prev->hi)
      throw Error(str_printf("strata intervals must be ordered and disjoint: %s overlaps %s",
                             prev->describe().c_str(), s.describe().c_str()));
    prev = &s;
  }
}
}  // namespace detail

/// Draws sample_count instances per stratum, uniformly without replacement,
/// deterministically under the given seed. Interval strata select on
/// norm_score, level strata on exact raw_score. Selected instances keep
/// dataset order within each stratum.
inline std::vector<JudgmentInstance> stratified_sample(std::span<const JudgmentInstance> instances,
                                                       std::span<const ScoreStratum> strata,
                                                       std::uint64_t seed) {
  detail::validate_strata(strata);
  // Last interval stratum is closed on the right.
  std::size_t last_interval = strata.size();
  for (std::size_t s = 0; s < strata.size(); ++s)
    if (strata[s].kind == ScoreStratum::Kind::interval) last_interval = s;

  Rng rng(derive_seed(seed, "stratified-sample"));
  std::vector<JudgmentInstance> out;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const ScoreStratum& st = strata[s];
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const JudgmentInstance& inst = instances[i];
      bool in_stratum =
          st.kind == ScoreStratum::Kind::interval
              ? (inst.norm_score >= st.lo &&
                 (s == last_interval ? inst.norm_score <= st.hi : inst.norm_score < st.hi))
              : inst.raw_score == st.level;
      if (in_stratum) eligible.push_back(i);
    }
    if (eligible.size() < st.sample_count)
      throw Error(str_printf("stratum %s has %zu eligible instances, need %zu",
                             st.describe().c_str(), eligible.size(), st.sample_count));
    // Partial Fisher-Yates; first sample_count entries are the draw.
    for (std::size_t k = 0; k < st.sample_count; ++k) {
      std::size_t j = k + static_cast<std::size_t>(rng.bounded(eligible.size() - k));
      std::swap(eligible[k], eligible[j]);
    }
    std::vector<std::size_t> picked(eligible.begin(),
                                    eligible.begin() + static_cast<std::ptrdiff_t>(st.sample_count));
    std::sort(picked.begin(), picked.end());
    for (std::size_t i : picked) out.push_back(instances[i]);
  }
  return out;
}

}  // namespace capeval
