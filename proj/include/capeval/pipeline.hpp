#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "capeval/backend.hpp"
#include "capeval/error.hpp"
#include "capeval/explanations.hpp"
#include "capeval/judgments.hpp"
#include "capeval/scoring.hpp"
#include "capeval/stats.hpp"
#include "capeval/templates.hpp"

namespace capeval {

enum class RunMode { full, score_only };

inline std::string_view to_string(RunMode m) {
  return m == RunMode::full ? "full" : "score_only";
}

/// Everything a run needs, loaded from one declarative config file.
/// Credentials never appear here; api_key_env names the environment
/// variable to read at connect time.
struct RunConfig {
  // backend
  std::string endpoint;
  std::string path = "/v1/chat/completions";
  std::string model = "llava-1.5-13b";
  std::string api_key_env = "CAPEVAL_API_KEY";
  int candidate_count = 20;
  int max_tokens_score = 16;
  int max_tokens_explanation = 512;
  int attempts = 3;
  double backoff_initial_s = 1.0;
  // scoring
  double bin_size = 0.10;
  int decimals = 2;
  // run
  int parallelism = 1;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::full;

  void validate() const {
    if (candidate_count < 10)
      throw Error("config: candidate_count must be >= 10 so every digit is requestable");
    if (parallelism < 1) throw Error("config: parallelism must be >= 1");
    if (!(bin_size > 0.0 && bin_size <= 1.0)) throw Error("config: bin_size outside (0,1]");
    if (decimals < 1 || decimals > 9) throw Error("config: decimals outside [1,9]");
    if (attempts < 1) throw Error("config: attempts must be >= 1");
    if (max_tokens_score < 1 || max_tokens_explanation < 1)
      throw Error("config: max_tokens must be positive");
  }

  StageOptions stage_options() const {
    return StageOptions{model, candidate_count, max_tokens_score, max_tokens_explanation};
  }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(str_printf("cannot open config file: %s", path.string().c_str()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(str_printf("%s: malformed config: %s", path.string().c_str(), e.what()));
  }
  RunConfig cfg;
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    cfg.endpoint = b.value("endpoint", cfg.endpoint);
    cfg.path = b.value("path", cfg.path);
    cfg.model = b.value("model", cfg.model);
    cfg.api_key_env = b.value("api_key_env", cfg.api_key_env);
    cfg.candidate_count = b.value("candidate_count", cfg.candidate_count);
    cfg.max_tokens_score = b.value("max_tokens_score", cfg.max_tokens_score);
    cfg.max_tokens_explanation = b.value("max_tokens_explanation", cfg.max_tokens_explanation);
    cfg.attempts = b.value("attempts", cfg.attempts);
    cfg.backoff_initial_s = b.value("backoff_initial_s", cfg.backoff_initial_s);
  }
  if (j.contains("scoring")) {
    const auto& s = j["scoring"];
    cfg.bin_size = s.value("bin_size", cfg.bin_size);
    cfg.decimals = s.value("decimals", cfg.decimals);
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    cfg.parallelism = r.value("parallelism", cfg.parallelism);
    cfg.seed = r.value("seed", cfg.seed);
    std::string mode = r.value("mode", std::string(to_string(cfg.mode)));
    if (mode == "full") {
      cfg.mode = RunMode::full;
    } else if (mode == "score_only") {
      cfg.mode = RunMode::score_only;
    } else {
      throw Error(str_printf("config: unknown mode \"%s\"", mode.c_str()));
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Evaluation rows

struct RowDiagnostics {
  std::array<double, 2> coverage{};      // digit mass found at each smoothing position
  std::array<bool, 2> renormalized{};
  bool integer_part_one = false;         // greedy score parsed to >= 1
};

struct EvaluationRow {
  std::string id;
  bool failed = false;
  std::string error;
  double smoothed_score = 0.0;
  std::string greedy_score_text;
  std::optional<StructuredExplanation> explanation;  // present iff mode = full
  double score_latency_s = 0.0;
  std::optional<double> explanation_latency_s;
  RowDiagnostics diagnostics;
};

/// Runs the two-stage protocol for one instance. Throws on any backend or
/// parse failure; evaluate_dataset turns that into a failed row.
inline EvaluationRow evaluate_instance(const JudgmentInstance& inst, const Backend& backend,
                                       const RunConfig& cfg) {
  EvaluationRow row;
  row.id = inst.id;
  StageOptions opts = cfg.stage_options();
  std::string image = load_image_payload(inst.image_ref);

  BackendRequest scoring = build_stage_request(Stage::scoring, inst.caption, image, opts);
  BackendResponse r1 = backend.complete(scoring);
  row.score_latency_s = r1.latency_s;

  GreedyScore greedy = decode_greedy_score(r1.text);
  row.greedy_score_text = greedy.text;
  DigitDistribution dist = extract_digit_distributions(r1.tokens);
  SmoothedScore smoothed = smooth_score(dist);
  row.smoothed_score = smoothed.value;
  for (std::size_t j = 0; j < 2; ++j) {
    row.diagnostics.coverage[j] = dist.positions[j].coverage;
    row.diagnostics.renormalized[j] = dist.positions[j].renormalized;
  }
  row.diagnostics.integer_part_one = greedy.value >= 1.0;

  if (cfg.mode == RunMode::full) {
    BackendRequest expl =
        build_stage_request(Stage::explanation, inst.caption, image, opts, greedy.text);
    BackendResponse r2 = backend.complete(expl);
    row.explanation = parse_explanation(r2.text);
    row.explanation_latency_s = r2.latency_s;
  }
  return row;
}

struct EvaluationResult {
  std::vector<EvaluationRow> rows;  // dataset order
  std::size_t failed_count = 0;
  TauVariant statistic = TauVariant::c;
  std::optional<CorrelationResult> correlation;  // over successful rows
  std::string correlation_error;
};

/// Evaluates every instance against the backend with a bounded worker
/// pool. Rows come back in dataset order regardless of completion order,
/// per-row failures are recorded rather than aborting the run, and the
/// dataset's assigned rank statistic is computed over the surviving rows.
inline EvaluationResult evaluate_dataset(std::span<const JudgmentInstance> instances,
                                         DatasetKind kind, const Backend& backend,
                                         const RunConfig& cfg) {
  cfg.validate();
  EvaluationResult result;
  result.statistic = assigned_statistic(kind);
  result.rows.resize(instances.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      try {
        result.rows[i] = evaluate_instance(instances[i], backend, cfg);
      } catch (const std::exception& e) {
        result.rows[i] = EvaluationRow{};
        result.rows[i].id = instances[i].id;
        result.rows[i].failed = true;
        result.rows[i].error = e.what();
      }
    }
  };
  std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism),
                                           std::max<std::size_t>(instances.size(), 1));
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  std::vector<double> metric, human;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (result.rows[i].failed) {
      ++result.failed_count;
      continue;
    }
    metric.push_back(result.rows[i].smoothed_score);
    human.push_back(instances[i].norm_score);
  }
  try {
    result.correlation = result.statistic == TauVariant::b ? kendall_tau_b(metric, human)
                                                           : kendall_tau_c(metric, human);
  } catch (const Error& e) {
    result.correlation_error = e.what();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Timing (score-only vs full split)

struct TimingReport {
  std::size_t rows_profiled = 0;  // successful rows
  double mean_score_stage_s = 0.0;
  std::size_t full_rows = 0;
  std::optional<double> mean_full_s;  // score + explanation, when any row ran both stages
};

inline TimingReport time_profile(std::span<const EvaluationRow> rows) {
  if (rows.empty()) throw Error("time_profile: no rows");
  TimingReport report;
  double score_sum = 0.0, full_sum = 0.0;
  for (const auto& row : rows) {
    if (row.failed) continue;
    ++report.rows_profiled;
    score_sum += row.score_latency_s;
    if (row.explanation_latency_s) {
      ++report.full_rows;
      full_sum += row.score_latency_s + *row.explanation_latency_s;
    }
  }
  if (report.rows_profiled == 0) throw Error("time_profile: no successful rows");
  report.mean_score_stage_s = score_sum / static_cast<double>(report.rows_profiled);
  if (report.full_rows > 0)
    report.mean_full_s = full_sum / static_cast<double>(report.full_rows);
  return report;
}

// ---------------------------------------------------------------------------
// Row serialization (line-delimited records)

inline std::string row_to_json_line(const EvaluationRow& row) {
  nlohmann::ordered_json j;
  j["id"] = row.id;
  j["failed"] = row.failed;
  if (row.failed) {
    j["error"] = row.error;
    return j.dump();
  }
  j["smoothed_score"] = row.smoothed_score;
  j["greedy_score"] = row.greedy_score_text;
  if (row.explanation) {
    j["explanation"] = {{"fluency", row.explanation->fluency},
                        {"relevance", row.explanation->relevance},
                        {"descriptiveness", row.explanation->descriptiveness}};
  } else {
    j["explanation"] = nullptr;
  }
  j["score_latency_s"] = row.score_latency_s;
  if (row.explanation_latency_s) {
    j["explanation_latency_s"] = *row.explanation_latency_s;
  } else {
    j["explanation_latency_s"] = nullptr;
  }
  j["coverage"] = row.diagnostics.coverage;
  j["renormalized"] = row.diagnostics.renormalized;
  j["integer_part_one"] = row.diagnostics.integer_part_one;
  return j.dump();
}

inline EvaluationRow row_from_json(const nlohmann::json& j) {
  EvaluationRow row;
  row.id = detail::require_string(j, "id");
  row.failed = j.value("failed", false);
  if (row.failed) {
    row.error = j.value("error", std::string{});
    return row;
  }
  row.smoothed_score = detail::require_number(j, "smoothed_score");
  row.greedy_score_text = j.value("greedy_score", std::string{});
  if (j.contains("explanation") && !j["explanation"].is_null()) {
    const auto& e = j["explanation"];
    row.explanation = StructuredExplanation{detail::require_string(e, "fluency"),
                                            detail::require_string(e, "relevance"),
                                            detail::require_string(e, "descriptiveness")};
  }
  row.score_latency_s = j.value("score_latency_s", 0.0);
  if (j.contains("explanation_latency_s") && !j["explanation_latency_s"].is_null())
    row.explanation_latency_s = j["explanation_latency_s"].get<double>();
  if (j.contains("coverage") && j["coverage"].is_array() && j["coverage"].size() == 2) {
    row.diagnostics.coverage = {j["coverage"][0].get<double>(), j["coverage"][1].get<double>()};
  }
  if (j.contains("renormalized") && j["renormalized"].is_array() && j["renormalized"].size() == 2) {
    row.diagnostics.renormalized = {j["renormalized"][0].get<bool>(),
                                    j["renormalized"][1].get<bool>()};
  }
  row.diagnostics.integer_part_one = j.value("integer_part_one", false);
  return row;
}

inline std::vector<EvaluationRow> load_rows(const std::filesystem::path& path) {
  std::vector<EvaluationRow> rows;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      rows.push_back(row_from_json(j));
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

/// Correlation values print multiplied by 100, the conventional
/// percentage-style presentation for these benchmarks.
inline std::string format_correlation_report(std::string_view dataset, TauVariant variant,
                                             const CorrelationResult& corr) {
  std::string out = str_printf("%-14s %-10s %s\n", "dataset", "statistic", "value");
  out += str_printf("%-14s %-10s %.1f\n", std::string(dataset).c_str(),
                    std::string(to_string(variant)).c_str(), corr.tau * 100.0);
  out += str_printf(
      "pairs: n=%zu concordant=%llu discordant=%llu ties_x=%llu ties_y=%llu ties_xy=%llu m=%zu\n",
      corr.n, static_cast<unsigned long long>(corr.concordant),
      static_cast<unsigned long long>(corr.discordant),
      static_cast<unsigned long long>(corr.ties_x), static_cast<unsigned long long>(corr.ties_y),
      static_cast<unsigned long long>(corr.ties_xy), corr.min_distinct_levels);
  return out;
}

inline std::string format_pairwise_report(const PairwiseAccuracyReport& report) {
  std::string out = str_printf("%-10s %-9s %s\n", "category", "accuracy", "count");
  for (std::size_t c = 0; c < 4; ++c) {
    out += str_printf("%-10s %-9.1f %zu\n",
                      std::string(to_string(static_cast<PascalCategory>(c))).c_str(),
                      report.category_accuracy[c] * 100.0, report.category_count[c]);
  }
  out += str_printf("%-10s %.1f\n", "average", report.macro_average * 100.0);
  out += str_printf("ties: %zu\n", report.tie_count);
  return out;
}

inline std::string format_timing_report(const TimingReport& report) {
  std::string out = str_printf("%-18s %-20s %s\n", "stage", "mean latency (sec)", "rows");
  out += str_printf("%-18s %-20.3f %zu\n", "score", report.mean_score_stage_s,
                    report.rows_profiled);
  if (report.mean_full_s)
    out += str_printf("%-18s %-20.3f %zu\n", "score+explanation", *report.mean_full_s,
                      report.full_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset-side serialization for the sample subcommand

inline std::string instance_to_json_line(const JudgmentInstance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["image"] = inst.image_ref;
  j["caption"] = inst.caption;
  j["raw_score"] = inst.raw_score;
  j["scale_lo"] = inst.raw_scale.is_proportion ? 0.0 : inst.raw_scale.lo;
  j["scale_hi"] = inst.raw_scale.is_proportion ? 1.0 : inst.raw_scale.hi;
  j["source"] = inst.source;
  j["split"] = std::string(to_string(inst.split));
  if (inst.annotator_count) j["annotator_count"] = *inst.annotator_count;
  return j.dump();
}

}  // namespace capeval
