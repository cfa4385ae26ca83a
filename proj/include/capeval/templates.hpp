#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "capeval/error.hpp"
#include "capeval/explanations.hpp"
#include "capeval/judgments.hpp"
#include "capeval/scoring.hpp"
#include "capeval/text.hpp"

namespace capeval {

// Canonical prompt texts. These are stored whole, with named substitution
// slots, and rendered by literal slot replacement only; tests pin them
// byte-for-byte, so edit with care.
namespace tpl {

inline constexpr std::string_view kScoringQuery =
    R"TPL(Evaluate the caption and assign a score on a scale of 0.0 to 1.0.

Caption: {caption}

Score (0.0~1.0):)TPL";

inline constexpr std::string_view kExplanationQuery =
    R"TPL(Provide a brief explanation for the score based on three criteria: Fluency, Relevance, and Descriptiveness.

Caption: {caption}

Evaluation Criteria:
- Fluency: Whether the caption is fluent, natural, and grammatically correct.
- Relevance: Whether the sentence correctly describes the visual content and is closely relevant to the image.
- Descriptiveness: Whether the sentence is a precise, informative caption that describes important details of the image.

Output Format:
Fluency: {Provide explanation here.}
Relevance: {Provide explanation here.}
Descriptiveness: {Provide explanation here.})TPL";

inline constexpr std::string_view kExplanationResponse =
    R"TPL(Fluency: {explanation for fluency}
Relevance: {explanation for relevance}
Descriptiveness: {explanation for descriptiveness})TPL";

// Explanation-generation prompt. It asks for criterion texts only; no
// numeric score appears anywhere in it, and the descriptiveness criterion
// carries the strengthened clause that stops gratuitous "could be more
// informative" feedback on already-adequate captions.
inline constexpr std::string_view kGenerationPrompt =
    R"TPL(Your task is to evaluate the given caption based on three criteria: Fluency, Relevance, and Descriptiveness. Provide a brief explanation for each criterion without assigning a numerical score.

Caption: {caption}

Criterion 1: Fluency
- Whether the caption is fluent, natural, and grammatically correct.

Criterion 2: Relevance
- Whether the sentence correctly describes the visual content and is closely relevant to the image.

Criterion 3: Descriptiveness
- Whether the sentence is a precise, informative caption that describes important details of the image.
- If the caption includes the necessary key details to provide a clear and informative description of the image, it should be considered descriptive enough. In this case, do not say it lacks detail or it could be more informative.

Output format:
Fluency: {Provide explanation here.}
Relevance: {Provide explanation here.}
Descriptiveness: {Provide explanation here.})TPL";

}  // namespace tpl

struct CriterionSpec {
  std::string_view name;
  std::string_view description;
};

inline constexpr std::array<CriterionSpec, 3> kCriteria = {{
    {"fluency", "Whether the caption is fluent, natural, and grammatically correct."},
    {"relevance",
     "Whether the sentence correctly describes the visual content and is closely relevant to the "
     "image."},
    {"descriptiveness",
     "Whether the sentence is a precise, informative caption that describes important details of "
     "the image."},
}};

namespace detail {

inline void require_caption(std::string_view caption) {
  if (trim_view(caption).empty()) throw Error("empty caption");
}

/// Replaces every occurrence of `slot` in the template. The scan runs over
/// the template only, so replacement text containing the slot marker is
/// inserted verbatim.
inline std::string substitute(std::string_view tpl, std::string_view slot,
                              std::string_view replacement) {
  std::string out;
  out.reserve(tpl.size() + replacement.size());
  std::size_t pos = 0;
  while (true) {
    std::size_t hit = tpl.find(slot, pos);
    if (hit == std::string_view::npos) {
      out.append(tpl.substr(pos));
      return out;
    }
    out.append(tpl.substr(pos, hit - pos));
    out.append(replacement);
    pos = hit + slot.size();
  }
}

}  // namespace detail

inline std::string render_scoring_query(std::string_view caption) {
  detail::require_caption(caption);
  return detail::substitute(tpl::kScoringQuery, "{caption}", caption);
}

inline std::string render_explanation_query(std::string_view caption) {
  detail::require_caption(caption);
  return detail::substitute(tpl::kExplanationQuery, "{caption}", caption);
}

inline std::string render_generation_prompt(std::string_view caption) {
  detail::require_caption(caption);
  return detail::substitute(tpl::kGenerationPrompt, "{caption}", caption);
}

/// Fixed-point rendering of an already-binned score with exactly
/// `decimals` fractional digits. Scores that are not exactly representable
/// at that precision are rejected rather than silently re-rounded.
inline std::string render_score_response(double score, int decimals) {
  if (!(score >= 0.0 && score <= 1.0))
    throw Error(str_printf("render_score_response: score %g outside [0,1]", score));
  if (decimals < 1 || decimals > 9)
    throw Error(str_printf("render_score_response: decimals %d outside [1,9]", decimals));
  double pow10 = std::pow(10.0, decimals);
  long long scaled = std::llround(score * pow10);
  if (std::abs(score - static_cast<double>(scaled) / pow10) > 1e-9)
    throw Error(str_printf(
        "render_score_response: score %.12g not aligned to rendering precision (%d decimals)",
        score, decimals));
  long long denom = static_cast<long long>(pow10);
  return str_printf("%lld.%0*lld", scaled / denom, decimals, scaled % denom);
}

inline std::string render_explanation_response(const StructuredExplanation& expl) {
  validate_explanation(expl);
  std::string out = detail::substitute(tpl::kExplanationResponse, "{explanation for fluency}",
                                       expl.fluency);
  out = detail::substitute(out, "{explanation for relevance}", expl.relevance);
  out = detail::substitute(out, "{explanation for descriptiveness}", expl.descriptiveness);
  return out;
}

// ---------------------------------------------------------------------------
// Conversations and SFT export

enum class Role { user, assistant };

inline std::string_view to_string(Role r) { return r == Role::user ? "user" : "assistant"; }

struct Turn {
  Role role = Role::user;
  std::string text;
  bool image_attached = false;
};

struct Conversation {
  std::vector<Turn> turns;
};

/// First turn is the user's, roles alternate, and only the first turn may
/// carry the image.
inline void validate_conversation(const Conversation& conv) {
  if (conv.turns.empty()) throw Error("conversation: no turns");
  if (conv.turns.front().role != Role::user) throw Error("conversation: first turn must be user");
  for (std::size_t i = 1; i < conv.turns.size(); ++i) {
    if (conv.turns[i].role == conv.turns[i - 1].role)
      throw Error(str_printf("conversation: roles do not alternate at turn %zu", i + 1));
    if (conv.turns[i].image_attached)
      throw Error("conversation: image attached to a non-initial turn");
  }
}

/// One two-stage training record: scoring query, score response,
/// explanation query, explanation response.
struct SftRecord {
  std::string image_ref;
  Conversation conversation;
};

inline SftRecord make_sft_record(std::string image_ref, Conversation conversation) {
  validate_conversation(conversation);
  if (conversation.turns.size() != 4)
    throw Error(str_printf("sft record: expected 4 turns, got %zu", conversation.turns.size()));
  const std::string& score_text = conversation.turns[1].text;
  GreedyScore parsed = decode_greedy_score(score_text);
  if (parsed.text != score_text)
    throw Error(str_printf("sft record: turn 2 is not a bare score literal: \"%s\"",
                           score_text.c_str()));
  parse_explanation(conversation.turns[3].text);
  return SftRecord{std::move(image_ref), std::move(conversation)};
}

/// A judgment instance with its generated structured explanation attached.
struct ExplainedInstance {
  JudgmentInstance judgment;
  std::optional<StructuredExplanation> explanation;
};

struct SftExportConfig {
  double bin_size = 0.10;
  int decimals = 2;
};

/// Converts explained instances into two-stage records. The score target
/// is the binned normalized score rendered at the configured precision
/// (two decimals by default, so both smoothing positions exist as
/// generated tokens at inference time).
inline std::vector<SftRecord> export_sft(std::span<const ExplainedInstance> instances,
                                         const SftExportConfig& config = {}) {
  std::vector<SftRecord> records;
  records.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!inst.explanation)
      throw Error(str_printf("export_sft: instance %s missing explanation",
                             inst.judgment.id.c_str()));
    double binned = bin_score(inst.judgment.norm_score, BinningConfig{config.bin_size});
    Conversation conv;
    conv.turns.push_back(Turn{Role::user, render_scoring_query(inst.judgment.caption), true});
    conv.turns.push_back(Turn{Role::assistant, render_score_response(binned, config.decimals)});
    conv.turns.push_back(Turn{Role::user, render_explanation_query(inst.judgment.caption)});
    conv.turns.push_back(Turn{Role::assistant, render_explanation_response(*inst.explanation)});
    records.push_back(make_sft_record(inst.judgment.image_ref, std::move(conv)));
  }
  return records;
}

/// SFT export line: {image, turns:[{role, text}]}.
inline std::string sft_record_to_json_line(const SftRecord& record) {
  nlohmann::ordered_json j;
  j["image"] = record.image_ref;
  j["turns"] = nlohmann::ordered_json::array();
  for (const auto& turn : record.conversation.turns) {
    j["turns"].push_back({{"role", std::string(to_string(turn.role))}, {"text", turn.text}});
  }
  return j.dump();
}

// ---------------------------------------------------------------------------
// Explained-dataset files (canonical judgment fields + explanation object)

inline std::string explained_to_json_line(const ExplainedInstance& inst) {
  const JudgmentInstance& g = inst.judgment;
  nlohmann::ordered_json j;
  j["id"] = g.id;
  j["image"] = g.image_ref;
  j["caption"] = g.caption;
  j["raw_score"] = g.raw_score;
  // Proportion scales re-export as the equivalent [0,1] interval.
  j["scale_lo"] = g.raw_scale.is_proportion ? 0.0 : g.raw_scale.lo;
  j["scale_hi"] = g.raw_scale.is_proportion ? 1.0 : g.raw_scale.hi;
  j["source"] = g.source;
  j["split"] = std::string(to_string(g.split));
  if (g.annotator_count) j["annotator_count"] = *g.annotator_count;
  if (inst.explanation) {
    j["explanation"] = {{"fluency", inst.explanation->fluency},
                        {"relevance", inst.explanation->relevance},
                        {"descriptiveness", inst.explanation->descriptiveness}};
  }
  return j.dump();
}

inline std::vector<ExplainedInstance> load_explained_dataset(const std::filesystem::path& path) {
  std::vector<ExplainedInstance> out;
  detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      ExplainedInstance inst;
      JudgmentInstance& g = inst.judgment;
      g.id = detail::require_string(j, "id");
      g.image_ref = detail::require_string(j, "image");
      g.caption = detail::require_string(j, "caption");
      if (trim_view(g.caption).empty()) throw Error("empty caption");
      g.raw_score = detail::require_number(j, "raw_score");
      g.raw_scale = RawScale::interval(detail::require_number(j, "scale_lo"),
                                       detail::require_number(j, "scale_hi"));
      g.norm_score = normalize_score(g.raw_score, g.raw_scale);
      g.source = detail::require_string(j, "source");
      g.split = parse_split(detail::require_string(j, "split"));
      if (j.contains("annotator_count")) g.annotator_count = j["annotator_count"].get<int>();
      if (j.contains("explanation") && !j["explanation"].is_null()) {
        const auto& e = j["explanation"];
        StructuredExplanation expl{detail::require_string(e, "fluency"),
                                   detail::require_string(e, "relevance"),
                                   detail::require_string(e, "descriptiveness")};
        validate_explanation(expl);
        inst.explanation = std::move(expl);
      }
      out.push_back(std::move(inst));
    } catch (const Error& e) {
      detail::record_error(path, lineno, e.what());
    }
  });
  return out;
}

/// merge_duplicates lifted to explained instances: scores average exactly
/// as in the judgments module, the first explanation in each group wins.
inline std::vector<ExplainedInstance> merge_explained_duplicates(
    const std::vector<ExplainedInstance>& in) {
  std::vector<JudgmentInstance> judgments;
  judgments.reserve(in.size());
  for (const auto& e : in) judgments.push_back(e.judgment);
  std::vector<JudgmentInstance> merged = merge_duplicates(judgments);

  std::unordered_map<std::string, const ExplainedInstance*> first_by_key;
  for (const auto& e : in) first_by_key.emplace(detail::dedup_key(e.judgment), &e);

  std::vector<ExplainedInstance> out;
  out.reserve(merged.size());
  for (auto& m : merged) {
    const ExplainedInstance* first = first_by_key.at(detail::dedup_key(m));
    out.push_back(ExplainedInstance{std::move(m), first->explanation});
  }
  return out;
}

}  // namespace capeval
