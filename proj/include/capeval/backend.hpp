#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "capeval/error.hpp"
#include "capeval/judgments.hpp"
#include "capeval/scoring.hpp"
#include "capeval/templates.hpp"
#include "capeval/text.hpp"

namespace capeval {

struct Message {
  Role role = Role::user;
  std::string text;
  std::optional<std::string> image_base64;  // inline payload, only on the first message
};

struct BackendRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  int candidate_count = 0;  // top candidates to request per generated token; 0 = none
  int max_tokens = 16;
};

inline void validate_request(const BackendRequest& req) {
  if (req.messages.empty()) throw Error("backend request: no messages");
  if (req.messages.front().role != Role::user)
    throw Error("backend request: first message must be from the user");
  for (std::size_t i = 1; i < req.messages.size(); ++i) {
    if (req.messages[i].image_base64)
      throw Error("backend request: image attached to a non-initial message");
  }
  if (req.temperature < 0.0) throw Error("backend request: negative temperature");
  if (req.candidate_count < 0) throw Error("backend request: negative candidate count");
  if (req.max_tokens < 1) throw Error("backend request: max_tokens must be positive");
}

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct BackendResponse {
  std::string text;
  std::vector<GeneratedToken> tokens;  // per-token candidate lists when requested
  Usage usage;
  double latency_s = 0.0;
};

/// Inference backend contract. Implementations must be safe to call from
/// multiple threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse complete(const BackendRequest& request) const = 0;
};

// ---------------------------------------------------------------------------
// Wire encoding (chat-completion style with token log-probabilities)

inline nlohmann::ordered_json request_to_json(const BackendRequest& req) {
  validate_request(req);
  nlohmann::ordered_json j;
  j["model"] = req.model;
  j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : req.messages) {
    nlohmann::ordered_json content = nlohmann::ordered_json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    if (m.image_base64) content.push_back({{"type", "image"}, {"image", *m.image_base64}});
    j["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", content}});
  }
  j["temperature"] = req.temperature;
  if (req.candidate_count > 0) {
    j["logprobs"] = true;
    j["top_logprobs"] = req.candidate_count;
  }
  j["max_tokens"] = req.max_tokens;
  return j;
}

namespace detail {

/// Log-probabilities travel on the wire; they are exponentiated here at
/// the client boundary.
inline double prob_from_logprob(double logprob) {
  if (logprob > 1e-6) throw Error(str_printf("malformed response: positive logprob %g", logprob));
  return std::exp(std::min(logprob, 0.0));
}

inline void sort_candidates(std::vector<TokenCandidate>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.text < b.text;
  });
}

}  // namespace detail

/// Decodes a chat-completion response body. When candidates were requested
/// they must be present; they are converted to plain probabilities, sorted
/// descending, and truncated to the requested count.
inline BackendResponse response_from_json(const nlohmann::json& j, int requested_candidates) {
  BackendResponse resp;
  try {
    const auto& choices = j.at("choices");
    if (!choices.is_array() || choices.empty()) throw Error("empty choices");
    const auto& choice = choices.at(0);
    resp.text = choice.at("message").at("content").get<std::string>();

    bool has_logprobs = choice.contains("logprobs") && !choice["logprobs"].is_null();
    if (requested_candidates > 0 && !has_logprobs)
      throw Error("candidate lists absent although they were requested");
    if (has_logprobs) {
      for (const auto& tok : choice["logprobs"].at("content")) {
        GeneratedToken gt;
        gt.text = tok.at("token").get<std::string>();
        if (tok.contains("top_logprobs")) {
          for (const auto& cand : tok["top_logprobs"]) {
            gt.candidates.push_back(
                TokenCandidate{cand.at("token").get<std::string>(),
                               detail::prob_from_logprob(cand.at("logprob").get<double>())});
          }
        }
        if (gt.candidates.empty() && requested_candidates > 0)
          throw Error("candidate lists absent although they were requested");
        detail::sort_candidates(gt.candidates);
        if (requested_candidates > 0 &&
            gt.candidates.size() > static_cast<std::size_t>(requested_candidates))
          gt.candidates.resize(static_cast<std::size_t>(requested_candidates));
        resp.tokens.push_back(std::move(gt));
      }
    }
    if (j.contains("usage")) {
      resp.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0u);
      resp.usage.completion_tokens = j["usage"].value("completion_tokens", 0u);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(str_printf("malformed response: %s", e.what()));
  }
  return resp;
}

// ---------------------------------------------------------------------------
// Two-stage request construction

enum class Stage { scoring, explanation };

struct StageOptions {
  std::string model = "llava-1.5-13b";
  int candidate_count = 20;
  int max_tokens_score = 16;
  int max_tokens_explanation = 512;
};

/// Builds the request for one stage of the two-stage conversation. The
/// scoring stage is a single user message with the image; the explanation
/// stage replays that message, echoes the exact greedy score text as the
/// assistant turn, and appends the explanation query. Both stages run at
/// temperature 0.
inline BackendRequest build_stage_request(Stage stage, std::string_view caption,
                                          std::string image_base64, const StageOptions& opts,
                                          std::optional<std::string_view> prior_score_text = {}) {
  BackendRequest req;
  req.model = opts.model;
  req.temperature = 0.0;
  req.messages.push_back(
      Message{Role::user, render_scoring_query(caption), std::move(image_base64)});
  if (stage == Stage::scoring) {
    req.candidate_count = opts.candidate_count;
    req.max_tokens = opts.max_tokens_score;
  } else {
    if (!prior_score_text)
      throw Error("explanation stage requested without the prior score text");
    req.messages.push_back(Message{Role::assistant, std::string(*prior_score_text), std::nullopt});
    req.messages.push_back(Message{Role::user, render_explanation_query(caption), std::nullopt});
    req.candidate_count = 0;
    req.max_tokens = opts.max_tokens_explanation;
  }
  validate_request(req);
  return req;
}

/// Inline image payload for a message: the base64 of the file contents
/// when image_ref is a readable file, otherwise the base64 of the
/// reference string itself (synthetic refs stay usable offline; a live
/// server rejects them per-row).
inline std::string load_image_payload(std::string_view image_ref) {
  std::ifstream in{std::filesystem::path(std::string(image_ref)), std::ios::binary};
  if (in) {
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return base64_encode(bytes);
  }
  return base64_encode(image_ref);
}

// ---------------------------------------------------------------------------
// Scripted mock backend

/// The mock keys on a fingerprint of the request's final user message, so
/// scripts are independent of image payloads and prior turns.
inline std::string request_fingerprint(const BackendRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::user) return to_hex16(fnv1a64(it->text));
  }
  throw Error("backend request: no user message to fingerprint");
}

struct MockEntry {
  std::string text;  // generated text; defaults to the concatenated tokens
  std::vector<GeneratedToken> tokens;
  std::size_t prompt_tokens = 0;
  double latency_s = 0.0;
};

class MockScript {
 public:
  void add(std::string_view final_user_text, MockEntry entry) {
    add_fingerprint(to_hex16(fnv1a64(final_user_text)), std::move(entry));
  }

  void add_fingerprint(std::string fingerprint, MockEntry entry) {
    if (entry.latency_s < 0.0) throw Error("mock script: negative latency");
    for (auto& tok : entry.tokens) {
      for (const auto& c : tok.candidates) {
        if (c.probability < 0.0 || c.probability > 1.0)
          throw Error(str_printf("mock script: candidate probability %g outside [0,1]",
                                 c.probability));
      }
      detail::sort_candidates(tok.candidates);
    }
    if (entry.text.empty()) {
      for (const auto& tok : entry.tokens) entry.text += tok.text;
    }
    entries_[std::move(fingerprint)] = std::move(entry);
  }

  const MockEntry* find(const std::string& fingerprint) const {
    auto it = entries_.find(fingerprint);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }

  /// Script file: one JSON object per line with either "match" (the final
  /// user message text) or "fingerprint", plus "tokens" as
  /// [{"token": "6", "top": [["6", 0.9], ["7", 0.1]]}, ...] and optional
  /// "text", "prompt_tokens" and "latency_s".
  static MockScript load(const std::filesystem::path& path) {
    MockScript script;
    detail::for_each_jsonl_record(path, [&](std::size_t lineno, const nlohmann::json& j) {
      try {
        MockEntry entry;
        entry.text = j.value("text", std::string{});
        entry.prompt_tokens = j.value("prompt_tokens", 0u);
        entry.latency_s = j.value("latency_s", 0.0);
        if (j.contains("tokens")) {
          for (const auto& tok : j["tokens"]) {
            GeneratedToken gt;
            gt.text = detail::require_string(tok, "token");
            if (tok.contains("top")) {
              for (const auto& cand : tok["top"]) {
                if (!cand.is_array() || cand.size() != 2)
                  throw Error("token candidate must be a [text, probability] pair");
                gt.candidates.push_back(
                    TokenCandidate{cand.at(0).get<std::string>(), cand.at(1).get<double>()});
              }
            }
            entry.tokens.push_back(std::move(gt));
          }
        }
        if (j.contains("fingerprint")) {
          script.add_fingerprint(j["fingerprint"].get<std::string>(), std::move(entry));
        } else if (j.contains("match")) {
          script.add(j["match"].get<std::string>(), std::move(entry));
        } else {
          throw Error("script entry needs a \"match\" or \"fingerprint\" key");
        }
      } catch (const Error& e) {
        detail::record_error(path, lineno, e.what());
      } catch (const nlohmann::json::exception& e) {
        detail::record_error(path, lineno, e.what());
      }
    });
    return script;
  }

 private:
  std::unordered_map<std::string, MockEntry> entries_;
};

/// Deterministic scripted completion: identical requests yield identical
/// responses, including the scripted latency.
inline BackendResponse mock_complete(const BackendRequest& request, const MockScript& script) {
  validate_request(request);
  std::string fp = request_fingerprint(request);
  const MockEntry* entry = script.find(fp);
  if (!entry)
    throw Error(str_printf("mock backend: no script entry for request fingerprint %s", fp.c_str()));
  BackendResponse resp;
  resp.text = entry->text;
  resp.tokens = entry->tokens;
  resp.usage.prompt_tokens = entry->prompt_tokens;
  resp.usage.completion_tokens = entry->tokens.size();
  resp.latency_s = entry->latency_s;
  return resp;
}

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockScript script) : script_(std::move(script)) {}

  BackendResponse complete(const BackendRequest& request) const override {
    return mock_complete(request, script_);
  }

  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
};

}  // namespace capeval
