#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capeval/error.hpp"
#include "capeval/text.hpp"

namespace capeval {

/// One candidate token reported at a generated position.
struct TokenCandidate {
  std::string text;
  double probability = 0.0;
};

/// A generated token together with the candidate list the server reported
/// for its position (sorted by descending probability).
struct GeneratedToken {
  std::string text;
  std::vector<TokenCandidate> candidates;
};

// ---------------------------------------------------------------------------
// Score binning

struct BinningConfig {
  double bin_size = 0.10;  // rounding is half-away-from-zero, result clamped to [0,1]
};

/// Rounds s to the nearest multiple of the bin size, halves away from zero.
/// The quotient is snapped to 9 decimal places first so that decimal inputs
/// like 0.85 / 0.10 land on the intended tie instead of just below it.
inline double bin_score(double s, const BinningConfig& config = {}) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error(str_printf("bin_score: score %g outside [0,1]", s));
  double b = config.bin_size;
  if (!(b > 0.0 && b <= 1.0))
    throw Error(str_printf("bin_score: bin size %g outside (0,1]", b));
  double q = s / b;
  if (q < 9.0e6) q = std::round(q * 1e9) / 1e9;
  double binned = std::round(q) * b;
  if (binned < 0.0) binned = 0.0;
  if (binned > 1.0) binned = 1.0;
  return binned;
}

// ---------------------------------------------------------------------------
// Digit distributions and score smoothing

/// Probability mass over digits 0-9 at one decimal place. coverage is the
/// probability mass the candidate list originally placed on digit-leading
/// tokens; renormalized is set whenever the stored p differs from that raw
/// mass (top-k truncation, non-digit candidates, or a missing position).
struct DigitPosition {
  std::array<double, 10> p{};
  double coverage = 0.0;
  bool renormalized = false;
};

struct DigitDistribution {
  std::array<DigitPosition, 2> positions{};  // decimal places j=1 and j=2

  void validate() const {
    for (std::size_t j = 0; j < 2; ++j) {
      double sum = 0.0;
      for (double v : positions[j].p) {
        if (v < 0.0)
          throw Error(str_printf("digit distribution: negative mass at position %zu", j + 1));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw Error(str_printf("digit distribution: mass at position %zu sums to %.12f", j + 1, sum));
    }
  }
};

namespace detail {

inline bool is_digit_char(char c) { return c >= '0' && c <= '9'; }

/// A candidate contributes its probability to the digit its text starts
/// with; multi-digit tokens ("60") therefore count toward their leading
/// digit. Mass on non-digit candidates is dropped.
inline DigitPosition digit_position_from_candidates(std::span<const TokenCandidate> candidates) {
  DigitPosition pos;
  for (const auto& c : candidates) {
    if (c.text.empty() || !is_digit_char(c.text.front())) continue;
    pos.p[static_cast<std::size_t>(c.text.front() - '0')] += c.probability;
  }
  double mass = 0.0;
  for (double v : pos.p) mass += v;
  pos.coverage = mass;
  if (mass > 0.0 && std::abs(mass - 1.0) > 1e-12) {
    for (double& v : pos.p) v /= mass;
    pos.renormalized = true;
  }
  return pos;
}

inline DigitPosition absent_digit_position() {
  // Missing second decimal place: the generated score ended early, which
  // pins that place to 0.
  DigitPosition pos;
  pos.p[0] = 1.0;
  pos.coverage = 0.0;
  pos.renormalized = true;
  return pos;
}

}  // namespace detail

/// Builds the per-decimal-place digit distributions from generated tokens.
/// Positions 1 and 2 are the first and second token positions after the
/// decimal-point token. An absent or digit-free second position degrades
/// to a point mass on 0 with the renormalized flag set.
inline DigitDistribution extract_digit_distributions(std::span<const GeneratedToken> tokens) {
  std::size_t point = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].text.find('.') != std::string::npos) {
      point = i;
      break;
    }
  }
  if (point == tokens.size()) throw Error("extract_digit_distributions: no decimal point in generated text");
  if (point + 1 >= tokens.size())
    throw Error("extract_digit_distributions: no generated position after the decimal point");

  DigitDistribution dist;
  dist.positions[0] = detail::digit_position_from_candidates(tokens[point + 1].candidates);
  if (dist.positions[0].coverage <= 0.0)
    throw Error("extract_digit_distributions: zero digit probability mass at decimal position 1");

  if (point + 2 < tokens.size()) {
    dist.positions[1] = detail::digit_position_from_candidates(tokens[point + 2].candidates);
    if (dist.positions[1].coverage <= 0.0) dist.positions[1] = detail::absent_digit_position();
  } else {
    dist.positions[1] = detail::absent_digit_position();
  }
  dist.validate();
  return dist;
}

struct SmoothedScore {
  double value = 0.0;
  std::array<double, 2> position_expectation{};  // E_j = sum_i i * p(i,j)
};

/// Probability-weighted expectation over the two decimal places:
///   s = sum_{j=1..2} 10^-j * sum_{i=0..9} i * p(i,j)
/// The reachable range is [0, 0.99].
inline SmoothedScore smooth_score(const DigitDistribution& dist) {
  dist.validate();
  static constexpr std::array<double, 2> place_value = {0.1, 0.01};
  SmoothedScore result;
  for (std::size_t j = 0; j < 2; ++j) {
    double e = 0.0;
    for (std::size_t i = 0; i < 10; ++i) e += static_cast<double>(i) * dist.positions[j].p[i];
    result.position_expectation[j] = e;
    result.value += place_value[j] * e;
  }
  return result;
}

struct GreedyScore {
  double value = 0.0;
  std::string text;  // the exact substring consumed from the generated text
};

/// Parses the decimal score literal at the start of generated text
/// (leading whitespace skipped). The returned text is the exact substring
/// consumed; it is what gets echoed back as the assistant turn when the
/// explanation stage is prompted.
inline GreedyScore decode_greedy_score(std::string_view generated) {
  std::size_t i = 0;
  while (i < generated.size() &&
         (generated[i] == ' ' || generated[i] == '\t' || generated[i] == '\r' || generated[i] == '\n'))
    ++i;
  std::size_t start = i;
  std::size_t digits = 0;
  while (i < generated.size() && detail::is_digit_char(generated[i])) ++i, ++digits;
  if (i < generated.size() && generated[i] == '.') {
    ++i;
    while (i < generated.size() && detail::is_digit_char(generated[i])) ++i, ++digits;
  }
  if (digits == 0) {
    std::string head(generated.substr(0, std::min<std::size_t>(generated.size(), 32)));
    throw Error(str_printf("decode_greedy_score: no score literal at start of \"%s\"", head.c_str()));
  }
  GreedyScore result;
  result.text = std::string(generated.substr(start, i - start));
  result.value = std::strtod(result.text.c_str(), nullptr);
  if (result.value < 0.0 || result.value > 1.0)
    throw Error(str_printf("decode_greedy_score: score %s outside [0,1]", result.text.c_str()));
  return result;
}

}  // namespace capeval
