#pragma once

// Golden copies of the canonical prompt texts, written out independently of
// the library's embedded resources. The byte-exactness tests compare
// rendered output against these character for character; they are the
// authority, do not regenerate them from library code.

#include <string_view>

namespace golden {

// Scoring-stage query rendered for the caption "a dog runs".
inline constexpr std::string_view kScoringQueryDogRuns =
    "Evaluate the caption and assign a score on a scale of 0.0 to 1.0.\n"
    "\n"
    "Caption: a dog runs\n"
    "\n"
    "Score (0.0~1.0):";

// Explanation-stage query rendered for the caption "a dog runs".
inline constexpr std::string_view kExplanationQueryDogRuns =
    "Provide a brief explanation for the score based on three criteria: Fluency, Relevance, and "
    "Descriptiveness.\n"
    "\n"
    "Caption: a dog runs\n"
    "\n"
    "Evaluation Criteria:\n"
    "- Fluency: Whether the caption is fluent, natural, and grammatically correct.\n"
    "- Relevance: Whether the sentence correctly describes the visual content and is closely "
    "relevant to the image.\n"
    "- Descriptiveness: Whether the sentence is a precise, informative caption that describes "
    "important details of the image.\n"
    "\n"
    "Output Format:\n"
    "Fluency: {Provide explanation here.}\n"
    "Relevance: {Provide explanation here.}\n"
    "Descriptiveness: {Provide explanation here.}";

// Explanation-generation prompt rendered for the caption "a dog runs".
inline constexpr std::string_view kGenerationPromptDogRuns =
    "Your task is to evaluate the given caption based on three criteria: Fluency, Relevance, and "
    "Descriptiveness. Provide a brief explanation for each criterion without assigning a "
    "numerical score.\n"
    "\n"
    "Caption: a dog runs\n"
    "\n"
    "Criterion 1: Fluency\n"
    "- Whether the caption is fluent, natural, and grammatically correct.\n"
    "\n"
    "Criterion 2: Relevance\n"
    "- Whether the sentence correctly describes the visual content and is closely relevant to the "
    "image.\n"
    "\n"
    "Criterion 3: Descriptiveness\n"
    "- Whether the sentence is a precise, informative caption that describes important details of "
    "the image.\n"
    "- If the caption includes the necessary key details to provide a clear and informative "
    "description of the image, it should be considered descriptive enough. In this case, do not "
    "say it lacks detail or it could be more informative.\n"
    "\n"
    "Output format:\n"
    "Fluency: {Provide explanation here.}\n"
    "Relevance: {Provide explanation here.}\n"
    "Descriptiveness: {Provide explanation here.}";

// Explanation response rendered for ("good.", "matches.", "detailed.").
inline constexpr std::string_view kExplanationResponseSample =
    "Fluency: good.\n"
    "Relevance: matches.\n"
    "Descriptiveness: detailed.";

}  // namespace golden
