#pragma once

#include <span>
#include <string>
#include <vector>

#include "dprm/kg_store.h"
#include "dprm/preference_foundry.h"

namespace dprm {

// Prompt template registry. Every template is plain text with labelled
// sections ("Question:", "Knowledge:", ...) so that the toy generator can
// parse what it is given.
namespace prompts {

inline constexpr const char* kQuestion = "Question:";
inline constexpr const char* kKnowledge = "Knowledge:";
inline constexpr const char* kPrevious = "Previous steps:";
inline constexpr const char* kCandidates = "Candidate triples:";
inline constexpr const char* kReasoning = "Reasoning:";
inline constexpr const char* kEvidence = "Evidence:";
inline constexpr const char* kGraph = "Graph:";
inline constexpr const char* kAnswerDelimiter = "; ";

// Pick one triple from `candidates` and rewrite it to start from an entity of
// the previous step. Reply format: "head relation tail".
std::string kg_step(const std::string& question, const std::string& previous_step,
                    std::span<const Triple> candidates);

// Next CoT step, guided by the selected triple.
std::string cot_step(const std::string& question, const Triple& triple,
                     const Cot& previous);

// Final answer prompt: hard part (question, CoT, path as sentences) followed by
// the soft part (adjacency textualization of the path).
std::string final_answer(const std::string& question, const Cot& cot,
                         const KgPath& path);

// "entity: relation -> entity" adjacency lines, grouped by source entity in
// order of first appearance.
std::string soft_graph(const KgPath& path);

// Preference-data generation and modality conversion (real mode).
std::string true_kg_sample(const std::string& question,
                           std::span<const std::string> answers);
std::string false_kg_sample(const std::string& path, Corruption kind);
std::string true_cot_sample(const std::string& question,
                            std::span<const std::string> answers);
std::string false_cot_sample(const std::string& cot, Corruption kind);
std::string kg_to_cot(const std::string& path);
std::string cot_to_kg(const std::string& cot);

// Lines that follow `header` up to the next blank line or section header.
std::vector<std::string> section_lines(const std::string& prompt,
                                       const std::string& header);
// Text after `header` on the header's own line.
std::string section_value(const std::string& prompt, const std::string& header);

}  // namespace prompts
}  // namespace dprm
