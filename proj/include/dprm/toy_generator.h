#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dprm/kg_store.h"
#include "dprm/lm_interface.h"

namespace dprm {

struct ToyGeneratorOptions {
  // Logit of the knowledge triple's true tail against 0 for every other
  // entity. At temperature 0.8 over 240 entities, 5.06 copies the tail about
  // 70% of the time.
  double fidelity = 5.06;
};

// Stand-in for an instruction-following LM over the prompt templates. It reads
// the labelled sections of a prompt and answers the three reasoning prompts:
//   - CoT step: restates the knowledge triple, sometimes with a hallucinated
//     tail, and adds "The answer is X." when the triple's relation is the last
//     relation named in the question;
//   - KG step: picks a candidate triple and reconstructs it;
//   - final answer: the last "answer is X" in the reasoning, else the tail of
//     the last evidence triple.
// Scoring is unsupported.
class ToyGenerator final : public LanguageModel {
 public:
  explicit ToyGenerator(const Graph& graph, ToyGeneratorOptions options = {});

  std::vector<TokenScore> score(std::string_view prompt,
                                std::string_view completion) const override;
  std::vector<std::string> sample(std::string_view prompt,
                                  const SampleOptions& options) const override;

 private:
  std::string cot_step(const std::string& prompt, double temperature,
                       std::uint64_t seed) const;
  std::string kg_step(const std::string& prompt, std::uint64_t seed) const;
  std::string final_answer(const std::string& prompt) const;

  const Graph* graph_;
  ToyGeneratorOptions options_;
};

// Relations of `graph` named in `text`, in order of appearance.
std::vector<std::string> relations_in_text(const Graph& graph, const std::string& text);

// Graph entities occurring in `text` as whole words, in order of first
// appearance.
std::vector<std::string> entities_in_text(const Graph& graph, const std::string& text);

// The answer named by the last "answer is X" clause of `text`, if any.
std::string extract_answer_clause(const std::string& text);

}  // namespace dprm
