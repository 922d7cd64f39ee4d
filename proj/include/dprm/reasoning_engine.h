#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprm/error.h"
#include "dprm/implicit_reward.h"
#include "dprm/kg_store.h"
#include "dprm/lm_interface.h"
#include "dprm/preference_foundry.h"
#include "dprm/retrieval.h"

namespace dprm {

enum class EngineMode {
  kToy,   // KG candidates drawn from the retrieved set; step-grammar entities
  kReal,  // KG candidates produced by prompting the generator
};

struct ReasonModels {
  const LanguageModel* generator = nullptr;
  const LanguageModel* kg_policy = nullptr;
  const LanguageModel* kg_reference = nullptr;
  const LanguageModel* cot_policy = nullptr;
  const LanguageModel* cot_reference = nullptr;
};

struct ReasonConfig {
  std::size_t max_iterations = 4;  // n
  std::size_t num_candidates = 8;  // N
  std::size_t top_m = 25;          // m
  double temperature = 0.8;
  double answer_temperature = 0.0;
  // Softmax temperature over cosine similarity when drawing toy KG candidates.
  double draw_temperature = 0.1;
  std::uint64_t seed = 0;
  std::string stop_keyword = "answer";
  std::size_t retries = 2;
  RewardConfig strengths;
  EngineMode mode = EngineMode::kToy;
  bool parallel_candidates = false;
  ReasonModels models;

  void validate() const;
  nlohmann::json to_json() const;
};

// One Best-of-N selection: every candidate with its reward (null when the
// scorer failed on it) and the winner.
struct BonRecord {
  std::vector<std::string> candidates;
  std::vector<std::optional<double>> rewards;
  std::size_t selected = 0;

  nlohmann::json to_json() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::string query;
  BonRecord kg;
  BonRecord cot;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct ReasonState {
  std::string question;
  KgPath kg_path;
  Cot cot;
  std::size_t iteration = 0;
  bool finished = false;
  std::vector<IterationRecord> trace;

  nlohmann::json to_json() const;
};

struct ReasonResult {
  std::string answer;
  std::string answer_prompt;
  ReasonState state;

  nlohmann::json to_json() const;
};

// Error raised inside reasoning, carrying the partial state.
class EngineError : public Error {
 public:
  EngineError(const Error& cause, ReasonState partial);
  ErrorCode cause() const { return cause_; }
  const ReasonState& partial() const { return partial_; }

 private:
  ErrorCode cause_;
  ReasonState partial_;
};

struct BonResult {
  std::size_t winner = 0;
  std::vector<std::optional<double>> rewards;
};

// Argmax of the scorer over candidate indices, lowest index on ties. A
// candidate whose scorer throws Error is excluded; if all are excluded, throws
// Error(kNoViableCandidate).
BonResult best_of_n(std::size_t num_candidates,
                    const std::function<double(std::size_t)>& scorer);

// Entities of a CoT step: head and tail under the step grammar, otherwise the
// graph entities it mentions.
std::vector<std::string> step_entities(const Graph& graph, const std::string& body);

class ReasoningEngine {
 public:
  // Builds the retrieval index over `graph` with `embedder`. Both must outlive
  // the engine.
  ReasoningEngine(const Graph& graph, const Embedder& embedder, ReasonConfig config);

  ReasonState initialize(const std::string& question) const;
  void kg_step(ReasonState& state) const;
  void cot_step(ReasonState& state) const;
  ReasonResult run(const std::string& question) const;

  const ReasonConfig& config() const { return config_; }
  const EmbeddingIndex& index() const { return index_; }

  // Query for the next retrieval: question and previous CoT step joined by a
  // space.
  static std::string step_query(const ReasonState& state);

 private:
  std::vector<ScoredIndex> retrieve(const std::string& query,
                                    const std::string& question,
                                    std::vector<std::string>& warnings) const;
  BonRecord select_triple(ReasonState& state, const std::string& query,
                          std::vector<std::string>& warnings) const;
  BonRecord select_step(ReasonState& state, std::vector<std::string>& warnings) const;
  std::vector<std::string> generate(const std::string& prompt, std::size_t n,
                                    double temperature, std::uint64_t seed) const;
  std::uint64_t step_seed(const ReasonState& state, std::uint64_t salt) const;

  const Graph* graph_;
  const Embedder* embedder_;
  ReasonConfig config_;
  EmbeddingIndex index_;
};

}  // namespace dprm
