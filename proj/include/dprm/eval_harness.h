#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprm/kg_store.h"
#include "dprm/preference_foundry.h"
#include "dprm/reasoning_engine.h"

namespace dprm {

enum class Variant { kFull, kNoCotrain, kNoIteration, kNoBoth };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

// Lowercase, trim, collapse internal whitespace, strip leading and trailing
// punctuation.
std::string normalize_answer(const std::string& text);

// Any normalized gold contained in the normalized prediction.
bool hit_at_1(const std::string& prediction, std::span<const std::string> golds);

// F1 over normalized, de-duplicated sets.
double f1_score(std::span<const std::string> predicted, std::span<const std::string> golds);

// Splits a final answer on the "; " delimiter, dropping empty parts.
std::vector<std::string> split_answers(const std::string& answer);

struct EvalRow {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<std::string> golds;
  bool hit = false;
  double f1 = 0.0;
  std::size_t iterations = 0;
  std::string error;  // empty on success
  nlohmann::json trace;
};

struct EvalReport {
  Variant variant = Variant::kFull;
  std::vector<EvalRow> rows;  // in dataset order
  double hit_at_1 = 0.0;
  double f1 = 0.0;
  nlohmann::json config_echo;

  // Rows without traces; traces are written separately.
  nlohmann::json to_json() const;
};

struct EvalSetup {
  ReasonModels full;       // co-trained PRMs
  ReasonModels init_only;  // PRMs after initialization only
  std::size_t parallelism = 1;
};

// Runs reasoning for every question under `variant` and aggregates. A failing
// question counts as a miss with f1 = 0.
EvalReport run_eval(std::span<const QaExample> dataset, const Graph& graph,
                    const Embedder& embedder, const ReasonConfig& config,
                    const EvalSetup& setup, Variant variant);

// Writes one "<id>.json" trace per row into `directory` (created if needed).
void write_traces(const EvalReport& report, const std::string& directory);

}  // namespace dprm
