#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprm/kg_store.h"
#include "dprm/preference_foundry.h"
#include "dprm/prm_trainer.h"
#include "dprm/reasoning_engine.h"
#include "dprm/synthetic.h"
#include "dprm/toy_generator.h"
#include "dprm/toy_lm.h"

namespace dprm {

struct ToyWorldOptions {
  PlantedGraphOptions graph;
  std::size_t train_questions = 1000;
  std::size_t eval_questions = 200;
  std::size_t order = 2;
  std::size_t max_len = 64;
  std::size_t distractor_pool = 500;
  std::size_t rejections_per_path = 3;
  std::uint64_t seed = 7;
};

struct QaSplit {
  std::vector<QaExample> train;  // ids "train<i>"
  std::vector<QaExample> eval;   // ids "eval<i>"
};

// Disjoint planted train and eval questions over `graph`.
QaSplit planted_split(const Graph& graph, const ToyWorldOptions& options);

// Distractor pool plus native KG and CoT preference pairs for `train_qa`.
struct PairSet {
  std::vector<std::string> distractors;
  std::vector<PreferencePair> kg;
  std::vector<PreferencePair> cot;
};

PairSet build_pairs(const Graph& graph, std::span<const QaExample> train_qa,
                    const ToyWorldOptions& options);

// Planted graph, disjoint train/eval question sets, native preference pairs
// from the training questions and the untrained (uniform) toy LM.
struct ToyWorld {
  Graph graph;
  std::vector<QaExample> train_qa;
  std::vector<QaExample> eval_qa;
  std::vector<std::string> distractors;
  std::vector<PreferencePair> kg_pairs;
  std::vector<PreferencePair> cot_pairs;
  ToyLm initial;
};

ToyWorld make_toy_world(const ToyWorldOptions& options);

// The two schedules compared by the ablations.
std::vector<Phase> full_schedule();
std::vector<Phase> init_schedule();

// Co-trained and init-only PRM pairs plus the generator, with ReasonModels
// views for the engine. Not copyable: the views point into the members.
struct ToyModels {
  DualPrm full;
  DualPrm init_only;
  std::unique_ptr<ToyGenerator> generator;

  ReasonModels full_models() const;
  ReasonModels init_models() const;
};

std::unique_ptr<ToyModels> train_toy_models(const ToyWorld& world,
                                            const TrainConfig& config);

// Model bundle: one JSON header line ({"format", "meta", "reports"}) followed
// by the kg/cot policy and reference of the full and init-only PRMs in
// binary ToyLm form.
void save_toy_models(std::ostream& out, const ToyModels& models,
                     const nlohmann::json& meta);

struct LoadedToyModels {
  std::unique_ptr<ToyModels> models;
  nlohmann::json header;
};

// The generator is rebuilt over `graph`. Reports are kept in the header only.
LoadedToyModels load_toy_models(std::istream& in, const Graph& graph);

}  // namespace dprm
