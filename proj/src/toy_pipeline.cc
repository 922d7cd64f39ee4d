#include "dprm/toy_pipeline.h"

#include <algorithm>
#include <unordered_set>

#include "dprm/error.h"
#include "dprm/text.h"

namespace dprm {

QaSplit planted_split(const Graph& graph, const ToyWorldOptions& options) {
  PlantedQaOptions qopt;
  qopt.count = options.train_questions + options.eval_questions;
  qopt.seed = mix_seed(options.seed, 1);
  auto all = planted_qa(graph, qopt);
  const auto cut = static_cast<std::ptrdiff_t>(std::min(options.train_questions, all.size()));
  QaSplit out;
  out.train.assign(all.begin(), all.begin() + cut);
  out.eval.assign(all.begin() + cut, all.end());
  for (std::size_t i = 0; i < out.train.size(); ++i) out.train[i].id = "train" + std::to_string(i);
  for (std::size_t i = 0; i < out.eval.size(); ++i) out.eval[i].id = "eval" + std::to_string(i);
  return out;
}

PairSet build_pairs(const Graph& graph, std::span<const QaExample> train_qa,
                    const ToyWorldOptions& options) {
  MiningOptions mining;
  std::vector<KgPath> used;
  for (const auto& qa : train_qa) {
    for (auto& p : mine_true_paths(graph, qa, mining)) used.push_back(std::move(p));
  }
  PairSet out;
  out.distractors = distractor_pool_from_graph(graph, used, options.distractor_pool);
  FoundryOptions fopt;
  fopt.seed = mix_seed(options.seed, 2);
  fopt.rejections_per_path = options.rejections_per_path;
  out.kg = generate_kg_pairs(graph, train_qa, fopt);
  out.cot = generate_cot_pairs(graph, train_qa, out.distractors, fopt);
  return out;
}

ToyWorld make_toy_world(const ToyWorldOptions& options) {
  PlantedGraphOptions gopt = options.graph;
  Graph graph = planted_graph(gopt);

  auto split = planted_split(graph, options);
  auto& train = split.train;
  auto& eval = split.eval;

  auto pairs = build_pairs(graph, train, options);
  ToyLm initial(toy_vocabulary(graph), options.order, options.max_len);
  return ToyWorld{std::move(graph), std::move(train), std::move(eval),
                  std::move(pairs.distractors), std::move(pairs.kg), std::move(pairs.cot),
                  std::move(initial)};
}

std::vector<Phase> full_schedule() {
  return {Phase::kInitKg, Phase::kInitCot, Phase::kCoKgFromCot, Phase::kCoCotFromKg};
}

std::vector<Phase> init_schedule() { return {Phase::kInitKg, Phase::kInitCot}; }

ReasonModels ToyModels::full_models() const {
  return {generator.get(), &full.kg.policy, &full.kg.reference, &full.cot.policy,
          &full.cot.reference};
}

ReasonModels ToyModels::init_models() const {
  return {generator.get(), &init_only.kg.policy, &init_only.kg.reference,
          &init_only.cot.policy, &init_only.cot.reference};
}

std::unique_ptr<ToyModels> train_toy_models(const ToyWorld& world,
                                            const TrainConfig& config) {
  TrainConfig full_cfg = config;
  full_cfg.schedule = full_schedule();
  TrainConfig init_cfg = config;
  init_cfg.schedule = init_schedule();
  auto full = train_dual(world.initial, world.kg_pairs, world.cot_pairs, full_cfg);
  auto init = train_dual(world.initial, world.kg_pairs, world.cot_pairs, init_cfg);
  return std::make_unique<ToyModels>(ToyModels{std::move(full), std::move(init),
                                               std::make_unique<ToyGenerator>(world.graph)});
}

namespace {

constexpr const char* kModelFormat = "dprm-toy-models/1";

std::vector<const ToyLm*> bundle_order(const ToyModels& m) {
  return {&m.full.kg.policy,      &m.full.kg.reference,
          &m.full.cot.policy,     &m.full.cot.reference,
          &m.init_only.kg.policy, &m.init_only.kg.reference,
          &m.init_only.cot.policy, &m.init_only.cot.reference};
}

}  // namespace

void save_toy_models(std::ostream& out, const ToyModels& models,
                     const nlohmann::json& meta) {
  const nlohmann::json header = {
      {"format", kModelFormat},
      {"meta", meta},
      {"reports",
       {{"full", {{"kg", models.full.kg.report.to_json()},
                  {"cot", models.full.cot.report.to_json()}}},
        {"init_only", {{"kg", models.init_only.kg.report.to_json()},
                       {"cot", models.init_only.cot.report.to_json()}}}}}};
  out << header.dump() << '\n';
  for (const ToyLm* lm : bundle_order(models)) lm->write_binary(out);
}

LoadedToyModels load_toy_models(std::istream& in, const Graph& graph) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty model file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad model file header: ") + e.what());
  }
  if (header.value("format", "") != kModelFormat) {
    throw Error(ErrorCode::kParse, "not a toy model bundle");
  }
  std::vector<ToyLm> lms;
  for (int i = 0; i < 8; ++i) lms.push_back(ToyLm::read_binary(in));
  auto result = [&](int i) {
    return TrainResult{std::move(lms[static_cast<std::size_t>(i)]),
                       std::move(lms[static_cast<std::size_t>(i + 1)]), TrainReport{}};
  };
  DualPrm full{result(0), result(2)};
  DualPrm init{result(4), result(6)};
  auto models = std::make_unique<ToyModels>(ToyModels{
      std::move(full), std::move(init), std::make_unique<ToyGenerator>(graph)});
  return {std::move(models), std::move(header)};
}

}  // namespace dprm
