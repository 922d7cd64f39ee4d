#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "dprm/error.h"
#include "dprm/proposition_check.h"
#include "dprm/synthetic.h"
#include "dprm/toy_pipeline.h"

namespace {

dprm::ToyWorldOptions small_world() {
  dprm::ToyWorldOptions o;
  o.graph.num_entities = 48;
  o.train_questions = 30;
  o.eval_questions = 8;
  o.distractor_pool = 40;
  return o;
}

}  // namespace

TEST_CASE("planted graphs are typed and functional per relation") {
  dprm::PlantedGraphOptions o;
  o.num_entities = 40;
  o.num_relations = 8;
  o.num_types = 4;
  const auto g = dprm::planted_graph(o);
  CHECK(g.size() == 40 * 2);
  std::map<std::pair<std::string, std::string>, int> tails;
  for (const auto& t : g.triples()) {
    ++tails[{t.head, t.relation}];
    const int head_type = std::stoi(t.head.substr(1)) % 4;
    const int rel_type = std::stoi(t.relation.substr(1)) % 4;
    const int tail_type = std::stoi(t.tail.substr(1)) % 4;
    CHECK(rel_type == head_type);
    CHECK(tail_type == (head_type + 1) % 4);
  }
  for (const auto& [key, n] : tails) CHECK(n == 1);
  CHECK(dprm::planted_graph(o).triples() == g.triples());
}

TEST_CASE("planted questions have a unique shortest path to their answer") {
  const auto g = dprm::planted_graph({});
  dprm::PlantedQaOptions o;
  o.count = 40;
  const auto qa = dprm::planted_qa(g, o);
  CHECK(qa.size() == 40);
  std::set<std::string> questions;
  for (const auto& q : qa) {
    CHECK(questions.insert(q.question).second);
    REQUIRE(q.question_entities.size() == 1);
    REQUIRE(q.answers.size() == 1);
    const auto paths = dprm::mine_true_paths(g, q);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].size() >= o.min_hops);
    CHECK(paths[0].size() <= o.max_hops);
    CHECK(paths[0].steps.front().head == q.question_entities[0]);
    CHECK(paths[0].terminal() == q.answers[0]);
    for (const auto& t : paths[0].steps) {
      CHECK(q.question.find(t.relation) != std::string::npos);
    }
  }
  o.min_hops = 0;
  CHECK_THROWS_AS(dprm::planted_qa(g, o), dprm::Error);
}

TEST_CASE("toy vocabulary covers planted questions and serialized paths") {
  const auto g = dprm::planted_graph({});
  const auto vocab = dprm::toy_vocabulary(g);
  const std::set<std::string> v(vocab.begin(), vocab.end());
  CHECK(v.size() == vocab.size());
  for (const char* w : {"$", ";", "?", ".", "Step", "The", "answer", "is", "0", "9"}) {
    CHECK(v.count(w) == 1);
  }
  for (const auto& e : g.entities()) CHECK(v.count(e) == 1);
  for (const auto& r : g.relations()) {
    CHECK(v.count(r) == 1);
    CHECK(v.count("~" + r) == 1);
  }
}

TEST_CASE("planted splits are disjoint and pairs are valid") {
  const auto o = small_world();
  const auto world = dprm::make_toy_world(o);
  CHECK(world.train_qa.size() == o.train_questions);
  CHECK(world.eval_qa.size() == o.eval_questions);
  std::set<std::string> train;
  for (const auto& q : world.train_qa) train.insert(q.question);
  for (const auto& q : world.eval_qa) CHECK(train.count(q.question) == 0);
  CHECK(world.train_qa.front().id == "train0");
  CHECK(world.eval_qa.front().id == "eval0");
  CHECK_FALSE(world.kg_pairs.empty());
  CHECK_FALSE(world.cot_pairs.empty());
  for (const auto& p : world.kg_pairs) CHECK(p.modality == dprm::Modality::kKg);
  for (const auto& p : world.cot_pairs) CHECK(p.modality == dprm::Modality::kCot);
  CHECK(world.initial.vocab_size() == dprm::toy_vocabulary(world.graph).size());
}

TEST_CASE("model bundles round-trip") {
  const auto world = dprm::make_toy_world(small_world());
  dprm::TrainConfig c;
  c.epochs = 1;
  const auto models = dprm::train_toy_models(world, c);
  std::stringstream buf;
  dprm::save_toy_models(buf, *models, {{"note", "test"}});
  const auto loaded = dprm::load_toy_models(buf, world.graph);
  CHECK(loaded.header["meta"]["note"] == "test");
  CHECK(loaded.models->full.kg.policy == models->full.kg.policy);
  CHECK(loaded.models->full.kg.reference == models->full.kg.reference);
  CHECK(loaded.models->full.cot.policy == models->full.cot.policy);
  CHECK(loaded.models->init_only.kg.policy == models->init_only.kg.policy);
  CHECK(loaded.models->init_only.cot.policy == models->init_only.cot.policy);
  const auto views = loaded.models->full_models();
  CHECK(views.kg_policy == &loaded.models->full.kg.policy);
  CHECK(views.generator == loaded.models->generator.get());

  std::stringstream junk("not a bundle\n");
  CHECK_THROWS_AS(dprm::load_toy_models(junk, world.graph), dprm::Error);
}

TEST_CASE("schedules differ only by the co-training phases") {
  const auto full = dprm::full_schedule();
  const auto init = dprm::init_schedule();
  CHECK(full.size() > init.size());
  for (auto p : init) CHECK(std::find(full.begin(), full.end(), p) != full.end());
}

TEST_CASE("random toy LMs and the proposition check") {
  std::mt19937_64 rng(1);
  const auto lm = dprm::random_toy_lm(4, 2, 6, 0.5, rng);
  CHECK(lm.vocab_size() == 4);
  CHECK(lm.table().size() >= 4 * 4);
  for (const auto& [ctx, row] : lm.table()) CHECK(row.cwiseAbs().maxCoeff() <= 0.5);
  const auto check = dprm::check_proposition(20, 3);
  CHECK(check.instances == 20);
  CHECK(check.comparisons >= 20);
  CHECK(check.max_relative_error < 1e-9);
  CHECK(check.to_json()["seed"] == 3);
}
