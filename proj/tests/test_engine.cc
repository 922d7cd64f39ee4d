#include <doctest.h>

#include <atomic>
#include <random>
#include <string>

#include "dprm/error.h"
#include "dprm/prompts.h"
#include "dprm/random.h"
#include "dprm/reasoning_engine.h"
#include "dprm/retrieval.h"
#include "dprm/synthetic.h"
#include "dprm/toy_generator.h"
#include "dprm/toy_lm.h"
#include "oracles.h"

namespace {

using dprm::Graph;
using dprm::ReasonConfig;
using dprm::ReasoningEngine;
using dprm::Triple;

// Replies with a fixed CoT step to step prompts and a fixed answer to the
// final-answer prompt.
class ScriptedLm final : public dprm::LanguageModel {
 public:
  ScriptedLm(std::string step, std::string answer)
      : step_(std::move(step)), answer_(std::move(answer)) {}

  std::vector<dprm::TokenScore> score(std::string_view, std::string_view) const override {
    throw dprm::Error(dprm::ErrorCode::kUnsupported, "scripted");
  }
  std::vector<std::string> sample(std::string_view prompt,
                                  const dprm::SampleOptions& o) const override {
    calls++;
    const bool final = prompt.find(dprm::prompts::kEvidence) != std::string_view::npos;
    return std::vector<std::string>(o.n, final ? answer_ : step_);
  }

  mutable std::atomic<int> calls{0};

 private:
  std::string step_;
  std::string answer_;
};

class FailingLm final : public dprm::LanguageModel {
 public:
  std::vector<dprm::TokenScore> score(std::string_view, std::string_view) const override {
    throw dprm::Error(dprm::ErrorCode::kUnsupported, "failing");
  }
  std::vector<std::string> sample(std::string_view, const dprm::SampleOptions&) const override {
    calls++;
    throw dprm::TransportError(0, "unreachable");
  }
  mutable std::atomic<int> calls{0};
};

struct Rig {
  Graph graph;
  dprm::ToyLm prm;
  dprm::HashingEmbedder embedder{256};

  explicit Rig(Graph g) : graph(std::move(g)), prm(dprm::toy_vocabulary(graph), 2, 64) {}

  ReasonConfig config(const dprm::LanguageModel& generator, std::size_t n = 1) const {
    ReasonConfig c;
    c.num_candidates = n;
    c.models = {&generator, &prm, &prm, &prm, &prm};
    return c;
  }
};

}  // namespace

TEST_CASE("best_of_n examples") {
  CHECK(dprm::best_of_n(1, [](std::size_t) { return -3.0; }).winner == 0);
  const std::vector<double> r{0.1, 0.1, 0.05};
  CHECK(dprm::best_of_n(3, [&](std::size_t i) { return r[i]; }).winner == 0);
  const auto skip = dprm::best_of_n(3, [&](std::size_t i) {
    if (i == 0) throw dprm::Error(dprm::ErrorCode::kTokenization, "bad");
    return r[i];
  });
  CHECK(skip.winner == 1);
  CHECK_FALSE(skip.rewards[0].has_value());
  try {
    dprm::best_of_n(2, [](std::size_t) -> double {
      throw dprm::Error(dprm::ErrorCode::kTokenization, "bad");
    });
    FAIL("expected no viable candidate");
  } catch (const dprm::Error& e) {
    CHECK(e.code() == dprm::ErrorCode::kNoViableCandidate);
  }
}

TEST_CASE("a one-triple graph with N=1 selects that triple") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}}));
  const ScriptedLm gen("A r B.", "B");
  const ReasoningEngine engine(rig.graph, rig.embedder, rig.config(gen));
  const auto state = engine.initialize("What does A r?");
  REQUIRE(state.kg_path.size() == 1);
  CHECK(state.kg_path.steps[0] == Triple{"A", "r", "B"});
  CHECK(state.cot.steps.size() == 1);
}

TEST_CASE("a candidate whose tail is the source entity is inverted") {
  const Rig rig(Graph::from_triples({{"X", "r", "A"}}));
  const ScriptedLm gen("A ~r X.", "X");
  const ReasoningEngine engine(rig.graph, rig.embedder, rig.config(gen));
  const auto state = engine.initialize("Who r A?");
  REQUIRE(state.kg_path.size() == 1);
  CHECK(state.kg_path.steps[0] == Triple{"A", "r", "X", true});
}

TEST_CASE("the stop keyword finishes after one pass") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}}));
  const ScriptedLm gen("A r B. The answer is B.", "B");
  const ReasoningEngine engine(rig.graph, rig.embedder, rig.config(gen));
  const auto result = engine.run("What does A r?");
  CHECK(result.state.finished);
  CHECK(result.state.trace.size() == 1);
  CHECK(result.answer == "B");
  CHECK(result.answer_prompt.find(dprm::prompts::kGraph) != std::string::npos);
}

TEST_CASE("the iteration limit finishes the loop") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}, {"B", "s", "C"}, {"C", "t", "D"}}));
  const ScriptedLm gen("A r B.", "B");
  for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    ReasonConfig c = rig.config(gen, 3);
    c.max_iterations = n;
    const ReasoningEngine engine(rig.graph, rig.embedder, c);
    const auto result = engine.run("What does A r?");
    CHECK(result.state.trace.size() == n);
    CHECK(result.state.kg_path.size() == n);
    CHECK(result.state.cot.steps.size() == n);
    CHECK(result.state.iteration == n);
  }
}

TEST_CASE("kg_step follows the entities of the previous CoT step") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}, {"B", "s", "C"}, {"Q", "s", "Z"}}));
  const ScriptedLm gen("A r B.", "C");
  ReasonConfig c = rig.config(gen, 4);
  c.max_iterations = 2;
  const ReasoningEngine engine(rig.graph, rig.embedder, c);
  auto state = engine.initialize("What does A r then s?");
  REQUIRE(state.kg_path.steps[0] == Triple{"A", "r", "B"});
  engine.kg_step(state);
  CHECK(state.trace.back().query == "What does A r then s? Step 1: A r B.");
  const auto& added = state.kg_path.steps.back();
  const auto sources = dprm::step_entities(rig.graph, state.cot.steps.back());
  CHECK(std::find(sources.begin(), sources.end(), added.head) != sources.end());
  CHECK_THROWS_AS(engine.kg_step(state), dprm::Error);
}

TEST_CASE("generation failures surface as engine errors with the partial state") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}}));
  const FailingLm gen;
  ReasonConfig c = rig.config(gen);
  c.retries = 2;
  const ReasoningEngine engine(rig.graph, rig.embedder, c);
  try {
    engine.run("What does A r?");
    FAIL("expected an engine error");
  } catch (const dprm::EngineError& e) {
    CHECK(e.cause() == dprm::ErrorCode::kTransport);
    CHECK(e.partial().kg_path.size() == 1);
    CHECK(e.partial().trace.size() == 1);
  }
  CHECK(gen.calls == 3);
}

TEST_CASE("config validation") {
  const Rig rig(Graph::from_triples({{"A", "r", "B"}}));
  const ScriptedLm gen("x", "y");
  ReasonConfig c = rig.config(gen);
  c.num_candidates = 0;
  CHECK_THROWS_AS(ReasoningEngine(rig.graph, rig.embedder, c), dprm::Error);
  c = rig.config(gen);
  c.models.kg_policy = nullptr;
  CHECK_THROWS_AS(ReasoningEngine(rig.graph, rig.embedder, c), dprm::Error);
}

TEST_CASE("toy reasoning is deterministic and its trace replays") {
  const Graph g = dprm::planted_graph({});
  dprm::PlantedQaOptions qo;
  qo.count = 5;
  const auto qa = dprm::planted_qa(g, qo);
  const dprm::ToyGenerator gen(g);
  std::mt19937_64 rng(3);
  const dprm::ToyLm init(dprm::toy_vocabulary(g), 2, 64);
  // A perturbed policy so that rewards differ across candidates.
  dprm::ToyLm policy = init;
  for (int k = 0; k < 200; ++k) {
    const int a = static_cast<int>(dprm::uniform_index(rng, init.vocab_size()));
    const int b = static_cast<int>(dprm::uniform_index(rng, init.vocab_size()));
    policy.row({a, b})[static_cast<Eigen::Index>(dprm::uniform_index(rng, init.vocab_size()))] = 1.0;
  }
  const auto embedder = dprm::HashingEmbedder::fit(dprm::graph_renderings(g));
  ReasonConfig c;
  c.seed = 11;
  c.models = {&gen, &policy, &init, &policy, &init};
  const ReasoningEngine engine(g, embedder, c);
  ReasonConfig cp = c;
  cp.parallel_candidates = true;
  const ReasoningEngine parallel(g, embedder, cp);
  for (const auto& q : qa) {
    const auto a = engine.run(q.question);
    CHECK(a.to_json().dump() == engine.run(q.question).to_json().dump());
    CHECK(a.to_json().dump() == parallel.run(q.question).to_json().dump());
    CHECK(a.state.trace.size() <= c.max_iterations);
    CHECK(a.state.kg_path.size() == a.state.cot.steps.size());
    for (const auto& rec : a.state.trace) {
      for (const auto* bon : {&rec.kg, &rec.cot}) {
        CHECK(bon->candidates.size() <= c.num_candidates);
        std::vector<double> r;
        for (const auto& v : bon->rewards) r.push_back(v ? *v : -1e300);
        CHECK(oracle::argmax(r) == bon->selected);
      }
    }
  }
}

TEST_CASE("prompt helpers") {
  const dprm::KgPath p{{{"A", "r", "B"}, {"B", "s", "C", true}, {"A", "t", "D"}}};
  CHECK(dprm::prompts::soft_graph(p) == "A: r -> B, t -> D\nB: ~s -> C\n");
  const std::string prompt = dprm::prompts::final_answer("Q?", dprm::Cot{{"A r B."}}, p);
  CHECK(dprm::prompts::section_lines(prompt, dprm::prompts::kEvidence) ==
        std::vector<std::string>{"A r B.", "B ~s C.", "A t D."});
  CHECK(dprm::prompts::section_value(prompt, dprm::prompts::kQuestion) == "Q?");
  CHECK(dprm::extract_answer_clause("x. The answer is e012. y") == "e012");
  CHECK(dprm::extract_answer_clause("nothing") == "");
  const Graph g = Graph::from_triples({{"e001", "r01", "e012"}});
  CHECK(dprm::entities_in_text(g, "e012 and e001 and e01") ==
        std::vector<std::string>{"e012", "e001"});
  CHECK(dprm::relations_in_text(g, "via r01") == std::vector<std::string>{"r01"});
  CHECK(dprm::step_entities(g, "e001 r01 e012.") == std::vector<std::string>{"e001", "e012"});
}
