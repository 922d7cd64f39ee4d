#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dprm/error.h"
#include "dprm/eval_harness.h"
#include "dprm/prompts.h"
#include "dprm/retrieval.h"
#include "dprm/synthetic.h"
#include "dprm/toy_lm.h"

namespace {

// Answers every step prompt with a fixed step and every final prompt with the
// tail of the last evidence line.
class EchoLm final : public dprm::LanguageModel {
 public:
  explicit EchoLm(std::string step) : step_(std::move(step)) {}
  std::vector<dprm::TokenScore> score(std::string_view, std::string_view) const override {
    throw dprm::Error(dprm::ErrorCode::kUnsupported, "echo");
  }
  std::vector<std::string> sample(std::string_view prompt,
                                  const dprm::SampleOptions& o) const override {
    const std::string p(prompt);
    if (p.find(dprm::prompts::kEvidence) == std::string::npos) {
      return std::vector<std::string>(o.n, step_);
    }
    const auto lines = dprm::prompts::section_lines(p, dprm::prompts::kEvidence);
    std::string last = lines.empty() ? "" : lines.back();
    if (!last.empty() && last.back() == '.') last.pop_back();
    const auto space = last.rfind(' ');
    return std::vector<std::string>(o.n, last.substr(space == std::string::npos ? 0 : space + 1));
  }

 private:
  std::string step_;
};

struct Rig {
  dprm::Graph graph = dprm::Graph::from_triples(
      {{"A", "r", "B"}, {"B", "s", "C"}, {"D", "r", "E"}});
  dprm::ToyLm prm{dprm::toy_vocabulary(graph), 2, 64};
  dprm::HashingEmbedder embedder{256};
  EchoLm generator{"A r B."};

  dprm::EvalSetup setup(std::size_t threads = 1) const {
    const dprm::ReasonModels m{&generator, &prm, &prm, &prm, &prm};
    return {m, m, threads};
  }
};

std::vector<dprm::QaExample> dataset() {
  return {{"q1", "What does A r?", {"A"}, {"B"}},
          {"q2", "What does D r?", {"D"}, {"E"}},
          {"q3", "What does A r?", {"A"}, {"Z"}}};
}

}  // namespace

TEST_CASE("normalize_answer") {
  CHECK(dprm::normalize_answer("  The  Paris. ") == "the paris");
  CHECK(dprm::normalize_answer("\"e012\"") == "e012");
  CHECK(dprm::normalize_answer("...") == "");
}

TEST_CASE("hit_at_1 examples") {
  const std::vector<std::string> golds{"Paris"};
  CHECK(dprm::hit_at_1("The answer is paris.", golds));
  CHECK_FALSE(dprm::hit_at_1("London", golds));
  CHECK_FALSE(dprm::hit_at_1("", golds));
  const std::vector<std::string> empty_gold{"  "};
  CHECK_FALSE(dprm::hit_at_1("anything", empty_gold));
}

TEST_CASE("f1_score examples, symmetry and bounds") {
  using V = std::vector<std::string>;
  CHECK(dprm::f1_score(V{"a", "b"}, V{"a", "b"}) == 1.0);
  CHECK(dprm::f1_score(V{"a"}, V{"a", "b"}) == doctest::Approx(2.0 / 3.0));
  CHECK(dprm::f1_score(V{"a", "c"}, V{"a", "b"}) == doctest::Approx(0.5));
  CHECK(dprm::f1_score(V{"c"}, V{"a"}) == 0.0);
  CHECK(dprm::f1_score(V{}, V{"a"}) == 0.0);
  CHECK(dprm::f1_score(V{"A", "a."}, V{"a"}) == 1.0);
  const std::vector<V> sets{{"a"}, {"a", "b"}, {"b", "c", "d"}, {"x"}, {"a", "b", "c"}};
  for (const auto& x : sets) {
    for (const auto& y : sets) {
      const double f = dprm::f1_score(x, y);
      CHECK(f == dprm::f1_score(y, x));
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
}

TEST_CASE("split_answers and variants") {
  CHECK(dprm::split_answers("a; b;  ; c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(dprm::split_answers("") == std::vector<std::string>{});
  for (auto v : {dprm::Variant::kFull, dprm::Variant::kNoCotrain, dprm::Variant::kNoIteration,
                 dprm::Variant::kNoBoth}) {
    CHECK(dprm::parse_variant(dprm::to_string(v)) == v);
  }
  CHECK_THROWS_AS(dprm::parse_variant("best"), dprm::Error);
}

TEST_CASE("run_eval scores rows and aggregates as row means") {
  const Rig rig;
  const auto data = dataset();
  dprm::ReasonConfig c;
  c.num_candidates = 2;
  c.max_iterations = 1;
  for (std::size_t threads : {std::size_t{1}, std::size_t{3}}) {
    const auto report = dprm::run_eval(data, rig.graph, rig.embedder, c, rig.setup(threads),
                                       dprm::Variant::kFull);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].id == "q1");
    CHECK(report.rows[0].answer == "B");
    CHECK(report.rows[0].hit);
    CHECK(report.rows[1].answer == "E");
    CHECK(report.rows[1].hit);
    CHECK_FALSE(report.rows[2].hit);
    double hits = 0.0, f1 = 0.0;
    for (const auto& r : report.rows) {
      hits += r.hit;
      f1 += r.f1;
    }
    CHECK(report.hit_at_1 == doctest::Approx(hits / 3.0));
    CHECK(report.f1 == doctest::Approx(f1 / 3.0));
    CHECK(report.to_json()["variant"] == "full");
  }
}

TEST_CASE("no_iteration runs exactly one pass") {
  const Rig rig;
  const auto data = dataset();
  dprm::ReasonConfig c;
  c.max_iterations = 3;
  const auto report = dprm::run_eval(data, rig.graph, rig.embedder, c, rig.setup(),
                                     dprm::Variant::kNoIteration);
  for (const auto& r : report.rows) CHECK(r.iterations == 1);
  CHECK(report.config_echo["variant"] == "no_iteration");
}

TEST_CASE("questions without grounded entities count as misses") {
  const Rig rig;
  const std::vector<dprm::QaExample> data{{"bad", "Who is nobody?", {}, {"B"}}};
  const auto report = dprm::run_eval(data, rig.graph, rig.embedder, dprm::ReasonConfig{},
                                     rig.setup(), dprm::Variant::kFull);
  REQUIRE(report.rows.size() == 1);
  CHECK_FALSE(report.rows[0].error.empty());
  CHECK_FALSE(report.rows[0].hit);
  CHECK(report.f1 == 0.0);
  CHECK(report.to_json()["rows"][0].contains("error"));
}

TEST_CASE("write_traces writes one file per row") {
  const Rig rig;
  const auto data = dataset();
  const auto report = dprm::run_eval(data, rig.graph, rig.embedder, dprm::ReasonConfig{},
                                     rig.setup(), dprm::Variant::kFull);
  const auto dir = std::filesystem::temp_directory_path() / "dprm_traces_test";
  std::filesystem::remove_all(dir);
  dprm::write_traces(report, dir.string());
  for (const auto& r : report.rows) {
    std::ifstream in(dir / (r.id + ".json"));
    REQUIRE(in.good());
    const auto j = nlohmann::json::parse(in);
    CHECK(j.dump() == r.trace.dump());
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(dprm::run_eval({}, rig.graph, rig.embedder, dprm::ReasonConfig{},
                                 rig.setup(), dprm::Variant::kFull),
                  dprm::Error);
}
