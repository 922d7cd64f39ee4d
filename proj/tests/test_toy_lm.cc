#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dprm/error.h"
#include "dprm/lm_interface.h"
#include "dprm/proposition_check.h"
#include "dprm/random.h"
#include "dprm/toy_lm.h"
#include "oracles.h"

namespace {

using dprm::ToyLm;

ToyLm uniform_abc(std::size_t max_len = 6) { return ToyLm({"A", "B", "$"}, 1, max_len); }

double total_logprob(const std::vector<dprm::TokenScore>& s) {
  double sum = 0.0;
  for (const auto& t : s) sum += t.logprob;
  return sum;
}

}  // namespace

TEST_CASE("uniform toy LM scores every token at ln(1/3)") {
  const ToyLm lm = uniform_abc();
  const auto s = lm.score("", "A B A $");
  REQUIRE(s.size() == 4);
  for (const auto& t : s) CHECK(t.logprob == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("score follows the chain rule on hand-set logits") {
  ToyLm lm = uniform_abc();
  lm.row({ToyLm::kBos}) = Eigen::Vector3d(2.0, -1.0, 0.5);
  const int a = *lm.token_id("A");
  lm.row({a}) = Eigen::Vector3d(0.0, 1.0, 3.0);
  const auto s = lm.score("", "A$");
  REQUIRE(s.size() == 2);
  CHECK(s[0].token == "A");
  CHECK(s[1].token == "$");
  const double z0 = std::exp(2.0) + std::exp(-1.0) + std::exp(0.5);
  const double z1 = 1.0 + std::exp(1.0) + std::exp(3.0);
  CHECK(s[0].logprob == doctest::Approx(2.0 - std::log(z0)).epsilon(1e-14));
  CHECK(s[1].logprob == doctest::Approx(3.0 - std::log(z1)).epsilon(1e-14));
}

TEST_CASE("score matches the softmax recomputation oracle on random models") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 20; ++k) {
    const ToyLm lm = dprm::random_toy_lm(4, 2, 6, 2.0, rng);
    std::vector<int> ids;
    const std::size_t len = 1 + dprm::uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i) ids.push_back(static_cast<int>(dprm::uniform_index(rng, 3)));
    ids.push_back(lm.end_id());
    const std::string prompt = "ab";
    const auto got = lm.score(prompt, lm.detokenize(ids));
    const auto want = oracle::token_logprobs(lm, prompt, ids);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].logprob == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the end marker is forced at max_len - 1") {
  const ToyLm lm = uniform_abc(3);
  const auto s = lm.score("", "A B $");
  CHECK(s[2].logprob == 0.0);
  CHECK_THROWS_AS(lm.score("", "A B A $"), dprm::Error);
}

TEST_CASE("prompt tokenization skips out-of-vocabulary chunks") {
  const ToyLm lm({"cat", "dog", "$"}, 2, 8);
  CHECK(lm.tokenize_prompt("the cat saw a dog") ==
        std::vector<int>{*lm.token_id("cat"), *lm.token_id("dog")});
  CHECK_THROWS_AS(lm.tokenize("cat bird"), dprm::Error);
  CHECK(lm.initial_context("zebra") == dprm::Context{ToyLm::kBos, ToyLm::kBos});
}

TEST_CASE("greedy sampling returns n copies of the argmax completion") {
  ToyLm lm = uniform_abc(5);
  lm.row({ToyLm::kBos})[1] = 1.0;
  const int b = *lm.token_id("B");
  lm.row({b})[2] = 2.0;
  dprm::SampleOptions o;
  o.n = 4;
  o.temperature = 0.0;
  const auto out = lm.sample("", o);
  REQUIRE(out.size() == 4);
  for (const auto& s : out) CHECK(s == "B$");
}

TEST_CASE("seeded sampling is deterministic and terminates") {
  std::mt19937_64 rng(4);
  const ToyLm lm = dprm::random_toy_lm(4, 2, 6, 1.0, rng);
  dprm::SampleOptions o;
  o.n = 8;
  o.seed = 99;
  const auto a = lm.sample("a", o);
  CHECK(a == lm.sample("a", o));
  for (const auto& s : a) {
    CHECK(s.size() <= lm.max_len());
    CHECK(s.back() == '$');
  }
}

TEST_CASE("uniform sampling frequencies are within 3 sigma of 1/3") {
  const ToyLm lm = uniform_abc(2);
  dprm::SampleOptions o;
  o.n = 30000;
  o.seed = 5;
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : lm.sample("", o)) {
    counts[s[0] == 'A' ? 0 : s[0] == 'B' ? 1 : 2]++;
  }
  const double n = 30000.0;
  const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - n / 3.0) < 3.0 * sigma);
}

TEST_CASE("sampling cuts at stop strings") {
  ToyLm lm({"A", "B", "$"}, 1, 6);
  lm.row({ToyLm::kBos})[0] = 50.0;
  const int a = *lm.token_id("A");
  lm.row({a})[1] = 50.0;
  dprm::SampleOptions o;
  o.temperature = 0.0;
  o.stop = {"B"};
  CHECK(lm.sample("", o).front() == "A");
}

TEST_CASE("enumerate_completions examples") {
  const ToyLm lm = uniform_abc();
  const auto done = dprm::enumerate_completions(lm, "", "A $");
  REQUIRE(done.size() == 1);
  CHECK(done[0].text.empty());
  CHECK(done[0].probability == 1.0);

  const ToyLm two({"A", "$"}, 1, 2);
  const auto c = dprm::enumerate_completions(two, "", "");
  REQUIRE(c.size() == 2);
  CHECK(c[0].text == "A$");
  CHECK(c[0].probability == doctest::Approx(0.5));
  CHECK(c[1].text == "$");
  CHECK(c[1].probability == doctest::Approx(0.5));

  const ToyLm wide({"A", "B", "C", "D", "$"}, 1, 12);
  try {
    dprm::enumerate_completions(wide, "", "", 1000);
    FAIL("expected the guard to trip");
  } catch (const dprm::Error& e) {
    CHECK(e.code() == dprm::ErrorCode::kEnumerationTooLarge);
  }
}

TEST_CASE("enumeration is normalized and consistent with score") {
  std::mt19937_64 rng(8);
  const ToyLm lm = dprm::random_toy_lm(4, 2, 5, 2.0, rng);
  for (int k = 0; k < 20; ++k) {
    std::string prefix;
    const std::size_t len = dprm::uniform_index(rng, 3);
    for (std::size_t i = 0; i < len; ++i) prefix.push_back(static_cast<char>('a' + dprm::uniform_index(rng, 3)));
    const auto all = dprm::enumerate_completions(lm, "c", prefix);
    double sum = 0.0;
    for (const auto& c : all) {
      sum += c.probability;
      const double joint = std::exp(total_logprob(lm.score("c", prefix + c.text)));
      const double prefix_p = prefix.empty() ? 1.0 : std::exp(total_logprob(lm.score("c", prefix)));
      CHECK(joint / prefix_p == doctest::Approx(c.probability).epsilon(1e-9));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(all.size() == oracle::enumerate(lm, "c", lm.tokenize(prefix)).size());
  }
}

TEST_CASE("JSON and binary forms round-trip exactly") {
  std::mt19937_64 rng(12);
  const ToyLm lm = dprm::random_toy_lm(4, 2, 6, 3.0, rng);
  CHECK(ToyLm::from_json(lm.to_json()) == lm);
  std::stringstream buf;
  lm.write_binary(buf);
  const ToyLm back = ToyLm::read_binary(buf);
  CHECK(back == lm);
  for (const auto& [ctx, row] : lm.table()) CHECK((back.table().at(ctx).array() == row.array()).all());
}

TEST_CASE("ScoredSequence contracts") {
  std::vector<dprm::TokenScore> p{{"a", -1.0}, {"b", -2.0}};
  std::vector<dprm::TokenScore> r{{"a", -1.5}, {"c", -2.0}};
  try {
    dprm::ScoredSequence(p, r, {2});
    FAIL("expected an alignment error");
  } catch (const dprm::Error& e) {
    CHECK(e.code() == dprm::ErrorCode::kAlignment);
  }
  r[1].token = "b";
  CHECK_THROWS_AS(dprm::ScoredSequence(p, r, {1}), dprm::Error);
  CHECK_THROWS_AS(dprm::ScoredSequence(p, r, {1, 1, 2}), dprm::Error);
  const dprm::ScoredSequence ok(p, r, {1, 2});
  CHECK(ok.log_ratios()[0] == doctest::Approx(0.5));
}

TEST_CASE("token_step_boundaries and truncate_at_stop") {
  const std::string text = "A r B ; B s C ;";
  std::vector<dprm::TokenScore> toks;
  for (const char* t : {"A", "r", "B", ";", "B", "s", "C", ";"}) toks.push_back({t, 0.0});
  const std::vector<std::size_t> ends{7, text.size()};
  CHECK(dprm::token_step_boundaries(text, toks, ends) == std::vector<std::size_t>{4, 8});
  const std::vector<std::string> stop{"answer", "\n"};
  CHECK(dprm::truncate_at_stop("x\ny answer", stop) == "x");
  CHECK(dprm::truncate_at_stop("plain", stop) == "plain");
}
