#include "dprm/proposition_check.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dprm/implicit_reward.h"
#include "dprm/random.h"

namespace dprm {

namespace {

void fill_rows(ToyLm& lm, Context& context, std::size_t depth, double scale,
               std::mt19937_64& rng) {
  if (depth == context.size()) {
    Eigen::VectorXd& row = lm.row(context);
    for (Eigen::Index i = 0; i < row.size(); ++i) {
      row[i] = scale * (2.0 * unit_uniform(rng) - 1.0);
    }
    return;
  }
  for (int token = ToyLm::kBos; token < static_cast<int>(lm.vocab_size()); ++token) {
    context[depth] = token;
    fill_rows(lm, context, depth + 1, scale, rng);
  }
}

}  // namespace

ToyLm random_toy_lm(std::size_t vocab_size, std::size_t order, std::size_t max_len,
                    double scale, std::mt19937_64& rng) {
  std::vector<std::string> vocab;
  for (std::size_t i = 0; i + 1 < vocab_size; ++i) {
    vocab.push_back(std::string(1, static_cast<char>('a' + i)));
  }
  vocab.emplace_back(ToyLm::kEnd);
  ToyLm lm(std::move(vocab), order, max_len);
  Context context(order, ToyLm::kBos);
  fill_rows(lm, context, 0, scale, rng);
  return lm;
}

PropositionInstance random_proposition_instance(std::mt19937_64& rng) {
  const std::size_t vocab_size = 2 + uniform_index(rng, 4);  // 2..5
  const std::size_t max_len = 2 + uniform_index(rng, 4);     // 2..5
  const std::size_t order = 1 + uniform_index(rng, 2);
  ToyLm policy = random_toy_lm(vocab_size, order, max_len, 2.0, rng);
  ToyLm reference = random_toy_lm(vocab_size, order, max_len, 2.0, rng);
  const std::size_t length = 1 + uniform_index(rng, max_len - 1);
  std::vector<std::string> prefix;
  for (std::size_t i = 0; i < length; ++i) {
    prefix.push_back(policy.vocab()[uniform_index(rng, vocab_size - 1)]);
  }
  return {std::move(policy), std::move(reference), std::move(prefix)};
}

nlohmann::json PropositionCheck::to_json() const {
  return {{"instances", instances},
          {"comparisons", comparisons},
          {"max_relative_error", max_relative_error},
          {"seconds", seconds},
          {"strength", strength},
          {"seed", seed}};
}

PropositionCheck check_proposition(std::size_t instances, std::uint64_t seed,
                                   double strength) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  PropositionCheck out;
  out.instances = instances;
  out.strength = strength;
  out.seed = seed;
  for (std::size_t k = 0; k < instances; ++k) {
    const auto inst = random_proposition_instance(rng);
    const auto seq = score_steps(inst.policy, inst.reference, "", inst.prefix);
    const auto rewards = step_rewards(seq, strength);
    std::string prefix;
    for (std::size_t t = 0; t < inst.prefix.size(); ++t) {
      prefix += (t == 0 ? "" : " ") + inst.prefix[t];
      const double oracle =
          proposition_oracle(inst.policy, inst.reference, "", prefix, strength);
      const double err = std::abs(rewards.q_values[t] - oracle) /
                         std::max(std::abs(oracle), 1e-12);
      out.max_relative_error = std::max(out.max_relative_error, err);
      ++out.comparisons;
    }
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace dprm
