#include "dprm/implicit_reward.h"

#include <algorithm>
#include <cmath>

#include "dprm/error.h"

namespace dprm {

namespace {

void check_strength(double strength) {
  if (!(strength > 0.0) || !std::isfinite(strength)) {
    throw Error(ErrorCode::kContract, "reward strength must be positive");
  }
}

}  // namespace

void RewardConfig::validate() const {
  check_strength(beta);
  check_strength(gamma);
}

StepRewards step_rewards(const ScoredSequence& seq, double strength) {
  check_strength(strength);
  const Eigen::VectorXd sums = step_sums(seq.log_ratios(), seq.step_boundaries());
  StepRewards out;
  out.q_values.reserve(static_cast<std::size_t>(sums.size()));
  out.step_rewards.reserve(static_cast<std::size_t>(sums.size()));
  double q = 0.0;
  for (Eigen::Index t = 0; t < sums.size(); ++t) {
    const double r = strength * sums[t];
    q += r;
    out.step_rewards.push_back(r);
    out.q_values.push_back(q);
  }
  out.total = q;
  return out;
}

double sequence_reward(const ScoredSequence& seq, double strength) {
  return step_rewards(seq, strength).total;
}

double cumulative_q(const ScoredSequence& seq, double strength, std::size_t step) {
  if (step >= seq.num_steps()) {
    throw Error(ErrorCode::kBounds, "step " + std::to_string(step) +
                                        " out of range for " +
                                        std::to_string(seq.num_steps()) + " steps");
  }
  return step_rewards(seq, strength).q_values[step];
}

double proposition_oracle(const ToyLm& policy, const ToyLm& reference,
                          std::string_view prompt, std::string_view prefix,
                          double strength) {
  check_strength(strength);
  if (policy.vocab() != reference.vocab() ||
      policy.max_len() != reference.max_len()) {
    throw Error(ErrorCode::kContract, "policy and reference differ in vocab/max_len");
  }
  const auto continuations = enumerate_completions(reference, prompt, prefix);
  const std::string head(prefix);

  // log E_ref exp(r/strength) = logsumexp_y [log ref(y|prefix) + log-ratio(y)]
  std::vector<double> terms;
  terms.reserve(continuations.size());
  for (const auto& c : continuations) {
    std::string full = head.empty()       ? c.text
                       : c.text.empty()   ? head
                                          : head + " " + c.text;
    const auto p = policy.score(prompt, full);
    const auto r = reference.score(prompt, full);
    double log_ratio = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) log_ratio += p[i].logprob - r[i].logprob;
    terms.push_back(std::log(c.probability) + log_ratio);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return strength * (m + std::log(acc));
}

ScoredSequence score_steps(const LanguageModel& policy,
                           const LanguageModel& reference,
                           std::string_view prompt,
                           std::span<const std::string> steps) {
  if (steps.empty()) throw Error(ErrorCode::kContract, "no steps to score");
  std::string completion;
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) completion += ' ';
    completion += steps[i];
    ends.push_back(completion.size());
  }
  auto p = policy.score(prompt, completion);
  auto r = reference.score(prompt, completion);
  auto boundaries = token_step_boundaries(completion, p, ends);
  return ScoredSequence(std::move(p), std::move(r), std::move(boundaries));
}

ProcessRewardModel::ProcessRewardModel(const LanguageModel& policy,
                                       const LanguageModel& reference,
                                       double strength)
    : policy_(&policy), reference_(&reference), strength_(strength) {
  check_strength(strength);
}

StepRewards ProcessRewardModel::score(std::string_view prompt,
                                      std::span<const std::string> steps) const {
  return step_rewards(score_steps(*policy_, *reference_, prompt, steps), strength_);
}

double ProcessRewardModel::last_step_reward(
    std::string_view prompt, std::span<const std::string> steps) const {
  return score(prompt, steps).step_rewards.back();
}

}  // namespace dprm
