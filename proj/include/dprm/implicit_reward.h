#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dprm/lm_interface.h"
#include "dprm/toy_lm.h"

namespace dprm {

// Strengths of the two log-likelihood-ratio rewards.
struct RewardConfig {
  double beta = 0.05;   // CoT-PRM
  double gamma = 0.05;  // KG-PRM

  void validate() const;
};

struct StepRewards {
  std::vector<double> q_values;      // q^t, one per step
  std::vector<double> step_rewards;  // r^t = q^t - q^{t-1}, q^{-1} = 0
  double total = 0.0;                // r(y)
};

// Sum of `log_ratios` over each step's token range. Step t covers tokens
// [boundaries[t-1], boundaries[t]).
template <typename Derived>
Eigen::VectorXd step_sums(const Eigen::MatrixBase<Derived>& log_ratios,
                          std::span<const std::size_t> boundaries) {
  Eigen::VectorXd sums(static_cast<Eigen::Index>(boundaries.size()));
  std::size_t begin = 0;
  for (std::size_t t = 0; t < boundaries.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = begin; i < boundaries[t]; ++i) {
      s += log_ratios[static_cast<Eigen::Index>(i)];
    }
    sums[static_cast<Eigen::Index>(t)] = s;
    begin = boundaries[t];
  }
  return sums;
}

// strength * sum of per-token log ratios, accumulated step by step so that it
// is bit-identical to the sum of step_rewards().
double sequence_reward(const ScoredSequence& seq, double strength);

// q^t: strength-weighted log ratio of every token up to the end of step t.
double cumulative_q(const ScoredSequence& seq, double strength, std::size_t step);

StepRewards step_rewards(const ScoredSequence& seq, double strength);

// Right-hand side of the exponential-average identity, by exhaustive
// enumeration under the reference model:
//   strength * log E_{y ~ ref(. | prefix)} exp(r(y) / strength)
// where r(y) = strength * log(policy(y) / ref(y)) over the whole sequence.
double proposition_oracle(const ToyLm& policy, const ToyLm& reference,
                          std::string_view prompt, std::string_view prefix,
                          double strength);

// Scores the concatenation of `steps` (joined by single spaces) under both
// models and maps each step onto its token range.
ScoredSequence score_steps(const LanguageModel& policy,
                           const LanguageModel& reference,
                           std::string_view prompt,
                           std::span<const std::string> steps);

// A policy/reference pair used as an implicit process reward model.
class ProcessRewardModel {
 public:
  ProcessRewardModel(const LanguageModel& policy, const LanguageModel& reference,
                     double strength);

  StepRewards score(std::string_view prompt,
                    std::span<const std::string> steps) const;
  // r^t of the final step.
  double last_step_reward(std::string_view prompt,
                          std::span<const std::string> steps) const;

  double strength() const { return strength_; }
  const LanguageModel& policy() const { return *policy_; }
  const LanguageModel& reference() const { return *reference_; }

 private:
  const LanguageModel* policy_;
  const LanguageModel* reference_;
  double strength_;
};

}  // namespace dprm
