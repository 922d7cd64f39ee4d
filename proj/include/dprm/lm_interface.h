#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace dprm {

struct TokenScore {
  std::string token;
  double logprob = 0.0;  // natural log
};

struct SampleOptions {
  std::size_t n = 1;
  std::vector<std::string> stop;
  double temperature = 0.8;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 256;
};

// Uniform handle over an autoregressive LM. Implementations must be safe to
// call concurrently from several threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  // One entry per completion token: log p(token | prompt, preceding tokens).
  virtual std::vector<TokenScore> score(std::string_view prompt,
                                        std::string_view completion) const = 0;

  // `options.n` completions, each cut at the first stop string.
  virtual std::vector<std::string> sample(std::string_view prompt,
                                          const SampleOptions& options) const = 0;
};

// Embedding backend (builtin hashing or the gateway's /embed).
class Embedder {
 public:
  virtual ~Embedder() = default;
  // Rows are L2-normalized.
  virtual Eigen::MatrixXd embed(std::span<const std::string> texts) const = 0;
};

// Policy and reference token scores for one completion, plus the token
// indices that close each reasoning step.
class ScoredSequence {
 public:
  // Throws Error(kAlignment) when the two token lists differ, and
  // Error(kContract) when boundaries are not strictly increasing or do not
  // end at the token count.
  ScoredSequence(std::vector<TokenScore> policy, std::vector<TokenScore> reference,
                 std::vector<std::size_t> step_boundaries);

  std::size_t num_tokens() const { return tokens_.size(); }
  std::size_t num_steps() const { return boundaries_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Eigen::VectorXd& policy_logprobs() const { return policy_; }
  const Eigen::VectorXd& ref_logprobs() const { return reference_; }
  const std::vector<std::size_t>& step_boundaries() const { return boundaries_; }

  // policy - reference, per token.
  Eigen::VectorXd log_ratios() const { return policy_ - reference_; }

 private:
  std::vector<std::string> tokens_;
  Eigen::VectorXd policy_;
  Eigen::VectorXd reference_;
  std::vector<std::size_t> boundaries_;
};

// Cuts `text` at the earliest occurrence of any stop string.
std::string truncate_at_stop(std::string_view text,
                             std::span<const std::string> stop);

// Maps character offsets of step ends in `completion` onto token boundaries.
// Tokens are located left to right in the completion text; a token that cannot
// be found raises Error(kAlignment). The last boundary is always the token
// count.
std::vector<std::size_t> token_step_boundaries(
    std::string_view completion, std::span<const TokenScore> tokens,
    std::span<const std::size_t> step_char_ends);

}  // namespace dprm
