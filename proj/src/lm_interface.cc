#include "dprm/lm_interface.h"

#include <algorithm>

#include "dprm/error.h"

namespace dprm {

ScoredSequence::ScoredSequence(std::vector<TokenScore> policy,
                               std::vector<TokenScore> reference,
                               std::vector<std::size_t> step_boundaries)
    : boundaries_(std::move(step_boundaries)) {
  if (policy.size() != reference.size()) {
    throw Error(ErrorCode::kAlignment,
                "policy scored " + std::to_string(policy.size()) +
                    " tokens, reference " + std::to_string(reference.size()));
  }
  const auto n = static_cast<Eigen::Index>(policy.size());
  policy_.resize(n);
  reference_.resize(n);
  tokens_.reserve(policy.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = policy[static_cast<std::size_t>(i)];
    const auto& r = reference[static_cast<std::size_t>(i)];
    if (p.token != r.token) {
      throw Error(ErrorCode::kAlignment, "token " + std::to_string(i) +
                                             " differs: '" + p.token +
                                             "' vs '" + r.token + "'");
    }
    tokens_.push_back(p.token);
    policy_[i] = p.logprob;
    reference_[i] = r.logprob;
  }
  if (boundaries_.empty()) {
    throw Error(ErrorCode::kContract, "sequence has no step boundaries");
  }
  for (std::size_t i = 0; i < boundaries_.size(); ++i) {
    if (i > 0 && boundaries_[i] <= boundaries_[i - 1]) {
      throw Error(ErrorCode::kContract, "step boundaries not strictly increasing");
    }
  }
  if (boundaries_.back() != tokens_.size()) {
    throw Error(ErrorCode::kContract, "last step boundary must equal token count");
  }
}

std::string truncate_at_stop(std::string_view text,
                             std::span<const std::string> stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    auto pos = text.find(s);
    if (pos != std::string_view::npos) cut = std::min(cut, pos);
  }
  return std::string(text.substr(0, cut));
}

std::vector<std::size_t> token_step_boundaries(
    std::string_view completion, std::span<const TokenScore> tokens,
    std::span<const std::size_t> step_char_ends) {
  std::vector<std::size_t> starts;
  starts.reserve(tokens.size());
  std::size_t cursor = 0;
  for (const auto& tok : tokens) {
    auto pos = completion.find(tok.token, cursor);
    if (tok.token.empty() || pos == std::string_view::npos) {
      throw Error(ErrorCode::kAlignment,
                  "cannot locate token '" + tok.token + "' in completion");
    }
    starts.push_back(pos);
    cursor = pos + tok.token.size();
  }
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < step_char_ends.size(); ++s) {
    std::size_t count = 0;
    if (s + 1 == step_char_ends.size()) {
      count = tokens.size();
    } else {
      count = static_cast<std::size_t>(
          std::lower_bound(starts.begin(), starts.end(), step_char_ends[s]) -
          starts.begin());
    }
    if (!out.empty() && count <= out.back()) {
      throw Error(ErrorCode::kAlignment,
                  "step " + std::to_string(s) + " maps to no tokens");
    }
    out.push_back(count);
  }
  return out;
}

}  // namespace dprm
