#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dprm/lm_interface.h"

namespace dprm {

// Last `order` token ids; kBos pads contexts shorter than the order.
using Context = std::vector<int>;

struct ContextHash {
  std::size_t operator()(const Context& c) const noexcept;
};

// Sparse logit table. A context with no row has all-zero logits.
using LogitTable = std::unordered_map<Context, Eigen::VectorXd, ContextHash>;

// Tabular autoregressive LM over a small vocabulary: a k-th order Markov model
// with one logit row per visited context. Completions terminate with the end
// marker "$", which is forced at position max_len - 1.
//
// Tokenization: whitespace chunks, each segmented greedily into the longest
// vocabulary tokens ("A$" -> A, $). Prompt chunks that cannot be segmented are
// skipped; completion chunks that cannot be segmented are an error.
class ToyLm final : public LanguageModel {
 public:
  static constexpr int kBos = -1;
  static constexpr std::string_view kEnd = "$";

  ToyLm(std::vector<std::string> vocab, std::size_t order, std::size_t max_len);

  const std::vector<std::string>& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t order() const { return order_; }
  std::size_t max_len() const { return max_len_; }
  int end_id() const { return end_id_; }

  std::optional<int> token_id(std::string_view token) const;
  std::vector<int> tokenize(std::string_view text) const;
  std::vector<int> tokenize_prompt(std::string_view prompt) const;
  // Joins with "" for single-character vocabularies, " " otherwise.
  std::string detokenize(const std::vector<int>& ids) const;

  Context initial_context(std::string_view prompt) const;
  void advance(Context& context, int token) const;

  Eigen::VectorXd logits(const Context& context) const;
  // Log-softmax of the row at `position` (0-based within the completion),
  // with the end marker forced at max_len - 1.
  Eigen::VectorXd log_probs(const Context& context, std::size_t position) const;
  bool is_forced(std::size_t position) const { return position + 1 >= max_len_; }

  const LogitTable& table() const { return table_; }
  LogitTable& mutable_table() { return table_; }
  Eigen::VectorXd& row(const Context& context);

  std::vector<TokenScore> score(std::string_view prompt,
                                std::string_view completion) const override;
  std::vector<std::string> sample(std::string_view prompt,
                                  const SampleOptions& options) const override;

  nlohmann::json to_json() const;
  static ToyLm from_json(const nlohmann::json& j);

  // Exact binary form: a JSON header line (vocab, order, max_len, rows)
  // followed by each row, sorted by context, as little-endian int32 context
  // ids and float64 logits.
  void write_binary(std::ostream& out) const;
  static ToyLm read_binary(std::istream& in);

  bool operator==(const ToyLm& other) const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::size_t order_;
  std::size_t max_len_;
  int end_id_;
  std::size_t longest_token_ = 1;
  bool char_level_ = true;
  LogitTable table_;
};

struct Completion {
  std::string text;
  double probability = 0.0;
};

// Every terminating continuation of `prefix` (itself a completion prefix of
// `prompt`) with its exact probability. Throws Error(kEnumerationTooLarge)
// when more than `max_leaves` leaves would be visited.
std::vector<Completion> enumerate_completions(const ToyLm& model,
                                              std::string_view prompt,
                                              std::string_view prefix,
                                              std::size_t max_leaves = 1000000);

}  // namespace dprm
