#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dprm/text.h"

namespace oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> start_context(const dprm::ToyLm& lm, const std::string& prompt) {
  std::vector<int> ids = lm.tokenize_prompt(prompt);
  std::vector<int> ctx(lm.order(), dprm::ToyLm::kBos);
  const std::size_t take = std::min(ids.size(), lm.order());
  for (std::size_t i = 0; i < take; ++i) {
    ctx[lm.order() - take + i] = ids[ids.size() - take + i];
  }
  return ctx;
}

std::vector<int> shift(std::vector<int> ctx, int token) {
  ctx.erase(ctx.begin());
  ctx.push_back(token);
  return ctx;
}

// Log-probability row at `position` with the end marker forced on the last
// admissible position.
std::vector<double> row_at(const dprm::ToyLm& lm, const std::vector<int>& ctx,
                           std::size_t position) {
  if (position + 1 >= lm.max_len()) {
    std::vector<double> forced(lm.vocab_size(), kNegInf);
    forced[static_cast<std::size_t>(lm.end_id())] = 0.0;
    return forced;
  }
  return log_softmax(lm.logits(ctx));
}

void expand(const dprm::ToyLm& lm, std::vector<int> ctx, std::size_t position,
            std::vector<int>& path, double logp,
            std::vector<std::pair<std::vector<int>, double>>& out) {
  const auto row = row_at(lm, ctx, position);
  for (std::size_t v = 0; v < row.size(); ++v) {
    if (row[v] == kNegInf) continue;
    const int token = static_cast<int>(v);
    path.push_back(token);
    if (token == lm.end_id()) {
      out.emplace_back(path, std::exp(logp + row[v]));
    } else {
      expand(lm, shift(ctx, token), position + 1, path, logp + row[v], out);
    }
    path.pop_back();
  }
}

}  // namespace

std::vector<double> log_softmax(const Eigen::VectorXd& logits) {
  double m = kNegInf;
  for (Eigen::Index i = 0; i < logits.size(); ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - m);
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out[static_cast<std::size_t>(i)] = logits[i] - m - std::log(z);
  }
  return out;
}

std::vector<double> token_logprobs(const dprm::ToyLm& lm, const std::string& prompt,
                                   const std::vector<int>& completion) {
  std::vector<int> ctx = start_context(lm, prompt);
  std::vector<double> out;
  for (std::size_t pos = 0; pos < completion.size(); ++pos) {
    out.push_back(row_at(lm, ctx, pos)[static_cast<std::size_t>(completion[pos])]);
    ctx = shift(ctx, completion[pos]);
  }
  return out;
}

double sequence_logprob(const dprm::ToyLm& lm, const std::string& prompt,
                        const std::vector<int>& completion) {
  const auto lps = token_logprobs(lm, prompt, completion);
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

std::vector<std::pair<std::vector<int>, double>> enumerate(const dprm::ToyLm& lm,
                                                           const std::string& prompt,
                                                           const std::vector<int>& prefix) {
  std::vector<std::pair<std::vector<int>, double>> out;
  if (!prefix.empty() && prefix.back() == lm.end_id()) {
    out.emplace_back(std::vector<int>{}, 1.0);
    return out;
  }
  std::vector<int> ctx = start_context(lm, prompt);
  for (int t : prefix) ctx = shift(ctx, t);
  std::vector<int> path;
  expand(lm, ctx, prefix.size(), path, 0.0, out);
  return out;
}

double proposition_rhs(const dprm::ToyLm& policy, const dprm::ToyLm& reference,
                       const std::string& prompt, const std::vector<int>& prefix,
                       double strength) {
  double total = 0.0;
  for (const auto& [cont, p] : enumerate(reference, prompt, prefix)) {
    std::vector<int> full = prefix;
    full.insert(full.end(), cont.begin(), cont.end());
    const double log_ratio =
        sequence_logprob(policy, prompt, full) - sequence_logprob(reference, prompt, full);
    total += p * std::exp(log_ratio);
  }
  return strength * std::log(total);
}

namespace {

// Extended-precision log-probability of `completion`, so that finite
// differences of the loss are not dominated by double rounding.
long double precise_logprob(const dprm::ToyLm& lm, const std::string& prompt,
                            const std::vector<int>& completion) {
  std::vector<int> ctx = start_context(lm, prompt);
  long double total = 0.0L;
  for (std::size_t pos = 0; pos < completion.size(); ++pos) {
    if (pos + 1 < lm.max_len()) {
      const Eigen::VectorXd z = lm.logits(ctx);
      long double m = z[0];
      for (Eigen::Index i = 1; i < z.size(); ++i) m = std::max<long double>(m, z[i]);
      long double sum = 0.0L;
      for (Eigen::Index i = 0; i < z.size(); ++i) sum += std::exp(static_cast<long double>(z[i]) - m);
      total += static_cast<long double>(z[completion[pos]]) - m - std::log(sum);
    } else if (completion[pos] != lm.end_id()) {
      return -std::numeric_limits<long double>::infinity();
    }
    ctx = shift(ctx, completion[pos]);
  }
  return total;
}

long double precise_side(const dprm::ToyLm& policy, const dprm::ToyLm& reference,
                         const std::string& question, const std::string& text,
                         double strength) {
  const auto ids = policy.tokenize(text + " $");
  return static_cast<long double>(strength) *
         (precise_logprob(policy, question, ids) - precise_logprob(reference, question, ids));
}

}  // namespace

double side_reward(const dprm::ToyLm& policy, const dprm::ToyLm& reference,
                   const std::string& question, const std::string& text, double strength) {
  return static_cast<double>(precise_side(policy, reference, question, text, strength));
}

double pair_loss(const dprm::ToyLm& policy, const dprm::ToyLm& reference,
                 const dprm::PreferencePair& pair, double strength) {
  const long double margin =
      precise_side(policy, reference, pair.question, pair.chosen, strength) -
      precise_side(policy, reference, pair.question, pair.rejected, strength);
  return static_cast<double>(std::log1p(std::exp(-margin)));
}

double last_step_reward(const dprm::ToyLm& policy, const dprm::ToyLm& reference,
                        const std::string& prompt, std::span<const std::string> steps,
                        double strength) {
  std::vector<int> all;
  std::size_t last_begin = 0;
  for (const auto& s : steps) {
    last_begin = all.size();
    const auto ids = policy.tokenize(s);
    all.insert(all.end(), ids.begin(), ids.end());
  }
  const auto p = token_logprobs(policy, prompt, all);
  const auto r = token_logprobs(reference, prompt, all);
  double sum = 0.0;
  for (std::size_t i = last_begin; i < all.size(); ++i) sum += p[i] - r[i];
  return strength * sum;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> full_scan_rank(const Eigen::VectorXd& query,
                                        const Eigen::MatrixXd& rows) {
  std::vector<double> sims;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    double dot = 0.0, nr = 0.0, nq = 0.0;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      dot += rows(r, c) * query[c];
      nr += rows(r, c) * rows(r, c);
      nq += query[c] * query[c];
    }
    sims.push_back(dot / (std::sqrt(nr) * std::sqrt(nq)));
  }
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  return order;
}

PathCheck check_path(std::span<const dprm::Triple> graph_triples, const dprm::KgPath& path) {
  PathCheck out;
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    const auto& s = path.steps[i];
    if (i > 0 && s.head != path.steps[i - 1].tail) out.connected = false;
    const std::string h = s.inverted ? s.tail : s.head;
    const std::string t = s.inverted ? s.head : s.tail;
    bool found = false;
    for (const auto& g : graph_triples) {
      if (g.head == h && g.relation == s.relation && g.tail == t) {
        found = true;
        break;
      }
    }
    if (!found) out.grounded = false;
  }
  return out;
}

}  // namespace oracle
