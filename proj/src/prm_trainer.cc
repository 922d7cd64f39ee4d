#include "dprm/prm_trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dprm/error.h"
#include "dprm/random.h"
#include "dprm/text.h"

namespace dprm {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::kInitKg: return "init_kg";
    case Phase::kInitCot: return "init_cot";
    case Phase::kCoKgFromCot: return "co_kg_from_cot";
    case Phase::kCoCotFromKg: return "co_cot_from_kg";
  }
  return "init_kg";
}

Phase parse_phase(const std::string& s) {
  for (auto p : {Phase::kInitKg, Phase::kInitCot, Phase::kCoKgFromCot,
                 Phase::kCoCotFromKg}) {
    if (s == to_string(p)) return p;
  }
  throw Error(ErrorCode::kParse, "unknown phase '" + s + "'");
}

bool is_cotraining(Phase phase) {
  return phase == Phase::kCoKgFromCot || phase == Phase::kCoCotFromKg;
}

Modality phase_modality(Phase phase) {
  return phase == Phase::kInitKg || phase == Phase::kCoKgFromCot ? Modality::kKg
                                                                 : Modality::kCot;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kContract, "learning_rate must be >= 0");
  }
  if (!(strength > 0.0)) throw Error(ErrorCode::kContract, "strength must be > 0");
  if (schedule.empty()) throw Error(ErrorCode::kContract, "empty schedule");
  if (batch_size == 0) throw Error(ErrorCode::kContract, "batch_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  std::vector<std::string> phases;
  for (auto p : schedule) phases.emplace_back(to_string(p));
  nlohmann::ordered_json j;
  j["strength"] = strength;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["schedule"] = phases;
  j["mix_ratio"] = "1:1";
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["real_max_learning_rate"] = real_max_learning_rate;
  j["real_macro_batch"] = real_macro_batch;
  return j;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["loss_trace"] = loss_trace;
  j["epoch_losses"] = epoch_losses;
  j["margin_accuracy"] = margin_accuracy;
  j["held_out"] = held_out;
  j["grad_check_max_rel_err"] = grad_check_max_rel_err;
  j["native_batches"] = native_batches;
  j["converted_batches"] = converted_batches;
  j["config_echo"] = config_echo;
  return j;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string terminated(const std::string& text) { return text + " $"; }

// One side of a pair, prepared once: every position's context and token and
// the reference log-likelihood, which never changes during training.
struct SideTrace {
  std::vector<Context> contexts;
  std::vector<int> tokens;
  std::vector<bool> forced;
  double ref_logprob = 0.0;
};

struct PreparedPair {
  SideTrace chosen;
  SideTrace rejected;
};

SideTrace trace_side(const ToyLm& policy, const ToyLm& reference,
                     const std::string& question, const std::string& text) {
  SideTrace s;
  const std::string completion = terminated(text);
  for (const auto& r : reference.score(question, completion)) s.ref_logprob += r.logprob;
  s.tokens = policy.tokenize(completion);
  Context ctx = policy.initial_context(question);
  for (std::size_t pos = 0; pos < s.tokens.size(); ++pos) {
    s.contexts.push_back(ctx);
    s.forced.push_back(policy.is_forced(pos));
    policy.advance(ctx, s.tokens[pos]);
  }
  return s;
}

PreparedPair prepare_pair(const ToyLm& policy, const ToyLm& reference,
                          const PreferencePair& pair) {
  return {trace_side(policy, reference, pair.question, pair.chosen),
          trace_side(policy, reference, pair.question, pair.rejected)};
}

// Policy log-likelihood of a side. When `probs` is given, also keeps the
// softmax of every unforced position for the gradient.
double side_logprob(const ToyLm& policy, const SideTrace& side,
                    std::vector<Eigen::VectorXd>* probs) {
  const auto v = static_cast<Eigen::Index>(policy.vocab_size());
  const auto& table = policy.table();
  double total = 0.0;
  for (std::size_t i = 0; i < side.tokens.size(); ++i) {
    if (side.forced[i]) {
      total += policy.log_probs(side.contexts[i], i)[side.tokens[i]];
      if (probs) probs->emplace_back();
      continue;
    }
    auto it = table.find(side.contexts[i]);
    if (it == table.end()) {
      total -= std::log(static_cast<double>(v));
      if (probs) probs->push_back(Eigen::VectorXd::Constant(v, 1.0 / static_cast<double>(v)));
      continue;
    }
    const Eigen::VectorXd& z = it->second;
    const double top = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - top).exp();
    const double sum = e.sum();
    total += z[side.tokens[i]] - top - std::log(sum);
    if (probs) probs->push_back(e / sum);
  }
  return total;
}

void accumulate(const SideTrace& side, const std::vector<Eigen::VectorXd>& probs,
                double coef, LogitTable& grad) {
  for (std::size_t i = 0; i < side.tokens.size(); ++i) {
    if (side.forced[i]) continue;  // forced end marker: no logit dependence
    auto [it, inserted] = grad.try_emplace(side.contexts[i], probs[i].size());
    if (inserted) it->second.setZero();
    it->second -= coef * probs[i];
    it->second[side.tokens[i]] += coef;
  }
}

}  // namespace

double pairwise_loss(double reward_chosen, double reward_rejected) {
  if (!std::isfinite(reward_chosen) || !std::isfinite(reward_rejected)) {
    throw Error(ErrorCode::kNumeric, "non-finite reward");
  }
  const double margin = reward_chosen - reward_rejected;
  // softplus(-m) = max(-m, 0) + log1p(exp(-|m|))
  return std::max(-margin, 0.0) + std::log1p(std::exp(-std::abs(margin)));
}

namespace {

// Loss of a prepared pair; adds its gradient to `grad` when given.
double pair_step(const ToyLm& policy, const PreparedPair& pair, double strength,
                 LogitTable* grad) {
  std::vector<Eigen::VectorXd> pc;
  std::vector<Eigen::VectorXd> pr;
  const double rc =
      strength * (side_logprob(policy, pair.chosen, grad ? &pc : nullptr) -
                  pair.chosen.ref_logprob);
  const double rr =
      strength * (side_logprob(policy, pair.rejected, grad ? &pr : nullptr) -
                  pair.rejected.ref_logprob);
  const double loss = pairwise_loss(rc, rr);
  if (grad) {
    // dL/dm = -sigmoid(-m); dm/dlogit = strength * (onehot - softmax) per side.
    const double g = sigmoid(-(rc - rr)) * strength;
    accumulate(pair.chosen, pc, -g, *grad);
    accumulate(pair.rejected, pr, g, *grad);
  }
  return loss;
}

}  // namespace

double pair_side_reward(const ToyLm& policy, const ToyLm& reference,
                        const std::string& question, const std::string& text,
                        double strength) {
  const std::string completion = terminated(text);
  const auto p = policy.score(question, completion);
  const auto r = reference.score(question, completion);
  double log_ratio = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) log_ratio += p[i].logprob - r[i].logprob;
  return strength * log_ratio;
}

double pair_loss(const ToyLm& policy, const ToyLm& reference,
                 const PreferencePair& pair, double strength) {
  return pairwise_loss(
      pair_side_reward(policy, reference, pair.question, pair.chosen, strength),
      pair_side_reward(policy, reference, pair.question, pair.rejected, strength));
}

LogitTable loss_gradient(const ToyLm& policy, const ToyLm& reference,
                         const PreferencePair& pair, double strength) {
  LogitTable grad;
  pair_step(policy, prepare_pair(policy, reference, pair), strength, &grad);
  return grad;
}

double gradient_check(const ToyLm& policy, const ToyLm& reference,
                      std::span<const PreferencePair> pairs, double strength,
                      double step, std::size_t coords_per_row) {
  double worst = 0.0;
  for (const auto& pair : pairs) {
    const LogitTable analytic = loss_gradient(policy, reference, pair, strength);
    ToyLm probe = policy;
    for (const auto& [ctx, grow] : analytic) {
      std::vector<Eigen::Index> coords(static_cast<std::size_t>(grow.size()));
      std::iota(coords.begin(), coords.end(), 0);
      if (coords_per_row > 0 && coords_per_row < coords.size()) {
        std::partial_sort(coords.begin(),
                          coords.begin() + static_cast<std::ptrdiff_t>(coords_per_row),
                          coords.end(), [&](Eigen::Index a, Eigen::Index b) {
                            return std::abs(grow[a]) > std::abs(grow[b]);
                          });
        coords.resize(coords_per_row);
      }
      Eigen::VectorXd& row = probe.row(ctx);
      for (Eigen::Index v : coords) {
        const double saved = row[v];
        row[v] = saved + step;
        const double up = pair_loss(probe, reference, pair, strength);
        row[v] = saved - step;
        const double down = pair_loss(probe, reference, pair, strength);
        row[v] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(grow[v]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(grow[v] - numeric) / denom);
      }
    }
  }
  return worst;
}

double margin_accuracy(const ToyLm& policy, const ToyLm& reference,
                       std::span<const PreferencePair> pairs, double strength) {
  if (pairs.empty()) throw Error(ErrorCode::kContract, "no pairs to evaluate");
  std::size_t wins = 0;
  for (const auto& p : pairs) {
    const double c = pair_side_reward(policy, reference, p.question, p.chosen, strength);
    const double r = pair_side_reward(policy, reference, p.question, p.rejected, strength);
    if (c > r) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

bool is_held_out(const std::string& id) {
  return fnv1a64(id) % 10 == 0;
}

namespace {

std::vector<std::vector<const PreparedPair*>> make_batches(
    const std::vector<PreparedPair>& pool, std::size_t batch_size,
    std::mt19937_64& rng) {
  std::vector<const PreparedPair*> order;
  for (const auto& p : pool) order.push_back(&p);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  std::vector<std::vector<const PreparedPair*>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(
                                         std::min(order.size(), i + batch_size)));
  }
  return out;
}

double apply_batch(ToyLm& policy, const std::vector<const PreparedPair*>& batch,
                   const TrainConfig& config) {
  LogitTable total;
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto* pair : batch) loss += pair_step(policy, *pair, config.strength, &total);
  if (config.learning_rate > 0.0) {
    for (const auto& [ctx, g] : total) {
      policy.row(ctx) -= config.learning_rate * scale * g;
    }
  }
  return loss * scale;
}

}  // namespace

TrainResult train(const ToyLm& initial, const TrainData& data,
                  std::span<const Phase> phases, const TrainConfig& config) {
  config.validate();
  if (data.native.empty()) throw Error(ErrorCode::kContract, "empty native dataset");
  TrainResult result{initial, initial, {}};
  ToyLm& policy = result.policy;
  const ToyLm& reference = result.reference;
  TrainReport& report = result.report;
  report.config_echo = config.to_json();

  // Held-out pairs come from the native data only; converted pairs are all
  // used for training.
  std::vector<PreparedPair> native_train;
  std::vector<PreparedPair> converted_train;
  std::vector<PreferencePair> held_out;
  const PreferencePair* first_train = nullptr;
  for (const auto& p : data.native) {
    if (is_held_out(p.id)) {
      held_out.push_back(p);
    } else {
      native_train.push_back(prepare_pair(policy, reference, p));
      if (!first_train) first_train = &p;
    }
  }
  for (const auto& p : data.converted) {
    converted_train.push_back(prepare_pair(policy, reference, p));
  }
  if (native_train.empty()) throw Error(ErrorCode::kContract, "no training pairs after split");

  std::size_t epoch_index = 0;
  for (Phase phase : phases) {
    const bool co = is_cotraining(phase);
    if (co && converted_train.empty()) {
      throw Error(ErrorCode::kContract,
                  std::string("phase ") + to_string(phase) + " has no converted data");
    }
    for (std::size_t e = 0; e < config.epochs; ++e, ++epoch_index) {
      std::mt19937_64 rng(mix_seed(config.seed, epoch_index));
      const auto native = make_batches(native_train, config.batch_size, rng);
      std::vector<std::vector<const PreparedPair*>> schedule;
      if (co) {
        const auto converted = make_batches(converted_train, config.batch_size, rng);
        const std::size_t rounds = std::max(native.size(), converted.size());
        for (std::size_t i = 0; i < rounds; ++i) {
          schedule.push_back(native[i % native.size()]);
          schedule.push_back(converted[i % converted.size()]);
        }
        report.native_batches += rounds;
        report.converted_batches += rounds;
      } else {
        schedule = native;
        report.native_batches += native.size();
      }
      double epoch_loss = 0.0;
      for (const auto& batch : schedule) {
        const double loss = apply_batch(policy, batch, config);
        report.loss_trace.push_back(loss);
        epoch_loss += loss;
      }
      report.epoch_losses.push_back(epoch_loss / static_cast<double>(schedule.size()));
    }
  }

  report.held_out = held_out.size();
  if (!held_out.empty()) {
    report.margin_accuracy = margin_accuracy(policy, reference, held_out, config.strength);
  } else {
    std::vector<PreferencePair> all(data.native.begin(), data.native.end());
    report.margin_accuracy = margin_accuracy(policy, reference, all, config.strength);
  }
  // Spot check on the largest gradient entries of one training pair.
  report.grad_check_max_rel_err = gradient_check(
      policy, reference, std::span<const PreferencePair>(first_train, 1), config.strength,
      1e-5, 8);
  return result;
}

DualPrm train_dual(const ToyLm& initial, std::span<const PreferencePair> kg_pairs,
                   std::span<const PreferencePair> cot_pairs,
                   const TrainConfig& config) {
  const auto kg_from_cot = convert_pairs(cot_pairs);
  const auto cot_from_kg = convert_pairs(kg_pairs);
  std::vector<Phase> kg_phases;
  std::vector<Phase> cot_phases;
  for (auto p : config.schedule) {
    (phase_modality(p) == Modality::kKg ? kg_phases : cot_phases).push_back(p);
  }
  TrainConfig kg_config = config;
  kg_config.seed = mix_seed(config.seed, 1);
  TrainConfig cot_config = config;
  cot_config.seed = mix_seed(config.seed, 2);
  return DualPrm{train(initial, {kg_pairs, kg_from_cot}, kg_phases, kg_config),
                 train(initial, {cot_pairs, cot_from_kg}, cot_phases, cot_config)};
}

}  // namespace dprm
