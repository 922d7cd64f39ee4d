#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprm/preference_foundry.h"
#include "dprm/toy_lm.h"

namespace dprm {

enum class Phase { kInitKg, kInitCot, kCoKgFromCot, kCoCotFromKg };

const char* to_string(Phase phase);
Phase parse_phase(const std::string& s);
// Co-training phases alternate native and converted batches.
bool is_cotraining(Phase phase);
Modality phase_modality(Phase phase);

struct TrainConfig {
  double strength = 0.05;
  double learning_rate = 100.0;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::vector<Phase> schedule = {Phase::kInitKg, Phase::kInitCot,
                                 Phase::kCoKgFromCot, Phase::kCoCotFromKg};
  // Real-model optimizer settings, carried for the gateway path only.
  double adam_beta1 = 0.85;
  double adam_beta2 = 0.95;
  double real_max_learning_rate = 7e-7;
  std::size_t real_macro_batch = 60;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<double> loss_trace;    // one entry per optimizer step
  std::vector<double> epoch_losses;  // mean batch loss per epoch
  double margin_accuracy = 0.0;      // on held-out pairs
  std::size_t held_out = 0;
  double grad_check_max_rel_err = 0.0;
  std::size_t native_batches = 0;
  std::size_t converted_batches = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
};

// -log sigmoid(chosen - rejected), as softplus of the negated margin.
double pairwise_loss(double reward_chosen, double reward_rejected);

// strength * log(policy / reference) of a pair side, scored with the end
// marker appended.
double pair_side_reward(const ToyLm& policy, const ToyLm& reference,
                        const std::string& question, const std::string& text,
                        double strength);

double pair_loss(const ToyLm& policy, const ToyLm& reference,
                 const PreferencePair& pair, double strength);

// Exact gradient of pair_loss with respect to every logit of `policy`. Rows
// absent from the result are zero.
LogitTable loss_gradient(const ToyLm& policy, const ToyLm& reference,
                         const PreferencePair& pair, double strength);

// Max relative error between loss_gradient and central finite differences of
// pair_loss, over the logits of every row the pairs touch. Relative error is
// |a - f| / max(|a|, |f|, 1e-6). With coords_per_row > 0 only that many
// entries of largest analytic magnitude are checked per row.
double gradient_check(const ToyLm& policy, const ToyLm& reference,
                      std::span<const PreferencePair> pairs, double strength,
                      double step = 1e-5, std::size_t coords_per_row = 0);

// Fraction of pairs whose chosen reward strictly exceeds the rejected one.
double margin_accuracy(const ToyLm& policy, const ToyLm& reference,
                       std::span<const PreferencePair> pairs, double strength);

// Deterministic 10% split by hash of the pair id.
bool is_held_out(const std::string& id);

struct TrainData {
  std::span<const PreferencePair> native;
  std::span<const PreferencePair> converted;
};

struct TrainResult {
  ToyLm policy;
  ToyLm reference;
  TrainReport report;
};

// Plain gradient descent over the phases of `config.schedule` (in order).
// Initialization phases see native batches only; co-training phases alternate
// native and converted batches 1:1.
TrainResult train(const ToyLm& initial, const TrainData& data,
                  std::span<const Phase> phases, const TrainConfig& config);

struct DualPrm {
  TrainResult kg;
  TrainResult cot;
};

// Trains both PRMs from native pairs, deriving the converted data sets by
// modality conversion. Each PRM runs the schedule phases for its modality.
DualPrm train_dual(const ToyLm& initial, std::span<const PreferencePair> kg_pairs,
                   std::span<const PreferencePair> cot_pairs,
                   const TrainConfig& config);

}  // namespace dprm
