#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprm/toy_lm.h"

namespace dprm {

// A ToyLm over single-character tokens plus the end marker, with a logit row
// for every context of the given order drawn uniformly from [-scale, scale].
ToyLm random_toy_lm(std::size_t vocab_size, std::size_t order, std::size_t max_len,
                    double scale, std::mt19937_64& rng);

struct PropositionInstance {
  ToyLm policy;
  ToyLm reference;
  std::vector<std::string> prefix;  // one token per step, never the end marker
};

// Random policy/reference pair (vocab <= 5 with the end marker, max_len <= 5)
// and a non-empty random prefix.
PropositionInstance random_proposition_instance(std::mt19937_64& rng);

struct PropositionCheck {
  std::size_t instances = 0;
  std::size_t comparisons = 0;  // one per prefix step
  double max_relative_error = 0.0;
  double seconds = 0.0;
  double strength = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Compares cumulative_q at every prefix step with the enumeration oracle.
// Relative error is |q - oracle| / max(|oracle|, 1e-12).
PropositionCheck check_proposition(std::size_t instances, std::uint64_t seed,
                                   double strength = 0.05);

}  // namespace dprm
