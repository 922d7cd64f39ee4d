#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dprm/prm_trainer.h"
#include "dprm/reasoning_engine.h"
#include "dprm/toy_pipeline.h"

namespace dprm::cli {

// Bad flags, bad config keys or values, missing required inputs. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every tunable of a run with defaults materialized. Config file keys are the
// dotted names printed by to_json().
struct Settings {
  std::uint64_t seed = 7;
  ToyWorldOptions world;
  TrainConfig train;
  ReasonConfig reason;
  std::size_t parallelism = 4;
  std::size_t embed_dim = 4096;
  bool embed_idf = true;
  std::string gateway_url;
  double gateway_timeout = 120.0;
  std::string generator_model = "generator";
  std::string kg_policy_model = "kg-policy";
  std::string kg_reference_model = "kg-reference";
  std::string cot_policy_model = "cot-policy";
  std::string cot_reference_model = "cot-reference";

  Settings();

  // Throws UsageError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  nlohmann::ordered_json to_json() const;
};

// "key = value" per line; '#' starts a comment; blank lines are ignored.
std::map<std::string, std::string> read_config_file(const std::string& path);

// Runs one subcommand. Returns 0 on success, 1 on a domain error and 2 on a
// usage error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dprm::cli
