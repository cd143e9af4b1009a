#pragma once

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semiprice/env.hpp"
#include "semiprice/harness.hpp"

namespace semiprice::config {

//! Any structural problem with a run configuration: parse failure, unknown
//! key, missing required key, or invalid value.  The CLI maps this to exit
//! code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> horizon;
  std::optional<int> replications;
  std::vector<std::string> policies;  // keep only these labels
};

struct ResolvedRun {
  nlohmann::json resolved;  // full config with every default expanded
  env::MarketEnv environment;
  std::vector<harness::PolicyFactory> policies;
  harness::ReplicationSettings settings;
  bool full_trace = false;
};

//! Parse, validate (unknown keys are hard errors), apply overrides, fill
//! defaults, and build the runnable objects.
ResolvedRun load_run_config(const std::string& path, const Overrides& ov = {});

//! Same, from an already-parsed document (used for echo round trips).
ResolvedRun resolve_run_config(const nlohmann::json& doc,
                               const Overrides& ov = {});

//! Summary document used by the slope and plot commands.
nlohmann::json summary_to_json(const std::vector<harness::PolicyRun>& runs,
                               const std::vector<long>& checkpoints);

}  // namespace semiprice::config
