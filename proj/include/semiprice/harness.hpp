#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "semiprice/env.hpp"
#include "semiprice/policies.hpp"

namespace semiprice::harness {

struct StepRecord {
  long t = 0;  // 1-based
  int episode = 1;
  policies::Provenance provenance = policies::Provenance::Exploration;
  double price = 0.0;
  double oracle_price = 0.0;
  double exp_regret_cum = 0.0;
  double real_regret_cum = 0.0;
  long fallback_count = 0;  // running
};

struct RegretTrace {
  std::vector<StepRecord> steps;  // one per time step
  double v_min = 0.0, v_max = 0.0;
  long support_violations = 0;  // VAR regime only; others assert instead
  long exploration_steps = 0, exploitation_steps = 0, fallback_steps = 0;
  std::vector<int> order_history;
};

//! One full trajectory; the covariate and noise streams are derived from the
//! seed under fixed labels so policies never perturb the environment draws.
RegretTrace run_trajectory(const env::MarketEnv& environment,
                           policies::PricingPolicy& policy, long T,
                           std::uint64_t seed);

//! Builds a fresh policy for one replication; the stream is the policy's
//! private price-randomization source.
struct PolicyFactory {
  std::string label;
  std::function<std::unique_ptr<policies::PricingPolicy>(RngStream)> make;
  //! Benchmark slope exponent for plots: (2m+1)/(4m-1), 0.5, or 0.75;
  //! negative when no benchmark applies.
  double benchmark_slope = -1.0;
  //! Multiplier c in the transform log reg - c log log T; 2 for the
  //! (log T)^2 regret laws, 1 for the single-log law.
  double loglog_correction = 2.0;
};

struct ReplicationSettings {
  long T = 6300;
  std::vector<long> checkpoints;
  int R = 10;
  std::uint64_t base_seed = 0;  // replication i uses base_seed + 1 + i
  int workers = 0;              // 0: SEMIPRICE_THREADS or hardware default
};

struct CheckpointStat {
  long T = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
  double reg_tilde = 0.0;
};

struct PolicyRun {
  std::string label;
  double benchmark_slope = -1.0;
  double loglog_correction = 2.0;
  std::vector<RegretTrace> traces;  // per replication, in seed order
  std::vector<CheckpointStat> stats;
  double slope = 0.0;
};

//! R independent trajectories (seeds base+1..base+R), optionally on a worker
//! pool; aggregation is slot-ordered so results are identical for any worker
//! count.
PolicyRun replicate(const env::MarketEnv& environment,
                    const PolicyFactory& factory,
                    const ReplicationSettings& settings);

//! Ordinary least squares slope of reg_tilde against log T - log T1.
//! Requires at least two points with distinct abscissae.
double slope_fit(const std::vector<CheckpointStat>& stats);

//! Mean / standard error / transformed-regret aggregation over replications;
//! exposed separately for tests.
std::vector<CheckpointStat> aggregate_checkpoints(
    const std::vector<std::vector<double>>& per_rep_values,
    const std::vector<long>& checkpoints, double loglog_correction);

int resolve_worker_count(int requested, int replications);

//! CSV and summary persistence.  Numbers are written in shortest
//! round-trip form so identical runs are byte-identical.
void write_trace_csv(const std::string& path,
                     const std::vector<PolicyRun>& runs,
                     const std::vector<long>& checkpoints, bool full_trace);
void write_summary_csv(const std::string& path,
                       const std::vector<PolicyRun>& runs);
void write_order_history_csv(const std::string& path,
                             const std::vector<PolicyRun>& runs);

std::string format_double(double v);

}  // namespace semiprice::harness
