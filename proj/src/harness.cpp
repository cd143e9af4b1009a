#include "semiprice/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace semiprice::harness {

RegretTrace run_trajectory(const env::MarketEnv& environment,
                           policies::PricingPolicy& policy, long T,
                           std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("horizon must be >= 1");
  RngStream cov_stream = make_stream(seed, "covariates");
  RngStream noise_stream = make_stream(seed, "noise");
  env::CovariateSampler sampler(environment.covariates(),
                                std::move(cov_stream));

  RegretTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(T));
  trace.v_min = std::numeric_limits<double>::infinity();
  trace.v_max = -trace.v_min;
  double cum_exp = 0.0, cum_real = 0.0;
  const double cap = environment.price_cap();

  for (long t = 1; t <= T; ++t) {
    const Eigen::VectorXd xt = env::augment(sampler.next());
    const policies::PriceDecision dec = policy.next_price(xt);
    if (!(dec.price >= 0.0 && dec.price <= cap)) {
      std::ostringstream os;
      os << "policy " << policy.name() << " posted price " << dec.price
         << " outside [0, " << cap << "] at t=" << t;
      throw std::logic_error(os.str());
    }
    const double p_star = environment.oracle_price(xt);
    const env::MarketOutcome out = environment.step(xt, dec.price, noise_stream);

    trace.v_min = std::min(trace.v_min, out.v);
    trace.v_max = std::max(trace.v_max, out.v);
    if (!environment.bounded_value_support() &&
        (out.v <= 0.0 || out.v >= cap))
      ++trace.support_violations;

    const double step_regret = environment.expected_revenue(xt, p_star) -
                               environment.expected_revenue(xt, dec.price);
    if (step_regret < -1e-9) {
      std::ostringstream os;
      os << "negative expected regret " << step_regret << " at t=" << t
         << ": benchmark price is not optimal";
      throw std::logic_error(os.str());
    }
    cum_exp += step_regret;
    const double real_star = out.v >= p_star ? p_star : 0.0;
    cum_real += real_star - out.realized_revenue;

    switch (dec.provenance) {
      case policies::Provenance::Exploration:
        ++trace.exploration_steps;
        break;
      case policies::Provenance::Exploitation:
        ++trace.exploitation_steps;
        break;
      case policies::Provenance::Fallback:
        ++trace.fallback_steps;
        break;
    }

    policy.observe(out.y);
    trace.steps.push_back({t, dec.episode, dec.provenance, dec.price, p_star,
                           cum_exp, cum_real, policy.fallback_count()});
  }
  trace.order_history = policy.order_history();
  return trace;
}

int resolve_worker_count(int requested, int replications) {
  int w = requested;
  if (w <= 0) {
    if (const char* envv = std::getenv("SEMIPRICE_THREADS")) {
      char* end = nullptr;
      const long parsed = std::strtol(envv, &end, 10);
      if (end != envv && *end == '\0' && parsed > 0 && parsed <= 256)
        w = static_cast<int>(parsed);
    }
  }
  if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
  if (w <= 0) w = 1;
  return std::max(1, std::min(w, replications));
}

PolicyRun replicate(const env::MarketEnv& environment,
                    const PolicyFactory& factory,
                    const ReplicationSettings& settings) {
  if (settings.R < 1)
    throw std::invalid_argument("replication count must be >= 1");
  for (long c : settings.checkpoints)
    if (c < 1 || c > settings.T)
      throw std::invalid_argument("checkpoints must lie in [1, horizon]");

  const int R = settings.R;
  std::vector<RegretTrace> traces(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));

  std::atomic<int> cursor{0};
  auto work = [&]() {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= R) return;
      const auto iu = static_cast<std::size_t>(i);
      try {
        const std::uint64_t seed = settings.base_seed + 1 +
                                   static_cast<std::uint64_t>(i);
        std::unique_ptr<policies::PricingPolicy> policy =
            factory.make(make_stream(seed, "policy"));
        traces[iu] =
            run_trajectory(environment, *policy, settings.T, seed);
      } catch (...) {
        errors[iu] = std::current_exception();
      }
    }
  };

  const int workers = resolve_worker_count(settings.workers, R);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::vector<double>> values(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    values[iu].reserve(settings.checkpoints.size());
    for (long c : settings.checkpoints)
      values[iu].push_back(
          traces[iu].steps[static_cast<std::size_t>(c - 1)].exp_regret_cum);
  }

  PolicyRun run;
  run.label = factory.label;
  run.benchmark_slope = factory.benchmark_slope;
  run.loglog_correction = factory.loglog_correction;
  run.traces = std::move(traces);
  run.stats = aggregate_checkpoints(values, settings.checkpoints,
                                    factory.loglog_correction);
  run.slope = run.stats.size() >= 2
                  ? slope_fit(run.stats)
                  : std::numeric_limits<double>::quiet_NaN();
  return run;
}

std::vector<CheckpointStat> aggregate_checkpoints(
    const std::vector<std::vector<double>>& per_rep_values,
    const std::vector<long>& checkpoints, double loglog_correction) {
  const std::size_t r = per_rep_values.size();
  if (r == 0) throw std::invalid_argument("no replications to aggregate");
  for (const auto& row : per_rep_values)
    if (row.size() != checkpoints.size())
      throw std::invalid_argument("replication rows disagree with checkpoints");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<CheckpointStat> stats(checkpoints.size());
  double anchor = nan;
  for (std::size_t j = 0; j < checkpoints.size(); ++j) {
    CheckpointStat& s = stats[j];
    s.T = checkpoints[j];
    double sum = 0.0;
    for (std::size_t i = 0; i < r; ++i) sum += per_rep_values[i][j];
    s.mean = sum / static_cast<double>(r);
    if (r >= 2) {
      double ss = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        const double d = per_rep_values[i][j] - s.mean;
        ss += d * d;
      }
      s.stderr_mean = std::sqrt(ss / static_cast<double>(r - 1)) /
                      std::sqrt(static_cast<double>(r));
    } else {
      s.stderr_mean = 0.0;
    }
    if (s.mean > 0.0 && s.T > 1) {
      const double raw = std::log(s.mean) -
                         loglog_correction *
                             std::log(std::log(static_cast<double>(s.T)));
      if (j == 0) anchor = raw;
      s.reg_tilde = raw - anchor;
    } else {
      s.reg_tilde = nan;
    }
  }
  return stats;
}

double slope_fit(const std::vector<CheckpointStat>& stats) {
  if (stats.size() < 2)
    throw std::invalid_argument("slope needs at least two checkpoints");
  const double x0 = std::log(static_cast<double>(stats.front().T));
  double sx = 0.0, sy = 0.0;
  const double n = static_cast<double>(stats.size());
  std::vector<double> xs(stats.size()), ys(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    xs[i] = std::log(static_cast<double>(stats[i].T)) - x0;
    ys[i] = stats[i].reg_tilde;
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0)
    throw std::invalid_argument("slope needs distinct checkpoint abscissae");
  return sxy / sxx;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

const char* provenance_name(policies::Provenance p) {
  switch (p) {
    case policies::Provenance::Exploration:
      return "exploration";
    case policies::Provenance::Exploitation:
      return "exploitation";
    case policies::Provenance::Fallback:
      return "fallback";
  }
  return "unknown";
}

std::vector<const PolicyRun*> label_sorted(const std::vector<PolicyRun>& runs) {
  std::vector<const PolicyRun*> out;
  out.reserve(runs.size());
  for (const PolicyRun& r : runs) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(),
                   [](const PolicyRun* a, const PolicyRun* b) {
                     return a->label < b->label;
                   });
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

void write_trace_row(std::ofstream& f, const std::string& label, int rep,
                     const StepRecord& s) {
  f << label << ',' << rep << ',' << s.t << ',' << s.episode << ','
    << provenance_name(s.provenance) << ',' << format_double(s.price) << ','
    << format_double(s.oracle_price) << ','
    << format_double(s.exp_regret_cum) << ','
    << format_double(s.real_regret_cum) << ',' << s.fallback_count << '\n';
}

}  // namespace

void write_trace_csv(const std::string& path,
                     const std::vector<PolicyRun>& runs,
                     const std::vector<long>& checkpoints, bool full_trace) {
  std::ofstream f = open_out(path);
  f << "policy,rep,t,episode,phase,price,oracle_price,exp_regret_cum,"
       "real_regret_cum,fallback_count\n";
  for (const PolicyRun* run : label_sorted(runs)) {
    for (std::size_t i = 0; i < run->traces.size(); ++i) {
      const RegretTrace& tr = run->traces[i];
      const int rep = static_cast<int>(i) + 1;
      if (full_trace) {
        for (const StepRecord& s : tr.steps)
          write_trace_row(f, run->label, rep, s);
      } else {
        for (long c : checkpoints)
          write_trace_row(f, run->label, rep,
                          tr.steps[static_cast<std::size_t>(c - 1)]);
      }
    }
  }
}

void write_summary_csv(const std::string& path,
                       const std::vector<PolicyRun>& runs) {
  std::ofstream f = open_out(path);
  f << "policy,checkpoint,mean,stderr,reg_tilde,slope\n";
  for (const PolicyRun* run : label_sorted(runs))
    for (const CheckpointStat& s : run->stats)
      f << run->label << ',' << s.T << ',' << format_double(s.mean) << ','
        << format_double(s.stderr_mean) << ',' << format_double(s.reg_tilde)
        << ',' << format_double(run->slope) << '\n';
}

void write_order_history_csv(const std::string& path,
                             const std::vector<PolicyRun>& runs) {
  std::ofstream f = open_out(path);
  f << "policy,rep,episode,m_hat\n";
  for (const PolicyRun* run : label_sorted(runs))
    for (std::size_t i = 0; i < run->traces.size(); ++i) {
      const std::vector<int>& hist = run->traces[i].order_history;
      for (std::size_t k = 0; k < hist.size(); ++k)
        f << run->label << ',' << i + 1 << ',' << k + 1 << ',' << hist[k]
          << '\n';
    }
}

}  // namespace semiprice::harness
