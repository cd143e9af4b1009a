#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "semiprice/config.hpp"
#include "semiprice/harness.hpp"
#include "semiprice/kernels.hpp"
#include "semiprice/svg.hpp"

namespace fs = std::filesystem;

namespace {

struct RunArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  long horizon = 0;
  int reps = 0;
  std::vector<std::string> policies;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* horizon_opt = nullptr;
  CLI::Option* reps_opt = nullptr;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::vector<semiprice::harness::PolicyRun> execute(
    const semiprice::config::ResolvedRun& run) {
  std::vector<semiprice::harness::PolicyRun> out;
  out.reserve(run.policies.size());
  for (const semiprice::harness::PolicyFactory& f : run.policies)
    out.push_back(
        semiprice::harness::replicate(run.environment, f, run.settings));
  return out;
}

void write_outputs(const semiprice::config::ResolvedRun& run,
                   const std::vector<semiprice::harness::PolicyRun>& runs,
                   const std::string& out_dir, bool force_orders) {
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  write_file(out / "resolved_config.json", run.resolved.dump(2) + "\n");
  semiprice::harness::write_trace_csv((out / "trace.csv").string(), runs,
                                      run.settings.checkpoints,
                                      run.full_trace);
  semiprice::harness::write_summary_csv((out / "summary.csv").string(), runs);
  const nlohmann::json summary =
      semiprice::config::summary_to_json(runs, run.settings.checkpoints);
  write_file(out / "summary.json", summary.dump(2) + "\n");
  bool any_orders = force_orders;
  for (const auto& r : runs)
    for (const auto& tr : r.traces)
      if (!tr.order_history.empty()) any_orders = true;
  if (any_orders)
    semiprice::harness::write_order_history_csv((out / "orders.csv").string(),
                                                runs);
}

void print_table(const std::vector<semiprice::harness::PolicyRun>& runs) {
  std::printf("%-24s %14s %14s %10s\n", "policy", "final T", "mean regret",
              "slope");
  for (const auto& r : runs) {
    if (r.stats.empty()) continue;
    const auto& last = r.stats.back();
    std::printf("%-24s %14ld %14.4f %10.4f\n", r.label.c_str(), last.T,
                last.mean, r.slope);
  }
}

int run_simulate(const RunArgs& a, bool compare_mode) {
  semiprice::config::Overrides ov;
  if (a.seed_opt && a.seed_opt->count() > 0) ov.seed = a.seed;
  if (a.horizon_opt && a.horizon_opt->count() > 0) ov.horizon = a.horizon;
  if (a.reps_opt && a.reps_opt->count() > 0) ov.replications = a.reps;
  ov.policies = a.policies;
  const semiprice::config::ResolvedRun run =
      semiprice::config::load_run_config(a.config_path, ov);
  if (compare_mode && run.policies.size() < 2)
    throw semiprice::config::ConfigError(
        "compare needs at least two policies after filtering");
  const std::vector<semiprice::harness::PolicyRun> runs = execute(run);
  write_outputs(run, runs, a.out_dir, compare_mode);
  print_table(runs);
  return 0;
}

int run_kernel_check(const std::vector<int>& orders, double flat_top_width) {
  using semiprice::kernels::KernelSpec;
  bool ok = true;
  std::printf("%-28s %8s %14s %8s %6s\n", "kernel", "moment", "value",
              "target", "ok");
  auto report = [&ok](const std::string& name, int j, double value,
                      double target, double tol) {
    const bool pass = std::abs(value - target) <= tol;
    ok = ok && pass;
    std::printf("%-28s %8d %14.3e %8.3g %6s\n", name.c_str(), j, value,
                target, pass ? "yes" : "NO");
  };
  for (int m : orders) {
    const KernelSpec k = KernelSpec::order_m(m);
    const std::vector<double> mom = semiprice::kernels::check_moments(k, m - 1);
    std::string name = "order_" + std::to_string(m);
    for (int j = 0; j < m; ++j)
      report(name, j, mom[static_cast<std::size_t>(j)], j == 0 ? 1.0 : 0.0,
             1e-8);
  }
  {
    // Printed-form shape reference: (35/12)(1-u^2)^3 has mass 8/3.
    const auto mom = semiprice::kernels::quadrature_moments(
        [](double u) {
          const double s = 1.0 - u * u;
          return std::abs(u) <= 1.0 ? 35.0 / 12.0 * s * s * s : 0.0;
        },
        -1.0, 1.0, 0);
    report("shape_35_12_triweight", 0, mom[0], 8.0 / 3.0, 1e-8);
  }
  {
    const KernelSpec k = KernelSpec::flat_top(flat_top_width);
    const auto mom = semiprice::kernels::check_moments(k, 0);
    report("flat_top", 0, mom[0], 1.0, 1e-4);
  }
  return ok ? 0 : 1;
}

nlohmann::json read_summary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open summary file " + path);
  return nlohmann::json::parse(f);
}

int run_slope(const std::string& summary_path) {
  const nlohmann::json summary = read_summary(summary_path);
  if (!summary.contains("policies"))
    throw std::runtime_error("summary document has no policies section");
  bool all_match = true;
  std::printf("%-24s %12s %12s %8s\n", "policy", "stored", "recomputed",
              "match");
  for (const auto& p : summary.at("policies")) {
    const std::string label = p.value("label", std::string("?"));
    if (!p.contains("slope") || !p.at("slope").is_number()) {
      std::printf("%-24s %12s %12s %8s\n", label.c_str(), "-", "-", "n/a");
      continue;
    }
    const double stored = p.at("slope").get<double>();
    std::vector<semiprice::harness::CheckpointStat> stats;
    for (const auto& pt : p.at("points")) {
      if (!pt.at("reg_tilde").is_number()) continue;
      semiprice::harness::CheckpointStat s;
      s.T = pt.at("T").get<long>();
      s.reg_tilde = pt.at("reg_tilde").get<double>();
      stats.push_back(s);
    }
    const double re = semiprice::harness::slope_fit(stats);
    const bool match = re == stored;
    all_match = all_match && match;
    std::printf("%-24s %12.6f %12.6f %8s\n", label.c_str(), stored, re,
                match ? "yes" : "NO");
  }
  return all_match ? 0 : 1;
}

int run_plot(const std::string& summary_path, const std::string& out_path) {
  const nlohmann::json summary = read_summary(summary_path);
  write_file(out_path, semiprice::svg::render_regret_plot(summary));
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation laboratory for contextual dynamic pricing with an "
               "unknown market-noise distribution"};
  app.require_subcommand(1);

  RunArgs sim_args, cmp_args;
  auto add_run_options = [](CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config_path, "Run configuration JSON file")
        ->required();
    cmd->add_option("--out", a.out_dir, "Output directory")->required();
    a.seed_opt = cmd->add_option("--seed", a.seed, "Base seed override");
    a.horizon_opt =
        cmd->add_option("--horizon", a.horizon, "Horizon override");
    a.reps_opt =
        cmd->add_option("--reps", a.reps, "Replication count override");
    cmd->add_option("--policies", a.policies,
                    "Keep only the listed policy labels")
        ->delimiter(',');
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "Run the configured policies and write trace and summary "
                  "files");
  add_run_options(sim, sim_args);
  CLI::App* cmp = app.add_subcommand(
      "compare", "Run several policies side by side (adds order history "
                 "output)");
  add_run_options(cmp, cmp_args);

  std::vector<int> orders{2, 4, 6};
  double flat_top_width = 1.0;
  CLI::App* kc = app.add_subcommand(
      "kernel-check", "Verify kernel moment conditions by quadrature");
  kc->add_option("--orders", orders, "Kernel orders to check")->delimiter(',');
  kc->add_option("--flat-top-width", flat_top_width,
                 "Width parameter of the flat-top kernel");

  std::string slope_summary;
  CLI::App* sl = app.add_subcommand(
      "slope", "Recompute regret slopes from a summary.json and verify them");
  sl->add_option("--summary", slope_summary, "summary.json path")->required();

  std::string plot_summary, plot_out;
  CLI::App* pl = app.add_subcommand(
      "plot", "Render transformed regret curves from a summary.json as SVG");
  pl->add_option("--summary", plot_summary, "summary.json path")->required();
  pl->add_option("--out", plot_out, "Output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad invocation is a configuration error
  }

  try {
    if (sim->parsed()) return run_simulate(sim_args, false);
    if (cmp->parsed()) return run_simulate(cmp_args, true);
    if (kc->parsed()) return run_kernel_check(orders, flat_top_width);
    if (sl->parsed()) return run_slope(slope_summary);
    if (pl->parsed()) return run_plot(plot_summary, plot_out);
  } catch (const semiprice::config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
