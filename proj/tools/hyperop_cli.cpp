// Command-line front end: single runs, campaigns, toy-model analysis,
// dataset summaries, regression estimates and CSV export.
//
// Exit codes: 0 success, 1 usage error, 2 I/O or validation error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hyperop/hyperop.hpp"

namespace {

using namespace hyperop;

std::vector<Regime> regimes_from(const std::string& s) {
  if (s == "both") return {Regime::linear, Regime::nonlinear};
  return {parse_regime(s)};
}

struct CommonSweepFlags {
  std::string regime{"linear"};
  std::vector<double> betas = paper_beta_grid();
  std::vector<double> qs = paper_q_grid();
  std::size_t runs{500};
  std::string mode{"dataset"};
  std::uint32_t timesteps{300};
  std::uint64_t step_cap{1'000'000};
  std::size_t n{1000};
  double lambda{0.5};
  std::uint64_t seed{1};
  bool include_t0{false};
  bool no_trajectories{false};
  std::size_t threads{std::max(1u, std::thread::hardware_concurrency())};

  SweepConfig to_config() const {
    SweepConfig c;
    c.regime = parse_regime(regime);
    c.betas = betas;
    c.qs = qs;
    c.runs_per_cell = runs;
    c.mode = parse_run_mode(mode);
    c.timesteps = timesteps;
    c.step_cap = step_cap;
    c.n = n;
    c.lambda = lambda;
    c.master_seed = seed;
    c.include_t0 = include_t0;
    c.record_trajectories = !no_trajectories;
    c.threads = threads;
    return c;
  }
};

void add_model_flags(CLI::App* cmd, CommonSweepFlags& f) {
  cmd->add_option("--regime", f.regime, "linear | nonlinear")->capture_default_str();
  cmd->add_option("--n", f.n, "number of vertices")->capture_default_str();
  cmd->add_option("--lambda", f.lambda, "workplace weight")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed")->capture_default_str();
  cmd->add_option("--mode", f.mode, "dataset | long-run")->capture_default_str();
  cmd->add_option("--timesteps", f.timesteps, "timesteps of n micro-steps (dataset mode)")->capture_default_str();
  cmd->add_option("--step-cap", f.step_cap, "micro-step cap (long-run mode)")->capture_default_str();
  cmd->add_flag("--include-t0", f.include_t0, "also record the initial snapshot");
}

void print_record_header(std::ostream& os) {
  os << "t\tN_A";
  for (std::size_t k = 0; k < kHouseholdBins; ++k) os << "\tD_hh_" << k;
  for (std::size_t k = 1; k <= kDecileBins; ++k) os << "\tD_wp_" << k;
  for (std::size_t k = 1; k <= kSizeBins; ++k) os << "\tS_wp_" << k;
  os << "\tM_wp\tN_ch\n";
}

int cmd_simulate(double beta, double q, bool trace, const CommonSweepFlags& f) {
  CommonSweepFlags g = f;
  g.betas = {beta};
  g.qs = {q};
  g.runs = 1;
  const auto cfg = g.to_config();
  cfg.validate();
  const auto traj = run_trajectory(cfg, 0, 0, 0);
  const auto& s = traj.run.summary;
  std::cout << "regime\t" << to_string(cfg.regime) << "\nbeta\t" << beta << "\nq\t" << q << "\nn\t" << cfg.n
            << "\nseed\t" << traj.run.seed << "\nfinal_N_A\t" << s.final_num_a << "\nabsorbed\t"
            << (s.absorbed ? "true" : "false") << "\nstopping_step\t" << s.stopping_step << "\ntau_hh\t"
            << (s.tau_hh ? std::to_string(*s.tau_hh) : "NA") << "\ntau_wp\t"
            << (s.tau_wp ? std::to_string(*s.tau_wp) : "NA") << "\nhomophily_hh\t" << s.homophily_hh
            << "\nhomophily_wp\t" << s.homophily_wp << "\ncomponents\t" << s.component_sizes.size() << "\n";
  if (trace) {
    std::cout << '\n';
    print_record_header(std::cout);
    for (std::size_t i = 0; i < traj.run.num_records(); ++i) {
      std::cout << traj.run.first_t + i;
      for (auto v : traj.run.row(i)) std::cout << '\t' << v;
      std::cout << '\n';
    }
  }
  return 0;
}

int cmd_sweep(const CommonSweepFlags& f, const std::string& out) {
  const auto cfg = f.to_config();
  const auto progress = run_sweep(cfg, out);
  std::cerr << "sweep: " << progress.runs_done << " runs simulated, " << progress.runs_resumed
            << " already on disk, output in " << out << '\n';
  return 0;
}

int cmd_toy_enumerate(const std::string& regime, double lambda, bool summary) {
  if (summary)
    std::cout << "regime\tfamily\tstructures\tclasses\traw_states\n";
  else
    std::cout << "regime\tfamily\tcanonical_key\traw_count\treachable\topinions\tworkplaces\n";
  for (Regime r : regimes_from(regime)) {
    const auto e = toy::enumerate_absorbing(r, lambda);
    if (summary) {
      for (const auto& [fam, classes] : e.family_classes)
        std::cout << to_string(r) << '\t' << toy::label(fam) << '\t' << e.family_structural.at(fam) << '\t' << classes
                  << '\t' << e.family_raw.at(fam) << '\n';
      std::cout << to_string(r) << "\ttotal\t" << e.structural_total << '\t' << e.classes.size() << '\t' << e.raw_total
                << '\n';
      continue;
    }
    for (const auto& c : e.classes) {
      const auto [ops, wps] = toy::render(c.key);
      std::cout << to_string(r) << '\t' << toy::label(c.family) << '\t' << c.key << '\t' << c.raw_count << '\t'
                << (c.reachable ? "yes" : "no") << '\t' << ops << '\t' << wps << '\n';
    }
  }
  return 0;
}

int cmd_toy_rates(const std::string& regime, const std::vector<double>& betas, const std::vector<double>& qs,
                  std::size_t runs, std::uint64_t seed, std::uint64_t cap, std::size_t threads, double lambda) {
  struct Cell {
    Regime regime;
    std::size_t bi, qi;
  };
  std::vector<Cell> cells;
  for (Regime r : regimes_from(regime))
    for (std::size_t bi = 0; bi < betas.size(); ++bi)
      for (std::size_t qi = 0; qi < qs.size(); ++qi) cells.push_back({r, bi, qi});
  std::vector<toy::ToyRates> rates(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const auto& c = cells[i];
    const auto p = toy::toy_params(c.regime, betas[c.bi], qs[c.qi], lambda);
    rates[i] = toy::absorption_rates(p, runs, derive_seed(seed, {static_cast<std::uint64_t>(c.regime), c.bi, c.qi}), cap);
  });
  std::cout << "regime\tbeta\tq\truns";
  for (auto fam : toy::kAllFamilies) std::cout << "\trate_" << toy::label(fam);
  std::cout << "\thomogeneous\tsplit_households_bd\tmixed_households_eh\tnon_absorbed\tmean_absorption_step\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& r = rates[i];
    std::cout << to_string(c.regime) << '\t' << betas[c.bi] << '\t' << qs[c.qi] << '\t' << r.runs;
    for (auto fam : toy::kAllFamilies) std::cout << '\t' << r.rate(fam);
    std::cout << '\t' << r.rate(toy::Family::a) << '\t' << r.rate_where(toy::is_split_household_family) << '\t'
              << r.rate_where(toy::is_mixed_household_family) << '\t' << r.non_absorbed_fraction() << '\t'
              << r.mean_absorption_step << '\n';
  }
  return 0;
}

int cmd_analyze(const std::string& path) {
  const auto ds = Dataset::open(path);
  std::cout << "regime\tbeta\tq\t";
  write_summary_header(std::cout);
  std::cout << '\n';
  for (std::size_t bi = 0; bi < ds.num_betas(); ++bi)
    for (std::size_t qi = 0; qi < ds.num_qs(); ++qi) {
      const auto cell = ds.load_cell(bi, qi);
      std::vector<RunSummary> sums;
      for (const auto& r : cell.runs) sums.push_back(r.summary);
      std::cout << to_string(ds.config().regime) << '\t' << cell.beta << '\t' << cell.q << '\t';
      write_summary_row(std::cout, cross_run_summary(sums));
      std::cout << '\n';
    }
  return 0;
}

int cmd_estimate(const std::string& path, const std::string& target, std::vector<std::size_t> horizons,
                 const std::vector<std::string>& features, std::uint64_t split_seed, double ridge,
                 const std::string& split_out) {
  const auto ds = Dataset::open(path);
  const auto& cfg = ds.config();
  const Split split = make_split(ds.num_betas(), ds.num_qs(), cfg.runs_per_cell, split_seed);
  if (!split_out.empty()) {
    std::ofstream os(split_out);
    if (!os) throw DatasetError("cannot write " + split_out);
    write_split_csv(split, os);
  }
  std::vector<FeatureSpec> specs;
  for (const auto& f : features) {
    const auto mask = FeatureSpec::parse_sources(f);
    for (auto t : horizons) specs.push_back({t, mask});
  }
  const auto reports = evaluate_many(ds, specs, split, ridge);
  std::vector<Target> targets;
  if (target == "both")
    targets = {Target::beta, Target::q};
  else
    targets = {parse_target(target)};

  std::cout << "target\tregime\tfeatures";
  for (auto t : horizons) std::cout << "\tt" << t;
  std::cout << '\n';
  for (Target tg : targets)
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      std::cout << to_string(tg) << '\t' << to_string(cfg.regime) << '\t' << specs[fi * horizons.size()].source_names();
      for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
        const auto& r = reports[2 * (fi * horizons.size() + hi) + (tg == Target::beta ? 0 : 1)];
        std::cout << '\t' << r.rmse_test;
      }
      std::cout << '\n';
    }
  return 0;
}

int cmd_export(const std::string& path, const std::string& out, std::optional<std::uint64_t> split_seed) {
  const auto ds = Dataset::open(path);
  if (split_seed) {
    const auto split = make_split(ds.num_betas(), ds.num_qs(), ds.config().runs_per_cell, *split_seed);
    export_csv(ds, out, &split);
  } else {
    export_csv(ds, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-layer adaptive hypergraph opinion dynamics"};
  app.set_config("--config", "",
                 "TOML/INI file; options go in a section named after the subcommand, e.g. [sweep]. "
                 "Command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  CommonSweepFlags flags;

  auto* simulate = app.add_subcommand("simulate", "run one trajectory and print its summary");
  double beta = 0.5, q = 0.5;
  bool trace = false;
  add_model_flags(simulate, flags);
  simulate->add_option("--beta", beta, "opinion change parameter")->capture_default_str();
  simulate->add_option("--q", q, "workplace change parameter")->capture_default_str();
  simulate->add_flag("--trace", trace, "print every recorded timestep");

  auto* sweep = app.add_subcommand("sweep", "simulate a (beta, q) grid into a dataset directory");
  std::string out;
  add_model_flags(sweep, flags);
  sweep->add_option("--betas", flags.betas, "beta grid")->delimiter(',')->capture_default_str();
  sweep->add_option("--qs", flags.qs, "q grid")->delimiter(',')->capture_default_str();
  sweep->add_option("--runs", flags.runs, "repetitions per cell")->capture_default_str();
  sweep->add_flag("--no-trajectories", flags.no_trajectories, "store run summaries only");
  sweep->add_option("--threads", flags.threads, "worker threads")->capture_default_str();
  sweep->add_option("--out", out, "dataset directory")->required();

  auto* toy_enum = app.add_subcommand("toy-enumerate", "list absorbing classes of the 10-vertex model");
  std::string toy_regime = "both";
  double toy_lambda = 0.5;
  bool toy_summary = false;
  toy_enum->add_option("--regime", toy_regime, "linear | nonlinear | both")->capture_default_str();
  toy_enum->add_option("--lambda", toy_lambda, "workplace weight")->capture_default_str();
  toy_enum->add_flag("--summary", toy_summary, "per-family totals instead of the class table");

  auto* toy_rates = app.add_subcommand("toy-rates", "Monte-Carlo absorption rates of the 10-vertex model");
  std::vector<double> toy_betas{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> toy_qs = paper_q_grid();
  std::size_t toy_runs = 10'000, toy_threads = flags.threads;
  std::uint64_t toy_seed = 1, toy_cap = 1'000'000;
  toy_rates->add_option("--regime", toy_regime, "linear | nonlinear | both")->capture_default_str();
  toy_rates->add_option("--betas", toy_betas, "beta grid")->delimiter(',')->capture_default_str();
  toy_rates->add_option("--qs", toy_qs, "q grid")->delimiter(',')->capture_default_str();
  toy_rates->add_option("--runs", toy_runs, "runs per grid point")->capture_default_str();
  toy_rates->add_option("--seed", toy_seed, "master seed")->capture_default_str();
  toy_rates->add_option("--step-cap", toy_cap, "micro-step cap per run")->capture_default_str();
  toy_rates->add_option("--threads", toy_threads, "worker threads")->capture_default_str();
  toy_rates->add_option("--lambda", toy_lambda, "workplace weight")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "cross-run summaries per cell of a dataset");
  std::string dataset;
  analyze->add_option("--dataset", dataset, "dataset directory")->required();

  auto* estimate = app.add_subcommand("estimate", "regression estimates of beta and q with test RMSE");
  std::string target = "both", split_out;
  std::vector<std::size_t> horizons{20, 30, 50, 70, 100, 150, 200, 300};
  std::vector<std::string> features{"all"};
  std::uint64_t split_seed = 1;
  double ridge = kDefaultRidge;
  estimate->add_option("--dataset", dataset, "dataset directory")->required();
  estimate->add_option("--target", target, "beta | q | both")->capture_default_str();
  estimate->add_option("--horizons", horizons, "observation horizons")->delimiter(',')->capture_default_str();
  estimate->add_option("--features", features,
                       "feature sets: all, no-nch, no-nch-mwp, dhh-dwp or lists like NA,Dhh (repeatable)")
      ->capture_default_str();
  estimate->add_option("--split-seed", split_seed, "seed of the 80/20 split")->capture_default_str();
  estimate->add_option("--ridge", ridge, "relative ridge on standardized features")->capture_default_str();
  estimate->add_option("--split-out", split_out, "write the split manifest to this CSV file");

  auto* exporter = app.add_subcommand("export-csv", "lossless CSV export of a dataset");
  std::optional<std::uint64_t> export_split;
  exporter->add_option("--dataset", dataset, "dataset directory")->required();
  exporter->add_option("--out", out, "output directory")->required();
  exporter->add_option("--split-seed", export_split, "also write split.csv for this split seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*simulate) return cmd_simulate(beta, q, trace, flags);
    if (*sweep) return cmd_sweep(flags, out);
    if (*toy_enum) return cmd_toy_enumerate(toy_regime, toy_lambda, toy_summary);
    if (*toy_rates) return cmd_toy_rates(toy_regime, toy_betas, toy_qs, toy_runs, toy_seed, toy_cap, toy_threads, toy_lambda);
    if (*analyze) return cmd_analyze(dataset);
    if (*estimate) return cmd_estimate(dataset, target, horizons, features, split_seed, ridge, split_out);
    if (*exporter) return cmd_export(dataset, out, export_split);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
