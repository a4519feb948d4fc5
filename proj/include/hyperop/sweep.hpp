#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hyperop/dataset.hpp"
#include "hyperop/model.hpp"
#include "hyperop/rng.hpp"
#include "hyperop/statistics.hpp"

namespace hyperop {

enum class RunMode : std::uint8_t {
  dataset,   // fixed number of timesteps, every timestep recorded
  long_run,  // micro-step cap, stop as soon as the state is absorbing
};

inline const char* to_string(RunMode m) noexcept { return m == RunMode::dataset ? "dataset" : "long-run"; }

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "dataset") return RunMode::dataset;
  if (s == "long-run") return RunMode::long_run;
  throw std::invalid_argument("unknown mode '" + s + "' (expected dataset|long-run)");
}

inline std::vector<double> paper_beta_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }
inline std::vector<double> paper_q_grid() { return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct SweepConfig {
  Regime regime{Regime::linear};
  std::vector<double> betas = paper_beta_grid();
  std::vector<double> qs = paper_q_grid();
  std::size_t runs_per_cell{500};
  RunMode mode{RunMode::dataset};
  std::uint32_t timesteps{300};
  std::uint64_t step_cap{1'000'000};
  std::size_t n{1000};
  std::size_t household_size{5};
  double lambda{0.5};
  std::uint64_t master_seed{1};
  bool include_t0{false};
  bool record_trajectories{true};
  // Execution only; never part of the dataset identity.
  std::size_t threads{1};

  ModelParams cell_params(std::size_t bi, std::size_t qi) const {
    ModelParams p = ModelParams::for_regime(regime, betas.at(bi), qs.at(qi), n, household_size);
    p.lambda = lambda;
    return p;
  }

  /// Seed of repetition `rep` in cell (bi, qi).
  std::uint64_t run_seed(std::size_t bi, std::size_t qi, std::size_t rep) const {
    return derive_seed(master_seed, {static_cast<std::uint64_t>(regime), bi, qi, rep});
  }

  std::size_t num_cells() const noexcept { return betas.size() * qs.size(); }

  void validate() const {
    if (betas.empty() || qs.empty()) throw std::invalid_argument("beta and q grids must be non-empty");
    if (runs_per_cell == 0) throw std::invalid_argument("runs per cell must be positive");
    if (household_size != 5) throw std::invalid_argument("the recorded statistic assumes households of size 5");
    for (std::size_t bi = 0; bi < betas.size(); ++bi)
      for (std::size_t qi = 0; qi < qs.size(); ++qi) cell_params(bi, qi).validate();
  }

  nlohmann::json to_json() const {
    return {{"regime", to_string(regime)},
            {"betas", betas},
            {"qs", qs},
            {"runs_per_cell", runs_per_cell},
            {"mode", to_string(mode)},
            {"timesteps", timesteps},
            {"step_cap", step_cap},
            {"n", n},
            {"household_size", household_size},
            {"lambda", lambda},
            {"master_seed", master_seed},
            {"include_t0", include_t0},
            {"record_trajectories", record_trajectories}};
  }

  static SweepConfig from_json(const nlohmann::json& j) {
    SweepConfig c;
    c.regime = parse_regime(j.at("regime").get<std::string>());
    c.betas = j.at("betas").get<std::vector<double>>();
    c.qs = j.at("qs").get<std::vector<double>>();
    c.runs_per_cell = j.at("runs_per_cell").get<std::size_t>();
    c.mode = parse_run_mode(j.at("mode").get<std::string>());
    c.timesteps = j.at("timesteps").get<std::uint32_t>();
    c.step_cap = j.at("step_cap").get<std::uint64_t>();
    c.n = j.at("n").get<std::size_t>();
    c.household_size = j.at("household_size").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    c.include_t0 = j.at("include_t0").get<bool>();
    c.record_trajectories = j.at("record_trajectories").get<bool>();
    return c;
  }
};

struct Trajectory {
  RunRecord run;
  std::vector<StatRecord> records() const {
    std::vector<StatRecord> out;
    for (std::size_t i = 0; i < run.num_records(); ++i) out.push_back(run.record(i));
    return out;
  }
};

/// Simulates repetition `rep` of cell (bi, qi) from a balanced random start.
///
/// A timestep is n micro-steps; after each one a StatRecord is taken with the
/// move/flip counters of that timestep. Dataset mode runs exactly `timesteps`
/// timesteps and, unless include_t0 is set, records only post-step snapshots
/// (a zero-length run still yields its initial snapshot). Long-run mode checks
/// for absorption after every timestep and stops there; the reported stopping
/// step is the micro-step of the last change, i.e. when the absorbing state was
/// entered. Homophily is tracked per timestep for the polarization times.
inline Trajectory run_trajectory(const SweepConfig& cfg, std::size_t bi, std::size_t qi, std::size_t rep) {
  const ModelParams p = cfg.cell_params(bi, qi);
  const std::uint64_t seed = cfg.run_seed(bi, qi, rep);
  SimState s = build_initial_state(p, p.n / 2, derive_seed(seed, {0}));
  Rng rng = make_rng(derive_seed(seed, {1}));

  Trajectory out;
  RunRecord& run = out.run;
  run.rep = static_cast<std::uint32_t>(rep);
  run.seed = seed;
  bool clipped = false;
  auto record = [&](const StatRecord& r) {
    clipped = clipped || r.size_clipped;
    if (!cfg.record_trajectories) return;
    const auto flat = r.flatten();
    run.values.insert(run.values.end(), flat.begin(), flat.end());
  };

  std::vector<double> hom_hh{homophily_index(s, Layer::households)};
  std::vector<double> hom_wp{homophily_index(s, Layer::workplaces)};
  const bool long_run = cfg.mode == RunMode::long_run;
  const std::uint64_t total_steps =
      long_run ? cfg.step_cap : static_cast<std::uint64_t>(cfg.timesteps) * static_cast<std::uint64_t>(p.n);

  const bool keep_t0 = cfg.include_t0 || (!long_run && cfg.timesteps == 0);
  run.first_t = keep_t0 ? 0 : 1;
  if (keep_t0) record(snapshot(s, 0, 0, 0));

  std::uint64_t steps = 0, last_change = 0;
  bool absorbed = long_run && is_absorbing(s, p);
  for (std::uint32_t t = 1; !absorbed && steps < total_steps; ++t) {
    const std::uint64_t len = std::min<std::uint64_t>(p.n, total_steps - steps);
    std::int32_t moves = 0, flips = 0;
    for (std::uint64_t i = 0; i < len; ++i) {
      const auto step = micro_step(s, p, rng);
      ++steps;
      if (step.kind == StepKind::opinion_flipped) {
        ++flips;
        last_change = steps;
      } else if (step.kind == StepKind::moved_workplace) {
        ++moves;
        last_change = steps;
      }
    }
    record(snapshot(s, t, moves, flips));
    hom_hh.push_back(homophily_index(s, Layer::households));
    hom_wp.push_back(homophily_index(s, Layer::workplaces));
    if (long_run) absorbed = is_absorbing(s, p);
  }
  if (!long_run) absorbed = is_absorbing(s, p);

  RunSummary& sum = run.summary;
  sum.final_num_a = static_cast<std::int64_t>(s.num_a());
  sum.absorbed = absorbed;
  sum.stopping_step = absorbed ? last_change : steps;
  sum.tau_hh = first_passage(hom_hh, kPolarizationThreshold);
  sum.tau_wp = first_passage(hom_wp, kPolarizationThreshold);
  sum.component_sizes = components(s);
  run.homogeneous_hh_vertices = static_cast<std::uint32_t>(homogeneous_vertex_count(s, Layer::households));
  run.homogeneous_wp_vertices = static_cast<std::uint32_t>(homogeneous_vertex_count(s, Layer::workplaces));
  sum.homophily_hh = hom_hh.back();
  sum.homophily_wp = hom_wp.back();
  sum.size_clipped = clipped || snapshot(s, 0, 0, 0).size_clipped;
  return out;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any call is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

inline nlohmann::json make_manifest(const SweepConfig& cfg) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi)
    for (std::size_t qi = 0; qi < cfg.qs.size(); ++qi)
      cells.push_back({{"beta_index", bi},
                       {"q_index", qi},
                       {"beta", cfg.betas[bi]},
                       {"q", cfg.qs[qi]},
                       {"file", cell_file_name(bi, qi)}});
  return {{"format", kDatasetFormatTag},
          {"version", kDatasetVersion},
          {"config", cfg.to_json()},
          {"record_width", kStatWidth},
          {"record_layout", "N_A, D_hh[k=0..5], D_wp[decile 1..10], S_wp[size 1..14], M_wp, N_ch"},
          {"initial_condition", "balanced: n/2 vertices hold A, uniformly chosen"},
          {"seed_derivation",
           "run seed = derive_seed(master_seed, {regime, beta_index, q_index, rep}); initial state uses "
           "derive_seed(run seed, {0}), dynamics derive_seed(run seed, {1}); derive_seed chains splitmix64"},
          {"cells", cells}};
}

struct SweepProgress {
  std::size_t runs_done{0};
  std::size_t runs_resumed{0};
};

/// Executes every (cell, rep) of the campaign into cfg-described files under
/// `out_dir`. Completed rep blocks already on disk are kept: an interrupted
/// sweep resumes from the first missing or damaged block of each cell.
/// Dataset bytes depend only on cfg, never on the thread count.
inline SweepProgress run_sweep(const SweepConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);
  const auto manifest = make_manifest(cfg);
  const auto manifest_path = out_dir / kManifestName;
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json existing;
    try {
      existing = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(std::string("unreadable manifest: ") + e.what());
    }
    if (existing != manifest) throw DatasetError("existing dataset at " + out_dir.string() + " has a different configuration");
  } else {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << '\n';
    if (!out) throw DatasetError("cannot write " + manifest_path.string());
  }

  SweepProgress progress;
  const std::size_t chunk = std::max<std::size_t>(1, cfg.threads) * 8;
  for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
    for (std::size_t qi = 0; qi < cfg.qs.size(); ++qi) {
      const auto path = out_dir / cell_file_name(bi, qi);
      std::size_t next_rep = 0;
      if (fs::exists(path)) {
        const auto bytes = read_file_bytes(path);
        std::size_t valid = 0;
        try {
          const auto scan = scan_cell(bytes, cfg.n, static_cast<std::uint32_t>(bi), static_cast<std::uint32_t>(qi),
                                      cfg.regime, true);
          next_rep = scan.runs.size();
          valid = scan.valid_bytes;
        } catch (const DatasetError&) {
          valid = 0;  // damaged header: start the cell over
        }
        if (valid == 0) fs::remove(path);
        else fs::resize_file(path, valid);
      }
      progress.runs_resumed += next_rep;
      std::ofstream out(path, std::ios::binary | std::ios::app);
      if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
      if (next_rep == 0) {
        const auto header = encode_cell_header(static_cast<std::uint32_t>(bi), static_cast<std::uint32_t>(qi), cfg.regime);
        out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
      }
      while (next_rep < cfg.runs_per_cell) {
        const std::size_t count = std::min(chunk, cfg.runs_per_cell - next_rep);
        std::vector<std::vector<std::uint8_t>> blocks(count);
        parallel_for(count, cfg.threads,
                     [&](std::size_t i) { blocks[i] = encode_run(run_trajectory(cfg, bi, qi, next_rep + i).run); });
        for (const auto& b : blocks) out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
        out.flush();
        if (!out) throw DatasetError("write failed for " + path.string());
        next_rep += count;
        progress.runs_done += count;
      }
    }
  }
  return progress;
}

struct CellData {
  std::size_t beta_index{0}, q_index{0};
  double beta{0}, q{0};
  std::vector<RunRecord> runs;
};

/// Read access to a dataset directory. Cells are loaded on demand and fully
/// validated (checksums, width, count identities).
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir) {
    Dataset d;
    d.dir_ = dir;
    std::ifstream in(dir / kManifestName);
    if (!in) throw DatasetError("no manifest in " + dir.string());
    try {
      d.manifest_ = nlohmann::json::parse(in);
      if (d.manifest_.at("format").get<std::string>() != kDatasetFormatTag) throw DatasetError("not a trajectory dataset");
      const auto version = d.manifest_.at("version").get<std::uint32_t>();
      if (version != kDatasetVersion)
        throw DatasetError("dataset version " + std::to_string(version) + " is not supported");
      d.config_ = SweepConfig::from_json(d.manifest_.at("config"));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(std::string("malformed manifest: ") + e.what());
    }
    return d;
  }

  const SweepConfig& config() const noexcept { return config_; }
  const nlohmann::json& manifest() const noexcept { return manifest_; }
  std::size_t num_betas() const noexcept { return config_.betas.size(); }
  std::size_t num_qs() const noexcept { return config_.qs.size(); }

  CellData load_cell(std::size_t bi, std::size_t qi) const {
    if (bi >= num_betas() || qi >= num_qs()) throw std::out_of_range("cell index out of range");
    const auto bytes = read_file_bytes(dir_ / cell_file_name(bi, qi));
    auto scan = scan_cell(bytes, config_.n, static_cast<std::uint32_t>(bi), static_cast<std::uint32_t>(qi),
                          config_.regime, false);
    if (scan.runs.size() != config_.runs_per_cell)
      throw DatasetError(cell_file_name(bi, qi) + " holds " + std::to_string(scan.runs.size()) + " of " +
                         std::to_string(config_.runs_per_cell) + " runs");
    const std::size_t households = config_.n / config_.household_size;
    const std::size_t workplaces = households;
    for (const auto& run : scan.runs)
      for (std::size_t i = 0; i < run.num_records(); ++i) validate_record(run.row(i), households, workplaces);
    return {bi, qi, config_.betas[bi], config_.qs[qi], std::move(scan.runs)};
  }

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
  SweepConfig config_;
};

/// Lossless text export: trajectories.csv (one row per stored record),
/// summaries.csv (one row per run) and, when a split is given, split.csv.
inline void export_csv(const Dataset& ds, const std::filesystem::path& out_dir, const Split* split = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream traj(out_dir / "trajectories.csv");
  std::ofstream sums(out_dir / "summaries.csv");
  if (!traj || !sums) throw DatasetError("cannot write CSV export to " + out_dir.string());
  const char* regime = to_string(ds.config().regime);
  traj << "regime,beta_index,q_index,beta,q,rep,t,N_A";
  for (std::size_t k = 0; k < kHouseholdBins; ++k) traj << ",D_hh_" << k;
  for (std::size_t k = 1; k <= kDecileBins; ++k) traj << ",D_wp_" << k;
  for (std::size_t k = 1; k <= kSizeBins; ++k) traj << ",S_wp_" << k;
  traj << ",M_wp,N_ch\n";
  sums << "regime,beta_index,q_index,beta,q,rep,seed,final_N_A,stopping_step,absorbed,tau_hh,tau_wp,"
          "homogeneous_hh_vertices,homogeneous_wp_vertices,size_clipped,component_sizes\n";
  for (std::size_t bi = 0; bi < ds.num_betas(); ++bi)
    for (std::size_t qi = 0; qi < ds.num_qs(); ++qi) {
      const auto cell = ds.load_cell(bi, qi);
      for (const auto& run : cell.runs) {
        for (std::size_t i = 0; i < run.num_records(); ++i) {
          traj << regime << ',' << bi << ',' << qi << ',' << cell.beta << ',' << cell.q << ',' << run.rep << ','
               << run.first_t + i;
          for (auto v : run.row(i)) traj << ',' << v;
          traj << '\n';
        }
        const auto& s = run.summary;
        sums << regime << ',' << bi << ',' << qi << ',' << cell.beta << ',' << cell.q << ',' << run.rep << ','
             << run.seed << ',' << s.final_num_a << ',' << s.stopping_step << ',' << (s.absorbed ? 1 : 0) << ','
             << (s.tau_hh ? std::to_string(*s.tau_hh) : "NA") << ','
             << (s.tau_wp ? std::to_string(*s.tau_wp) : "NA") << ',' << run.homogeneous_hh_vertices << ','
             << run.homogeneous_wp_vertices << ','
             << (s.size_clipped ? 1 : 0) << ',';
        for (std::size_t c = 0; c < s.component_sizes.size(); ++c) sums << (c ? ";" : "") << s.component_sizes[c];
        sums << '\n';
      }
    }
  if (split) {
    std::ofstream sp(out_dir / "split.csv");
    write_split_csv(*split, sp);
  }
}

}  // namespace hyperop
