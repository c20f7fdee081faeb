// SPDX-License-Identifier: Apache-2.0
#include "mor/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "mor/artifacts.hpp"
#include "mor/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mor {

namespace {

fs::path stage_dir(const RunConfig& cfg, const std::string& stage, bool create) {
  fs::path dir = fs::path(cfg.out_dir) / to_string(cfg.problem) / stage;
  if (create) fs::create_directories(dir);
  return dir;
}

std::string traj_name(const char* prefix, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.csv", prefix, i);
  return buf;
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& stage,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    json info) {
  json m;
  m["stage"] = stage;
  m["problem"] = to_string(cfg.problem);
  m["seed"] = cfg.seed;
  m["config_hash"] = content_hash_hex(serialize_config(cfg));
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p.filename().string()] = file_hash(p);
  for (const auto& p : outputs) out[p.filename().string()] = file_hash(p);
  m["inputs"] = in;
  m["outputs"] = out;
  m["info"] = std::move(info);
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

TimeGrid fom_grid(const RunConfig& cfg) { return TimeGrid(cfg.dt, cfg.steps); }

// Common timeline for ROM-side runs: the twophase experiments use a larger
// step than the reference simulator; everything else keeps the FOM grid.
TimeGrid rom_grid(const RunConfig& cfg) {
  if (cfg.problem == ProblemId::TwoPhase && cfg.rom_dt > 0.0) {
    double horizon = cfg.dt * cfg.steps;
    int steps = static_cast<int>(std::llround(horizon / cfg.rom_dt));
    return TimeGrid(cfg.rom_dt, std::max(steps, 1));
  }
  return fom_grid(cfg);
}

bool is_ode(ProblemId p) {
  return p == ProblemId::P1 || p == ProblemId::P2 || p == ProblemId::P3;
}

int train_count(const RunConfig& cfg) {
  return is_ode(cfg.problem) ? cfg.train_size : cfg.train_samples;
}

int test_count(const RunConfig& cfg) {
  return is_ode(cfg.problem) ? cfg.test_size : cfg.count - train_count(cfg);
}

EnsembleResult make_result(std::vector<Trajectory> trajs) {
  EnsembleResult res;
  res.failures.assign(trajs.size(), std::nullopt);
  res.trajectories = std::move(trajs);
  return res;
}

// Loads the stored FOM ensemble; missing files become recorded failures so
// downstream mse is computed over mutual successes only.
EnsembleResult load_fom_ensemble(const RunConfig& cfg) {
  fs::path dir = stage_dir(cfg, "fom-run", false);
  if (!fs::exists(dir / "manifest.json"))
    throw ArtifactError("fom-run artifacts not found under " + dir.string() +
                        "; run fom-run first");
  EnsembleResult res;
  res.failures.resize(cfg.count);
  res.trajectories.resize(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    fs::path p = dir / traj_name("traj", i);
    if (!fs::exists(p)) {
      res.failures[i] = "trajectory missing (sample failed upstream)";
      continue;
    }
    res.trajectories[i] = read_trajectory_csv(p);
  }
  return res;
}

Mat subsample_columns(const Mat& m, int stride) {
  Eigen::Index cols = (m.cols() - 1) / stride + 1;
  Mat out(m.rows(), cols);
  for (Eigen::Index j = 0; j < cols; ++j) out.col(j) = m.col(j * stride);
  return out;
}

void write_mse_row(const fs::path& dir, const std::string& method, int rank_or_layers,
                   double mse_train, double mse_test) {
  std::ostringstream os;
  os << "method,rank_or_layers,mse_train,mse_test\n";
  os << method << "," << rank_or_layers << "," << format_double(mse_train) << ","
     << format_double(mse_test) << "\n";
  write_text_atomic(dir / "mse.csv", os.str());
}

void write_probe_csv(const fs::path& dir, const std::vector<Eigen::Index>& vars,
                     const std::vector<std::vector<double>>& values) {
  std::ostringstream os;
  os << "sample,var,value\n";
  for (std::size_t v = 0; v < vars.size(); ++v)
    for (std::size_t i = 0; i < values[v].size(); ++i)
      os << i << "," << vars[v] << "," << format_double(values[v][i]) << "\n";
  write_text_atomic(dir / "probe.csv", os.str());
}

std::vector<Eigen::Index> probe_vars(const RunConfig& cfg) {
  if (is_ode(cfg.problem)) return {1, 2};
  return {probe_point(cfg).first};
}

std::map<Eigen::Index, std::vector<double>> read_probe_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot read probe file: " + path.string());
  std::map<Eigen::Index, std::vector<double>> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
      throw ArtifactError("malformed probe row in " + path.string() + ": " + line);
    out[std::stoll(b)].push_back(std::stod(c));
  }
  return out;
}

PodBasis require_pod(const RunConfig& cfg) {
  fs::path p = stage_dir(cfg, "pod-build", false) / "pod.morb";
  if (!fs::exists(p))
    throw ArtifactError("POD basis not found: " + p.string() + "; run pod-build first");
  return load_pod_basis(p);
}

// Builds the per-sample reduced system used by ROM runs and as the DR-RNN
// residual binding (Problems 4-5). When a DEIM operator is supplied the
// nonlinearity is hyper-reduced; otherwise plain Galerkin.
RomSystem reduce_sample(const RunConfig& cfg, const Vec& params, const PodBasis& basis,
                        const DeimOperator* deim) {
  auto [fom, y0] = build_fom_for(cfg, params);
  (void)y0;
  RomSystem rom = deim != nullptr ? build_pod_deim_rom(fom, basis, *deim)
                                  : galerkin_project(fom, basis);
  if (cfg.problem == ProblemId::TwoPhase) {
    TwoPhaseSpec spec = twophase_spec_for(cfg, params(0));
    add_bound_penalty(rom, spec.s_min(), spec.s_max());
  }
  return rom;
}

struct RomRollout {
  std::vector<Trajectory> reduced;
  std::vector<Trajectory> lifted;
  std::vector<std::shared_ptr<const FomSystem>> systems;
};

RomRollout run_rom_ensemble(const RunConfig& cfg, const Mat& samples, int first, int count,
                            const PodBasis& basis, const DeimOperator* deim) {
  RomRollout out;
  TimeGrid grid = rom_grid(cfg);
  NewtonConfig newton;
  for (int i = first; i < first + count; ++i) {
    auto [fom, y0] = build_fom_for(cfg, samples.row(i).transpose());
    RomSystem rom = reduce_sample(cfg, samples.row(i).transpose(), basis, deim);
    Vec y0r = rom.project(y0);
    Trajectory red = integrate_implicit_euler(rom.sys, y0r, grid, newton);
    Trajectory lift;
    lift.grid = red.grid;
    lift.states = basis.basis * red.states;
    out.reduced.push_back(std::move(red));
    out.lifted.push_back(std::move(lift));
    out.systems.push_back(std::make_shared<FomSystem>(rom.sys));
  }
  return out;
}

// Reference trajectories on the ROM timeline. The heat grid already matches;
// twophase reruns the sequential-implicit solver at the coarser step so the
// comparison is at matched time points.
std::vector<Trajectory> reference_on_rom_grid(const RunConfig& cfg, const Mat& samples,
                                              int first, int count,
                                              const EnsembleResult& stored) {
  TimeGrid grid = rom_grid(cfg);
  if (cfg.problem != ProblemId::TwoPhase) {
    std::vector<Trajectory> out;
    for (int i = first; i < first + count; ++i) {
      if (!stored.ok(i))
        throw NumericalError("reference sample " + std::to_string(i) + " failed upstream: " +
                             *stored.failures[i]);
      out.push_back(stored.trajectories[i]);
    }
    return out;
  }
  std::vector<Trajectory> out;
  NewtonConfig newton;
  for (int i = first; i < first + count; ++i) {
    TwoPhaseSpec spec = twophase_spec_for(cfg, samples(i, 0));
    out.push_back(sequential_implicit_run(spec, grid, newton, cfg.pressure_update_every));
  }
  return out;
}

TrainingConfig training_config(const RunConfig& cfg) {
  TrainingConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.iterations = cfg.iterations;
  tc.seed = cfg.seed + 1;  // decouple weight init from parameter sampling
  tc.learning_rate = cfg.learning_rate;
  tc.lr_decay = cfg.lr_decay;
  tc.trainable_transform = !is_ode(cfg.problem);
  return tc;
}

std::string model_filename(const RunConfig& cfg) {
  return "drrnn_K" + std::to_string(cfg.layers) + ".drnn";
}

// ---------------------------------------------------------------- stages --

int stage_fom_run(const RunConfig& cfg) {
  fs::path dir = stage_dir(cfg, "fom-run", true);
  EnsembleSpec spec = ensemble_spec_for(cfg);
  Mat samples = sample_parameters(spec);
  EnsembleResult res = run_ensemble(fom_runner(cfg), samples, cfg.threads);

  std::vector<fs::path> outputs;
  {
    std::vector<std::string> header = {"sample"};
    for (Eigen::Index j = 0; j < samples.cols(); ++j)
      header.push_back("p_" + std::to_string(j));
    Mat rows(samples.rows(), samples.cols() + 1);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) rows(i, 0) = double(i);
    rows.rightCols(samples.cols()) = samples;
    write_csv(dir / "samples.csv", header, rows);
    outputs.push_back(dir / "samples.csv");
  }

  int failures = 0;
  std::ostringstream fail_log;
  fail_log << "sample,message\n";
  for (int i = 0; i < res.count(); ++i) {
    if (!res.ok(i)) {
      ++failures;
      fail_log << i << ",\"" << *res.failures[i] << "\"\n";
      continue;
    }
    fs::path p = dir / traj_name("traj", i);
    write_trajectory_csv(res.trajectories[i], p);
    if (i < 3) outputs.push_back(p);  // hash a few representatives, not thousands
  }
  write_text_atomic(dir / "failures.csv", fail_log.str());
  outputs.push_back(dir / "failures.csv");

  auto [var, step] = probe_point(cfg);
  (void)var;
  std::vector<std::vector<double>> probes;
  for (Eigen::Index v : probe_vars(cfg)) probes.push_back(probe_values(res, v, step));
  write_probe_csv(dir, probe_vars(cfg), probes);
  outputs.push_back(dir / "probe.csv");

  write_manifest(dir, cfg, "fom-run", {}, outputs,
                 {{"samples", cfg.count}, {"failures", failures},
                  {"dt", cfg.dt}, {"steps", cfg.steps}});
  std::cout << "fom-run: " << cfg.count - failures << "/" << cfg.count
            << " samples solved -> " << dir.string() << "\n";
  return 0;
}

int stage_pod_build(const RunConfig& cfg) {
  if (cfg.rank < 1) throw ConfigError("pod-build requires reduction.rank >= 1");
  fs::path fom_dir = stage_dir(cfg, "fom-run", false);
  fs::path dir = stage_dir(cfg, "pod-build", true);

  int n_train = train_count(cfg);
  std::vector<fs::path> paths;
  for (int i = 0; i < n_train; ++i) {
    fs::path p = fom_dir / traj_name("traj", i);
    if (!fs::exists(p))
      throw ArtifactError("missing FOM trajectory for training sample " + std::to_string(i) +
                          ": " + p.string());
    paths.push_back(p);
  }
  SnapshotMatrix X = read_snapshot_matrix(paths);
  PodBasis basis = compute_pod_basis(X, cfg.rank);

  save_pod_basis(basis, dir / "pod.morb");
  Mat sv(basis.singular_values.size(), 2);
  for (Eigen::Index i = 0; i < sv.rows(); ++i) {
    sv(i, 0) = double(i);
    sv(i, 1) = basis.singular_values(i);
  }
  write_csv(dir / "singular_values.csv", {"index", "sigma"}, sv);

  double tail = basis.singular_values.tail(basis.singular_values.size() - cfg.rank)
                    .squaredNorm();
  write_manifest(dir, cfg, "pod-build", {paths.front(), paths.back()},
                 {dir / "pod.morb", dir / "singular_values.csv"},
                 {{"rank", cfg.rank}, {"snapshots", X.data.cols()},
                  {"discarded_energy", tail}});
  std::cout << "pod-build: rank " << cfg.rank << " basis from " << X.data.cols()
            << " snapshots -> " << (dir / "pod.morb").string() << "\n";
  return 0;
}

int stage_deim_build(const RunConfig& cfg) {
  if (cfg.problem != ProblemId::TwoPhase)
    throw ConfigError("deim-build applies only to problem 'twophase'");
  if (cfg.deim_m < 1) throw ConfigError("deim-build requires reduction.deim_m >= 1");
  fs::path fom_dir = stage_dir(cfg, "fom-run", false);
  fs::path dir = stage_dir(cfg, "deim-build", true);
  PodBasis basis = require_pod(cfg);

  TwoPhaseSpec spec = twophase_spec_for(cfg, 0.2);
  auto flux = [&spec](const Vec& s) {
    Vec f(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) f(i) = fractional_flow(s(i), spec).first;
    return f;
  };

  std::vector<fs::path> paths;
  std::vector<Trajectory> trajs;
  for (int i = 0; i < train_count(cfg); ++i) {
    fs::path p = fom_dir / traj_name("traj", i);
    if (!fs::exists(p))
      throw ArtifactError("missing FOM trajectory for training sample " + std::to_string(i) +
                          ": " + p.string());
    paths.push_back(p);
    trajs.push_back(read_trajectory_csv(p));
  }
  SnapshotMatrix F = assemble_snapshots(trajs, flux);
  PodBasis fpod = compute_pod_basis(F, cfg.deim_m);
  std::vector<Eigen::Index> idx = deim_select(fpod.basis);
  DeimOperator op = build_deim_operator(fpod.basis, idx, basis);

  save_deim_operator(op, dir / "deim.morb");
  Mat rows(idx.size(), 2);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    rows(Eigen::Index(i), 0) = double(i);
    rows(Eigen::Index(i), 1) = double(idx[i]);
  }
  write_csv(dir / "indices.csv", {"order", "cell"}, rows);

  write_manifest(dir, cfg, "deim-build", {paths.front(), paths.back()},
                 {dir / "deim.morb", dir / "indices.csv"},
                 {{"m", cfg.deim_m}, {"condition_number", op.condition_number}});
  std::cout << "deim-build: m=" << cfg.deim_m << ", cond(P^T V_m)=" << op.condition_number
            << " -> " << (dir / "deim.morb").string() << "\n";
  return 0;
}

int stage_rom_run(const RunConfig& cfg) {
  if (cfg.rank < 1) throw ConfigError("rom-run requires reduction.rank >= 1");
  fs::path dir = stage_dir(cfg, "rom-run", true);
  PodBasis basis = require_pod(cfg);
  if (basis.r != cfg.rank)
    throw ConfigError("stored POD rank " + std::to_string(basis.r) +
                      " does not match reduction.rank " + std::to_string(cfg.rank));

  std::optional<DeimOperator> deim;
  fs::path deim_path = stage_dir(cfg, "deim-build", false) / "deim.morb";
  if (cfg.problem == ProblemId::TwoPhase && fs::exists(deim_path))
    deim = load_deim_operator(deim_path);
  std::string method = deim ? "pod-deim" : "pod-galerkin";

  Mat samples = sample_parameters(ensemble_spec_for(cfg));
  EnsembleResult stored = load_fom_ensemble(cfg);

  int n_train = train_count(cfg), n_test = test_count(cfg);
  RomRollout train_roll =
      run_rom_ensemble(cfg, samples, 0, n_train, basis, deim ? &*deim : nullptr);
  RomRollout test_roll =
      run_rom_ensemble(cfg, samples, n_train, n_test, basis, deim ? &*deim : nullptr);

  auto ref_train = reference_on_rom_grid(cfg, samples, 0, n_train, stored);
  auto ref_test = reference_on_rom_grid(cfg, samples, n_train, n_test, stored);
  double mse_train = ensemble_mse(make_result(train_roll.lifted), make_result(ref_train));
  double mse_test = ensemble_mse(make_result(test_roll.lifted), make_result(ref_test));

  std::vector<fs::path> outputs;
  for (int i = 0; i < std::min(n_test, 10); ++i) {
    fs::path p = dir / traj_name("rom_traj", n_train + i);
    write_trajectory_csv(test_roll.lifted[i], p);
    outputs.push_back(p);
  }
  auto [var, step] = probe_point(cfg);
  (void)var;
  int rstep = static_cast<int>(test_roll.lifted.front().columns()) - 1;
  if (cfg.problem == ProblemId::Heat) rstep = step;
  EnsembleResult lifted = make_result(test_roll.lifted);
  std::vector<std::vector<double>> probes;
  for (Eigen::Index v : probe_vars(cfg)) probes.push_back(probe_values(lifted, v, rstep));
  write_probe_csv(dir, probe_vars(cfg), probes);
  outputs.push_back(dir / "probe.csv");

  write_mse_row(dir, method, cfg.rank, mse_train, mse_test);
  outputs.push_back(dir / "mse.csv");
  write_manifest(dir, cfg, "rom-run", {stage_dir(cfg, "pod-build", false) / "pod.morb"},
                 outputs,
                 {{"method", method}, {"rank", cfg.rank},
                  {"mse_train", mse_train}, {"mse_test", mse_test}});
  std::cout << "rom-run: " << method << " r=" << cfg.rank
            << " mse_train=" << mse_train << " mse_test=" << mse_test << "\n";
  return 0;
}

// Assembles training/test datasets. ODE problems learn the full-order
// residual directly from FOM sequences (optionally at an enlarged step);
// Problems 4-5 learn the reduced residual with per-sample ROM bindings and
// Galerkin-ROM target sequences.
struct TrainSetup {
  Dataset train, test;
  std::shared_ptr<const FomSystem> model_system;
  double dt = 0.0;
};

TrainSetup build_training_data(const RunConfig& cfg) {
  TrainSetup setup;
  Mat samples = sample_parameters(ensemble_spec_for(cfg));
  int n_train = train_count(cfg), n_test = test_count(cfg);

  if (is_ode(cfg.problem)) {
    EnsembleResult stored = load_fom_ensemble(cfg);
    int mult = cfg.dt_multiplier;
    if (cfg.steps % mult != 0)
      throw ConfigError("grid.dt_multiplier must divide grid.steps");
    auto [fom, y0] = build_fom_for(cfg, samples.row(0).transpose());
    (void)y0;
    setup.model_system = std::make_shared<FomSystem>(std::move(fom));
    setup.dt = cfg.dt * mult;
    auto fill = [&](Dataset& d, int first, int count) {
      d.dt = setup.dt;
      for (int i = first; i < first + count; ++i) {
        if (!stored.ok(i))
          throw NumericalError("sample " + std::to_string(i) + " failed upstream: " +
                               *stored.failures[i]);
        d.sequences.push_back(subsample_columns(stored.trajectories[i].states, mult));
      }
    };
    fill(setup.train, 0, n_train);
    fill(setup.test, n_train, n_test);
    return setup;
  }

  PodBasis basis = require_pod(cfg);
  std::optional<DeimOperator> deim;
  if (cfg.problem == ProblemId::TwoPhase) {
    fs::path p = stage_dir(cfg, "deim-build", false) / "deim.morb";
    if (!fs::exists(p))
      throw ArtifactError("drrnn-train for twophase needs a DEIM operator: " + p.string());
    deim = load_deim_operator(p);
  }

  // Targets come from the plain Galerkin ROM; the residual binding is the
  // hyper-reduced system when available, so the trained stepper only ever
  // touches the cheap nonlinearity.
  RomRollout targets_train = run_rom_ensemble(cfg, samples, 0, n_train, basis, nullptr);
  RomRollout targets_test = run_rom_ensemble(cfg, samples, n_train, n_test, basis, nullptr);
  RomRollout bind_train = deim
      ? run_rom_ensemble(cfg, samples, 0, n_train, basis, &*deim)
      : std::move(targets_train);
  RomRollout bind_test = deim
      ? run_rom_ensemble(cfg, samples, n_train, n_test, basis, &*deim)
      : std::move(targets_test);
  const RomRollout& tt = deim ? targets_train : bind_train;
  const RomRollout& te = deim ? targets_test : bind_test;

  setup.dt = rom_grid(cfg).dt;
  setup.train.dt = setup.test.dt = setup.dt;
  for (int i = 0; i < n_train; ++i) {
    setup.train.sequences.push_back(tt.reduced[i].states);
    setup.train.systems.push_back(bind_train.systems[i]);
  }
  for (int i = 0; i < n_test; ++i) {
    setup.test.sequences.push_back(te.reduced[i].states);
    setup.test.systems.push_back(bind_test.systems[i]);
  }
  setup.model_system = bind_train.systems.front();
  return setup;
}

int stage_drrnn_train(const RunConfig& cfg) {
  fs::path dir = stage_dir(cfg, "drrnn-train", true);
  TrainSetup setup = build_training_data(cfg);
  TrainingConfig tc = training_config(cfg);

  std::mt19937_64 rng(tc.seed);
  DrRnnModel model = initialize_model(cfg.layers, setup.model_system, setup.dt, tc, rng);
  LossHistory history = train(model, setup.train, tc, &setup.test);

  fs::path model_path = dir / model_filename(cfg);
  save_drrnn_model(model, model_path);
  fs::path loss_path = dir / ("loss_K" + std::to_string(cfg.layers) + ".csv");
  write_loss_history_csv(history, loss_path);

  double final_train = history.train_mse.empty() ? 0.0 : history.train_mse.back();
  double final_test = history.test_mse.empty() ? 0.0 : history.test_mse.back();
  write_mse_row(dir, "drrnn", cfg.layers, final_train, final_test);
  write_manifest(dir, cfg, "drrnn-train", {}, {model_path, loss_path, dir / "mse.csv"},
                 {{"layers", cfg.layers}, {"parameters", count_parameters(model)},
                  {"dt", setup.dt}, {"dt_multiplier", cfg.dt_multiplier},
                  {"mse_train", final_train}, {"mse_test", final_test}});
  std::cout << "drrnn-train: K=" << cfg.layers << " d=" << count_parameters(model)
            << " mse_train=" << final_train << " mse_test=" << final_test << "\n";
  return 0;
}

int stage_drrnn_run(const RunConfig& cfg) {
  fs::path dir = stage_dir(cfg, "drrnn-run", true);
  fs::path model_path = stage_dir(cfg, "drrnn-train", false) / model_filename(cfg);
  if (!fs::exists(model_path))
    throw ArtifactError("trained model not found: " + model_path.string() +
                        "; run drrnn-train first");
  DrRnnModel model = load_drrnn_model(model_path);

  Mat samples = sample_parameters(ensemble_spec_for(cfg));
  EnsembleResult stored = load_fom_ensemble(cfg);
  int n_train = train_count(cfg), n_test = test_count(cfg);

  std::vector<Trajectory> pred;
  std::vector<Trajectory> ref;
  PodBasis basis;
  if (is_ode(cfg.problem)) {
    int mult = cfg.dt_multiplier;
    if (cfg.steps % mult != 0)
      throw ConfigError("grid.dt_multiplier must divide grid.steps");
    auto [fom, y0] = build_fom_for(cfg, samples.row(0).transpose());
    (void)y0;
    model.system = std::make_shared<FomSystem>(std::move(fom));
    model.dt = cfg.dt * mult;
    for (int i = n_train; i < n_train + n_test; ++i) {
      if (!stored.ok(i))
        throw NumericalError("sample " + std::to_string(i) + " failed upstream: " +
                             *stored.failures[i]);
      Mat target = subsample_columns(stored.trajectories[i].states, mult);
      pred.push_back(drrnn_rollout(model, target.col(0), int(target.cols()) - 1));
      Trajectory r;
      r.grid = TimeGrid(model.dt, int(target.cols()) - 1);
      r.states = target;
      ref.push_back(std::move(r));
    }
  } else {
    basis = require_pod(cfg);
    std::optional<DeimOperator> deim;
    fs::path p = stage_dir(cfg, "deim-build", false) / "deim.morb";
    if (cfg.problem == ProblemId::TwoPhase && fs::exists(p)) deim = load_deim_operator(p);
    RomRollout bind = run_rom_ensemble(cfg, samples, n_train, n_test, basis,
                                       deim ? &*deim : nullptr);
    ref = reference_on_rom_grid(cfg, samples, n_train, n_test, stored);
    model.dt = rom_grid(cfg).dt;
    for (int i = 0; i < n_test; ++i) {
      model.system = bind.systems[i];
      auto [fom, y0] = build_fom_for(cfg, samples.row(n_train + i).transpose());
      (void)fom;
      Vec y0r = basis.basis.transpose() * y0;
      Trajectory red = drrnn_rollout(model, y0r, rom_grid(cfg).steps);
      Trajectory lift;
      lift.grid = red.grid;
      lift.states = basis.basis * red.states;
      pred.push_back(std::move(lift));
    }
  }

  double mse_test = ensemble_mse(make_result(pred), make_result(ref));
  std::vector<fs::path> outputs;
  for (int i = 0; i < std::min<int>(int(pred.size()), 10); ++i) {
    fs::path p = dir / traj_name("drrnn_traj", n_train + i);
    write_trajectory_csv(pred[i], p);
    outputs.push_back(p);
  }
  auto [var, step] = probe_point(cfg);
  (void)var;
  int rstep = int(pred.front().columns()) - 1;
  if (cfg.problem == ProblemId::Heat) rstep = step;
  EnsembleResult pres = make_result(pred);
  std::vector<std::vector<double>> probes;
  for (Eigen::Index v : probe_vars(cfg)) probes.push_back(probe_values(pres, v, rstep));
  write_probe_csv(dir, probe_vars(cfg), probes);
  outputs.push_back(dir / "probe.csv");

  write_mse_row(dir, "drrnn", cfg.layers, 0.0, mse_test);
  outputs.push_back(dir / "mse.csv");
  write_manifest(dir, cfg, "drrnn-run", {model_path}, outputs,
                 {{"layers", cfg.layers}, {"mse_test", mse_test},
                  {"dt_multiplier", cfg.dt_multiplier}});
  std::cout << "drrnn-run: K=" << cfg.layers << " mse_test=" << mse_test << "\n";
  return 0;
}

int stage_uq_report(const RunConfig& cfg) {
  fs::path dir = stage_dir(cfg, "uq-report", true);
  fs::path fom_probe = stage_dir(cfg, "fom-run", false) / "probe.csv";
  if (!fs::exists(fom_probe))
    throw ArtifactError("fom-run probe values not found: " + fom_probe.string());
  auto ref = read_probe_csv(fom_probe);

  std::vector<std::pair<std::string, fs::path>> methods;
  for (const char* stage : {"rom-run", "drrnn-run"}) {
    fs::path p = stage_dir(cfg, stage, false) / "probe.csv";
    if (fs::exists(p)) methods.emplace_back(stage, p);
  }
  if (methods.empty())
    throw ArtifactError("uq-report needs at least one of rom-run/drrnn-run outputs");

  // FOM probes cover the whole ensemble; surrogate runs cover the test
  // split. Compare distributions over the test split only.
  int n_train = train_count(cfg), n_test = test_count(cfg);
  std::vector<fs::path> outputs;
  std::ostringstream l1;
  l1 << "method,var,l1_distance\n";
  for (auto& [var, vals] : ref) {
    std::vector<double> fom_vals(
        vals.begin() + std::min<std::size_t>(n_train, vals.size()),
        vals.begin() + std::min<std::size_t>(n_train + n_test, vals.size()));
    KdeEstimate fom_kde = kde_estimate(fom_vals);
    std::ostringstream table;
    table << "x,fom";
    std::vector<KdeEstimate> kdes;
    for (auto& [name, path] : methods) {
      auto probes = read_probe_csv(path);
      auto it = probes.find(var);
      if (it == probes.end())
        throw ArtifactError("probe file " + path.string() + " lacks var " +
                            std::to_string(var));
      KdeEstimate k = kde_estimate(it->second, fom_kde.grid, 0.0);
      l1 << name << "," << var << "," << format_double(kde_l1_distance(k, fom_kde)) << "\n";
      table << "," << name;
      kdes.push_back(std::move(k));
    }
    table << "\n";
    for (Eigen::Index i = 0; i < fom_kde.grid.size(); ++i) {
      table << format_double(fom_kde.grid(i)) << "," << format_double(fom_kde.density(i));
      for (const auto& k : kdes) table << "," << format_double(k.density(i));
      table << "\n";
    }
    fs::path tp = dir / ("kde_var" + std::to_string(var) + ".csv");
    write_text_atomic(tp, table.str());
    outputs.push_back(tp);
  }
  write_text_atomic(dir / "l1_distances.csv", l1.str());
  outputs.push_back(dir / "l1_distances.csv");

  // Aggregate the per-stage mse tables for a single-glance summary.
  std::ostringstream summary;
  summary << "method,rank_or_layers,mse_train,mse_test\n";
  for (const char* stage : {"rom-run", "drrnn-train", "drrnn-run"}) {
    fs::path p = stage_dir(cfg, stage, false) / "mse.csv";
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      if (!line.empty()) summary << line << "\n";
  }
  write_text_atomic(dir / "mse_summary.csv", summary.str());
  outputs.push_back(dir / "mse_summary.csv");

  write_manifest(dir, cfg, "uq-report", {fom_probe}, outputs,
                 {{"methods", methods.size()}, {"test_samples", n_test}});
  std::cout << "uq-report: wrote KDE tables and L1 distances -> " << dir.string() << "\n";
  return 0;
}

int stage_stability_check(const RunConfig& cfg) {
  if (cfg.problem != ProblemId::TwoPhase)
    throw ConfigError("stability-check applies only to problem 'twophase'");
  fs::path dir = stage_dir(cfg, "stability-check", true);

  TwoPhaseSpec spec = twophase_spec_for(cfg, 0.2);  // reference porosity
  Vec s0 = Vec::Constant(spec.n_cells, spec.s_ow);
  PressureField field = solve_pressure(s0, spec);
  auto dflux = [&spec](double s) { return fractional_flow(s, spec).second; };
  double bound = von_neumann_dt_bound(spec.porosity, spec.dx(), field.velocity, dflux,
                                      spec.s_min(), spec.s_max());

  double rom_dt = rom_grid(cfg).dt;
  std::ostringstream os;
  os << "quantity,value\n";
  os << "explicit_dt_bound," << format_double(bound) << "\n";
  os << "fom_dt," << format_double(cfg.dt) << "\n";
  os << "rom_dt," << format_double(rom_dt) << "\n";
  os << "fom_dt_over_bound," << format_double(cfg.dt / bound) << "\n";
  os << "rom_dt_over_bound," << format_double(rom_dt / bound) << "\n";
  write_text_atomic(dir / "stability.csv", os.str());

  std::cout << "stability-check: explicit von Neumann bound dt <= " << bound << "\n";
  std::cout << "  configured fom dt = " << cfg.dt << " ("
            << (cfg.dt <= bound ? "within" : "exceeds") << " the explicit bound; the"
            << " implicit solver is unconditionally stable)\n";
  std::cout << "  configured rom dt = " << rom_dt << " ("
            << (rom_dt <= bound ? "within" : "exceeds") << " the explicit bound)\n";
  write_manifest(dir, cfg, "stability-check", {}, {dir / "stability.csv"},
                 {{"explicit_dt_bound", bound}, {"fom_dt", cfg.dt}, {"rom_dt", rom_dt}});
  return 0;
}

}  // namespace

EnsembleSpec ensemble_spec_for(const RunConfig& cfg) {
  EnsembleSpec spec;
  spec.count = cfg.count;
  spec.seed = cfg.seed;
  spec.train_size = train_count(cfg);
  spec.test_size = test_count(cfg);
  switch (cfg.problem) {
    case ProblemId::P1: spec.bounds = {{-1.0, 1.0}}; break;
    case ProblemId::P2: spec.bounds = {{-1.0, 1.0}, {-1.0, 1.0}}; break;
    case ProblemId::P3: spec.bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}}; break;
    case ProblemId::Heat: spec.bounds = {{0.01, 0.08}}; break;
    case ProblemId::TwoPhase: spec.bounds = {{0.18, 0.38}}; break;
  }
  return spec;
}

TwoPhaseSpec twophase_spec_for(const RunConfig& cfg, double porosity) {
  TwoPhaseSpec spec;
  spec.n_cells = cfg.n_cells;
  spec.porosity = porosity;
  spec.rho_w = cfg.rho_w;
  spec.rho_o = cfg.rho_o;
  if (!cfg.permeability_file.empty()) {
    std::ifstream in(cfg.permeability_file);
    std::vector<double> vals;
    std::string line;
    while (std::getline(in, line)) {
      std::string s = line;
      if (s.empty()) continue;
      try {
        vals.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw ConfigError("permeability_file: non-numeric line: '" + s + "'");
      }
    }
    if (int(vals.size()) != cfg.n_cells)
      throw ConfigError("permeability_file has " + std::to_string(vals.size()) +
                        " values, expected " + std::to_string(cfg.n_cells));
    spec.permeability = Eigen::Map<Vec>(vals.data(), Eigen::Index(vals.size()));
  } else if (cfg.permeability != 1.0) {
    spec.permeability = Vec::Constant(cfg.n_cells, cfg.permeability);
  }
  return spec;
}

std::pair<FomSystem, Vec> build_fom_for(const RunConfig& cfg, const Vec& params) {
  switch (cfg.problem) {
    case ProblemId::P1:
    case ProblemId::P2:
    case ProblemId::P3: {
      OdeFamilySpec spec;
      spec.variant = cfg.problem == ProblemId::P1   ? OdeVariant::P1
                     : cfg.problem == ProblemId::P2 ? OdeVariant::P2
                                                    : OdeVariant::P3;
      spec.inputs = params;
      return build_problem123(spec);
    }
    case ProblemId::Heat: {
      HeatProblemSpec spec;
      spec.dx = cfg.dx;
      spec.alpha = params(0);
      return build_heat_fom(spec);
    }
    case ProblemId::TwoPhase: {
      TwoPhaseSpec spec = twophase_spec_for(cfg, params(0));
      Vec s0 = Vec::Constant(spec.n_cells, spec.s_ow);
      FomSystem sys = build_saturation_fom(solve_pressure(s0, spec), spec);
      sys.params = params;
      return {std::move(sys), s0};
    }
  }
  throw ContractError("build_fom_for: unreachable");
}

std::function<Trajectory(const Vec&)> fom_runner(const RunConfig& cfg) {
  TimeGrid grid = fom_grid(cfg);
  NewtonConfig newton;
  if (cfg.problem == ProblemId::TwoPhase) {
    return [cfg, grid, newton](const Vec& params) {
      TwoPhaseSpec spec = twophase_spec_for(cfg, params(0));
      return sequential_implicit_run(spec, grid, newton, cfg.pressure_update_every);
    };
  }
  return [cfg, grid, newton](const Vec& params) {
    auto [sys, y0] = build_fom_for(cfg, params);
    return integrate_implicit_euler(sys, y0, grid, newton);
  };
}

std::pair<Eigen::Index, int> probe_point(const RunConfig& cfg) {
  switch (cfg.problem) {
    case ProblemId::P1:
    case ProblemId::P2:
    case ProblemId::P3:
      return {1, cfg.steps};  // y_2 (and y_3 via probe_vars) at the horizon
    case ProblemId::Heat: {
      // interior node nearest x=0.45, time nearest t=0.45
      Eigen::Index var = Eigen::Index(std::llround(0.45 / cfg.dx)) - 1;
      int step = std::min(cfg.steps, int(std::llround(0.45 / cfg.dt)));
      return {var, step};
    }
    case ProblemId::TwoPhase: {
      Eigen::Index var = Eigen::Index(0.45 * cfg.n_cells);  // cell containing x=0.45
      return {var, cfg.steps};
    }
  }
  throw ContractError("probe_point: unreachable");
}

int dispatch(const std::string& subcommand, const RunConfig& cfg) {
  if (subcommand == "fom-run") return stage_fom_run(cfg);
  if (subcommand == "pod-build") return stage_pod_build(cfg);
  if (subcommand == "deim-build") return stage_deim_build(cfg);
  if (subcommand == "rom-run") return stage_rom_run(cfg);
  if (subcommand == "drrnn-train") return stage_drrnn_train(cfg);
  if (subcommand == "drrnn-run") return stage_drrnn_run(cfg);
  if (subcommand == "uq-report") return stage_uq_report(cfg);
  if (subcommand == "stability-check") return stage_stability_check(cfg);
  throw ConfigError("unknown subcommand '" + subcommand + "'");
}

}  // namespace mor
