// SPDX-License-Identifier: Apache-2.0
#include "mor/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mor/errors.hpp"

namespace mor {

std::string to_string(ProblemId id) {
  switch (id) {
    case ProblemId::P1: return "p1";
    case ProblemId::P2: return "p2";
    case ProblemId::P3: return "p3";
    case ProblemId::Heat: return "heat";
    case ProblemId::TwoPhase: return "twophase";
  }
  return "?";
}

ProblemId problem_from_string(const std::string& s) {
  if (s == "p1") return ProblemId::P1;
  if (s == "p2") return ProblemId::P2;
  if (s == "p3") return ProblemId::P3;
  if (s == "heat") return ProblemId::Heat;
  if (s == "twophase") return ProblemId::TwoPhase;
  throw ConfigError("unknown problem id '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string> kKnownKeys = {
    "problem.id",
    "grid.dt", "grid.steps", "grid.dx", "grid.n_cells", "grid.rom_dt",
    "grid.dt_multiplier",
    "ensemble.count", "ensemble.seed", "ensemble.train", "ensemble.test",
    "reduction.rank", "reduction.deim_m",
    "model.layers",
    "training.batch_size", "training.iterations", "training.learning_rate",
    "training.samples", "training.lr_decay",
    "twophase.pressure_update_every", "twophase.permeability",
    "twophase.permeability_file", "twophase.rho_w", "twophase.rho_o",
    "output.dir", "output.threads",
};

double parse_num(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << "line " << line << ": key '" << key << "': not a number: '" << v << "'";
    throw ConfigError(os.str());
  }
}

int parse_int(const std::string& key, const std::string& v, int line) {
  double x = parse_num(key, v, line);
  if (x != static_cast<long long>(x)) {
    std::ostringstream os;
    os << "line " << line << ": key '" << key << "': expected integer, got '" << v << "'";
    throw ConfigError(os.str());
  }
  return static_cast<int>(x);
}

void apply_defaults(RunConfig& cfg) {
  switch (cfg.problem) {
    case ProblemId::P1:
    case ProblemId::P2:
    case ProblemId::P3:
      if (cfg.dt == 0.0) cfg.dt = 0.1;
      if (cfg.steps == 0) cfg.steps = 100;
      if (cfg.count == 0) cfg.count = 1500;
      if (cfg.train_size == 0) cfg.train_size = 500;
      if (cfg.test_size == 0) cfg.test_size = 1000;
      if (cfg.batch_size == 0) cfg.batch_size = 15;
      if (cfg.iterations == 0) cfg.iterations = 15;
      break;
    case ProblemId::Heat:
      if (cfg.dt == 0.0) cfg.dt = 0.03;
      if (cfg.steps == 0) cfg.steps = 40;
      if (cfg.count == 0) cfg.count = 500;
      if (cfg.rank == 0) cfg.rank = 15;
      if (cfg.train_samples == 0) cfg.train_samples = 100;
      if (cfg.batch_size == 0) cfg.batch_size = 20;
      if (cfg.iterations == 0) cfg.iterations = 100;
      break;
    case ProblemId::TwoPhase:
      if (cfg.dt == 0.0) cfg.dt = 0.015;
      if (cfg.rom_dt == 0.0) cfg.rom_dt = 0.03;
      if (cfg.steps == 0) cfg.steps = 100;
      if (cfg.count == 0) cfg.count = 500;
      if (cfg.rank == 0) cfg.rank = 35;
      if (cfg.deim_m == 0) cfg.deim_m = 35;
      if (cfg.train_samples == 0) cfg.train_samples = 100;
      if (cfg.batch_size == 0) cfg.batch_size = 20;
      if (cfg.iterations == 0) cfg.iterations = 100;
      break;
  }
}

void validate(const RunConfig& cfg) {
  auto bad = [](const std::string& what) { throw ConfigError("range error: " + what); };
  if (cfg.dt <= 0.0) bad("dt must be > 0");
  if (cfg.steps < 0) bad("steps must be >= 0");
  if (cfg.dx <= 0.0) bad("dx must be > 0");
  if (cfg.n_cells < 2) bad("n_cells must be >= 2");
  if (cfg.dt_multiplier < 1) bad("dt_multiplier must be >= 1");
  if (cfg.count < 1) bad("ensemble.count must be >= 1");
  if (cfg.train_size < 0 || cfg.test_size < 0) bad("split sizes must be >= 0");
  if (cfg.train_size + cfg.test_size > cfg.count)
    bad("train + test split exceeds ensemble count");
  if (cfg.rank < 0) bad("rank must be >= 0");
  if (cfg.deim_m < 0) bad("deim_m must be >= 0");
  if (cfg.layers < 1) bad("layers must be >= 1");
  if (cfg.batch_size < 1) bad("batch_size must be >= 1");
  if (cfg.iterations < 0) bad("iterations must be >= 0");
  if (cfg.learning_rate <= 0.0) bad("learning_rate must be > 0");
  if (cfg.lr_decay <= 0.0 || cfg.lr_decay > 1.0) bad("lr_decay must be in (0, 1]");
  if (cfg.pressure_update_every < 1) bad("pressure_update_every must be >= 1");
  if (cfg.permeability <= 0.0) bad("permeability must be > 0");
  if (cfg.rho_w <= 0.0 || cfg.rho_o <= 0.0) bad("densities must be > 0");
  if (cfg.threads < 1) bad("threads must be >= 1");
  if (!cfg.permeability_file.empty() &&
      !std::filesystem::exists(cfg.permeability_file))
    throw ConfigError("permeability_file does not exist: " + cfg.permeability_file);
}

// Assigns one known key; returns true when the key was 'problem.id'.
bool assign_key(RunConfig& cfg, const std::string& key, const std::string& v, int ln) {
  if (key == "problem.id") {
    cfg.problem = problem_from_string(v);
    return true;
  }
  if (key == "grid.dt") cfg.dt = parse_num(key, v, ln);
  else if (key == "grid.steps") cfg.steps = parse_int(key, v, ln);
  else if (key == "grid.dx") cfg.dx = parse_num(key, v, ln);
  else if (key == "grid.n_cells") cfg.n_cells = parse_int(key, v, ln);
  else if (key == "grid.rom_dt") cfg.rom_dt = parse_num(key, v, ln);
  else if (key == "grid.dt_multiplier") cfg.dt_multiplier = parse_int(key, v, ln);
  else if (key == "ensemble.count") cfg.count = parse_int(key, v, ln);
  else if (key == "ensemble.seed") cfg.seed = static_cast<std::uint64_t>(parse_num(key, v, ln));
  else if (key == "ensemble.train") cfg.train_size = parse_int(key, v, ln);
  else if (key == "ensemble.test") cfg.test_size = parse_int(key, v, ln);
  else if (key == "reduction.rank") cfg.rank = parse_int(key, v, ln);
  else if (key == "reduction.deim_m") cfg.deim_m = parse_int(key, v, ln);
  else if (key == "model.layers") cfg.layers = parse_int(key, v, ln);
  else if (key == "training.batch_size") cfg.batch_size = parse_int(key, v, ln);
  else if (key == "training.iterations") cfg.iterations = parse_int(key, v, ln);
  else if (key == "training.learning_rate") cfg.learning_rate = parse_num(key, v, ln);
  else if (key == "training.lr_decay") cfg.lr_decay = parse_num(key, v, ln);
  else if (key == "training.samples") cfg.train_samples = parse_int(key, v, ln);
  else if (key == "twophase.pressure_update_every")
    cfg.pressure_update_every = parse_int(key, v, ln);
  else if (key == "twophase.permeability") cfg.permeability = parse_num(key, v, ln);
  else if (key == "twophase.permeability_file") cfg.permeability_file = v;
  else if (key == "twophase.rho_w") cfg.rho_w = parse_num(key, v, ln);
  else if (key == "twophase.rho_o") cfg.rho_o = parse_num(key, v, ln);
  else if (key == "output.dir") cfg.out_dir = v;
  else if (key == "output.threads") cfg.threads = parse_int(key, v, ln);
  return false;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  assign_key(cfg, key, value, 0);
  validate(cfg);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  bool saw_problem = false;
  std::map<std::string, std::pair<std::string, int>> entries;

  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(origin + ": line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ": line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;
    if (!kKnownKeys.count(full))
      throw ConfigError(origin + ": line " + std::to_string(lineno) + ": unknown key '" +
                        full + "'");
    if (entries.count(full))
      throw ConfigError(origin + ": line " + std::to_string(lineno) + ": duplicate key '" +
                        full + "'");
    entries[full] = {value, lineno};
  }

  for (auto& [key, vl] : entries) {
    const auto& [v, ln] = vl;
    if (assign_key(cfg, key, v, ln)) saw_problem = true;
  }

  if (!saw_problem) throw ConfigError(origin + ": missing required key 'problem.id'");
  apply_defaults(cfg);
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot read config file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[problem]\nid = " << to_string(cfg.problem) << "\n\n";
  os << "[grid]\n";
  os << "dt = " << cfg.dt << "\n";
  os << "steps = " << cfg.steps << "\n";
  os << "dx = " << cfg.dx << "\n";
  os << "n_cells = " << cfg.n_cells << "\n";
  if (cfg.rom_dt > 0.0) os << "rom_dt = " << cfg.rom_dt << "\n";
  os << "dt_multiplier = " << cfg.dt_multiplier << "\n\n";
  os << "[ensemble]\n";
  os << "count = " << cfg.count << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "train = " << cfg.train_size << "\n";
  os << "test = " << cfg.test_size << "\n\n";
  os << "[reduction]\n";
  if (cfg.rank > 0) os << "rank = " << cfg.rank << "\n";
  if (cfg.deim_m > 0) os << "deim_m = " << cfg.deim_m << "\n";
  os << "\n[model]\nlayers = " << cfg.layers << "\n\n";
  os << "[training]\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "iterations = " << cfg.iterations << "\n";
  os << "learning_rate = " << cfg.learning_rate << "\n";
  os << "lr_decay = " << cfg.lr_decay << "\n";
  if (cfg.train_samples > 0) os << "samples = " << cfg.train_samples << "\n";
  os << "\n[twophase]\n";
  os << "pressure_update_every = " << cfg.pressure_update_every << "\n";
  os << "permeability = " << cfg.permeability << "\n";
  if (!cfg.permeability_file.empty())
    os << "permeability_file = " << cfg.permeability_file << "\n";
  os << "rho_w = " << cfg.rho_w << "\n";
  os << "rho_o = " << cfg.rho_o << "\n\n";
  os << "[output]\n";
  os << "dir = " << cfg.out_dir << "\n";
  os << "threads = " << cfg.threads << "\n";
  return os.str();
}

}  // namespace mor
