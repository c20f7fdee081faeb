// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_CONFIG_HPP
#define MOR_CONFIG_HPP

#include <filesystem>
#include <string>

namespace mor {

enum class ProblemId { P1, P2, P3, Heat, TwoPhase };

std::string to_string(ProblemId id);
ProblemId problem_from_string(const std::string& s);

// Aggregated experiment settings, parsed from a line-oriented
// `key = value` file with `[section]` headers. Unknown keys are errors;
// unset keys take per-problem defaults.
struct RunConfig {
  ProblemId problem = ProblemId::P1;

  // [grid]
  double dt = 0.0;           // per-problem default when 0
  int steps = 0;
  double dx = 0.01;          // heat
  int n_cells = 64;          // twophase
  double rom_dt = 0.0;       // twophase ROM runs (paper uses a larger step)
  int dt_multiplier = 1;     // large-time-step study

  // [ensemble]
  int count = 0;
  std::uint64_t seed = 42;
  int train_size = 0;
  int test_size = 0;

  // [reduction]
  int rank = 0;
  int deim_m = 0;

  // [model]
  int layers = 4;

  // [training]
  int batch_size = 0;
  int iterations = 0;
  double learning_rate = 0.001;
  double lr_decay = 1.0;
  int train_samples = 0;     // ROM-training sample count (Problems 4-5)

  // [twophase]
  int pressure_update_every = 5;
  double permeability = 1.0;
  std::string permeability_file;  // optional CSV column file
  double rho_w = 1.0;
  double rho_o = 1.0;

  // [output]
  std::string out_dir = "out";
  int threads = 1;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");

// Applies a single `section.key = value` override (CLI flags) and
// re-validates the result. Unknown keys are ConfigErrors.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

std::string serialize_config(const RunConfig& cfg);

}  // namespace mor

#endif
