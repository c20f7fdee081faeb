// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_PIPELINE_HPP
#define MOR_PIPELINE_HPP

#include <functional>
#include <string>
#include <vector>

#include "mor/config.hpp"
#include "mor/drrnn.hpp"
#include "mor/problems.hpp"
#include "mor/reduction.hpp"
#include "mor/uq.hpp"

namespace mor {

// Experiment stages wired by the CLI. Each stage reads its declared inputs
// from the output tree and writes artifacts plus a manifest under
// out_dir/<problem>/<stage>/.
inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {
      "fom-run",   "pod-build",  "deim-build", "rom-run",
      "drrnn-train", "drrnn-run", "uq-report",  "stability-check"};
  return stages;
}

EnsembleSpec ensemble_spec_for(const RunConfig& cfg);
TwoPhaseSpec twophase_spec_for(const RunConfig& cfg, double porosity);

// The full-order system and initial state for one parameter draw.
std::pair<FomSystem, Vec> build_fom_for(const RunConfig& cfg, const Vec& params);

// Per-sample FOM solver on the configured grid.
std::function<Trajectory(const Vec&)> fom_runner(const RunConfig& cfg);

// Probe location (state index, time index) used for KDE reporting.
std::pair<Eigen::Index, int> probe_point(const RunConfig& cfg);

int dispatch(const std::string& subcommand, const RunConfig& cfg);

}  // namespace mor

#endif
