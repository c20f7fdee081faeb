// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_UQ_HPP
#define MOR_UQ_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mor/dynsys.hpp"

namespace mor {

struct EnsembleSpec {
  std::vector<std::pair<double, double>> bounds;  // per-parameter uniform bounds
  int count = 1;                                  // L
  std::uint64_t seed = 0;
  int train_size = 0;
  int test_size = 0;
};

struct EnsembleResult {
  Mat samples;  // L x d parameter draws
  std::vector<Trajectory> trajectories;         // empty states on failure
  std::vector<std::optional<std::string>> failures;

  int count() const { return static_cast<int>(trajectories.size()); }
  bool ok(int i) const { return !failures[i].has_value(); }
};

struct KdeEstimate {
  Vec grid;
  Vec density;
  double bandwidth = 0.0;
};

Mat sample_parameters(const EnsembleSpec& spec);

// Runs the per-sample solver; failures are recorded per sample, never
// silently dropped. threads <= 1 runs sequentially; results are identical
// regardless of schedule since samples are independent.
EnsembleResult run_ensemble(const std::function<Trajectory(const Vec&)>& runner,
                            const Mat& samples, int threads = 1);

// Gaussian-kernel KDE; Silverman bandwidth 1.06*sigma*L^(-1/5) when
// bandwidth <= 0, grid of `grid_points` padded 4 bandwidths past the range
// when grid is empty.
KdeEstimate kde_estimate(const std::vector<double>& values, Vec grid = {},
                         double bandwidth = 0.0, int grid_points = 512);

double kde_l1_distance(const KdeEstimate& a, const KdeEstimate& b);

// Eq.-mseloss over matched ensembles; computed only over mutual successes.
double ensemble_mse(const EnsembleResult& pred, const EnsembleResult& ref);

// Probe extraction: value of component `var` at time index `step` per sample.
std::vector<double> probe_values(const EnsembleResult& res, Eigen::Index var, int step);

}  // namespace mor

#endif
