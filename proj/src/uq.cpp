// SPDX-License-Identifier: Apache-2.0
#include "mor/uq.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace mor {

Mat sample_parameters(const EnsembleSpec& spec) {
  if (spec.count < 1) throw ContractError("sample_parameters: count must be >= 1");
  if (spec.bounds.empty()) throw ContractError("sample_parameters: no bounds");
  for (auto& [lo, hi] : spec.bounds)
    if (lo > hi) throw ContractError("sample_parameters: unordered bounds");
  std::mt19937_64 rng(spec.seed);
  const int d = static_cast<int>(spec.bounds.size());
  Mat samples(spec.count, d);
  for (int i = 0; i < spec.count; ++i) {
    for (int j = 0; j < d; ++j) {
      auto [lo, hi] = spec.bounds[j];
      std::uniform_real_distribution<double> u(lo, hi);
      samples(i, j) = lo == hi ? lo : u(rng);
    }
  }
  return samples;
}

EnsembleResult run_ensemble(const std::function<Trajectory(const Vec&)>& runner,
                            const Mat& samples, int threads) {
  const int L = static_cast<int>(samples.rows());
  EnsembleResult res;
  res.samples = samples;
  res.trajectories.resize(L);
  res.failures.resize(L);

  auto work = [&](int i) {
    try {
      res.trajectories[i] = runner(samples.row(i).transpose());
    } catch (const std::exception& e) {
      res.failures[i] = e.what();
    }
  };

  if (threads <= 1) {
    for (int i = 0; i < L; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int nthreads = std::min(threads, L);
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < L; i = next.fetch_add(1)) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  return res;
}

KdeEstimate kde_estimate(const std::vector<double>& values, Vec grid, double bandwidth,
                         int grid_points) {
  if (values.empty()) throw ContractError("kde_estimate: empty input");
  const double L = static_cast<double>(values.size());
  if (bandwidth <= 0.0) {
    if (values.size() < 2)
      throw ContractError("kde_estimate: automatic bandwidth needs >= 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= L;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= (L - 1.0);
    double sigma = std::sqrt(var);
    if (sigma <= 0.0)
      throw ContractError("kde_estimate: degenerate sample for automatic bandwidth");
    bandwidth = 1.06 * sigma * std::pow(L, -0.2);
  }
  if (grid.size() == 0) {
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it - 4.0 * bandwidth;
    double hi = *hi_it + 4.0 * bandwidth;
    grid = Vec::LinSpaced(grid_points, lo, hi);
  }
  KdeEstimate kde;
  kde.grid = grid;
  kde.bandwidth = bandwidth;
  kde.density = Vec::Zero(grid.size());
  const double norm = 1.0 / (L * bandwidth * std::sqrt(2.0 * M_PI));
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (double v : values) {
      double z = (grid(i) - v) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    kde.density(i) = norm * acc;
  }
  return kde;
}

double kde_l1_distance(const KdeEstimate& a, const KdeEstimate& b) {
  if (a.grid.size() != b.grid.size() || (a.grid - b.grid).cwiseAbs().maxCoeff() > 0.0)
    throw ContractError("kde_l1_distance: grids differ");
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < a.grid.size(); ++i) {
    double da = std::abs(a.density(i) - b.density(i));
    double db = std::abs(a.density(i + 1) - b.density(i + 1));
    acc += 0.5 * (da + db) * (a.grid(i + 1) - a.grid(i));
  }
  return acc;
}

double ensemble_mse(const EnsembleResult& pred, const EnsembleResult& ref) {
  if (pred.count() != ref.count()) throw ContractError("ensemble_mse: ensemble size mismatch");
  double total = 0.0;
  int used = 0;
  for (int i = 0; i < pred.count(); ++i) {
    if (!pred.ok(i) || !ref.ok(i)) continue;
    const Mat& a = pred.trajectories[i].states;
    const Mat& b = ref.trajectories[i].states;
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw ContractError("ensemble_mse: trajectory shape mismatch");
    total += (a.rightCols(a.cols() - 1) - b.rightCols(b.cols() - 1)).squaredNorm();
    ++used;
  }
  if (used == 0) throw NumericalError("ensemble_mse: no mutual successes");
  return total / static_cast<double>(used);
}

std::vector<double> probe_values(const EnsembleResult& res, Eigen::Index var, int step) {
  std::vector<double> out;
  out.reserve(res.count());
  for (int i = 0; i < res.count(); ++i) {
    if (!res.ok(i)) continue;
    out.push_back(res.trajectories[i].states(var, step));
  }
  return out;
}

}  // namespace mor
