// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_REDUCTION_HPP
#define MOR_REDUCTION_HPP

#include <atomic>
#include <memory>
#include <vector>

#include "mor/dynsys.hpp"

namespace mor {

struct SnapshotMatrix {
  Mat data;  // n x total columns
  // (sample, time) provenance per column; empty when untracked
  std::vector<std::pair<int, int>> labels;
};

struct PodBasis {
  Mat basis;            // n x r, orthonormal columns
  Vec singular_values;  // full spectrum, length min(n, cols)
  Eigen::Index r = 0;
};

struct DeimOperator {
  std::vector<Eigen::Index> indices;  // m distinct rows
  Mat nonlinearity_basis;             // V_m, n x m
  Mat deim_matrix;                    // D = V_m (P^T V_m)^{-1}, n x m
  Mat sampling_rows_of_basis;         // P^T U_r, m x r
  double condition_number = 0.0;      // cond(P^T V_m)
};

// Reduced system: a FomSystem of dimension r plus the lifting basis.
struct RomSystem {
  FomSystem sys;
  Mat basis;  // U_r, n x r

  Vec lift(const Vec& reduced) const { return basis * reduced; }
  Vec project(const Vec& full) const { return basis.transpose() * full; }

  // counts scalar nonlinearity evaluations per nonlinear_fn call
  std::shared_ptr<std::atomic<long long>> nonlin_evals;
};

SnapshotMatrix assemble_snapshots(const std::vector<Trajectory>& trajectories,
                                  const std::function<Vec(const Vec&)>& map = {});

PodBasis compute_pod_basis(const SnapshotMatrix& X, Eigen::Index r);

RomSystem galerkin_project(const FomSystem& system, const PodBasis& basis);

// Greedy interpolation-point selection over the columns of V.
std::vector<Eigen::Index> deim_select(const Mat& V);

DeimOperator build_deim_operator(const Mat& V_m, const std::vector<Eigen::Index>& indices,
                                 const PodBasis& basis);

RomSystem build_pod_deim_rom(const FomSystem& system, const PodBasis& basis,
                             const DeimOperator& deim);

// Componentwise box constraints of the full-order model cannot be enforced
// on Newton iterates in reduced coordinates, so they enter the reduced
// dynamics as a stiff restoring term -kappa*max(s-hi,0)+kappa*max(lo-s,0)
// on the lifted state instead.
void add_bound_penalty(RomSystem& rom, double lo, double hi, double kappa = 1000.0);

}  // namespace mor

#endif
