// SPDX-License-Identifier: Apache-2.0
#include "mor/reduction.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <iostream>
#include <sstream>

namespace mor {

SnapshotMatrix assemble_snapshots(const std::vector<Trajectory>& trajectories,
                                  const std::function<Vec(const Vec&)>& map) {
  if (trajectories.empty()) throw ContractError("assemble_snapshots: no trajectories");
  const Eigen::Index n = trajectories.front().dim();
  Eigen::Index cols = 0;
  for (const auto& t : trajectories) {
    if (t.dim() != n)
      throw ContractError("assemble_snapshots: trajectory dimension mismatch");
    cols += t.columns();
  }
  SnapshotMatrix X;
  X.data.resize(map ? map(Vec(trajectories.front().states.col(0))).size() : n, cols);
  X.labels.reserve(cols);
  Eigen::Index c = 0;
  for (int s = 0; s < static_cast<int>(trajectories.size()); ++s) {
    const Mat& st = trajectories[s].states;
    for (Eigen::Index j = 0; j < st.cols(); ++j) {
      X.data.col(c) = map ? map(Vec(st.col(j))) : Vec(st.col(j));
      X.labels.emplace_back(s, static_cast<int>(j));
      ++c;
    }
  }
  return X;
}

PodBasis compute_pod_basis(const SnapshotMatrix& X, Eigen::Index r) {
  const Eigen::Index n = X.data.rows();
  const Eigen::Index cols = X.data.cols();
  if (r < 1 || r > std::min(n, cols))
    throw ContractError("compute_pod_basis: rank out of range");
  Eigen::BDCSVD<Mat> svd(X.data, Eigen::ComputeThinU);
  PodBasis pod;
  pod.basis = svd.matrixU().leftCols(r);
  pod.singular_values = svd.singularValues();
  pod.r = r;
  return pod;
}

RomSystem galerkin_project(const FomSystem& system, const PodBasis& basis) {
  if (basis.basis.rows() != system.n)
    throw ContractError("galerkin_project: basis dimension mismatch");
  const Mat U = basis.basis;
  RomSystem rom;
  rom.basis = U;
  rom.nonlin_evals = std::make_shared<std::atomic<long long>>(0);
  rom.sys.n = basis.r;
  rom.sys.linear_op = U.transpose() * system.linear_op * U;
  if (system.forcing.size() > 0) rom.sys.forcing = U.transpose() * system.forcing;
  if (system.nonlinear_fn) {
    auto counter = rom.nonlin_evals;
    auto F = system.nonlinear_fn;
    rom.sys.nonlinear_fn = [U, F, counter](const Vec& yr) {
      counter->fetch_add(U.rows());
      return Vec(U.transpose() * F(U * yr));
    };
  }
  if (system.nonlinear_jacobian) {
    auto JF = system.nonlinear_jacobian;
    rom.sys.nonlinear_jacobian = [U, JF](const Vec& yr) {
      return Mat(U.transpose() * JF(U * yr) * U);
    };
  }
  rom.sys.params = system.params;
  return rom;
}

std::vector<Eigen::Index> deim_select(const Mat& V) {
  const Eigen::Index n = V.rows();
  const Eigen::Index m = V.cols();
  if (m < 1 || m > n) throw ContractError("deim_select: bad basis shape");

  std::vector<Eigen::Index> idx;
  idx.reserve(m);
  auto argmax_abs = [](const Vec& v) {
    Eigen::Index best = 0;
    double mag = std::abs(v(0));
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      double a = std::abs(v(i));
      if (a > mag) {  // ties keep the lowest index
        mag = a;
        best = i;
      }
    }
    return best;
  };

  idx.push_back(argmax_abs(V.col(0)));
  for (Eigen::Index l = 1; l < m; ++l) {
    Mat Vl = V.leftCols(l);
    Mat PtV(l, l);
    Vec Ptv(l);
    for (Eigen::Index i = 0; i < l; ++i) {
      PtV.row(i) = Vl.row(idx[i]);
      Ptv(i) = V(idx[i], l);
    }
    Eigen::FullPivLU<Mat> lu(PtV);
    if (!lu.isInvertible()) {
      std::ostringstream os;
      os << "deim_select: singular interpolation system at column " << l;
      throw NumericalError(os.str());
    }
    Vec c = lu.solve(Ptv);
    Vec rho = V.col(l) - Vl * c;
    idx.push_back(argmax_abs(rho));
  }
  return idx;
}

DeimOperator build_deim_operator(const Mat& V_m, const std::vector<Eigen::Index>& indices,
                                 const PodBasis& basis) {
  const Eigen::Index n = V_m.rows();
  const Eigen::Index m = V_m.cols();
  if (static_cast<Eigen::Index>(indices.size()) != m)
    throw ContractError("build_deim_operator: index count mismatch");
  {
    auto sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ContractError("build_deim_operator: duplicate indices");
    if (sorted.front() < 0 || sorted.back() >= n)
      throw ContractError("build_deim_operator: index out of range");
  }

  Mat PtV(m, m);
  for (Eigen::Index i = 0; i < m; ++i) PtV.row(i) = V_m.row(indices[i]);

  Eigen::JacobiSVD<Mat> svd(PtV, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smin = svd.singularValues()(m - 1);
  if (smin <= 0.0)
    throw NumericalError("build_deim_operator: singular P^T V_m");
  double cond = svd.singularValues()(0) / smin;
  if (cond > 1e8)
    std::cerr << "warning: DEIM interpolation matrix condition number " << cond << "\n";

  DeimOperator op;
  op.indices = indices;
  op.nonlinearity_basis = V_m;
  op.deim_matrix = V_m * PtV.inverse();
  op.condition_number = cond;
  op.sampling_rows_of_basis.resize(m, basis.r);
  for (Eigen::Index i = 0; i < m; ++i)
    op.sampling_rows_of_basis.row(i) = basis.basis.row(indices[i]);
  return op;
}

RomSystem build_pod_deim_rom(const FomSystem& system, const PodBasis& basis,
                             const DeimOperator& deim) {
  if (!system.has_componentwise())
    throw ContractError(
        "build_pod_deim_rom: system lacks a componentwise nonlinearity factorization");
  if (basis.basis.rows() != system.n || deim.deim_matrix.rows() != system.n)
    throw ContractError("build_pod_deim_rom: dimension mismatch");

  const Mat U = basis.basis;
  const Mat PtU = deim.sampling_rows_of_basis;              // m x r
  const Mat A_deim = U.transpose() * system.component_matrix * deim.deim_matrix;  // r x m

  RomSystem rom;
  rom.basis = U;
  rom.nonlin_evals = std::make_shared<std::atomic<long long>>(0);
  rom.sys.n = basis.r;
  rom.sys.linear_op = U.transpose() * system.linear_op * U;
  if (system.forcing.size() > 0) rom.sys.forcing = U.transpose() * system.forcing;

  auto counter = rom.nonlin_evals;
  auto f = system.component_fn;
  auto df = system.component_dfn;
  rom.sys.nonlinear_fn = [A_deim, PtU, f, counter](const Vec& yr) {
    Vec sampled = PtU * yr;
    counter->fetch_add(sampled.size());
    for (Eigen::Index i = 0; i < sampled.size(); ++i) sampled(i) = f(sampled(i));
    return Vec(A_deim * sampled);
  };
  if (df) {
    rom.sys.nonlinear_jacobian = [A_deim, PtU, df](const Vec& yr) {
      Vec sampled = PtU * yr;
      for (Eigen::Index i = 0; i < sampled.size(); ++i) sampled(i) = df(sampled(i));
      return Mat(A_deim * sampled.asDiagonal() * PtU);
    };
  }
  rom.sys.params = system.params;
  return rom;
}

void add_bound_penalty(RomSystem& rom, double lo, double hi, double kappa) {
  if (lo >= hi) throw ContractError("add_bound_penalty: empty box");
  if (kappa <= 0.0) throw ContractError("add_bound_penalty: kappa must be > 0");
  const Mat U = rom.basis;
  if (U.rows() == 0 || U.cols() != rom.sys.n)
    throw ContractError("add_bound_penalty: rom lacks a lifting basis");
  auto base_f = rom.sys.nonlinear_fn;
  auto base_j = rom.sys.nonlinear_jacobian;
  rom.sys.nonlinear_fn = [U, lo, hi, kappa, base_f](const Vec& z) {
    Vec s = U * z;
    for (Eigen::Index j = 0; j < s.size(); ++j)
      s(j) = -kappa * std::max(s(j) - hi, 0.0) + kappa * std::max(lo - s(j), 0.0);
    Vec out = U.transpose() * s;
    if (base_f) out += base_f(z);
    return out;
  };
  rom.sys.nonlinear_jacobian = [U, lo, hi, kappa, base_j](const Vec& z) {
    Vec s = U * z;
    Vec d = Vec::Zero(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (s(j) > hi || s(j) < lo) d(j) = -kappa;
    Mat out = U.transpose() * d.asDiagonal() * U;
    if (base_j) out += base_j(z);
    return out;
  };
}

}  // namespace mor
