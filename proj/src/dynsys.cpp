// SPDX-License-Identifier: Apache-2.0
#include "mor/dynsys.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mor {

namespace {

void check_dim(const FomSystem& system, const Vec& y, const char* who) {
  if (y.size() != system.n) {
    std::ostringstream os;
    os << who << ": state length " << y.size() << " does not match system dimension "
       << system.n;
    throw ContractError(os.str());
  }
}

}  // namespace

Vec eval_rhs(const FomSystem& system, const Vec& y) {
  check_dim(system, y, "eval_rhs");
  Vec out = system.linear_op * y;
  if (system.nonlinear_fn) {
    Vec f = system.nonlinear_fn(y);
    if (f.size() != system.n)
      throw ContractError("eval_rhs: nonlinear_fn output length mismatch");
    out += f;
  }
  if (system.forcing.size() > 0) out += system.forcing;
  return out;
}

Vec assemble_residual(const FomSystem& system, const Vec& y_next, const Vec& y_prev,
                      double dt) {
  check_dim(system, y_next, "assemble_residual");
  check_dim(system, y_prev, "assemble_residual");
  if (dt <= 0.0) throw ContractError("assemble_residual: dt must be positive");
  return y_next - y_prev - dt * eval_rhs(system, y_next);
}

Mat residual_jacobian(const FomSystem& system, const Vec& y_next, double dt) {
  check_dim(system, y_next, "residual_jacobian");
  Mat J = Mat::Identity(system.n, system.n) - dt * system.linear_op;
  if (system.nonlinear_jacobian) {
    J -= dt * system.nonlinear_jacobian(y_next);
  }
  return J;
}

std::pair<Vec, SolveStats> newton_step_solve(const FomSystem& system, const Vec& y_prev,
                                             double dt, const NewtonConfig& cfg) {
  check_dim(system, y_prev, "newton_step_solve");
  if (dt <= 0.0) throw ContractError("newton_step_solve: dt must be positive");
  if (cfg.tol <= 0.0 || cfg.max_iters < 1)
    throw ContractError("newton_step_solve: invalid NewtonConfig");

  Vec y = y_prev;
  if (system.project) system.project(y);

  // Active-set projected Newton. A component clipped by the projection whose
  // residual still pushes it outward sits on an active bound: its equation
  // cannot hold and it is frozen out of the linearized solve. A pinned
  // component re-enters the free set as soon as its residual pulls inward.
  const Eigen::Index n = y.size();
  std::vector<int> clip_dir(n, 0);  // -1 clipped down, +1 clipped up, 0 free
  auto blocked = [&](Eigen::Index i, const Vec& r) {
    return (clip_dir[i] < 0 && r(i) > 0.0) || (clip_dir[i] > 0 && r(i) < 0.0);
  };
  auto free_norm = [&](const Vec& r) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!blocked(i, r)) sq += r(i) * r(i);
    return std::sqrt(sq);
  };

  SolveStats stats;
  Vec r = assemble_residual(system, y, y_prev, dt);
  double rnorm = free_norm(r);
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (rnorm <= cfg.tol) {
      stats.final_residual_norm = rnorm;
      return {y, stats};
    }
    std::vector<Eigen::Index> free;
    free.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!blocked(i, r)) free.push_back(i);
    Mat J = residual_jacobian(system, y, dt);
    Mat Jff(free.size(), free.size());
    Vec rf(free.size());
    for (std::size_t a = 0; a < free.size(); ++a) {
      rf(a) = r(free[a]);
      for (std::size_t b = 0; b < free.size(); ++b) Jff(a, b) = J(free[a], free[b]);
    }
    Eigen::PartialPivLU<Mat> lu(Jff);
    // PartialPivLU has no rank query; a vanishing diagonal pivot signals
    // singularity well enough for the dense systems handled here.
    if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() <
        1e-14 * std::max(1.0, Jff.cwiseAbs().maxCoeff())) {
      throw NumericalError("newton_step_solve: singular residual Jacobian");
    }
    Vec delta = lu.solve(rf);
    std::vector<bool> moved(n, false);
    for (std::size_t a = 0; a < free.size(); ++a) moved[free[a]] = true;

    // Backtracking line search on the free-residual norm: a full Newton step
    // can cycle around a sharp saturation front (the fractional-flow
    // derivative is strongly nonmonotone), while a shortened step converges.
    // The shortest step is accepted unconditionally so the active set can
    // still change; lack of progress then surfaces via max_iters.
    double alpha = 1.0;
    Vec y_trial, r_trial;
    std::vector<int> clip_trial;
    double n_trial = 0.0;
    for (;;) {
      Vec raw = y;
      for (std::size_t a = 0; a < free.size(); ++a)
        raw(free[a]) -= cfg.damping * alpha * delta(a);
      y_trial = raw;
      if (system.project) system.project(y_trial);
      clip_trial = clip_dir;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (y_trial(i) < raw(i)) clip_trial[i] = 1;
        else if (y_trial(i) > raw(i)) clip_trial[i] = -1;
        else if (moved[i]) clip_trial[i] = 0;
        // untouched pinned components keep their flag; the residual sign
        // test in blocked() releases them once the pull turns inward
      }
      r_trial = assemble_residual(system, y_trial, y_prev, dt);
      double sq = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        bool blk = (clip_trial[i] < 0 && r_trial(i) > 0.0) ||
                   (clip_trial[i] > 0 && r_trial(i) < 0.0);
        if (!blk) sq += r_trial(i) * r_trial(i);
      }
      n_trial = std::sqrt(sq);
      if ((std::isfinite(n_trial) && n_trial < rnorm) || alpha <= 1.0 / 64.0) break;
      alpha *= 0.5;
    }
    y = std::move(y_trial);
    clip_dir = std::move(clip_trial);
    r = std::move(r_trial);
    rnorm = n_trial;
    ++stats.iterations;
    if (!std::isfinite(rnorm))
      throw NumericalError("newton_step_solve: non-finite residual");
  }
  if (rnorm <= cfg.tol) {
    stats.final_residual_norm = rnorm;
    return {y, stats};
  }
  std::ostringstream os;
  os << "newton_step_solve: no convergence after " << cfg.max_iters
     << " iterations, residual norm " << rnorm;
  throw NumericalError(os.str());
}

Trajectory integrate_implicit_euler(const FomSystem& system, const Vec& y0,
                                    const TimeGrid& grid, const NewtonConfig& cfg) {
  check_dim(system, y0, "integrate_implicit_euler");
  Trajectory traj;
  traj.grid = grid;
  traj.states.resize(system.n, grid.steps + 1);
  traj.states.col(0) = y0;
  for (int k = 0; k < grid.steps; ++k) {
    try {
      auto [y_next, stats] = newton_step_solve(system, traj.states.col(k), grid.dt, cfg);
      traj.states.col(k + 1) = y_next;
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "integrate_implicit_euler: step " << k + 1 << ": " << e.what();
      throw NumericalError(os.str());
    }
  }
  return traj;
}

double von_neumann_dt_bound(double porosity, double dx, const Vec& velocity,
                            const std::function<double(double)>& dflux_dsat,
                            double s_lo, double s_hi, int samples) {
  if (porosity <= 0.0) throw ContractError("von_neumann_dt_bound: porosity must be > 0");
  if (dx <= 0.0) throw ContractError("von_neumann_dt_bound: dx must be > 0");
  if (samples < 2) throw ContractError("von_neumann_dt_bound: need >= 2 samples");
  double max_df = 0.0;
  for (int i = 0; i < samples; ++i) {
    double s = s_lo + (s_hi - s_lo) * static_cast<double>(i) / (samples - 1);
    max_df = std::max(max_df, std::abs(dflux_dsat(s)));
  }
  double vmax = velocity.size() > 0 ? velocity.cwiseAbs().maxCoeff() : 0.0;
  double denom = vmax * max_df;
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return porosity * dx / denom;
}

}  // namespace mor
