// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_DYNSYS_HPP
#define MOR_DYNSYS_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "mor/errors.hpp"

namespace mor {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Semi-linear dynamical system dy/dt = A y + F(y) + b, with F evaluated
// componentwise and an analytic Jacobian of F. F/JF may be empty, meaning
// a purely linear system.
struct FomSystem {
  Eigen::Index n = 0;
  Mat linear_op;                             // A, n x n
  std::function<Vec(const Vec&)> nonlinear_fn;        // y -> F(y)
  std::function<Mat(const Vec&)> nonlinear_jacobian;  // y -> J_F(y)
  Vec forcing;                               // b, zero if empty
  Vec params;                                // problem parameter vector a

  // Optional projection applied to Newton iterates (e.g. saturation bounds).
  std::function<void(Vec&)> project;

  // Optional componentwise factorization F(y) = component_matrix * f.(y)
  // with a scalar map f applied entrywise. Hyper-reduction interpolates f,
  // so it needs this structure explicitly.
  Mat component_matrix;
  std::function<double(double)> component_fn;
  std::function<double(double)> component_dfn;

  bool has_nonlinearity() const { return static_cast<bool>(nonlinear_fn); }
  bool has_componentwise() const {
    return component_matrix.size() > 0 && static_cast<bool>(component_fn);
  }
};

struct TimeGrid {
  double dt = 0.0;
  int steps = 0;
  double t0 = 0.0;

  TimeGrid() = default;
  TimeGrid(double dt_, int steps_, double t0_ = 0.0) : dt(dt_), steps(steps_), t0(t0_) {
    if (dt <= 0.0) throw ContractError("TimeGrid: dt must be positive");
    if (steps < 0) throw ContractError("TimeGrid: steps must be >= 0");
  }
  double time_at(int k) const { return t0 + k * dt; }
};

// Snapshot container: column j is the state after j steps, column 0 the
// initial condition.
struct Trajectory {
  Mat states;   // n x (steps+1)
  TimeGrid grid;

  Eigen::Index dim() const { return states.rows(); }
  Eigen::Index columns() const { return states.cols(); }
  Vec final_state() const { return states.col(states.cols() - 1); }
};

struct NewtonConfig {
  double tol = 1e-9;     // absolute residual 2-norm
  int max_iters = 50;
  double damping = 1.0;  // step scaling in (0,1]
};

struct SolveStats {
  int iterations = 0;
  double final_residual_norm = 0.0;
};

Vec eval_rhs(const FomSystem& system, const Vec& y);

// Implicit-Euler residual r = y_next - y_prev - dt*(A y_next + F(y_next) + b).
Vec assemble_residual(const FomSystem& system, const Vec& y_next, const Vec& y_prev,
                      double dt);

// d r / d y_next = I - dt*A - dt*J_F(y_next).
Mat residual_jacobian(const FomSystem& system, const Vec& y_next, double dt);

// One implicit-Euler step by Newton iteration started from y_prev.
// Throws NumericalError on non-convergence or a singular linear solve.
std::pair<Vec, SolveStats> newton_step_solve(const FomSystem& system, const Vec& y_prev,
                                             double dt, const NewtonConfig& cfg);

Trajectory integrate_implicit_euler(const FomSystem& system, const Vec& y0,
                                    const TimeGrid& grid, const NewtonConfig& cfg);

// Explicit-transport time-step bound phi*dx / max(v * df/ds), the max taken
// over cells and over s sampled densely in [s_lo, s_hi]. Returns +inf when
// the denominator vanishes.
double von_neumann_dt_bound(double porosity, double dx, const Vec& velocity,
                            const std::function<double(double)>& dflux_dsat,
                            double s_lo, double s_hi, int samples = 10000);

}  // namespace mor

#endif
