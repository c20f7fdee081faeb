// SPDX-License-Identifier: Apache-2.0
#include "mor/problems.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mor {

std::pair<FomSystem, Vec> build_problem123(const OdeFamilySpec& spec) {
  if (spec.inputs.size() != OdeFamilySpec::stochastic_dim(spec.variant))
    throw ContractError("build_problem123: inputs length does not match variant");

  FomSystem sys;
  sys.n = 3;
  sys.linear_op = Mat::Zero(3, 3);
  sys.params = spec.inputs;
  sys.nonlinear_fn = [](const Vec& y) {
    Vec f(3);
    f << y(0) * y(2), -y(1) * y(2), -y(0) * y(0) + y(1) * y(1);
    return f;
  };
  sys.nonlinear_jacobian = [](const Vec& y) {
    Mat J(3, 3);
    J << y(2), 0.0, y(0),
         0.0, -y(2), -y(1),
         -2.0 * y(0), 2.0 * y(1), 0.0;
    return J;
  };

  Vec y0(3);
  switch (spec.variant) {
    case OdeVariant::P1:
      y0 << 1.0, 0.1 * spec.inputs(0), 0.0;
      break;
    case OdeVariant::P2:
      y0 << 1.0, 0.1 * spec.inputs(0), spec.inputs(1);
      break;
    case OdeVariant::P3:
      y0 << spec.inputs(0), spec.inputs(1), spec.inputs(2);
      break;
  }
  return {std::move(sys), std::move(y0)};
}

std::pair<FomSystem, Vec> build_heat_fom(const HeatProblemSpec& spec) {
  const double inv = 1.0 / spec.dx;
  const double cells = inv;
  if (std::abs(cells - std::round(cells)) > 1e-9)
    throw ContractError("build_heat_fom: dx must divide [0,1] evenly");
  const int n = static_cast<int>(std::round(cells)) - 1;  // interior nodes

  FomSystem sys;
  sys.n = n;
  const double c = spec.alpha / (spec.dx * spec.dx);
  sys.linear_op = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    sys.linear_op(i, i) = -2.0 * c;
    if (i > 0) sys.linear_op(i, i - 1) = c;
    if (i + 1 < n) sys.linear_op(i, i + 1) = c;
  }
  sys.forcing = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    double x = (i + 1) * spec.dx;
    if (x >= spec.source_lo && x <= spec.source_hi) sys.forcing(i) = 1.0;
  }
  Vec p(1);
  p << spec.alpha;
  sys.params = p;
  return {std::move(sys), Vec::Zero(n)};
}

std::pair<double, double> brooks_corey(double s, const TwoPhaseSpec& spec) {
  double se = s - spec.s_or - spec.s_ow;
  se = std::clamp(se, 0.0, 1.0);
  double k_rw = se * se;
  double k_ro = (1.0 - se) * (1.0 - se);
  return {k_rw, k_ro};
}

std::pair<double, double> fractional_flow(double s, const TwoPhaseSpec& spec) {
  double se = s - spec.s_or - spec.s_ow;
  bool clamped = se <= 0.0 || se >= 1.0;
  se = std::clamp(se, 0.0, 1.0);
  double lw = se * se / spec.mu_w;
  double lo = (1.0 - se) * (1.0 - se) / spec.mu_o;
  double denom = lw + lo;
  double f = lw / denom;
  if (clamped) return {f, 0.0};
  double dlw = 2.0 * se / spec.mu_w;
  double dlo = -2.0 * (1.0 - se) / spec.mu_o;
  double df = (dlw * denom - lw * (dlw + dlo)) / (denom * denom);
  return {f, df};
}

double total_mobility(double s, const TwoPhaseSpec& spec) {
  auto [k_rw, k_ro] = brooks_corey(s, spec);
  return k_rw / spec.mu_w + k_ro / spec.mu_o;
}

PressureField solve_pressure(const Vec& saturation, const TwoPhaseSpec& spec) {
  const int n = spec.n_cells;
  if (saturation.size() != n)
    throw ContractError("solve_pressure: saturation length mismatch");
  const double dx = spec.dx();

  Vec perm = spec.permeability.size() == n ? spec.permeability : Vec::Ones(n);
  Vec mob(n);
  for (int j = 0; j < n; ++j) mob(j) = total_mobility(saturation(j), spec) * perm(j);
  if (mob.cwiseAbs().maxCoeff() == 0.0)
    throw NumericalError("solve_pressure: all mobilities vanish");

  // harmonic interface mobility, edges 1..n-1; no-flow at 0 and n
  Vec edge_mob = Vec::Zero(n + 1);
  for (int j = 1; j < n; ++j) {
    double a = mob(j - 1), b = mob(j);
    edge_mob(j) = (a + b) > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
  }

  // Cell source densities; q_total = q_w/rho_w + q_o/rho_o. The injected
  // fluid is water, the produced fluid is mixture; for the divergence
  // constraint only the total rate matters.
  Vec q = Vec::Zero(n);
  q(0) = spec.q_in / dx / spec.rho_w;
  q(n - 1) = spec.q_out / dx / spec.rho_o;

  Mat M = Mat::Zero(n, n);
  Vec rhs = Vec::Zero(n);
  for (int j = 0; j < n; ++j) {
    double tl = edge_mob(j) / dx;
    double tr = edge_mob(j + 1) / dx;
    M(j, j) = tl + tr;
    if (j > 0) M(j, j - 1) = -tl;
    if (j + 1 < n) M(j, j + 1) = -tr;
    rhs(j) = dx * q(j);
  }
  // Pure Neumann problem: pin the last-cell pressure to fix the gauge.
  M.row(n - 1).setZero();
  M(n - 1, n - 1) = 1.0;
  rhs(n - 1) = 0.0;

  Eigen::PartialPivLU<Mat> lu(M);
  Vec p = lu.solve(rhs);
  if (!p.allFinite()) throw NumericalError("solve_pressure: singular pressure system");

  PressureField field;
  field.pressure = p;
  field.velocity = Vec::Zero(n + 1);
  for (int j = 1; j < n; ++j)
    field.velocity(j) = -edge_mob(j) * (p(j) - p(j - 1)) / dx;
  return field;
}

FomSystem build_saturation_fom(const PressureField& vel, const TwoPhaseSpec& spec) {
  const int n = spec.n_cells;
  if (vel.velocity.size() != n + 1)
    throw ContractError("build_saturation_fom: velocity length mismatch");
  const double dx = spec.dx();
  const double scale = 1.0 / (spec.porosity * dx);

  // Upwind flux-difference operator acting on f(s), scaled by 1/(phi dx);
  // the producer removes mixture at the local fractional flow, which is
  // linear in f and folds into the diagonal.
  Mat flux = Mat::Zero(n, n);
  for (int j = 1; j < n; ++j) {
    double v = vel.velocity(j);
    int up = v >= 0.0 ? j - 1 : j;
    flux(j - 1, up) -= v * scale;
    flux(j, up) += v * scale;
  }
  flux(n - 1, n - 1) -= (-spec.q_out / dx) * scale / spec.rho_w;

  Vec b = Vec::Zero(n);
  b(0) = (spec.q_in / dx) / spec.rho_w / spec.porosity;

  TwoPhaseSpec cl = spec;  // captured by value for the componentwise maps
  FomSystem sys;
  sys.n = n;
  sys.linear_op = Mat::Zero(n, n);  // the A of dy/dt = A f(s) + b acts on f, not s
  sys.forcing = std::move(b);
  sys.nonlinear_fn = [cl, flux](const Vec& s) {
    Vec f(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) f(i) = fractional_flow(s(i), cl).first;
    return Vec(flux * f);
  };
  sys.nonlinear_jacobian = [cl, flux](const Vec& s) {
    Vec df(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) df(i) = fractional_flow(s(i), cl).second;
    return Mat(flux * df.asDiagonal());
  };
  sys.component_matrix = flux;
  sys.component_fn = [cl](double s) { return fractional_flow(s, cl).first; };
  sys.component_dfn = [cl](double s) { return fractional_flow(s, cl).second; };
  double lo = spec.s_min(), hi = spec.s_max();
  sys.project = [lo, hi](Vec& s) {
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::clamp(s(i), lo, hi);
  };
  Vec p(1);
  p << spec.porosity;
  sys.params = p;
  return sys;
}

Trajectory sequential_implicit_run(const TwoPhaseSpec& spec, const TimeGrid& grid,
                                   const NewtonConfig& cfg, int pressure_update_every) {
  if (pressure_update_every < 1)
    throw ContractError("sequential_implicit_run: pressure_update_every must be >= 1");
  const int n = spec.n_cells;
  Trajectory traj;
  traj.grid = grid;
  traj.states.resize(n, grid.steps + 1);
  traj.states.col(0) = Vec::Constant(n, spec.s_ow);

  FomSystem sys;
  for (int k = 0; k < grid.steps; ++k) {
    if (k % pressure_update_every == 0) {
      PressureField field = solve_pressure(traj.states.col(k), spec);
      sys = build_saturation_fom(field, spec);
    }
    try {
      auto [s_next, stats] = newton_step_solve(sys, traj.states.col(k), grid.dt, cfg);
      traj.states.col(k + 1) = s_next;
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "sequential_implicit_run: step " << k + 1 << ": " << e.what();
      throw NumericalError(os.str());
    }
  }
  return traj;
}

}  // namespace mor
