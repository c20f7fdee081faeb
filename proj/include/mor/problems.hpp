// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_PROBLEMS_HPP
#define MOR_PROBLEMS_HPP

#include <utility>
#include <vector>

#include "mor/dynsys.hpp"

namespace mor {

// Three-state nonlinear ODE family; the variants differ only in which
// initial-condition entries are drawn from U[-1,1].
enum class OdeVariant { P1, P2, P3 };

struct OdeFamilySpec {
  OdeVariant variant = OdeVariant::P1;
  Vec inputs;  // x (P1), (x1,x2) (P2), (x1,x2,x3) (P3)

  static int stochastic_dim(OdeVariant v) {
    switch (v) {
      case OdeVariant::P1: return 1;
      case OdeVariant::P2: return 2;
      default: return 3;
    }
  }
};

struct HeatProblemSpec {
  double dx = 0.01;
  double alpha = 0.04;           // diffusion coefficient, U[0.01, 0.08]
  double source_lo = 0.4;
  double source_hi = 0.6;
};

struct TwoPhaseSpec {
  int n_cells = 64;
  double porosity = 0.2;         // U[0.18, 0.38]
  Vec permeability;              // per cell; uniform 1 if empty
  double mu_w = 0.1;
  double mu_o = 1.0;
  double s_or = 0.2;
  double s_ow = 0.2;
  double q_in = 0.1;             // injection rate at x=0
  double q_out = -0.1;           // production rate at x=1
  double rho_w = 1.0;
  double rho_o = 1.0;

  double dx() const { return 1.0 / n_cells; }
  double s_min() const { return s_ow; }
  double s_max() const { return 1.0 - s_or; }
};

struct PressureField {
  Vec pressure;  // cell values, n
  Vec velocity;  // edge values, n+1 (no-flow boundaries: first and last zero)
};

std::pair<FomSystem, Vec> build_problem123(const OdeFamilySpec& spec);

std::pair<FomSystem, Vec> build_heat_fom(const HeatProblemSpec& spec);

// Brooks-Corey relative permeabilities k_rw = s*^2, k_ro = (1-s*)^2 with
// s* = s - s_or - s_ow clamped to [0,1].
std::pair<double, double> brooks_corey(double s, const TwoPhaseSpec& spec);

// Water fractional flow f = lambda_w / (lambda_w + lambda_o) and its
// analytic derivative.
std::pair<double, double> fractional_flow(double s, const TwoPhaseSpec& spec);

double total_mobility(double s, const TwoPhaseSpec& spec);

PressureField solve_pressure(const Vec& saturation, const TwoPhaseSpec& spec);

// Upwind finite-volume saturation system ds/dt = A f(s) + b for a frozen
// velocity field. The production well removes mixture at the local
// fractional flow, which folds into the diagonal of A.
FomSystem build_saturation_fom(const PressureField& vel, const TwoPhaseSpec& spec);

Trajectory sequential_implicit_run(const TwoPhaseSpec& spec, const TimeGrid& grid,
                                   const NewtonConfig& cfg, int pressure_update_every);

}  // namespace mor

#endif
