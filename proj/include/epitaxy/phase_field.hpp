// Phase-field side: double-well potential, the constant sigma, the
// epsilon-energy G_eps over (w, v, u), the diffuse adatom measure, a
// bounded-Lipschitz distance between measures and a mass-constrained
// minimizer.
//
// Discretization: w is a nodal field on the whole grid (held at 1 below
// y = 0), u is constant per cell above y = 0. The surface energy of a cell
// is psi(u_c) / sigma times
//   eps * int_c |grad w|^2 + (|c| / 4 eps) * sum_{corners} P(w_i),
// i.e. the exact Q1 Dirichlet integral plus a lumped potential term.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "epitaxy/elasticity.hpp"
#include "epitaxy/envelopes.hpp"
#include "epitaxy/geometry.hpp"
#include "epitaxy/grid.hpp"

namespace epitaxy {

class DoubleWell {
 public:
  /// c t^2 (1-t)^2
  static DoubleWell quartic(double c = 1.0);
  /// Piecewise linear through samples (t_k, P_k) covering [0, 1] with
  /// P = 0 exactly at t = 0 and t = 1 and positive in between; extended
  /// outside [0, 1] by tail_slope * distance.
  static DoubleWell sampled(std::vector<std::pair<double, double>> samples, double tail_slope);

  double operator()(double t) const;
  double derivative(double t) const;
  /// max of P over [0, 1]
  double max_unit() const;
  /// (r, C) with P(t) >= C |t| for |t| > r.
  std::pair<double, double> growth_witness() const;
  std::string describe() const;

 private:
  friend double sigma(const DoubleWell& p);
  DoubleWell() = default;
  bool quartic_ = true;
  double c_ = 1.0;
  std::vector<std::pair<double, double>> samples_;
  double tail_ = 0.0;
};

/// sigma = 2 int_0^1 sqrt(P): adaptive Gauss-Kronrod for the quartic,
/// exact for sampled wells.
double sigma(const DoubleWell& p);

struct PhaseConfig {
  explicit PhaseConfig(const StripGrid& g) : w(g), v(g), u(g) {}
  PhaseConfig(ScalarField w_, VectorField2 v_, CellField u_);
  const StripGrid& grid() const { return w.grid(); }
  ScalarField w;
  VectorField2 v;
  CellField u;
};

/// Box constraints, u >= 0, w = 1 below y = 0, shared grid. Throws InvalidInput.
void validate(const PhaseConfig& c);

/// Nodal eps |grad w|^2 + P(w)/eps (difference gradient).
ScalarField modica_density(const ScalarField& w, double eps, const DoubleWell& p);

/// Per-cell integral of the Modica-Mortola integrand (zero below y = 0).
CellField modica_cells(const ScalarField& w, double eps, const DoubleWell& p);

/// (1/sigma) int_{Q+} (eps |grad w|^2 + P(w)/eps).
double normalized_perimeter(const ScalarField& w, double eps, const DoubleWell& p, double sig);

struct PhaseProblem {
  double eps;
  DoubleWell potential;
  double sigma;
  SurfaceDensity psi;
  ElasticModel model;
  DisplacementBC bc;
};

/// eta_eps defaults to eps^2.
PhaseProblem make_problem(double eps, const DoubleWell& p, const SurfaceDensity& psi,
                          const ElasticModel& model, const DisplacementBC& bc = {});

struct PhaseEnergy {
  double bulk = 0;
  double surface = 0;
  double total() const { return bulk + surface; }
};

PhaseEnergy energy_eps(const PhaseConfig& c, const PhaseProblem& prob);
double surface_energy(const ScalarField& w, const CellField& u, const PhaseProblem& prob);

struct PhaseGradient {
  ScalarField w;  // zero on nodes below y = 0
  CellField u;
};

/// Gradient of energy_eps in (w, u) at fixed v.
PhaseGradient energy_gradient(const PhaseConfig& c, const PhaseProblem& prob);

struct DiffuseMeasure {
  CellField mass;  // per-cell mass (u / sigma) * integrand
  double total = 0;
};

DiffuseMeasure diffuse_measure(const PhaseConfig& c, double eps, const DoubleWell& p, double sig);

/// Integral of w over the cells above y = 0.
double phase_mass(const ScalarField& w);

/// Restores int_{Q+} w = M: box clamp, then an additive correction
/// proportional to min(w, 1 - w) on the nodes at or above y = 0.
void project_phase_mass(ScalarField& w, double M);

/// Rescales u so that mu_eps(R^2) = m; u is made uniform on the transition
/// cells if it vanishes there.
void renormalize_adatoms(CellField& u, const CellField& modica, double sig, double m);

struct WeightedPoint {
  Vec2 at;
  double mass;
};
using MeasureSample = std::vector<WeightedPoint>;

/// Cell centres with their masses (zero cells dropped).
MeasureSample sample(const DiffuseMeasure& mu);
/// Segments split into pieces of length <= spacing, mass at the midpoints;
/// atoms as points.
MeasureSample sample(const AdatomMeasure& mu, double spacing);

/// sup over the tensor hats phi(x) = (r/sqrt2) (1-|x-cx|/r)+ (1-|y-cy|/r)+,
/// r in {1, 1/4, 1/16}, centres on a lattice of spacing r/4 anchored at the
/// origin, of |int phi d(m1 - m2)|. Every hat is 1-Lipschitz and bounded by 1.
double weak_star_distance(const MeasureSample& m1, const MeasureSample& m2);

struct MinimizeOptions {
  int max_iterations = 4000;
  double rel_tol = 1e-7;
  int patience = 3;  // consecutive iterations below rel_tol
  double max_step = 1e6;
  /// Step w along P^{-1} grad with P = 2 eps K + (lambda / eps) D (K the Q1
  /// Dirichlet matrix, D the lumped mass, lambda ~ P'' at the wells)
  /// instead of the plain nodal gradient.
  bool precondition = true;
};

struct TraceRow {
  int iter;
  double bulk, surface, total, mass_w, mass_u, step;
};

struct MinimizeResult {
  PhaseConfig config;
  std::vector<TraceRow> trace;
  bool warning = false;
  std::string message;
  bool converged = false;
};

/// Alternating minimization: exact elastic solve, projected (optionally
/// preconditioned) step on w with exact area restoration, projected step on u with mass renormalization;
/// Barzilai-Borwein trial steps with Armijo backtracking. The adatom
/// constraint is mu_eps(R^2) = m.
MinimizeResult minimize_eps(const PhaseProblem& prob, double m, double M, PhaseConfig init,
                            const MinimizeOptions& options = {});

/// Bilinear resampling of w (then area projection), nearest-cell u (then
/// mass renormalization); v is reset to zero.
PhaseConfig resample(const PhaseConfig& c, const StripGrid& grid, const PhaseProblem& prob,
                     double m, double M);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace epitaxy
