// Recovery sequences: for a sharp configuration (h, v, mu) build phase-field
// triples (w_eps, v_eps, u_eps) with exact masses whose energies approach the
// sharp energy from above.
//
// w_eps is z(x, y / alpha) with z = gamma(d_Omega + c) for the mollified
// profile, gamma the transition profile of eps^2 gamma'^2 = P(gamma) + lift
// and alpha fixing the film area. v_eps is the sharp displacement translated
// upwards; u_eps rescales a grid-constant density by the diffuse perimeter
// of each cover rectangle.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epitaxy/elasticity.hpp"
#include "epitaxy/envelopes.hpp"
#include "epitaxy/geometry.hpp"
#include "epitaxy/grid.hpp"
#include "epitaxy/phase_field.hpp"
#include "epitaxy/sharp_energy.hpp"

namespace epitaxy {

/// rho(x) = c exp(-1 / (1 - 4x^2)) on (-1/2, 1/2), unit mass.
double mollifier(double x);

/// g_eps = rho_eps * h sampled on a uniform grid of spacing <= eps / 16,
/// with the kernel renormalized near x = a, b and a final multiplicative
/// correction so that int g_eps = int h.
BVProfile mollify_profile(const BVProfile& h, double eps);

/// Decreasing solution of eps^2 gamma'^2 = P(gamma) + lift from 1 to 0,
/// obtained by inverting t(gamma) = eps int_gamma^1 dtau / sqrt(P + lift).
/// The argument is physical: gamma(t) = 1 for t <= 0 and 0 for t >= T.
class OptimalProfile {
 public:
  OptimalProfile(double eps, const DoubleWell& p, double lift, int samples = 4097);

  double eps() const { return eps_; }
  double lift() const { return lift_; }
  /// T = t(0), the length of the transition.
  double transition() const { return times_.back(); }
  double operator()(double t) const;
  double derivative(double t) const;
  /// gamma(s T): the transition rescaled onto [0, 1].
  double rescaled(double s) const { return (*this)(s * transition()); }
  /// t with gamma(t) = 1/2.
  double half_time() const;
  /// (1/eps) sqrt(max_[0,1] P + lift)
  double derivative_bound() const { return bound_; }
  /// |eps^2 gamma'^2 - P(gamma) - lift| with gamma' from a central difference
  /// of the interpolant.
  double residual(double t) const;

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  double eps_, lift_, bound_;
  DoubleWell p_;
  std::vector<double> times_, values_, slopes_;
};

/// The profile with lift sqrt(eps).
OptimalProfile optimal_profile(double eps, const DoubleWell& p);

struct RecoveryOptions {
  /// Lift used by build_w; eps^2 when unset.
  std::optional<double> lift;
  /// Cover size delta = delta_factor * eps * (1 + l).
  double delta_factor = 4.0;
  /// The level 1/2 of w sits outset * eps outside Gamma.
  double outset = 0.25;
  /// Cell size bound as a fraction of eps.
  double cell_fraction = 0.25;
};

struct PhaseBuild {
  ScalarField w;
  double alpha = 1;
  double transition = 0;  // T of the profile used
};

/// w(x, y) = gamma(d(x, y / alpha) + inset) for y >= 0 (1 below), then an
/// exact area projection on the grid. With inset = 0 the whole transition
/// lies outside the film. Throws InvalidInput if M exceeds the grid capacity.
PhaseBuild build_w(const BVProfile& g, const OptimalProfile& gamma, double M, const StripGrid& grid,
                   double inset = 0.0);

/// Translation of the sharp displacement by a whole number of rows covering
/// shift: v_eps(x, y) = v(x, y - s) where w(x, y - s) > 0, else 0.
VectorField2 build_v(const VectorField2& v_sharp, const ScalarField& w, double shift);

struct AdatomBuild {
  CellField u;
  std::vector<double> perimeter;  // p^j per cover rectangle
  std::vector<double> length;     // H^1(Gamma cap R^j)
  std::vector<double> density;    // u^j
};

/// Diffuse density from a grid-constant measure (segments lying in single
/// rectangles of the cover). Every transition cell is charged to the
/// rectangle holding its nearest point of Gamma; u_c = H^1 u^j / p^j.
/// Throws NumericalError when a rectangle carrying mass has p^j = 0.
AdatomBuild build_u(const AdatomMeasure& grid_constant, const AdmissibleCover& cover,
                    const ScalarField& w, double eps, const DoubleWell& p, double sig);

struct RecoveryStep {
  double eps = 0;
  double alpha = 1;
  double ell = 1;
  double transition = 0;
  double shift = 0;
  double delta = 0;
  double mass_w = 0;
  double mass_mu = 0;
  double bulk = 0;
  double surface = 0;
  double sharp_total = 0;
  double gap = 0;  // (G_eps - F) / F
  double strain_squared = 0;   // int_{Q+} |E(v_eps)|^2
  double displacement_l2 = 0;  // ||v_eps - v||_{L2} on the step grid
  double perimeter = 0;        // normalized Modica-Mortola term of w
  PhaseConfig config;
  BVProfile mollified;
  AdatomBuild adatoms;
};

struct RecoveryBundle {
  std::vector<RecoveryStep> steps;
  double sharp_total = 0;
  double sharp_bulk = 0;
  SurfaceParts sharp_surface;
};

/// Builds the sequence for every eps of the schedule and evaluates both
/// energies. The sharp reference is computed on the grid of the smallest eps.
/// Atoms are projected onto the cover first.
RecoveryBundle recovery_sequence(const SharpConfig& sharp, std::span<const double> schedule,
                                 const DoubleWell& p, const SurfaceDensity& psi,
                                 const ElasticModel& model, const DisplacementBC& bc = {},
                                 const RecoveryOptions& options = {});

/// CSV columns epsilon,alpha,mass_w,mass_mu,bulk,surface,sharp_total,gap.
void write_recovery_csv(const std::string& path, const RecoveryBundle& bundle);

}  // namespace epitaxy
