// Sharp-interface energies: the unrelaxed energy on regular configurations
// and the relaxed energy with the sub-additive and cut envelopes.
#pragma once

#include <optional>
#include <string>

#include "epitaxy/elasticity.hpp"
#include "epitaxy/envelopes.hpp"
#include "epitaxy/geometry.hpp"

namespace epitaxy {

/// Energy value with an explicit +infinity tag; never an IEEE infinity.
class EnergyValue {
 public:
  static EnergyValue finite(double v) { return EnergyValue(false, v); }
  static EnergyValue infinite() { return EnergyValue(true, 0.0); }
  bool is_infinite() const { return infinite_; }
  /// Throws NumericalError on the infinite sentinel.
  double value() const;
  std::string str() const;

 private:
  EnergyValue(bool inf, double v) : infinite_(inf), value_(v) {}
  bool infinite_;
  double value_;
};

struct MassConstraints {
  double m = 0;  // adatom mass
  double M = 0;  // film area
  double tolerance = 1e-9;
};

struct SharpConfig {
  BVProfile profile;
  AdatomMeasure measure;
  /// Supplied displacement; when empty the elastic minimizer is used.
  std::optional<VectorField2> displacement;
};

struct SurfaceParts {
  double regular = 0;   // psi~ over the regular and jump parts
  double cut = 0;       // psi^c over the cut part
  double singular = 0;  // theta times the atom mass
  double total() const { return regular + cut + singular; }
};

SurfaceParts sharp_surface_energy(const AdatomMeasure& mu, const EnvelopeTable& env);

/// Film indicator per cell (centre below the pointwise profile value);
/// substrate cells are always inside.
CellField film_cells(const BVProfile& profile, const StripGrid& grid);

/// Cuts snapped to the nearest interior grid line.
std::vector<Crack> cracks_on_grid(const BVProfile& profile, const StripGrid& grid);

struct SharpBulk {
  double energy = 0;
  VectorField2 v;
  /// Sampled film area minus the exact area of the subgraph above y = 0.
  double area_error = 0;
  double residual = 0;
};

/// Bulk term with w = sampled indicator of the film and eta = 0.
SharpBulk sharp_bulk(const SharpConfig& config, const ElasticModel& model, const StripGrid& grid,
                     const DisplacementBC& bc = {});

struct SharpResult {
  double bulk = 0;
  SurfaceParts surface;
  EnergyValue total = EnergyValue::finite(0);
  bool area_ok = true;
  bool mass_ok = true;
  double area_error = 0;
  VectorField2 v;
};

/// Relaxed energy; constrained when masses are given (+infinity sentinel
/// when a constraint is violated).
SharpResult sharp_total(const SharpConfig& config, const EnvelopeTable& env,
                        const ElasticModel& model, const StripGrid& grid,
                        const DisplacementBC& bc = {},
                        const std::optional<MassConstraints>& constraints = std::nullopt);

/// Unrelaxed energy: +infinity unless the profile is Lipschitz-regular and
/// the measure has no atoms.
EnergyValue unrelaxed_energy(const SharpConfig& config, const SurfaceDensity& psi,
                             const ElasticModel& model, const StripGrid& grid,
                             const DisplacementBC& bc = {});

/// One-line CSV with header: bulk,regular_surface,cut_surface,singular_term,total,constraint_flags
void write_sharp_csv(const std::string& path, const SharpResult& r);

}  // namespace epitaxy
