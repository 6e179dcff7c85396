#include "epitaxy/sharp_energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "epitaxy/errors.hpp"

namespace epitaxy {

double EnergyValue::value() const {
  if (infinite_) throw NumericalError("energy is +infinity");
  return value_;
}

std::string EnergyValue::str() const {
  if (infinite_) return "inf";
  std::ostringstream out;
  out << std::setprecision(12) << value_;
  return out.str();
}

SurfaceParts sharp_surface_energy(const AdatomMeasure& mu, const EnvelopeTable& env) {
  SurfaceParts parts;
  for (const auto& s : mu.segments()) {
    const double len = s.segment.length();
    if (s.cls == SegmentClass::Cut) parts.cut += env.cut(s.u) * len;
    else parts.regular += env.tilde(s.u) * len;
  }
  parts.singular = env.theta() * mu.singular_mass();
  return parts;
}

CellField film_cells(const BVProfile& profile, const StripGrid& grid) {
  require(grid.a() == profile.a() && grid.b() == profile.b(),
          "film_cells: grid and profile intervals differ");
  CellField chi(grid);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
      chi.at(i, j) = grid.cell_y(j) < profile.value(grid.cell_x(i)) ? 1.0 : 0.0;
  return chi;
}

std::vector<Crack> cracks_on_grid(const BVProfile& profile, const StripGrid& grid) {
  std::vector<Crack> out;
  for (const auto& c : profile.cuts()) {
    const int col = static_cast<int>(std::lround((c.x - grid.a()) / grid.hx()));
    require(col > 0 && col < grid.nx(), "cracks_on_grid: cut too close to the lateral boundary");
    out.push_back({col, c.value, c.lower_limit});
  }
  return out;
}

SharpBulk sharp_bulk(const SharpConfig& config, const ElasticModel& model, const StripGrid& grid,
                     const DisplacementBC& bc) {
  const auto chi = film_cells(config.profile, grid);
  const auto weight = ElasticWeight::cells(chi);
  const auto sharp_model = model.with_eta(0.0);
  SharpBulk out{0, VectorField2(grid), 0, 0};
  out.area_error = integrate(chi, Region::upper_half()) - config.profile.integral();
  if (config.displacement) {
    require(config.displacement->grid() == grid, "sharp_bulk: displacement on a different grid");
    // v = 0 at nodes that touch no film cell.
    const auto& v = *config.displacement;
    for (int j = 0; j <= grid.ny(); ++j)
      for (int i = 0; i <= grid.nx(); ++i) {
        bool touches = false;
        for (int cj = std::max(j - 1, 0); cj <= std::min(j, grid.ny() - 1); ++cj)
          for (int ci = std::max(i - 1, 0); ci <= std::min(i, grid.nx() - 1); ++ci)
            touches = touches || grid.cell_y(cj) < 0 || chi.at(ci, cj) > 0;
        if (!touches && (std::abs(v.x.at(i, j)) > 1e-12 || std::abs(v.y.at(i, j)) > 1e-12))
          throw InvalidInput("sharp_bulk: displacement does not vanish outside the film");
      }
    out.v = v;
    out.energy = bulk_energy(sharp_model, weight, v);
    return out;
  }
  ElasticSolver solver(sharp_model, weight, bc, cracks_on_grid(config.profile, grid));
  auto sol = solver.solve();
  out.energy = sol.energy;
  out.v = std::move(sol.v);
  out.residual = sol.residual;
  return out;
}

SharpResult sharp_total(const SharpConfig& config, const EnvelopeTable& env,
                        const ElasticModel& model, const StripGrid& grid, const DisplacementBC& bc,
                        const std::optional<MassConstraints>& constraints) {
  SharpResult r{.v = VectorField2(grid)};
  r.surface = sharp_surface_energy(config.measure, env);
  auto bulk = sharp_bulk(config, model, grid, bc);
  r.bulk = bulk.energy;
  r.area_error = bulk.area_error;
  r.v = std::move(bulk.v);
  r.total = EnergyValue::finite(r.bulk + r.surface.total());
  if (constraints) {
    r.area_ok = std::abs(config.profile.integral() - constraints->M) <= constraints->tolerance;
    r.mass_ok = std::abs(config.measure.total_mass() - constraints->m) <= constraints->tolerance;
    if (!r.area_ok || !r.mass_ok) r.total = EnergyValue::infinite();
  }
  return r;
}

EnergyValue unrelaxed_energy(const SharpConfig& config, const SurfaceDensity& psi,
                             const ElasticModel& model, const StripGrid& grid,
                             const DisplacementBC& bc) {
  if (!config.profile.is_regular() || !config.measure.atoms().empty()) return EnergyValue::infinite();
  double surface = 0;
  for (const auto& s : config.measure.segments()) surface += psi(s.u) * s.segment.length();
  return EnergyValue::finite(sharp_bulk(config, model, grid, bc).energy + surface);
}

void write_sharp_csv(const std::string& path, const SharpResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(12);
  out << "bulk,regular_surface,cut_surface,singular_term,total,constraint_flags\n";
  std::string flags = r.area_ok && r.mass_ok ? "ok" : "";
  if (!r.area_ok) flags += "area";
  if (!r.mass_ok) flags += flags.empty() ? "mass" : "|mass";
  out << r.bulk << ',' << r.surface.regular << ',' << r.surface.cut << ',' << r.surface.singular
      << ',' << r.total.str() << ',' << flags << '\n';
}

}  // namespace epitaxy
