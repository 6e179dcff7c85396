#include <cmath>

#include "doctest.h"
#include "epitaxy/errors.hpp"
#include "epitaxy/sharp_energy.hpp"

using namespace epitaxy;

namespace {

BVProfile flat() { return BVProfile::flat(0, 1, 1); }
BVProfile cut_profile(double depth) { return BVProfile(0, 1, {{0, 1}, {1, 1}}, {{0.5, 1 - depth}}); }

SharpConfig config(const BVProfile& p, double u = 0) {
  return {p, AdatomMeasure::uniform(decompose(p), u), std::nullopt};
}

StripGrid grid_for(double cell = 1.0 / 32) { return StripGrid::fitted(0, 1, 0.5, 1.5, cell); }

}  // namespace

TEST_CASE("energy sentinel") {
  CHECK(EnergyValue::finite(2.5).value() == 2.5);
  CHECK(EnergyValue::infinite().is_infinite());
  CHECK_THROWS_AS(EnergyValue::infinite().value(), NumericalError);
  CHECK(EnergyValue::infinite().str() == "inf");
}

TEST_CASE("constant density on a flat film") {
  EnvelopeTable one(SurfaceDensity::constant(1));
  auto s = sharp_surface_energy(config(flat(), 0.7).measure, one);
  CHECK(s.total() == doctest::Approx(1.0));
}

TEST_CASE("a cut is paid on both sides") {
  EnvelopeTable one(SurfaceDensity::constant(1));
  for (double d : {0.4, 0.25, 0.9}) {
    auto s = sharp_surface_energy(config(cut_profile(d)).measure, one);
    CHECK(s.cut == 2 * d);
    CHECK(s.total() == doctest::Approx(1.0 + 2 * d));
  }
}

TEST_CASE("quadratic density with an atom") {
  EnvelopeTable q(SurfaceDensity::quadratic(1, 0, 1));
  const auto p = cut_profile(0.3);
  auto mu = AdatomMeasure::uniform(decompose(p), 0).with_atoms({{{0.25, 1.0}, 0.5}});
  auto s = sharp_surface_energy(mu, q);
  CHECK(q.theta() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.regular == doctest::Approx(1.0));
  CHECK(s.cut == doctest::Approx(0.6));
  CHECK(s.singular == doctest::Approx(1.0));
  CHECK(s.total() == doctest::Approx(1.0 + 2 * 0.3 + 2 * 0.5));
}

TEST_CASE("densities beyond the envelope table are rejected") {
  EnvelopeTable q(SurfaceDensity::quadratic(1, 0, 1), {4, 257});
  CHECK_THROWS_AS(sharp_surface_energy(config(flat(), 5).measure, q), InvalidInput);
}

TEST_CASE("unrelaxed energy is finite only on regular configurations") {
  auto psi = SurfaceDensity::quadratic(1, 0, 1);
  auto model = ElasticModel::isotropic(1, 1, 0.0);
  auto g = grid_for();
  auto e = unrelaxed_energy(config(flat(), 0.5), psi, model, g);
  CHECK(e.value() == doctest::Approx(1.25));
  CHECK(unrelaxed_energy(config(cut_profile(0.3)), psi, model, g).is_infinite());
  SharpConfig atom{flat(), AdatomMeasure::uniform(decompose(flat()), 0).with_atoms({{{0.5, 1}, 0.1}}),
                   std::nullopt};
  CHECK(unrelaxed_energy(atom, psi, model, g).is_infinite());
}

TEST_CASE("sharp total without mismatch is the graph length") {
  EnvelopeTable one(SurfaceDensity::constant(1));
  auto g = grid_for();
  auto r = sharp_total(config(flat()), one, ElasticModel::isotropic(1, 1, 0.0), g);
  CHECK(r.bulk == 0.0);
  CHECK(r.total.value() == doctest::Approx(1.0));
  CHECK(std::abs(r.area_error) < 1e-12);

  SharpConfig supplied = config(flat());
  supplied.displacement = VectorField2(g);
  CHECK(sharp_total(supplied, one, ElasticModel::isotropic(1, 1, 0.0), g).total.value() ==
        doctest::Approx(1.0));
}

TEST_CASE("constraint violations give the infinite sentinel") {
  EnvelopeTable one(SurfaceDensity::constant(1));
  auto g = grid_for();
  auto m = ElasticModel::isotropic(1, 1, 0.0);
  auto c = config(flat(), 0.5);
  CHECK_FALSE(sharp_total(c, one, m, g, {}, MassConstraints{0.5, 1.0}).total.is_infinite());
  auto bad_area = sharp_total(c, one, m, g, {}, MassConstraints{0.5, 1.1});
  CHECK(bad_area.total.is_infinite());
  CHECK_FALSE(bad_area.area_ok);
  auto bad_mass = sharp_total(c, one, m, g, {}, MassConstraints{0.6, 1.0});
  CHECK(bad_mass.total.is_infinite());
  CHECK_FALSE(bad_mass.mass_ok);
}

TEST_CASE("supplied displacement must vanish off the film") {
  auto g = grid_for();
  SharpConfig c = config(flat());
  VectorField2 v(g);
  v.x.at(3, g.ny()) = 0.1;
  c.displacement = v;
  CHECK_THROWS_AS(sharp_bulk(c, ElasticModel::isotropic(1, 1, 0.1), g), InvalidInput);
}

TEST_CASE("flat and fractured films are both evaluated") {
  EnvelopeTable one(SurfaceDensity::constant(1));
  auto g = grid_for(1.0 / 40);
  auto m = ElasticModel::isotropic(1, 1, 0.3);
  auto intact = sharp_total(config(flat()), one, m, g);
  auto cracked = sharp_total(config(cut_profile(0.9)), one, m, g);
  CHECK(intact.bulk > 0);
  CHECK(cracked.bulk < intact.bulk);
  CHECK(cracked.surface.cut == doctest::Approx(1.8));
}

TEST_CASE("relaxed surface never exceeds the unrelaxed one") {
  auto psi = SurfaceDensity::polynomial({1, 0, 0, 0, 1});
  EnvelopeTable env(psi, {4, 1025});
  const BVProfile p(0, 1, {{0, 1}, {0.3, 1.2}, {0.7, 0.8}, {1, 1}});
  const auto g = decompose(p);
  for (double u : {0.0, 0.375, 0.875, 1.75, 3.0}) {  // grid points of the table
    auto mu = AdatomMeasure::uniform(g, u);
    double raw = 0;
    for (const auto& s : mu.segments()) raw += psi(s.u) * s.segment.length();
    CHECK(sharp_surface_energy(mu, env).total() <= raw + 1e-12);
  }
}

TEST_CASE("surface energy is linear in length") {
  EnvelopeTable q(SurfaceDensity::quadratic(1, 0, 1));
  auto small = BVProfile(0, 1, {{0, 1}, {0.5, 1.5}, {1, 1}});
  auto big = BVProfile(0, 2, {{0, 2}, {1, 3}, {2, 2}});
  const double a = sharp_surface_energy(AdatomMeasure::uniform(decompose(small), 0.6), q).total();
  const double b = sharp_surface_energy(AdatomMeasure::uniform(decompose(big), 0.6), q).total();
  CHECK(b == doctest::Approx(2 * a));
}

TEST_CASE("moving atom mass onto a segment is neutral in the linear regime") {
  EnvelopeTable q(SurfaceDensity::quadratic(1, 0, 1));
  const auto p = flat();
  const auto g = decompose(p);
  const double u = 1.5, dm = 0.25;
  auto with_atom = AdatomMeasure::uniform(g, u).with_atoms({{{0.5, 1}, dm}});
  auto spread = AdatomMeasure::uniform(g, u + dm);
  const double diff =
      sharp_surface_energy(spread, q).total() - sharp_surface_energy(with_atom, q).total();
  CHECK(std::abs(diff) <= 1e-8);
}
