#include <cmath>
#include <limits>

#include "doctest.h"
#include "epitaxy/errors.hpp"
#include "epitaxy/geometry.hpp"

using namespace epitaxy;

namespace {

BVProfile tent() { return BVProfile(0, 1, {{0, 0.5}, {0.5, 1.0}, {1, 0.5}}); }
BVProfile step() { return BVProfile(0, 1, {{0, 1}, {0.5, 1}, {0.5, 2}, {1, 2}}); }
BVProfile one_cut() { return BVProfile(0, 1, {{0, 1}, {1, 1}}, {{0.4, 0.3}}); }

double brute_distance(const GraphDecomposition& g, Vec2 p, bool with_cuts) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : g.segments)
    if (with_cuts || s.cls != SegmentClass::Cut) d = std::min(d, distance(p, s.segment));
  return d;
}

}  // namespace

TEST_CASE("profile validation") {
  CHECK_THROWS_AS(BVProfile(0, 1, {{0, 1}, {0.9, 1}}), InvalidInput);
  CHECK_THROWS_AS(BVProfile(0, 1, {{0, 1}, {1, -0.1}}), InvalidInput);
  CHECK_THROWS_AS(BVProfile(0, 1, {{0, 1}, {0, 2}, {1, 2}}), InvalidInput);
  CHECK_THROWS_AS(BVProfile(0, 1, {{0, 1}, {1, 1}}, {{0.5, 1.2}}), InvalidInput);
  CHECK_THROWS_AS(BVProfile(0, 1, {{0, 1}, {0.5, 1}, {0.5, 2}, {1, 2}}, {{0.5, 0.2}}), InvalidInput);
}

TEST_CASE("profile values at jumps and cuts") {
  auto s = step();
  CHECK(s.value(0.5) == 1.0);
  CHECK(s.value(0.7) == 2.0);
  CHECK(s.jumps().size() == 1);
  CHECK(s.integral() == doctest::Approx(1.5));
  auto c = one_cut();
  CHECK(c.value(0.4) == 0.3);
  CHECK(c.lower_limit(0.4) == 1.0);
  CHECK(c.cuts()[0].depth() == doctest::Approx(0.7));
  CHECK(c.total_variation() == doctest::Approx(1.4));
  CHECK(tent().lipschitz() == doctest::Approx(1.0));
}

TEST_CASE("graph decomposition lengths") {
  auto t = decompose(tent());
  CHECK(t.jump_length == 0);
  CHECK(t.cut_length == 0);
  CHECK(t.regular_length == doctest::Approx(2 * std::hypot(0.5, 0.5)));
  auto j = decompose(step());
  CHECK(j.jump_length == doctest::Approx(1.0));
  auto c = decompose(one_cut());
  CHECK(c.cut_length == doctest::Approx(0.7));
  CHECK(c.regular_length == doctest::Approx(1.0));
}

TEST_CASE("adatom measure masses and atom validation") {
  auto g = decompose(one_cut());
  auto mu = AdatomMeasure::per_class(g, 0.5, 0, 2.0);
  CHECK(mu.continuous_mass() == doctest::Approx(0.5 + 1.4));
  auto with = mu.with_atoms({{{0.2, 1.0}, 0.25}});
  CHECK(with.singular_mass() == 0.25);
  CHECK(with.total_mass() == doctest::Approx(2.15));
  CHECK_THROWS_AS(mu.with_atoms({{{0.2, 1.1}, 0.25}}), InvalidInput);
  CHECK_THROWS_AS(AdatomMeasure::uniform(g, -1), InvalidInput);
}

TEST_CASE("signed distance matches brute force") {
  for (const auto& p : {tent(), step(), one_cut()}) {
    const auto g = decompose(p);
    const BoundaryLocator loc(p);
    StripGrid grid(0, 1, -0.5, 2.5, 24, 60);
    auto d = signed_distance(p, grid);
    for (int j = 0; j <= grid.ny(); ++j)
      for (int i = 0; i <= grid.nx(); ++i) {
        const Vec2 q{grid.x(i), grid.y(j)};
        double expect;
        if (q.y < p.value(q.x)) expect = -brute_distance(g, q, true);
        else if (q.y < p.lower_limit(q.x)) expect = 0;
        else expect = brute_distance(g, q, false);
        CHECK(d.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
  BoundaryLocator flat(BVProfile::flat(0, 1, 1));
  CHECK(flat.signed_distance({0.5, 0.25}) == doctest::Approx(-0.75));
  CHECK(flat.signed_distance({0.5, 1.5}) == doctest::Approx(0.5));
  // Next to a crack the film boundary is the crack itself.
  BoundaryLocator c(one_cut());
  CHECK(c.signed_distance({0.45, 0.5}) == doctest::Approx(-0.05));
  CHECK(c.signed_distance({0.4, 0.5}) == 0.0);
}

TEST_CASE("Hausdorff distance of complements") {
  StripGrid grid(0, 1, -0.5, 2.5, 40, 120);
  CHECK(hausdorff_complement(tent(), tent(), grid).value < 1e-12);
  auto r = hausdorff_complement(BVProfile::flat(0, 1, 1), BVProfile::flat(0, 1, 1.2), grid);
  CHECK(r.value == doctest::Approx(0.2));
  // A cut is a set of complement points reaching deep into the film.
  auto c = hausdorff_complement(BVProfile::flat(0, 1, 1), one_cut(), grid);
  CHECK(c.value == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("Hausdorff distance agrees with a brute-force max-min over samples") {
  StripGrid grid(0, 1, -0.2, 2.2, 30, 72);
  const auto p1 = step();
  const auto p2 = BVProfile(0, 1, {{0, 1}, {0.45, 1}, {0.55, 2}, {1, 2}});
  const auto s1 = sample_complement(p1, grid), s2 = sample_complement(p2, grid);
  auto directed = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double worst = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, norm(p - q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  const double brute = std::max(directed(s1, s2), directed(s2, s1));
  const auto r = hausdorff_complement(p1, p2, grid);
  CHECK(std::abs(r.value - brute) <= r.resolution);
}

TEST_CASE("delta cover of a flat line") {
  const auto p = BVProfile::flat(0, 1, 1);
  auto cover = delta_cover(p, 0.3, 0.01);
  REQUIRE(cover.rectangles.size() == 4);
  for (const auto& r : cover.rectangles) {
    CHECK(r.width() == doctest::Approx(0.25));
    CHECK(r.y0 < 1.0);
    CHECK(r.y1 > 1.0);
  }
  CHECK(check_cover(decompose(p), cover).empty());
  CHECK_THROWS_AS(delta_cover(p, 0.03, 0.01), InvalidInput);
}

TEST_CASE("delta cover keeps a short cut in one column") {
  const auto p = BVProfile(0, 1, {{0, 1}, {1, 1}}, {{0.4, 0.8}});
  auto cover = delta_cover(p, 0.3, 0.01);
  int holders = 0;
  for (const auto& r : cover.rectangles)
    if (r.contains({0.4, 0.8}) && r.contains({0.4, 1.0})) ++holders;
  CHECK(holders == 1);
  CHECK(check_cover(decompose(p), cover).empty());
  for (const auto& q : {tent(), step(), one_cut()})
    CHECK(check_cover(decompose(q), delta_cover(q, 0.2, 0.01)).empty());
}

TEST_CASE("column boundaries avoid vertical segments") {
  const auto p = BVProfile(0, 1, {{0, 1}, {0.5, 1}, {0.5, 2}, {1, 2}});
  auto cover = delta_cover(p, 0.55, 0.01);
  CHECK(check_cover(decompose(p), cover).empty());
  for (const auto& r : cover.rectangles) CHECK(r.x0 != 0.5);
}

TEST_CASE("grid-constant projection") {
  const auto p = BVProfile::flat(0, 1, 1);
  const auto g = decompose(p);
  auto cover = delta_cover(p, 0.3, 0.01);

  auto flat = AdatomMeasure::uniform(g, 0.7);
  auto same = grid_constant_project(flat, cover);
  for (const auto& s : same.segments()) CHECK(s.u == doctest::Approx(0.7));

  // Linear density u = x on the line has mean 0.125, 0.375, ... per column.
  std::vector<DensitySegment> fine;
  for (int k = 0; k < 400; ++k) {
    const double x0 = k / 400.0, x1 = (k + 1) / 400.0;
    fine.push_back({{{x0, 1}, {x1, 1}}, SegmentClass::Regular, 0.5 * (x0 + x1)});
  }
  AdatomMeasure linear(fine, {});
  auto proj = grid_constant_project(linear, cover);
  CHECK(proj.total_mass() == doctest::Approx(linear.total_mass()));
  CHECK(proj.segments().front().u == doctest::Approx(0.125));

  auto atom = flat.with_atoms({{{0.1, 1.0}, 0.5}});
  auto absorbed = grid_constant_project(atom, cover);
  CHECK(absorbed.atoms().empty());
  CHECK(absorbed.total_mass() == doctest::Approx(atom.total_mass()));
  CHECK(absorbed.segments().front().u == doctest::Approx(0.7 + 2.0));
}
