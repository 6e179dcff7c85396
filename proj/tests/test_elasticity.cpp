#include <cmath>
#include <random>

#include "doctest.h"
#include "epitaxy/elasticity.hpp"
#include "epitaxy/errors.hpp"

using namespace epitaxy;

namespace {

ScalarField film_indicator(const StripGrid& g, double height) {
  ScalarField w(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) w.at(i, j) = g.y(j) <= height ? 1.0 : 0.0;
  return w;
}

CellField film_cells(const StripGrid& g, double height) {
  CellField c(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) c.at(i, j) = g.cell_y(j) < height ? 1.0 : 0.0;
  return c;
}

VectorField2 random_field(const StripGrid& g, std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VectorField2 v(g);
  for (std::size_t k = 0; k < v.x.size(); ++k) {
    v.x[k] = u(rng);
    v.y[k] = u(rng);
  }
  return v;
}

}  // namespace

TEST_CASE("elastic density") {
  auto m = ElasticModel::isotropic(1, 1, 0.1);
  CHECK(elastic_density(m, Eigen::Matrix2d::Zero()) == 0.0);
  CHECK(elastic_density(m, Eigen::Matrix2d::Identity()) == doctest::Approx(4.0));
  Eigen::Matrix2d skew;
  skew << 0, 1.5, -1.5, 0;
  CHECK(elastic_density(m, skew) == 0.0);
  Eigen::Matrix2d e0 = eigenstrain(m, 0.5);
  CHECK(elastic_density(m, e0) == doctest::Approx((0.5 + 1) * 0.01));
}

TEST_CASE("random symmetric strains have positive energy") {
  std::mt19937 rng(7);
  std::normal_distribution<double> n;
  auto m = ElasticModel::general({3, 1, 0.2, 2.5, -0.1, 0.9}, 0.0);
  for (int k = 0; k < 20; ++k) {
    Eigen::Matrix2d a;
    a << n(rng), n(rng), 0, n(rng);
    a(1, 0) = a(0, 1);
    CHECK(elastic_density(m, a) > 0);
  }
  CHECK_THROWS_AS(ElasticModel::isotropic(1, 0, 0), InvalidInput);
  CHECK_THROWS_AS(ElasticModel::isotropic(-2, 1, 0), InvalidInput);
  CHECK_THROWS_AS(ElasticModel::general({1, 2, 0, 1, 0, 1}, 0), InvalidInput);
  CHECK(ElasticModel::isotropic(1, 1, 0).growth_constant() == doctest::Approx(4.0));
}

TEST_CASE("eigenstrain branches") {
  auto m = ElasticModel::isotropic(1, 1, 0.1);
  CHECK(eigenstrain(m, 1.0)(0, 0) == 0.1);
  CHECK(eigenstrain(m, 1.0)(1, 1) == 0.0);
  CHECK(eigenstrain(m, -1.0).norm() == 0.0);
  CHECK(eigenstrain(m, 0.0)(0, 0) == 0.1);
}

TEST_CASE("bulk energy closed forms") {
  auto g = StripGrid::fitted(0, 1, 0.5, 2.0, 1.0 / 16);
  VectorField2 zero(g);
  CHECK(bulk_energy(ElasticModel::isotropic(1, 1, 0.0, 0.01), film_indicator(g, 1.0), zero) == 0.0);

  const double eta = 0.01, t = 0.1;
  auto m = ElasticModel::isotropic(1, 1, t, eta);
  // w = 1 on the film, 0 above: (1+eta) W(E0) |film| + eta W(E0) |void|.
  const double film = bulk_energy(m, ElasticWeight::cells(film_cells(g, 1.0)), zero);
  const double w0 = 1.5 * t * t;
  CHECK(film == doctest::Approx((1 + eta) * w0 * 1.0 + eta * w0 * (g.y_max() - 1.0)));

  CellField none(g);
  CHECK(bulk_energy(m, ElasticWeight::cells(none), zero) ==
        doctest::Approx(eta * w0 * g.y_max()));

  // Nodal ones are exactly one on every Gauss point.
  CHECK(bulk_energy(m.with_eta(0), ScalarField(g, 1.0), zero) == doctest::Approx(w0 * g.y_max()));
}

TEST_CASE("rigid motions do not change the energy") {
  StripGrid g(0, 1, -0.5, 1, 16, 24);
  std::mt19937 rng(3);
  auto m = ElasticModel::isotropic(1.3, 0.7, 0.05, 0.01);
  auto w = film_indicator(g, 0.6);
  auto v = random_field(g, rng, 0.1);
  const double e = bulk_energy(m, w, v);
  auto moved = v;
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      moved.x.at(i, j) += 0.3 - 0.2 * g.y(j);
      moved.y.at(i, j) += -0.1 + 0.2 * g.x(i);
    }
  CHECK(std::abs(bulk_energy(m, w, moved) - e) <= 1e-10 * std::max(1.0, e));
}

TEST_CASE("analytic gradients match finite differences") {
  StripGrid g(0, 1, -0.5, 1, 12, 18);
  std::mt19937 rng(11);
  auto m = ElasticModel::isotropic(1, 1, 0.1, 0.01);
  ScalarField w(g);
  std::uniform_real_distribution<double> u01(0.1, 0.9);
  for (auto& x : w.values()) x = u01(rng);
  auto v = random_field(g, rng, 0.05);
  const auto weight = ElasticWeight::phase(w);
  auto gv = bulk_gradient_v(m, weight, v);
  auto gw = bulk_gradient_w(m, w, v);
  std::uniform_int_distribution<int> pick(0, g.node_count() - 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const auto k = static_cast<std::size_t>(pick(rng));
    auto vp = v, vm = v;
    vp.x[k] += h;
    vm.x[k] -= h;
    const double fd = (bulk_energy(m, weight, vp) - bulk_energy(m, weight, vm)) / (2 * h);
    CHECK(std::abs(fd - gv.x[k]) <= 1e-5 * std::max(std::abs(fd), 1e-8));
    auto wp = w, wm = w;
    wp[k] += h;
    wm[k] -= h;
    const double fdw = (bulk_energy(m, wp, v) - bulk_energy(m, wm, v)) / (2 * h);
    CHECK(std::abs(fdw - gw[k]) <= 1e-5 * std::max(std::abs(fdw), 1e-8));
  }
}

TEST_CASE("zero mismatch or zero weight gives the zero displacement") {
  auto g = StripGrid::fitted(0, 1, 0.5, 1.5, 1.0 / 16);
  auto sol = solve_displacement(ElasticModel::isotropic(1, 1, 0.0, 0.01), film_indicator(g, 1), {});
  CHECK(sol.v.x.max_abs() == 0.0);
  CHECK(sol.v.y.max_abs() == 0.0);

  auto m = ElasticModel::isotropic(1, 1, 0.1, 1e-4);
  auto empty = solve_displacement(m, ScalarField(g, 0.0), {});
  CHECK(empty.energy <= bulk_energy(m, ScalarField(g, 0.0), VectorField2(g)) + 1e-14);
}

TEST_CASE("solver output is a constrained minimizer") {
  auto g = StripGrid::fitted(0, 1, 0.5, 1.5, 1.0 / 24);
  auto m = ElasticModel::isotropic(1, 1, 0.1, 1e-3);
  for (auto lateral : {LateralBC::Periodic, LateralBC::TractionFree}) {
    auto w = film_indicator(g, 0.8);
    auto sol = solve_displacement(m, w, {true, lateral});
    CHECK(sol.residual <= 1e-8);
    const double e = bulk_energy(m, w, sol.v);
    CHECK(e == doctest::Approx(sol.energy).epsilon(1e-9));
    CHECK(e < bulk_energy(m, w, VectorField2(g)));
    std::mt19937 rng(5);
    for (int k = 0; k < 10; ++k) {
      auto p = random_field(g, rng, 1e-3);
      for (int i = 0; i <= g.nx(); ++i) p.x.at(i, 0) = p.y.at(i, 0) = 0;
      if (lateral == LateralBC::Periodic)
        for (int j = 0; j <= g.ny(); ++j) {
          p.x.at(g.nx(), j) = p.x.at(0, j);
          p.y.at(g.nx(), j) = p.y.at(0, j);
        }
      auto q = sol.v;
      for (std::size_t n = 0; n < q.x.size(); ++n) {
        q.x[n] += p.x[n];
        q.y[n] += p.y[n];
      }
      CHECK(bulk_energy(m, w, q) >= e * (1 - 1e-8));
    }
  }
}

TEST_CASE("energy is monotone in the weight") {
  StripGrid g(0, 1, -0.5, 1, 16, 24);
  std::mt19937 rng(2);
  auto m = ElasticModel::isotropic(1, 1, 0.1, 0.01);
  auto v = random_field(g, rng, 0.05);
  auto low = film_indicator(g, 0.5);
  auto high = film_indicator(g, 0.75);
  CHECK(bulk_energy(m, high, v) >= bulk_energy(m, low, v));
}

TEST_CASE("grid refinement lowers the minimal energy of a flat film") {
  auto m = ElasticModel::isotropic(1, 1, 0.1, 0.0);
  double prev = 1e300;
  for (int nx : {64, 128, 256}) {
    const auto g = StripGrid(0, 1, -0.5, 1.25, nx, nx * 7 / 4);
    // Free lateral edges make the minimizer non-polynomial.
    ElasticSolver solver(m, ElasticWeight::cells(film_cells(g, 1.0)), {true, LateralBC::TractionFree});
    auto sol = solver.solve();
    CHECK(sol.energy < 1.5 * 0.01 * 1.0);
    CHECK(sol.energy < prev);
    prev = sol.energy;
  }
}

TEST_CASE("a crack relieves stress and leaves the void untouched") {
  const auto g = StripGrid(0, 1, -0.5, 1.25, 32, 56);
  auto m = ElasticModel::isotropic(1, 1, 0.1, 0.0);
  const auto chi = ElasticWeight::cells(film_cells(g, 1.0));
  const double intact = ElasticSolver(m, chi, {}).solve().energy;
  ElasticSolver cracked(m, chi, {}, {{16, 0.0, 1.0}});
  auto sol = cracked.solve();
  CHECK(sol.energy < intact);
  CHECK(sol.v.x.at(5, 50) == 0.0);
  CHECK_THROWS_AS(ElasticSolver(m, chi, {}, {{0, 0.0, 1.0}}), InvalidInput);
}
