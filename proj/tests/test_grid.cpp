#include <cmath>
#include <numbers>

#include "doctest.h"
#include "epitaxy/errors.hpp"
#include "epitaxy/grid.hpp"

using namespace epitaxy;

namespace {

ScalarField sample(const StripGrid& g, auto f) {
  ScalarField out(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) out.at(i, j) = f(g.x(i), g.y(j));
  return out;
}

}  // namespace

TEST_CASE("grid spacing and bounds") {
  StripGrid g(0, 2, -1, 1, 20, 40);
  CHECK(g.hx() == doctest::Approx(0.1));
  CHECK(g.hy() == doctest::Approx(0.05));
  CHECK(g.node_count() == 21 * 41);
  CHECK_THROWS_AS(StripGrid(0, 1, 0, 1, 4, 8), InvalidInput);
  CHECK_THROWS_AS(StripGrid(1, 1, 0, 1, 8, 8), InvalidInput);
}

TEST_CASE("fitted grid puts y = 0 on a node row") {
  auto g = StripGrid::fitted(0, 1, 0.5, 1.3, 0.01);
  CHECK(g.hx() <= 0.01 + 1e-15);
  CHECK(g.hy() <= 0.01 + 1e-15);
  const int j0 = g.first_row_at_or_above_zero();
  CHECK(std::abs(g.y(j0)) < 1e-12);
  CHECK(g.y_min() <= -0.5 + 1e-12);
}

TEST_CASE("gradient is exact for affine fields") {
  StripGrid g(0, 1, 0, 1, 16, 16);
  auto f = sample(g, [](double x, double y) { return 3 * x + 2 * y; });
  auto d = gradient(f);
  for (std::size_t k = 0; k < d.x.size(); ++k) {
    CHECK(d.x[k] == doctest::Approx(3.0));
    CHECK(d.y[k] == doctest::Approx(2.0));
  }
  auto c = gradient(ScalarField(g, 4.0));
  CHECK(c.x.max_abs() == 0.0);
  CHECK(c.y.max_abs() == 0.0);
}

TEST_CASE("gradient of x^2 is second order in the interior") {
  for (int n : {16, 32}) {
    StripGrid g(0, 1, 0, 1, n, n);
    auto d = gradient(sample(g, [](double x, double) { return x * x; }));
    double err = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 1; i < n; ++i) err = std::max(err, std::abs(d.x.at(i, j) - 2 * g.x(i)));
    CHECK(err <= 1e-12 + g.hx() * g.hx());
  }
}

TEST_CASE("sym_gradient of rigid rotation and stretch") {
  StripGrid g(0, 1, 0, 1, 8, 8);
  VectorField2 rot(sample(g, [](double, double y) { return y; }),
                   sample(g, [](double x, double) { return -x; }));
  auto e = sym_gradient(rot);
  CHECK(e.xx.max_abs() < 1e-12);
  CHECK(e.yy.max_abs() < 1e-12);
  CHECK(e.xy.max_abs() < 1e-12);
  VectorField2 stretch(sample(g, [](double x, double) { return x; }), ScalarField(g));
  auto s = sym_gradient(stretch);
  CHECK(s.xx.at(3, 3) == doctest::Approx(1.0));
  CHECK(s.yy.max_abs() < 1e-12);
  CHECK(s.xy.max_abs() < 1e-12);
}

TEST_CASE("sym_gradient of a quadratic field matches the analytic strain") {
  StripGrid g(0, 1, 0, 1, 64, 64);
  VectorField2 v(sample(g, [](double x, double y) { return x * x + 2 * x * y; }),
                 sample(g, [](double x, double y) { return y * y - x * y; }));
  auto e = sym_gradient(v);
  double err = 0;
  for (int j = 1; j < 64; ++j)
    for (int i = 1; i < 64; ++i) {
      const double x = g.x(i), y = g.y(j);
      err = std::max(err, std::abs(e.xx.at(i, j) - (2 * x + 2 * y)));
      err = std::max(err, std::abs(e.yy.at(i, j) - (2 * y - x)));
      err = std::max(err, std::abs(e.xy.at(i, j) - 0.5 * (2 * x - y)));
    }
  CHECK(err < 1e-10);
}

TEST_CASE("trapezoid integration") {
  StripGrid g(0, 1, 0, 1, 8, 8);
  CHECK(integrate(ScalarField(g, 1.0)) == doctest::Approx(1.0));
  CHECK(integrate(sample(g, [](double x, double) { return x; })) == doctest::Approx(0.5));
  CHECK(integrate(sample(g, [](double x, double y) { return x * y; })) == doctest::Approx(0.25));

  StripGrid fine(0, 1, 0, 1, 128, 128);
  const double pi = std::numbers::pi;
  auto s = sample(fine, [&](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
  CHECK(std::abs(integrate(s) - 4 / (pi * pi)) < 1e-4);
}

TEST_CASE("quadrature error order under refinement") {
  const double pi = std::numbers::pi;
  double prev = 0;
  for (int n : {16, 32, 64}) {
    StripGrid g(0, 1, 0, 1, n, n);
    const double err = std::abs(
        integrate(sample(g, [&](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); })) -
        4 / (pi * pi));
    if (prev > 0) CHECK(std::log2(prev / err) >= 1.9);
    prev = err;
  }
}

TEST_CASE("regions select cells by centre") {
  StripGrid g(0, 1, -1, 1, 8, 16);
  CHECK(integrate(ScalarField(g, 1.0), Region::upper_half()) == doctest::Approx(1.0));
  CHECK(integrate(ScalarField(g, 1.0), Region::rectangle(0, 0.5, 0, 0.5)) == doctest::Approx(0.25));
  CHECK_THROWS_AS(Region::rectangle(0, 0, 0, 1), InvalidInput);
  CellField c(g, 2.0);
  CHECK(integrate(c, Region::upper_half()) == doctest::Approx(2.0));
  auto q = trapezoid_weights(g, Region::upper_half());
  auto f = sample(g, [](double x, double y) { return x + y * y; });
  double s = 0;
  for (std::size_t k = 0; k < q.size(); ++k) s += q[k] * f[k];
  CHECK(s == doctest::Approx(integrate(f, Region::upper_half())));
}

TEST_CASE("discrete integration by parts is consistent") {
  StripGrid g(0, 1, 0, 1, 64, 64);
  auto f = sample(g, [](double x, double y) { return std::sin(x) + y; });
  auto h = sample(g, [](double x, double y) { return x * x * std::cos(y); });
  auto df = gradient(f), dh = gradient(h);
  ScalarField s(g);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = f[k] * dh.x[k] + h[k] * df.x[k];
  // int_0^1 d/dx (f h) dx = (f h)(1,y) - (f h)(0,y)
  auto boundary = sample(g, [](double, double y) { return (std::sin(1.0) + y) * std::cos(y); });
  double bnd = 0;
  for (int j = 0; j < 64; ++j) bnd += 0.5 * g.hy() * (boundary.at(0, j) + boundary.at(0, j + 1));
  CHECK(std::abs(integrate(s) - bnd) <= 2 * g.hx());
}

TEST_CASE("bilinear interpolation reproduces bilinear data") {
  StripGrid g(0, 1, 0, 1, 8, 8);
  auto f = sample(g, [](double x, double y) { return 1 + x - 2 * y + 3 * x * y; });
  CHECK(interpolate(f, 0.37, 0.61) == doctest::Approx(1 + 0.37 - 1.22 + 3 * 0.37 * 0.61));
}

TEST_CASE("Q1 element integrates constant gradients exactly") {
  StripGrid g(0, 1, 0, 2, 10, 10);
  Q1Element el(g);
  // Nodal values of x + 2y on one cell
  const double vals[4] = {0, g.hx(), 2 * g.hy(), g.hx() + 2 * g.hy()};
  double energy = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) energy += vals[a] * el.stiffness[a][b] * vals[b];
  CHECK(energy == doctest::Approx(5.0 * g.cell_area()));
}
