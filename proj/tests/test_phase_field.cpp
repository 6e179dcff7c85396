#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "epitaxy/errors.hpp"
#include "epitaxy/phase_field.hpp"

using namespace epitaxy;

namespace {

StripGrid small_grid(double cell = 1.0 / 32) { return StripGrid::fitted(0, 1, 0.25, 1.0, cell); }

// tanh profile of a flat film of height h.
ScalarField flat_phase(const StripGrid& g, double h, double eps) {
  ScalarField w(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i)
      w.at(i, j) = g.y(j) < 0 ? 1.0 : 0.5 * (1 - std::tanh((g.y(j) - h) / (2 * eps)));
  return w;
}

PhaseProblem problem(double eps, const SurfaceDensity& psi, double t = 0.0) {
  return make_problem(eps, DoubleWell::quartic(), psi, ElasticModel::isotropic(1, 1, t));
}

}  // namespace

TEST_CASE("sigma of the quartic well") {
  CHECK(sigma(DoubleWell::quartic()) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(sigma(DoubleWell::quartic(9)) == doctest::Approx(1.0).epsilon(1e-12));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> c(0.1, 20);
  const double s0 = sigma(DoubleWell::quartic());
  for (int k = 0; k < 5; ++k) {
    const double ck = c(rng);
    CHECK(sigma(DoubleWell::quartic(ck)) == doctest::Approx(std::sqrt(ck) * s0).epsilon(1e-10));
  }
}

TEST_CASE("double well invariants") {
  for (const auto& p : {DoubleWell::quartic(2), DoubleWell::sampled({{0, 0}, {0.5, 0.1}, {1, 0}}, 0.4)}) {
    CHECK(p(0) == 0);
    CHECK(p(1) == 0);
    CHECK(p(0.3) > 0);
    const auto [r, c] = p.growth_witness();
    for (double t : {r + 0.01, r + 1, 10 * r, -r - 0.01, -5 * r}) CHECK(p(t) >= c * std::abs(t));
  }
  CHECK_THROWS_AS(DoubleWell::sampled({{0, 0}, {0.5, 0}, {1, 0}}, 1), InvalidInput);
  CHECK(sigma(DoubleWell::sampled({{0, 0}, {0.5, 0.25}, {1, 0}}, 1)) > 0);
}

TEST_CASE("modica density examples") {
  const auto g = small_grid();
  const auto p = DoubleWell::quartic();
  for (double c : {0.0, 1.0}) {
    ScalarField w(g);
    for (double& x : w.values()) x = c;
    CHECK(modica_density(w, 0.1, p).max_abs() == 0);
    CHECK(modica_cells(w, 0.1, p).max_abs() == 0);
  }
  ScalarField half(g);
  for (double& x : half.values()) x = 0.5;
  const auto d = modica_density(half, 0.1, p);
  for (double x : d.values()) CHECK(x == doctest::Approx(p(0.5) / 0.1));
}

TEST_CASE("flat interface perimeter") {
  const double eps = 0.05;
  const auto g = StripGrid::fitted(0, 1, 0.25, 1.0, eps / 4);
  const auto p = DoubleWell::quartic();
  const auto w = flat_phase(g, 0.5, eps);
  CHECK(normalized_perimeter(w, eps, p, sigma(p)) == doctest::Approx(1.0).epsilon(0.02));
  // Rescaling the well leaves the normalized perimeter of the optimal profile
  // for that well unchanged.
  const auto p9 = DoubleWell::quartic(9);
  const auto fine = StripGrid::fitted(0, 1, 0.25, 1.0, eps / 12);
  const auto w9f = flat_phase(fine, 0.5, eps / 3);
  CHECK(normalized_perimeter(w9f, eps, p9, sigma(p9)) ==
        doctest::Approx(normalized_perimeter(flat_phase(fine, 0.5, eps), eps, p, sigma(p))).epsilon(0.01));
}

TEST_CASE("energy with psi constant reduces to Modica-Mortola") {
  const double eps = 0.1;
  const auto g = small_grid();
  auto prob = problem(eps, SurfaceDensity::constant(1));
  PhaseConfig c(g);
  c.w = flat_phase(g, 0.5, eps);
  for (double& u : c.u.values()) u = 0.7;
  const auto e = energy_eps(c, prob);
  CHECK(e.bulk == 0);
  CHECK(e.surface == doctest::Approx(normalized_perimeter(c.w, eps, prob.potential, prob.sigma)));
  for (double& x : c.w.values()) x = 1;
  CHECK(energy_eps(c, prob).total() == 0);
}

TEST_CASE("diffuse measure examples") {
  const double eps = 0.1;
  const auto g = small_grid();
  const auto p = DoubleWell::quartic();
  const double sig = sigma(p);
  PhaseConfig c(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) c.w.at(i, j) = g.y(j) < 0 ? 1.0 : 0.5;
  CHECK(diffuse_measure(c, eps, p, sig).total == 0);
  for (double& u : c.u.values()) u = 1;
  // The row straddling y = 0 is excluded; cells above it are all at w = 1/2.
  int rows = 0;
  for (int j = 0; j < g.ny(); ++j)
    if (g.cell_y(j) > 0 && g.y(j) >= 0) ++rows;
  const double area = rows * g.nx() * g.cell_area();
  CHECK(diffuse_measure(c, eps, p, sig).total == doctest::Approx(p(0.5) / (sig * eps) * area));
}

TEST_CASE("gradient matches finite differences") {
  const double eps = 0.1;
  const auto g = StripGrid::fitted(0, 1, 0.25, 0.75, 1.0 / 16);
  auto prob = problem(eps, SurfaceDensity::quadratic(1, -0.5, 0.4), 0.05);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  PhaseConfig c(g);
  c.w = flat_phase(g, 0.4, eps);
  const int j0 = g.first_row_at_or_above_zero();
  for (int j = j0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) c.w.at(i, j) = std::clamp(c.w.at(i, j) + 0.1 * (unit(rng) - 0.5), 0.0, 1.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (g.cell_y(j) > 0) c.u.at(i, j) = 2 * unit(rng);
  c.v = solve_displacement(prob.model, c.w, prob.bc).v;
  const auto grad = energy_gradient(c, prob);
  const double h = 1e-6;

  std::uniform_int_distribution<int> ni(0, g.nx() - 1), nj(j0, g.ny()), cj(j0, g.ny() - 1);
  for (int k = 0; k < 20; ++k) {
    const int i = ni(rng), j = nj(rng);
    PhaseConfig cp = c, cm = c;
    cp.w.at(i, j) += h;
    cm.w.at(i, j) -= h;
    const double fd = (energy_eps(cp, prob).total() - energy_eps(cm, prob).total()) / (2 * h);
    CHECK(grad.w.at(i, j) == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
  for (int k = 0; k < 20; ++k) {
    const int i = ni(rng), j = cj(rng);
    PhaseConfig cp = c, cm = c;
    cp.u.at(i, j) += h;
    cm.u.at(i, j) -= h;
    const double fd = (energy_eps(cp, prob).total() - energy_eps(cm, prob).total()) / (2 * h);
    CHECK(grad.u.at(i, j) == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("mass projections are exact") {
  const auto g = small_grid();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unit(-0.2, 1.2);
  ScalarField w(g);
  for (double& x : w.values()) x = unit(rng);
  for (double M : {0.1, 0.5, 0.9}) {
    project_phase_mass(w, M);
    CHECK(std::abs(phase_mass(w) - M) <= 1e-10);
    for (double x : w.values()) CHECK((x >= 0 && x <= 1));
  }
  CHECK_THROWS_AS(project_phase_mass(w, 5.0), InvalidInput);

  const auto p = DoubleWell::quartic();
  const auto mm = modica_cells(flat_phase(g, 0.5, 0.1), 0.1, p);
  CellField u(g);
  for (double& x : u.values()) x = unit(rng);
  renormalize_adatoms(u, mm, sigma(p), 0.3);
  double mass = 0;
  for (std::size_t k = 0; k < u.size(); ++k) mass += u[k] * mm[k] / sigma(p);
  CHECK(std::abs(mass - 0.3) <= 1e-10);
  CellField zero(g);
  renormalize_adatoms(zero, mm, sigma(p), 0.3);
  CHECK(zero.max_abs() > 0);
}

TEST_CASE("weak-* distance") {
  MeasureSample a{{{0.2, 0.3}, 1.0}, {{0.7, 0.1}, 0.5}};
  CHECK(weak_star_distance(a, a) == 0);
  for (double d : {1.0, 0.5, 0.1, 0.02}) {
    const MeasureSample p{{{0.3, 0.4}, 1.0}}, q{{{0.3 + d, 0.4}, 1.0}};
    const double dist = weak_star_distance(p, q);
    CHECK(dist >= d / 2);
    CHECK(dist <= d);
    CHECK(dist == weak_star_distance(q, p));
  }
  CHECK_THROWS_AS(weak_star_distance({{{0, 0}, 1e13}}, {}), InvalidInput);
}

TEST_CASE("minimizer traces are monotone") {
  const double eps = 0.1;
  const auto g = StripGrid::fitted(0, 1, 0.25, 1.0, eps / 4);
  auto prob = problem(eps, SurfaceDensity::quadratic(1, -0.5, 0.4), 0.1);
  for (unsigned seed = 1; seed <= 5; ++seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(0, 1);
    PhaseConfig init(g);
    init.w = flat_phase(g, 0.4, eps);
    for (int j = g.first_row_at_or_above_zero(); j <= g.ny(); ++j)
      for (int i = 0; i <= g.nx(); ++i)
        init.w.at(i, j) = std::clamp(init.w.at(i, j) + 0.2 * (unit(rng) - 0.5), 0.0, 1.0);
    for (double& u : init.u.values()) u = unit(rng);
    for (bool precondition : {true, false}) {
      MinimizeOptions opt;
      opt.max_iterations = 60;
      opt.precondition = precondition;
      const auto r = minimize_eps(prob, 0.2, 0.4, init, opt);
      CHECK(r.trace.back().total < r.trace.front().total);
      for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].total <= r.trace[k - 1].total + 1e-10);
      for (std::size_t k = 1; k < r.trace.size(); ++k) {
        CHECK(std::abs(r.trace[k].mass_w - 0.4) <= 1e-10);
        CHECK(std::abs(r.trace[k].mass_u - 0.2) <= 1e-10);
      }
    }
  }
}

TEST_CASE("zero adatom mass forces u to vanish") {
  const double eps = 0.1;
  const auto g = small_grid(eps / 4);
  auto prob = problem(eps, SurfaceDensity::affine(2, 1));
  PhaseConfig init(g);
  init.w = flat_phase(g, 0.5, eps);
  for (double& u : init.u.values()) u = 1;
  MinimizeOptions opt;
  opt.max_iterations = 20;
  const auto r = minimize_eps(prob, 0, 0.5, init, opt);
  CHECK(r.config.u.max_abs() == 0);
  const double mm = normalized_perimeter(r.config.w, eps, prob.potential, prob.sigma);
  CHECK(r.trace.back().surface == doctest::Approx(2 * mm));
}

TEST_CASE("flat film relaxes to a flat diffuse interface") {
  const double eps = 0.05;
  const auto g = StripGrid::fitted(0, 1, 0.25, 1.0, eps / 4);
  auto prob = problem(eps, SurfaceDensity::constant(1));
  PhaseConfig init(g);
  // Start from a sharp step so the minimizer has to build the profile.
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) init.w.at(i, j) = g.y(j) <= 0.5 ? 1.0 : 0.0;
  const auto r = minimize_eps(prob, 0, 0.5, init);
  CHECK(!r.warning);
  CHECK(r.trace.back().surface == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("trace csv") {
  const std::vector<TraceRow> rows{{0, 0, 1, 1, 0.5, 0, 0}, {1, 0, 0.9, 0.9, 0.5, 0, 0.1}};
  write_trace_csv("trace_test.csv", rows);
  std::ifstream in("trace_test.csv");
  std::string head;
  std::getline(in, head);
  CHECK(head == "iter,bulk,surface,total,mass_w,mass_u,step");
}
