#include "epitaxy/phase_field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "epitaxy/errors.hpp"

namespace epitaxy {

// --------------------------------------------------------------- DoubleWell

DoubleWell DoubleWell::quartic(double c) {
  require(c > 0, "DoubleWell: scale must be positive");
  DoubleWell p;
  p.c_ = c;
  return p;
}

DoubleWell DoubleWell::sampled(std::vector<std::pair<double, double>> samples, double tail_slope) {
  require(samples.size() >= 3, "DoubleWell: need at least three samples");
  require(samples.front().first == 0.0 && samples.back().first == 1.0,
          "DoubleWell: samples must span [0, 1]");
  require(samples.front().second == 0.0 && samples.back().second == 0.0,
          "DoubleWell: P must vanish at 0 and 1");
  for (std::size_t k = 1; k < samples.size(); ++k)
    require(samples[k].first > samples[k - 1].first, "DoubleWell: sample abscissae not increasing");
  for (std::size_t k = 1; k + 1 < samples.size(); ++k)
    require(samples[k].second > 0, "DoubleWell: P must be positive inside (0, 1)");
  require(tail_slope > 0, "DoubleWell: tail slope must be positive");
  DoubleWell p;
  p.quartic_ = false;
  p.samples_ = std::move(samples);
  p.tail_ = tail_slope;
  return p;
}

double DoubleWell::operator()(double t) const {
  if (quartic_) return c_ * t * t * (1 - t) * (1 - t);
  if (t <= 0) return tail_ * -t;
  if (t >= 1) return tail_ * (t - 1);
  auto hi = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double x, const auto& s) { return x < s.first; });
  auto lo = hi - 1;
  const double s = (t - lo->first) / (hi->first - lo->first);
  return (1 - s) * lo->second + s * hi->second;
}

double DoubleWell::derivative(double t) const {
  if (quartic_) return c_ * 2 * t * (1 - t) * (1 - 2 * t);
  if (t < 0) return -tail_;
  if (t >= 1) return tail_;
  auto hi = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double x, const auto& s) { return x < s.first; });
  auto lo = hi - 1;
  return (hi->second - lo->second) / (hi->first - lo->first);
}

double DoubleWell::max_unit() const {
  if (quartic_) return c_ / 16;
  double m = 0;
  for (const auto& s : samples_) m = std::max(m, s.second);
  return m;
}

std::pair<double, double> DoubleWell::growth_witness() const {
  if (quartic_) return {2.0, 2 * c_};
  return {2.0, tail_ / 2};
}

std::string DoubleWell::describe() const {
  std::ostringstream out;
  if (quartic_) out << c_ << " t^2 (1-t)^2";
  else out << "sampled (" << samples_.size() << " points, tail " << tail_ << ")";
  return out.str();
}

double sigma(const DoubleWell& p) {
  using boost::math::quadrature::gauss_kronrod;
  if (!p.quartic_) {
    // sqrt of a linear function integrates in closed form on each piece.
    double s = 0;
    for (std::size_t k = 1; k < p.samples_.size(); ++k) {
      const auto [t0, p0] = p.samples_[k - 1];
      const auto [t1, p1] = p.samples_[k];
      s += p1 == p0 ? (t1 - t0) * std::sqrt(p0)
                    : (t1 - t0) * 2.0 / 3.0 * (p1 * std::sqrt(p1) - p0 * std::sqrt(p0)) / (p1 - p0);
    }
    return 2 * s;
  }
  auto f = [&](double t) { return std::sqrt(std::max(p(t), 0.0)); };
  double err = 0;
  const double v = gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 20, 1e-14, &err);
  if (!(err <= 5e-9)) {
    std::ostringstream msg;
    msg << "sigma: quadrature error estimate " << err << " above 5e-9";
    throw NumericalError(msg.str());
  }
  return 2 * v;
}

// ------------------------------------------------------------------- config

PhaseConfig::PhaseConfig(ScalarField w_, VectorField2 v_, CellField u_)
    : w(std::move(w_)), v(std::move(v_)), u(std::move(u_)) {
  require(w.grid() == v.grid() && w.grid() == u.grid(), "PhaseConfig: fields on different grids");
}

void validate(const PhaseConfig& c) {
  const auto& g = c.grid();
  require(c.v.grid() == g && c.u.grid() == g, "PhaseConfig: fields on different grids");
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      const double w = c.w.at(i, j);
      if (!(w >= 0 && w <= 1)) {
        std::ostringstream msg;
        msg << "PhaseConfig: w = " << w << " outside [0, 1] at node (" << i << ", " << j << ")";
        throw InvalidInput(msg.str());
      }
      if (g.y(j) < -1e-9 * g.hy() && w != 1.0)
        throw InvalidInput("PhaseConfig: w must equal 1 in the substrate");
    }
  for (double u : c.u.values()) require(u >= 0, "PhaseConfig: negative adatom density");
}

namespace {

bool upper(const StripGrid& g, int j) { return g.cell_y(j) > 0; }

struct CellKernel {
  explicit CellKernel(const StripGrid& g) : el(g), quarter(0.25 * g.cell_area()) {}
  Q1Element el;
  double quarter;

  std::array<double, 4> gather(const ScalarField& w, int i, int j) const {
    const auto n = el.nodes(w.grid(), i, j);
    return {w[static_cast<std::size_t>(n[0])], w[static_cast<std::size_t>(n[1])],
            w[static_cast<std::size_t>(n[2])], w[static_cast<std::size_t>(n[3])]};
  }
  // Rows of the stiffness sum to zero, so the form is a sum over edge
  // differences and vanishes exactly on constants.
  double dirichlet(const std::array<double, 4>& v) const {
    double s = 0;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) s -= el.stiffness[a][b] * (v[a] - v[b]) * (v[a] - v[b]);
    return s;
  }
};

}  // namespace

ScalarField modica_density(const ScalarField& w, double eps, const DoubleWell& p) {
  require(eps > 0, "modica_density: eps must be positive");
  const auto d = gradient(w);
  ScalarField out(w.grid());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = eps * (d.x[k] * d.x[k] + d.y[k] * d.y[k]) + p(w[k]) / eps;
  return out;
}

CellField modica_cells(const ScalarField& w, double eps, const DoubleWell& p) {
  require(eps > 0, "modica_cells: eps must be positive");
  const auto& g = w.grid();
  const CellKernel k(g);
  CellField out(g);
  for (int j = 0; j < g.ny(); ++j) {
    if (!upper(g, j)) continue;
    for (int i = 0; i < g.nx(); ++i) {
      const auto v = k.gather(w, i, j);
      out.at(i, j) = eps * k.dirichlet(v) + k.quarter / eps * (p(v[0]) + p(v[1]) + p(v[2]) + p(v[3]));
    }
  }
  return out;
}

double normalized_perimeter(const ScalarField& w, double eps, const DoubleWell& p, double sig) {
  const auto mm = modica_cells(w, eps, p);
  double s = 0;
  for (double c : mm.values()) s += c;
  return s / sig;
}

PhaseProblem make_problem(double eps, const DoubleWell& p, const SurfaceDensity& psi,
                          const ElasticModel& model, const DisplacementBC& bc) {
  require(eps > 0 && eps < 1, "make_problem: eps must lie in (0, 1)");
  return {eps, p, sigma(p), psi, model.with_eta(eps * eps), bc};
}

double surface_energy(const ScalarField& w, const CellField& u, const PhaseProblem& prob) {
  const auto mm = modica_cells(w, prob.eps, prob.potential);
  double s = 0;
  for (std::size_t c = 0; c < mm.size(); ++c)
    if (mm[c] != 0) s += prob.psi(u[c]) * mm[c];
  return s / prob.sigma;
}

PhaseEnergy energy_eps(const PhaseConfig& c, const PhaseProblem& prob) {
  PhaseEnergy e;
  e.surface = surface_energy(c.w, c.u, prob);
  e.bulk = bulk_energy(prob.model, c.w, c.v);
  return e;
}

PhaseGradient energy_gradient(const PhaseConfig& c, const PhaseProblem& prob) {
  const auto& g = c.grid();
  const CellKernel k(g);
  PhaseGradient out{prob.model.mismatch() == 0 && c.v.x.max_abs() == 0 && c.v.y.max_abs() == 0
                        ? ScalarField(g)
                        : bulk_gradient_w(prob.model, c.w, c.v),
                    CellField(g)};
  const double eps = prob.eps, inv = 1.0 / prob.sigma;
  for (int j = 0; j < g.ny(); ++j) {
    if (!upper(g, j)) continue;
    for (int i = 0; i < g.nx(); ++i) {
      const auto nodes = k.el.nodes(g, i, j);
      const auto v = k.gather(c.w, i, j);
      const double uc = c.u.at(i, j);
      const double psi = prob.psi(uc) * inv;
      const double mm =
          eps * k.dirichlet(v) +
          k.quarter / eps *
              (prob.potential(v[0]) + prob.potential(v[1]) + prob.potential(v[2]) + prob.potential(v[3]));
      out.u.at(i, j) = prob.psi.derivative(uc) * inv * mm;
      for (int a = 0; a < 4; ++a) {
        double kv = 0;
        for (int b = 0; b < 4; ++b) kv += k.el.stiffness[a][b] * v[b];
        out.w[static_cast<std::size_t>(nodes[a])] +=
            psi * (2 * eps * kv + k.quarter / eps * prob.potential.derivative(v[a]));
      }
    }
  }
  // Substrate nodes are fixed.
  const int j0 = g.first_row_at_or_above_zero();
  for (int j = 0; j < j0; ++j)
    for (int i = 0; i <= g.nx(); ++i) out.w.at(i, j) = 0;
  return out;
}

DiffuseMeasure diffuse_measure(const PhaseConfig& c, double eps, const DoubleWell& p, double sig) {
  DiffuseMeasure mu{modica_cells(c.w, eps, p), 0};
  for (std::size_t k = 0; k < mu.mass.size(); ++k) {
    mu.mass[k] *= c.u[k] / sig;
    mu.total += mu.mass[k];
  }
  return mu;
}

double phase_mass(const ScalarField& w) { return integrate(w, Region::upper_half()); }

void project_phase_mass(ScalarField& w, double M) {
  const auto& g = w.grid();
  const auto q = trapezoid_weights(g, Region::upper_half());
  const int j0 = g.first_row_at_or_above_zero();
  const std::size_t first = static_cast<std::size_t>(g.node(0, j0));
  double capacity = 0;
  for (std::size_t k = first; k < w.size(); ++k) capacity += q[k];
  if (!(M > 0 && M < capacity)) {
    std::ostringstream msg;
    msg << "film area " << M << " is infeasible on this grid (capacity " << capacity << ")";
    throw InvalidInput(msg.str());
  }
  for (std::size_t k = 0; k < first; ++k) w[k] = 1.0;
  for (std::size_t k = first; k < w.size(); ++k) w[k] = std::clamp(w[k], 0.0, 1.0);
  for (int iter = 0; iter < 200; ++iter) {
    double cur = 0, room = 0;
    for (std::size_t k = first; k < w.size(); ++k) {
      cur += q[k] * w[k];
      room += q[k] * std::min(w[k], 1 - w[k]);
    }
    const double diff = M - cur;
    if (std::abs(diff) <= 1e-14 * std::max(1.0, M)) return;
    if (room > 0.5 * std::abs(diff)) {
      const double c = std::clamp(diff / room, -1.0, 1.0);
      for (std::size_t k = first; k < w.size(); ++k)
        w[k] = std::clamp(w[k] + c * std::min(w[k], 1 - w[k]), 0.0, 1.0);
      continue;
    }
    // Too little transition layer left (e.g. a sharp 0/1 field): spread
    // over the room towards the target instead.
    double toward = 0;
    for (std::size_t k = first; k < w.size(); ++k) toward += q[k] * (diff > 0 ? 1 - w[k] : w[k]);
    const double c = std::min(1.0, std::abs(diff) / toward);
    for (std::size_t k = first; k < w.size(); ++k)
      w[k] = std::clamp(diff > 0 ? w[k] + c * (1 - w[k]) : w[k] - c * w[k], 0.0, 1.0);
  }
  if (std::abs(phase_mass(w) - M) > 1e-10)
    throw NumericalError("area projection did not converge");
}

void renormalize_adatoms(CellField& u, const CellField& modica, double sig, double m) {
  require(m >= 0, "adatom mass must be non-negative");
  double mass = 0, support = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    u[k] = std::max(u[k], 0.0);
    mass += u[k] * modica[k] / sig;
    support += modica[k] / sig;
  }
  if (m == 0) {
    std::fill(u.values().begin(), u.values().end(), 0.0);
    return;
  }
  if (mass > 0) {
    const double s = m / mass;
    for (double& x : u.values()) x *= s;
    return;
  }
  if (!(support > 0)) throw NumericalError("adatom renormalization: the phase field has no interface");
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = modica[k] > 0 ? m / support : 0.0;
}

// ------------------------------------------------------------------ weak-*

MeasureSample sample(const DiffuseMeasure& mu) {
  MeasureSample out;
  const auto& g = mu.mass.grid();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (mu.mass.at(i, j) != 0) out.push_back({{g.cell_x(i), g.cell_y(j)}, mu.mass.at(i, j)});
  return out;
}

MeasureSample sample(const AdatomMeasure& mu, double spacing) {
  require(spacing > 0, "sample: spacing must be positive");
  MeasureSample out;
  for (const auto& s : mu.segments()) {
    const double len = s.segment.length();
    if (len == 0 || s.u == 0) continue;
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int k = 0; k < n; ++k) {
      const double t = (k + 0.5) / n;
      out.push_back({s.segment.p0 + t * (s.segment.p1 - s.segment.p0), s.u * len / n});
    }
  }
  for (const auto& a : mu.atoms()) out.push_back({a.at, a.mass});
  return out;
}

double weak_star_distance(const MeasureSample& m1, const MeasureSample& m2) {
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  double total = 0;
  for (const auto* m : {&m1, &m2})
    for (const auto& p : *m) {
      require(std::isfinite(p.mass) && std::isfinite(p.at.x) && std::isfinite(p.at.y),
              "weak_star_distance: non-finite sample");
      lo_x = std::min(lo_x, p.at.x);
      hi_x = std::max(hi_x, p.at.x);
      lo_y = std::min(lo_y, p.at.y);
      hi_y = std::max(hi_y, p.at.y);
      total += std::abs(p.mass);
    }
  require(total < 1e12, "weak_star_distance: unbounded mass");
  if (total == 0) return 0;
  double best = 0;
  for (double r : {1.0, 0.25, 0.0625}) {
    const double step = r / 4;
    const long i0 = static_cast<long>(std::floor((lo_x - r) / step));
    const long j0 = static_cast<long>(std::floor((lo_y - r) / step));
    const long ni = static_cast<long>(std::ceil((hi_x + r) / step)) - i0 + 1;
    const long nj = static_cast<long>(std::ceil((hi_y + r) / step)) - j0 + 1;
    std::vector<double> acc1(static_cast<std::size_t>(ni * nj), 0.0), acc2(acc1);
    const double amp = r / std::sqrt(2.0);
    auto add = [&](const MeasureSample& m, std::vector<double>& acc) {
      for (const auto& p : m) {
        const long ci = static_cast<long>(std::floor(p.at.x / step)) - i0;
        const long cj = static_cast<long>(std::floor(p.at.y / step)) - j0;
        for (long dj = -4; dj <= 5; ++dj)
          for (long di = -4; di <= 5; ++di) {
            const long a = ci + di, b = cj + dj;
            if (a < 0 || b < 0 || a >= ni || b >= nj) continue;
            const double fx = 1 - std::abs(p.at.x - (a + i0) * step) / r;
            const double fy = 1 - std::abs(p.at.y - (b + j0) * step) / r;
            if (fx <= 0 || fy <= 0) continue;
            acc[static_cast<std::size_t>(b * ni + a)] += p.mass * amp * fx * fy;
          }
      }
    };
    add(m1, acc1);
    add(m2, acc2);
    for (std::size_t k = 0; k < acc1.size(); ++k) best = std::max(best, std::abs(acc1[k] - acc2[k]));
  }
  return best;
}

// ---------------------------------------------------------------- minimizer

namespace {

// 2 eps K + (lambda / eps) D over the nodes at or above y = 0.
class WMetric {
 public:
  WMetric(const StripGrid& g, double eps, const DoubleWell& p) : index_(static_cast<std::size_t>(g.node_count()), -1) {
    int n = 0;
    for (int j = 0; j <= g.ny(); ++j)
      for (int i = 0; i <= g.nx(); ++i)
        if (g.y(j) >= -1e-12 * g.hy()) index_[static_cast<std::size_t>(g.node(i, j))] = n++;
    const Q1Element el(g);
    const double lambda = 32 * p.max_unit();
    std::vector<Eigen::Triplet<double>> trip;
    for (int j = 0; j < g.ny(); ++j) {
      if (!upper(g, j)) continue;
      for (int i = 0; i < g.nx(); ++i) {
        const auto nodes = el.nodes(g, i, j);
        for (int a = 0; a < 4; ++a) {
          const int ra = index_[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])];
          trip.emplace_back(ra, ra, lambda / eps * g.cell_area() / 4);
          for (int b = 0; b < 4; ++b)
            trip.emplace_back(ra, index_[static_cast<std::size_t>(nodes[static_cast<std::size_t>(b)])],
                              2 * eps * el.stiffness[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]);
        }
      }
    }
    a_.resize(n, n);
    a_.setFromTriplets(trip.begin(), trip.end());
    // Nodes on the y = 0 row of an empty upper half keep a unit diagonal.
    for (int k = 0; k < n; ++k)
      if (a_.coeff(k, k) == 0) a_.coeffRef(k, k) = 1;
    solver_.compute(a_);
    if (solver_.info() != Eigen::Success) throw NumericalError("minimize_eps: metric factorization failed");
  }

  ScalarField solve(const ScalarField& g) const {
    Eigen::VectorXd rhs = gather(g);
    Eigen::VectorXd x = solver_.solve(rhs);
    ScalarField out(g.grid());
    scatter(x, out);
    return out;
  }

  double dot(const ScalarField& s, const ScalarField& t) const {
    return gather(s).dot(a_ * gather(t));
  }

 private:
  Eigen::VectorXd gather(const ScalarField& f) const {
    Eigen::VectorXd v(a_.rows());
    for (std::size_t k = 0; k < index_.size(); ++k)
      if (index_[k] >= 0) v[index_[k]] = f[k];
    return v;
  }
  void scatter(const Eigen::VectorXd& v, ScalarField& f) const {
    for (std::size_t k = 0; k < index_.size(); ++k)
      if (index_[k] >= 0) f[k] = v[index_[k]];
  }

  std::vector<int> index_;
  Eigen::SparseMatrix<double> a_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

// psi(u_c) times the Modica-Mortola integral of each cell.
std::vector<double> surface_cells(const ScalarField& w, const CellField& u, const PhaseProblem& prob) {
  const auto mm = modica_cells(w, prob.eps, prob.potential);
  std::vector<double> out(mm.size(), 0.0);
  for (std::size_t c = 0; c < mm.size(); ++c)
    if (mm[c] != 0) out[c] = prob.psi(u[c]) * mm[c];
  return out;
}

// Surface energy change summed cell by cell (resolves changes far below the
// round-off of the total).
double surface_change(const std::vector<double>& base, const ScalarField& w, const CellField& u,
                      const PhaseProblem& prob) {
  const auto now = surface_cells(w, u, prob);
  double s = 0;
  for (std::size_t c = 0; c < now.size(); ++c) s += now[c] - base[c];
  return s / prob.sigma;
}

Eigen::VectorXd as_vector(const ScalarField& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values().data(), static_cast<Eigen::Index>(f.size()));
}

ScalarField as_field(const StripGrid& g, const Eigen::VectorXd& v) {
  return ScalarField(g, std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

MinimizeResult minimize_eps(const PhaseProblem& prob, double m, double M, PhaseConfig init,
                            const MinimizeOptions& options) {
  require(m >= 0, "minimize_eps: adatom mass must be non-negative");
  const auto& g = init.grid();
  project_phase_mass(init.w, M);
  renormalize_adatoms(init.u, modica_cells(init.w, prob.eps, prob.potential), prob.sigma, m);
  validate(init);

  MinimizeResult res{std::move(init), {}, false, {}, false};
  auto& cfg = res.config;
  const bool elastic = prob.model.mismatch() != 0;
  std::optional<ElasticSolver> solver;
  Eigen::VectorXd guess;
  if (elastic) solver.emplace(prob.model, ElasticWeight::phase(cfg.w), prob.bc);
  else cfg.v = VectorField2(g);

  auto bulk_at = [&](const ScalarField& w) {
    return elastic ? bulk_energy(prob.model, w, cfg.v) : 0.0;
  };
  auto mu_mass = [&](const ScalarField& w, const CellField& u) {
    const auto mm = modica_cells(w, prob.eps, prob.potential);
    double s = 0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * mm[k];
    return s / prob.sigma;
  };

  double energy = bulk_at(cfg.w) + surface_energy(cfg.w, cfg.u, prob);
  res.trace.push_back({0, bulk_at(cfg.w), energy - bulk_at(cfg.w), energy, phase_mass(cfg.w),
                       mu_mass(cfg.w, cfg.u), 0.0});

  std::optional<WMetric> metric;
  if (options.precondition) metric.emplace(g, prob.eps, prob.potential);
  // Initial trial step from the curvature scale of the Dirichlet term.
  double tau_w = metric ? std::min(options.max_step, prob.sigma / prob.psi(0))
                        : std::min(options.max_step, 0.5 * prob.sigma / (16 * prob.eps * std::max(1.0, prob.psi(0))));
  double tau_u = 1.0;
  ScalarField prev_w(g), prev_gw(g);
  CellField prev_u(g), prev_gu(g);
  bool have_prev = false;
  int calm = 0;
  constexpr std::size_t kMemory = 10;
  std::vector<Eigen::VectorXd> mem_s, mem_y;

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    // (1) displacement
    if (elastic) {
      solver->set_weight(ElasticWeight::phase(cfg.w));
      auto sol = solver->solve(guess.size() ? &guess : nullptr);
      guess = sol.dofs;
      cfg.v = std::move(sol.v);
    }
    const double e_start = bulk_at(cfg.w) + surface_energy(cfg.w, cfg.u, prob);
    auto grad = energy_gradient(cfg, prob);

    // Curvature pairs: L-BFGS memory for w on the metric path, Barzilai-Borwein
    // lengths otherwise.
    if (have_prev) {
      const Eigen::VectorXd s = as_vector(cfg.w) - as_vector(prev_w);
      const Eigen::VectorXd y = as_vector(grad.w) - as_vector(prev_gw);
      const double sy = s.dot(y);
      if (metric) {
        if (sy > 1e-12 * s.norm() * y.norm()) {
          if (mem_s.size() == kMemory) {
            mem_s.erase(mem_s.begin());
            mem_y.erase(mem_y.begin());
          }
          mem_s.push_back(s);
          mem_y.push_back(y);
        }
      } else if (sy > 0) {
        tau_w = std::min(options.max_step, s.squaredNorm() / sy);
      }
      double su = 0, yu = 0;
      for (std::size_t k = 0; k < cfg.u.size(); ++k) {
        const double s = cfg.u[k] - prev_u[k], y = grad.u[k] - prev_gu[k];
        su += s * s;
        yu += s * y;
      }
      if (yu > 0 && su > 0) tau_u = std::min(options.max_step, su / yu);
    }
    prev_w = cfg.w;
    prev_gw = grad.w;
    prev_u = cfg.u;
    prev_gu = grad.u;
    have_prev = true;

    // Two-loop recursion with the metric as initial inverse Hessian.
    auto quasi_newton = [&]() {
      Eigen::VectorXd q = as_vector(grad.w);
      const std::size_t n = mem_s.size();
      std::vector<double> alpha(n), rho(n);
      for (std::size_t i = n; i-- > 0;) {
        rho[i] = 1.0 / mem_s[i].dot(mem_y[i]);
        alpha[i] = rho[i] * mem_s[i].dot(q);
        q -= alpha[i] * mem_y[i];
      }
      double scale = std::min(options.max_step, prob.sigma / prob.psi(0));
      if (n) {
        const Eigen::VectorXd py = as_vector(metric->solve(as_field(g, mem_y[n - 1])));
        scale = mem_s[n - 1].dot(mem_y[n - 1]) / mem_y[n - 1].dot(py);
      }
      Eigen::VectorXd r = scale * as_vector(metric->solve(as_field(g, q)));
      for (std::size_t i = 0; i < n; ++i) {
        const double b = rho[i] * mem_y[i].dot(r);
        r += (alpha[i] - b) * mem_s[i];
      }
      return as_field(g, r);
    };

    // (2) phase field, with u renormalized to keep mu_eps(R^2) = m.
    double e_cur = e_start;
    double drop = 0;
    const double bulk_start = bulk_at(cfg.w);
    const auto base = surface_cells(cfg.w, cfg.u, prob);
    double step_taken = 0;
    bool accepted = false;
    ScalarField dir = grad.w;
    if (metric) {
      tau_w = 1.0;
      dir = quasi_newton();
      if (as_vector(dir).dot(as_vector(grad.w)) <= 0) {
        mem_s.clear();
        mem_y.clear();
        dir = quasi_newton();
      }
    }
    for (int bt = 0; bt < 40; ++bt) {
      ScalarField w = cfg.w;
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= tau_w * dir[k];
      project_phase_mass(w, M);
      CellField u = cfg.u;
      renormalize_adatoms(u, modica_cells(w, prob.eps, prob.potential), prob.sigma, m);
      // Armijo against the directional derivative along the projected step.
      double moved = 0, slope = 0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double d = w[k] - cfg.w[k];
        moved += d * d;
        slope += grad.w[k] * d;
      }
      if (moved == 0) break;
      const double bound = metric ? 1e-4 * slope : -1e-4 * moved / tau_w;
      const double change = bulk_at(w) - bulk_start + surface_change(base, w, u, prob);
      if ((!metric || slope < 0) && change <= bound) {
        cfg.w = std::move(w);
        cfg.u = std::move(u);
        e_cur += change;
        drop += change;
        step_taken = tau_w;
        accepted = true;
        break;
      }
      tau_w *= 0.5;
    }

    // (3) adatom density.
    bool accepted_u = false;
    if (m > 0) {
      const auto grad_u = energy_gradient(cfg, prob).u;
      const auto mm = modica_cells(cfg.w, prob.eps, prob.potential);
      const auto base_u = surface_cells(cfg.w, cfg.u, prob);
      for (int bt = 0; bt < 40; ++bt) {
        CellField u = cfg.u;
        for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::max(0.0, u[k] - tau_u * grad_u[k]);
        renormalize_adatoms(u, mm, prob.sigma, m);
        double moved = 0;
        for (std::size_t k = 0; k < u.size(); ++k) moved += (u[k] - cfg.u[k]) * (u[k] - cfg.u[k]);
        if (moved == 0) break;
        const double change = surface_change(base_u, cfg.w, u, prob);
        if (change <= -1e-4 * moved / tau_u) {
          cfg.u = std::move(u);
          e_cur += change;
          drop += change;
          accepted_u = true;
          break;
        }
        tau_u *= 0.5;
      }
    }

    const double bulk = bulk_at(cfg.w);
    res.trace.push_back({iter, bulk, e_cur - bulk, e_cur, phase_mass(cfg.w), mu_mass(cfg.w, cfg.u),
                         step_taken});
    if (!accepted && !accepted_u) {
      // No descent direction survives backtracking: stationary to round-off
      // or a failed line search.
      const double rel = std::abs(e_start - res.trace[res.trace.size() - 2].total) /
                         std::max(1e-300, std::abs(e_start));
      if (rel > options.rel_tol && calm == 0) {
        res.warning = true;
        res.message = "line search failed at iteration " + std::to_string(iter);
      } else {
        res.converged = true;
      }
      break;
    }
    const double change = std::abs(drop) / std::max(1e-300, std::abs(e_cur));
    calm = change < options.rel_tol ? calm + 1 : 0;
    if (calm >= options.patience) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged && !res.warning) {
    res.warning = true;
    res.message = "iteration cap reached";
  }
  return res;
}

PhaseConfig resample(const PhaseConfig& c, const StripGrid& grid, const PhaseProblem& prob,
                     double m, double M) {
  PhaseConfig out(grid);
  for (int j = 0; j <= grid.ny(); ++j)
    for (int i = 0; i <= grid.nx(); ++i)
      out.w.at(i, j) = grid.y(j) < 0 ? 1.0 : std::clamp(interpolate(c.w, grid.x(i), grid.y(j)), 0.0, 1.0);
  project_phase_mass(out.w, M);
  const auto& src = c.grid();
  for (int j = 0; j < grid.ny(); ++j) {
    if (!upper(grid, j)) continue;
    for (int i = 0; i < grid.nx(); ++i) {
      const int si = std::clamp(static_cast<int>((grid.cell_x(i) - src.a()) / src.hx()), 0, src.nx() - 1);
      const int sj = std::clamp(static_cast<int>((grid.cell_y(j) - src.y_min()) / src.hy()), 0, src.ny() - 1);
      out.u.at(i, j) = c.u.at(si, sj);
    }
  }
  renormalize_adatoms(out.u, modica_cells(out.w, prob.eps, prob.potential), prob.sigma, m);
  return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(12) << "iter,bulk,surface,total,mass_w,mass_u,step\n";
  for (const auto& r : trace)
    out << r.iter << ',' << r.bulk << ',' << r.surface << ',' << r.total << ',' << r.mass_w << ','
        << r.mass_u << ',' << r.step << '\n';
}

}  // namespace epitaxy
