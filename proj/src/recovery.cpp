#include "epitaxy/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "epitaxy/errors.hpp"

namespace epitaxy {

namespace {

using boost::math::quadrature::gauss_kronrod;

double bump(double x) {
  const double q = 1 - 4 * x * x;
  return q > 0 ? std::exp(-1 / q) : 0.0;
}

double bump_mass() {
  static const double mass = gauss_kronrod<double, 61>::integrate(bump, -0.5, 0.5, 15, 1e-14);
  return mass;
}

}  // namespace

double mollifier(double x) { return bump(x) / bump_mass(); }

BVProfile mollify_profile(const BVProfile& h, double eps) {
  const double a = h.a(), b = h.b();
  if (!(eps > 0 && eps <= (b - a) / 4)) {
    std::ostringstream msg;
    msg << "mollify_profile: eps = " << eps << " must lie in (0, (b - a) / 4]";
    throw InvalidInput(msg.str());
  }
  // Breakpoint abscissae split the convolution into smooth pieces.
  std::vector<double> knots;
  for (const auto& p : h.breakpoints()) knots.push_back(p.x);
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  const int n = std::max(512, static_cast<int>(std::ceil(16 * (b - a) / eps)));
  std::vector<Vec2> pts(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double x = k == n ? b : a + (b - a) * k / n;
    const double lo = std::max(a, x - eps / 2), hi = std::min(b, x + eps / 2);
    double num = 0, den = 0;
    auto piece = [&](double s0, double s1) {
      if (s1 <= s0) return;
      // h is affine between knots; sample it away from possible jumps.
      const double q1 = s0 + 0.25 * (s1 - s0), q3 = s0 + 0.75 * (s1 - s0);
      const double y1 = h.lower_limit(q1), slope = (h.lower_limit(q3) - y1) / (q3 - q1);
      auto hs = [&](double s) { return y1 + slope * (s - q1); };
      num += gauss_kronrod<double, 21>::integrate(
          [&](double s) { return bump((x - s) / eps) * hs(s); }, s0, s1, 8, 1e-13);
      den += gauss_kronrod<double, 21>::integrate([&](double s) { return bump((x - s) / eps); }, s0,
                                                  s1, 8, 1e-13);
    };
    double s = lo;
    for (double kx : knots)
      if (kx > lo && kx < hi) {
        piece(s, kx);
        s = kx;
      }
    piece(s, hi);
    pts[static_cast<std::size_t>(k)] = {x, num / den};
  }
  BVProfile g(a, b, pts);
  const double scale = h.integral() / g.integral();
  for (auto& p : pts) p.y *= scale;
  return BVProfile(a, b, std::move(pts));
}

// ------------------------------------------------------------ OptimalProfile

OptimalProfile::OptimalProfile(double eps, const DoubleWell& p, double lift, int samples)
    : eps_(eps), lift_(lift), bound_(0), p_(p) {
  require(eps > 0 && eps < 1, "optimal_profile: eps must lie in (0, 1)");
  require(lift > 0, "optimal_profile: lift must be positive");
  require(samples >= 16, "optimal_profile: too few samples");
  bound_ = std::sqrt(p.max_unit() + lift) / eps;
  auto speed = [&](double g) { return std::sqrt(std::max(p(g), 0.0) + lift); };
  auto inv = [&](double g) { return 1.0 / speed(g); };
  const auto n = static_cast<std::size_t>(samples);
  times_.resize(n);
  values_.resize(n);
  slopes_.resize(n);
  double t = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = 1.0 - static_cast<double>(k) / static_cast<double>(n - 1);
    if (k > 0) t += eps * gauss_kronrod<double, 15>::integrate(inv, g, values_[k - 1], 3, 1e-14);
    times_[k] = t;
    values_[k] = g;
    slopes_[k] = -speed(g) / eps;
  }
  if (!std::isfinite(t)) throw NumericalError("optimal_profile: transition time is not finite");
}

double OptimalProfile::operator()(double t) const {
  if (t <= 0) return 1.0;
  if (t >= times_.back()) return 0.0;
  const auto k = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
  const double dt = times_[k + 1] - times_[k];
  const double s = (t - times_[k]) / dt;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  const double v = h00 * values_[k] + h10 * dt * slopes_[k] + h01 * values_[k + 1] + h11 * dt * slopes_[k + 1];
  return std::clamp(v, 0.0, 1.0);
}

double OptimalProfile::derivative(double t) const {
  if (t < 0 || t > times_.back()) return 0.0;
  const auto k = std::min(
      static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1,
      times_.size() - 2);
  const double dt = times_[k + 1] - times_[k];
  const double s = (t - times_[k]) / dt;
  const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
  const double d01 = -d00, d11 = 3 * s * s - 2 * s;
  return (d00 * values_[k] + d01 * values_[k + 1]) / dt + d10 * slopes_[k] + d11 * slopes_[k + 1];
}

double OptimalProfile::half_time() const {
  const auto k = static_cast<std::size_t>(
      std::lower_bound(values_.begin(), values_.end(), 0.5, std::greater<>()) - values_.begin());
  if (k == 0) return 0;
  const double s = (values_[k - 1] - 0.5) / (values_[k - 1] - values_[k]);
  return times_[k - 1] + s * (times_[k] - times_[k - 1]);
}

double OptimalProfile::residual(double t) const {
  const double h = 1e-4 * eps_;
  const double d = ((*this)(t + h) - (*this)(t - h)) / (2 * h);
  return std::abs(eps_ * eps_ * d * d - p_((*this)(t)) - lift_);
}

OptimalProfile optimal_profile(double eps, const DoubleWell& p) {
  require(eps > 0 && eps < 1, "optimal_profile: eps must lie in (0, 1)");
  return OptimalProfile(eps, p, std::sqrt(eps));
}

// ----------------------------------------------------------------- builders

PhaseBuild build_w(const BVProfile& g, const OptimalProfile& gamma, double M, const StripGrid& grid,
                   double inset) {
  require(inset >= 0 && inset < gamma.transition(), "build_w: inset outside the transition");
  const BoundaryLocator loc(g);
  const int j0 = grid.first_row_at_or_above_zero();
  // Vertical compression by alpha <= 1 scales the area by alpha.
  auto fill = [&](double alpha) {
    ScalarField w(grid);
    for (int j = 0; j <= grid.ny(); ++j)
      for (int i = 0; i <= grid.nx(); ++i)
        w.at(i, j) = j < j0 ? 1.0 : gamma(loc.signed_distance({grid.x(i), grid.y(j) / alpha}) + inset);
    return w;
  };
  const double z_mass = phase_mass(fill(1.0));
  require(z_mass > 0, "build_w: the phase field has no film");
  PhaseBuild out{fill(M / z_mass), M / z_mass, gamma.transition()};
  project_phase_mass(out.w, M);
  return out;
}

VectorField2 build_v(const VectorField2& v_sharp, const ScalarField& w, double shift) {
  const auto& g = w.grid();
  require(v_sharp.grid() == g, "build_v: fields on different grids");
  require(shift >= 0, "build_v: negative shift");
  const int k = static_cast<int>(std::ceil(shift / g.hy() - 1e-9));
  if (k >= g.ny()) {
    std::ostringstream msg;
    msg << "build_v: translation by " << shift << " exceeds the grid height";
    throw InvalidInput(msg.str());
  }
  VectorField2 out(g);
  for (int j = k; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i)
      if (w.at(i, j - k) > 0) {
        out.x.at(i, j) = v_sharp.x.at(i, j - k);
        out.y.at(i, j) = v_sharp.y.at(i, j - k);
      }
  return out;
}

AdatomBuild build_u(const AdatomMeasure& grid_constant, const AdmissibleCover& cover,
                    const ScalarField& w, double eps, const DoubleWell& p, double sig) {
  require(grid_constant.atoms().empty(), "build_u: the density must be grid-constant without atoms");
  const auto& g = w.grid();
  const auto& rs = cover.rectangles;
  const auto& segs = grid_constant.segments();
  AdatomBuild out{CellField(g), std::vector<double>(rs.size(), 0.0),
                  std::vector<double>(rs.size(), 0.0), std::vector<double>(rs.size(), 0.0)};

  std::vector<int> owner(segs.size(), -1);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Vec2 mid = 0.5 * (segs[s].segment.p0 + segs[s].segment.p1);
    for (std::size_t r = 0; r < rs.size(); ++r)
      if (rs[r].contains(mid)) {
        owner[s] = static_cast<int>(r);
        break;
      }
    if (owner[s] < 0) throw InvalidInput("build_u: a segment lies outside the cover");
    const auto r = static_cast<std::size_t>(owner[s]);
    if (out.length[r] > 0 && std::abs(out.density[r] - segs[s].u) > 1e-12 * std::max(1.0, segs[s].u))
      throw InvalidInput("build_u: the density is not constant on a cover rectangle");
    out.length[r] += segs[s].segment.length();
    out.density[r] = segs[s].u;
  }

  const auto mm = modica_cells(w, eps, p);
  std::vector<int> cell_owner(mm.size(), -1);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const auto c = static_cast<std::size_t>(g.cell(i, j));
      if (mm[c] == 0) continue;
      const Vec2 at{g.cell_x(i), g.cell_y(j)};
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < segs.size(); ++s) {
        const double d = distance(at, segs[s].segment);
        if (d < best) {
          best = d;
          cell_owner[c] = owner[s];
        }
      }
      if (cell_owner[c] >= 0) out.perimeter[static_cast<std::size_t>(cell_owner[c])] += mm[c] / sig;
    }

  for (std::size_t r = 0; r < rs.size(); ++r)
    if (out.length[r] * out.density[r] > 0 && !(out.perimeter[r] > 0)) {
      std::ostringstream msg;
      msg << "build_u: rectangle " << r << " carries adatom mass but no transition layer; "
          << "use a larger delta or a smaller eps";
      throw NumericalError(msg.str());
    }
  for (std::size_t c = 0; c < mm.size(); ++c) {
    if (cell_owner[c] < 0) continue;
    const auto r = static_cast<std::size_t>(cell_owner[c]);
    out.u[c] = out.length[r] * out.density[r] / out.perimeter[r];
  }
  return out;
}

// ----------------------------------------------------------------- sequence

namespace {

double graph_length(const BVProfile& g) {
  double len = 0;
  const auto& pts = g.breakpoints();
  for (std::size_t k = 1; k < pts.size(); ++k) len += norm(pts[k] - pts[k - 1]);
  return len;
}

double l2_distance(const VectorField2& a, const VectorField2& b) {
  const auto q = trapezoid_weights(a.grid(), Region::all());
  double s = 0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double dx = a.x[k] - b.x[k], dy = a.y[k] - b.y[k];
    s += q[k] * (dx * dx + dy * dy);
  }
  return std::sqrt(s);
}

std::string at_eps(double eps, const std::string& what) {
  std::ostringstream msg;
  msg << "eps = " << eps << ": " << what;
  return msg.str();
}

}  // namespace

RecoveryBundle recovery_sequence(const SharpConfig& sharp, std::span<const double> schedule,
                                 const DoubleWell& p, const SurfaceDensity& psi,
                                 const ElasticModel& model, const DisplacementBC& bc,
                                 const RecoveryOptions& options) {
  for (std::size_t k = 1; k < schedule.size(); ++k)
    require(schedule[k] < schedule[k - 1], "recovery_sequence: schedule must be strictly decreasing");
  const auto& h = sharp.profile;
  const double M = h.integral();
  const double m = sharp.measure.total_mass();
  const double sig = sigma(p);
  const EnvelopeTable env(psi);
  RecoveryBundle bundle;
  std::optional<StripGrid> finest;

  for (double eps : schedule) try {
    const auto g = mollify_profile(h, eps);
    const double ell = std::max(g.lipschitz(), 1.0);
    const OptimalProfile gamma(eps, p, options.lift.value_or(eps * eps));
    const double T = gamma.transition();
    double rise = 0;
    for (const auto& pt : g.breakpoints()) rise = std::max(rise, pt.y - h.lower_limit(pt.x));
    const double shift = (1 + ell) * T + rise;

    const double cell = options.cell_fraction * eps;
    const double alpha_low = M / (M + T * graph_length(g));
    const double top = (g.max_height() + T) / alpha_low + 4 * cell;
    const auto grid = StripGrid::fitted(h.a(), h.b(), std::max(0.25, 0.5 * h.max_height()), top, cell);

    const double inset = std::max(0.0, gamma.half_time() - options.outset * eps);
    auto wb = build_w(g, gamma, M, grid, inset);

    VectorField2 v_sharp(grid);
    if (model.mismatch() != 0 || sharp.displacement) {
      SharpConfig local{h, sharp.measure,
                        sharp.displacement && sharp.displacement->grid() == grid
                            ? sharp.displacement
                            : std::nullopt};
      v_sharp = sharp_bulk(local, model, grid, bc).v;
    }
    auto v = build_v(v_sharp, wb.w, shift);

    const double delta = std::max(options.delta_factor * eps * (1 + ell), 4.5 * std::max(grid.hx(), grid.hy()));
    const auto cover = delta_cover(h, delta, std::max(grid.hx(), grid.hy()));
    auto ub = build_u(grid_constant_project(sharp.measure, cover), cover, wb.w, eps, p, sig);

    const auto prob = make_problem(eps, p, psi, model, bc);
    PhaseConfig config(std::move(wb.w), std::move(v), std::move(ub.u));
    const auto e = energy_eps(config, prob);
    const auto mu = diffuse_measure(config, eps, p, sig);

    RecoveryStep step{.eps = eps,
                      .alpha = wb.alpha,
                      .ell = ell,
                      .transition = T,
                      .shift = shift,
                      .delta = delta,
                      .mass_w = phase_mass(config.w),
                      .mass_mu = mu.total,
                      .bulk = e.bulk,
                      .surface = e.surface,
                      .strain_squared = strain_norm_squared(config.v, Region::upper_half()),
                      .displacement_l2 = l2_distance(config.v, v_sharp),
                      .perimeter = normalized_perimeter(config.w, eps, p, sig),
                      .config = std::move(config),
                      .mollified = g,
                      .adatoms = std::move(ub)};
    if (std::abs(step.mass_mu - m) > 1e-8 * std::max(1.0, m)) {
      std::ostringstream msg;
      msg << "recovery at eps = " << eps << ": adatom mass " << step.mass_mu << " instead of " << m;
      throw NumericalError(msg.str());
    }
    bundle.steps.push_back(std::move(step));
    if (!finest || grid.hx() < finest->hx()) finest = grid;
  } catch (const InvalidInput& e) {
    throw InvalidInput(at_eps(eps, e.what()));
  } catch (const NumericalError& e) {
    throw NumericalError(at_eps(eps, e.what()));
  }

  if (finest) {
    const auto ref = sharp_total(sharp.displacement && sharp.displacement->grid() == *finest
                                     ? sharp
                                     : SharpConfig{h, sharp.measure, std::nullopt},
                                 env, model, *finest, bc);
    bundle.sharp_total = ref.total.value();
    bundle.sharp_bulk = ref.bulk;
    bundle.sharp_surface = ref.surface;
    for (auto& s : bundle.steps) {
      s.sharp_total = bundle.sharp_total;
      s.gap = (s.bulk + s.surface - bundle.sharp_total) / bundle.sharp_total;
    }
  }
  return bundle;
}

void write_recovery_csv(const std::string& path, const RecoveryBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(12) << "epsilon,alpha,mass_w,mass_mu,bulk,surface,sharp_total,gap\n";
  for (const auto& s : bundle.steps)
    out << s.eps << ',' << s.alpha << ',' << s.mass_w << ',' << s.mass_mu << ',' << s.bulk << ','
        << s.surface << ',' << s.sharp_total << ',' << s.gap << '\n';
}

}  // namespace epitaxy
