#include "epitaxy/envelopes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "epitaxy/errors.hpp"

namespace epitaxy {

SurfaceDensity SurfaceDensity::constant(double c) {
  require(c > 0, "SurfaceDensity: constant must be positive");
  SurfaceDensity d;
  d.kind_ = Kind::Constant;
  d.coeffs_ = {c};
  return d;
}

SurfaceDensity SurfaceDensity::affine(double intercept, double slope) {
  require(intercept > 0 && slope >= 0, "SurfaceDensity: affine density needs a > 0, b >= 0");
  SurfaceDensity d;
  d.kind_ = Kind::Affine;
  d.coeffs_ = {intercept, slope};
  return d;
}

SurfaceDensity SurfaceDensity::quadratic(double c0, double c1, double c2) {
  require(c0 > 0, "SurfaceDensity: quadratic density needs psi(0) > 0");
  SurfaceDensity d;
  d.kind_ = Kind::Quadratic;
  d.coeffs_ = {c0, c1, c2};
  return d;
}

SurfaceDensity SurfaceDensity::polynomial(std::vector<double> coefficients) {
  require(!coefficients.empty() && coefficients.front() > 0,
          "SurfaceDensity: polynomial density needs psi(0) > 0");
  SurfaceDensity d;
  d.kind_ = Kind::Polynomial;
  d.coeffs_ = std::move(coefficients);
  return d;
}

SurfaceDensity SurfaceDensity::sampled(std::vector<std::pair<double, double>> samples,
                                       double tail_slope) {
  require(samples.size() >= 2, "SurfaceDensity: need at least two samples");
  require(samples.front().first == 0.0, "SurfaceDensity: samples must start at s = 0");
  for (std::size_t k = 1; k < samples.size(); ++k)
    require(samples[k].first > samples[k - 1].first, "SurfaceDensity: sample grid not increasing");
  for (const auto& [s, v] : samples) require(v > 0, "SurfaceDensity: sampled values must be positive");
  SurfaceDensity d;
  d.kind_ = Kind::Sampled;
  d.samples_ = std::move(samples);
  d.tail_slope_ = tail_slope;
  return d;
}

double SurfaceDensity::raw(double s) const {
  if (kind_ != Kind::Sampled) {
    double v = 0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) v = v * s + *it;
    return v;
  }
  const auto& last = samples_.back();
  if (s >= last.first) return last.second + tail_slope_ * (s - last.first);
  auto hi = std::upper_bound(samples_.begin(), samples_.end(), s,
                             [](double x, const auto& p) { return x < p.first; });
  auto lo = hi - 1;
  const double t = (s - lo->first) / (hi->first - lo->first);
  return (1 - t) * lo->second + t * hi->second;
}

double SurfaceDensity::operator()(double s) const {
  if (!(s >= 0)) throw InvalidInput("SurfaceDensity: evaluation at negative s");
  const double v = raw(s);
  if (!(v > 0)) {
    std::ostringstream msg;
    msg << "SurfaceDensity: non-positive value " << v << " at s = " << s;
    throw InvalidInput(msg.str());
  }
  return v;
}

double SurfaceDensity::derivative(double s) const {
  if (!(s >= 0)) throw InvalidInput("SurfaceDensity: evaluation at negative s");
  if (kind_ != Kind::Sampled) {
    double v = 0;
    for (std::size_t k = coeffs_.size(); k-- > 1;) v = v * s + static_cast<double>(k) * coeffs_[k];
    return v;
  }
  if (s >= samples_.back().first) return tail_slope_;
  auto hi = std::upper_bound(samples_.begin(), samples_.end(), s,
                             [](double x, const auto& p) { return x < p.first; });
  auto lo = hi - 1;
  return (hi->second - lo->second) / (hi->first - lo->first);
}

std::string SurfaceDensity::describe() const {
  std::ostringstream out;
  switch (kind_) {
    case Kind::Constant: out << "constant " << coeffs_[0]; break;
    case Kind::Affine: out << "affine " << coeffs_[0] << " + " << coeffs_[1] << " s"; break;
    case Kind::Quadratic:
    case Kind::Polynomial:
      out << "polynomial";
      for (double c : coeffs_) out << ' ' << c;
      break;
    case Kind::Sampled: out << "sampled (" << samples_.size() << " points)"; break;
  }
  return out.str();
}

std::vector<double> uniform_grid(double s_max, int points) {
  require(s_max > 0 && points >= 3, "uniform_grid: need s_max > 0 and at least 3 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) g[k] = s_max * k / (points - 1);
  g.back() = s_max;
  return g;
}

namespace {

void check_grid(std::span<const double> grid) {
  require(grid.size() >= 3, "envelope grid needs at least 3 points");
  require(grid.front() == 0.0, "envelope grid must start at s = 0");
  for (std::size_t k = 1; k < grid.size(); ++k)
    require(grid[k] > grid[k - 1], "envelope grid is not strictly increasing");
}

void check_convex(std::span<const double> grid, std::span<const double> v, const char* who) {
  require(grid.size() == v.size(), std::string(who) + ": table size mismatch");
  double scale = 1;
  for (double x : v) scale = std::max(scale, std::abs(x));
  const double tol = 1e-9 * scale;
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    // Chord slopes must be non-decreasing; compare the interpolation defect.
    const double t = (grid[k] - grid[k - 1]) / (grid[k + 1] - grid[k - 1]);
    const double chord = (1 - t) * v[k - 1] + t * v[k + 1];
    if (v[k] > chord + tol) throw InvalidInput(std::string(who) + ": input is not convex");
  }
}

double interp(std::span<const double> grid, std::span<const double> v, double s) {
  if (s <= grid.front()) return v.front();
  if (s >= grid.back()) return v.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), s) - grid.begin());
  const std::size_t lo = hi - 1;
  const double t = (s - grid[lo]) / (grid[hi] - grid[lo]);
  return (1 - t) * v[lo] + t * v[hi];
}

}  // namespace

std::vector<double> convexify(std::span<const double> grid, std::span<const double> values) {
  check_grid(grid);
  require(grid.size() == values.size(), "convexify: table size mismatch");
  // Andrew's monotone chain, lower hull only.
  std::vector<std::size_t> hull;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    while (hull.size() >= 2) {
      const std::size_t p = hull[hull.size() - 2], q = hull.back();
      const double cross = (grid[q] - grid[p]) * (values[k] - values[p]) -
                           (values[q] - values[p]) * (grid[k] - grid[p]);
      if (cross <= 0) hull.pop_back();
      else break;
    }
    hull.push_back(k);
  }
  std::vector<double> out(grid.size());
  for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
    const std::size_t p = hull[h], q = hull[h + 1];
    out[p] = values[p];
    for (std::size_t k = p + 1; k < q; ++k) {
      const double t = (grid[k] - grid[p]) / (grid[q] - grid[p]);
      out[k] = (1 - t) * values[p] + t * values[q];
    }
  }
  out.back() = values.back();
  return out;
}

std::vector<double> convexify(const SurfaceDensity& psi, std::span<const double> grid) {
  check_grid(grid);
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) v[k] = psi(grid[k]);
  return convexify(grid, v);
}

SubadditiveEnvelope subadditive_envelope(std::span<const double> grid,
                                         std::span<const double> psi_cvx) {
  check_grid(grid);
  check_convex(grid, psi_cvx, "subadditive_envelope");
  for (double v : psi_cvx) require(v > 0, "subadditive_envelope: values must be positive");

  const std::size_t n = grid.size();
  double best = psi_cvx[1] / grid[1];
  for (std::size_t k = 2; k < n; ++k) best = std::min(best, psi_cvx[k] / grid[k]);
  // Left-most minimiser, ties resolved at round-off level.
  std::size_t arg = 1;
  while (psi_cvx[arg] / grid[arg] > best * (1 + 1e-13)) ++arg;

  SubadditiveEnvelope env;
  env.values.assign(psi_cvx.begin(), psi_cvx.end());
  if (arg == n - 1) {
    // psi(s)/s still decreasing at s_max: the threshold is at infinity and
    // theta is the limit slope, estimated by the terminal chord.
    const double tail = (psi_cvx[n - 1] - psi_cvx[n - 2]) / (grid[n - 1] - grid[n - 2]);
    env.theta = std::max(0.0, std::min(best, tail));
    return env;
  }
  env.s0 = grid[arg];
  env.theta = best;
  for (std::size_t k = arg + 1; k < n; ++k) env.values[k] = best * grid[k];
  return env;
}

std::vector<double> cut_envelope(std::span<const double> grid, std::span<const double> psi_tilde) {
  check_grid(grid);
  check_convex(grid, psi_tilde, "cut_envelope");
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) out[k] = 2 * interp(grid, psi_tilde, 0.5 * grid[k]);
  return out;
}

double recession(std::span<const double> grid, std::span<const double> values, double rel_tol) {
  require(grid.size() == values.size() && grid.size() >= 3, "recession: table too small");
  const std::size_t n = grid.size();
  const double last = (values[n - 1] - values[n - 2]) / (grid[n - 1] - grid[n - 2]);
  const double prev = (values[n - 2] - values[n - 3]) / (grid[n - 2] - grid[n - 3]);
  if (std::abs(last - prev) > rel_tol * std::max(1.0, std::abs(last))) {
    std::ostringstream msg;
    msg << "unresolved recession: terminal slopes " << prev << " and " << last
        << " still differ at s_max = " << grid[n - 1];
    throw NumericalError(msg.str());
  }
  return last;
}

EnvelopeTable::EnvelopeTable(const SurfaceDensity& psi, EnvelopeOptions options)
    : grid_(uniform_grid(options.s_max, options.points)) {
  psi_.resize(grid_.size());
  for (std::size_t k = 0; k < grid_.size(); ++k) psi_[k] = psi(grid_[k]);
  psi_cvx_ = convexify(grid_, psi_);
  auto env = subadditive_envelope(grid_, psi_cvx_);
  psi_tilde_ = std::move(env.values);
  s0_ = env.s0;
  theta_ = env.theta;
  psi_cut_ = cut_envelope(grid_, psi_tilde_);
}

double EnvelopeTable::lookup(const std::vector<double>& table, double s) const {
  if (!(s >= 0) || s > grid_.back() * (1 + 1e-12)) {
    std::ostringstream msg;
    msg << "density " << s << " outside the envelope table range [0, " << grid_.back() << "]";
    throw InvalidInput(msg.str());
  }
  return interp(grid_, table, s);
}

double EnvelopeTable::tilde(double s) const { return lookup(psi_tilde_, s); }
double EnvelopeTable::cut(double s) const { return lookup(psi_cut_, s); }

void write_envelope_csv(const std::string& path, const EnvelopeTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(12);
  out << "# s0=";
  if (t.s0()) out << *t.s0();
  else out << "inf";
  out << " theta=" << t.theta() << "\n";
  out << "s,psi,psi_cvx,psi_tilde,psi_cut\n";
  for (std::size_t k = 0; k < t.grid().size(); ++k)
    out << t.grid()[k] << ',' << t.psi()[k] << ',' << t.psi_cvx()[k] << ',' << t.psi_tilde()[k]
        << ',' << t.psi_cut()[k] << '\n';
}

}  // namespace epitaxy
