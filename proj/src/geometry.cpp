#include "epitaxy/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "epitaxy/errors.hpp"

namespace epitaxy {

namespace {
constexpr double kOnSegmentTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double norm(Vec2 p) { return std::hypot(p.x, p.y); }

double distance(Vec2 p, const Segment& s) {
  const Vec2 d = s.p1 - s.p0;
  const double len2 = d.x * d.x + d.y * d.y;
  if (len2 == 0) return norm(p - s.p0);
  const double t = std::clamp(((p.x - s.p0.x) * d.x + (p.y - s.p0.y) * d.y) / len2, 0.0, 1.0);
  return norm(p - (s.p0 + t * d));
}

const char* to_string(SegmentClass c) {
  switch (c) {
    case SegmentClass::Regular: return "regular";
    case SegmentClass::Jump: return "jump";
    case SegmentClass::Cut: return "cut";
  }
  return "?";
}

// ---------------------------------------------------------------- BVProfile

BVProfile::BVProfile(double a, double b, std::vector<Vec2> breakpoints, std::vector<CutRecord> cuts)
    : a_(a), b_(b), points_(std::move(breakpoints)), cuts_(std::move(cuts)) {
  require(b > a, "BVProfile: empty interval");
  require(points_.size() >= 2, "BVProfile: need at least two breakpoints");
  require(points_.front().x == a && points_.back().x == b,
          "BVProfile: breakpoints must start at a and end at b");
  for (const auto& p : points_) require(p.y >= 0, "BVProfile: heights must be non-negative");
  for (std::size_t k = 1; k < points_.size(); ++k) {
    require(points_[k].x >= points_[k - 1].x, "BVProfile: breakpoints not sorted");
    if (points_[k].x == points_[k - 1].x) {
      require(k >= 1 && k + 1 < points_.size() && k - 1 > 0,
              "BVProfile: jumps must be interior to (a,b)");
      require(!(k >= 2 && points_[k - 2].x == points_[k].x),
              "BVProfile: more than two breakpoints share an abscissa");
      if (points_[k].y != points_[k - 1].y)
        jumps_.push_back({points_[k].x, points_[k - 1].y, points_[k].y});
    }
  }
  std::sort(cuts_.begin(), cuts_.end(), [](const auto& l, const auto& r) { return l.x < r.x; });
  for (std::size_t k = 0; k < cuts_.size(); ++k) {
    auto& c = cuts_[k];
    require(c.x > a && c.x < b, "BVProfile: cut abscissa must be interior to (a,b)");
    require(k == 0 || cuts_[k - 1].x != c.x, "BVProfile: duplicate cut abscissa");
    for (const auto& j : jumps_)
      require(j.x != c.x, "BVProfile: overlapping jump/cut abscissae");
    c.lower_limit = lower_limit(c.x);
    require(c.value >= 0, "BVProfile: cut value must be non-negative");
    require(c.value < c.lower_limit, "BVProfile: cut value must lie below the lower limit");
  }
}

BVProfile BVProfile::flat(double a, double b, double height) {
  return BVProfile(a, b, {{a, height}, {b, height}});
}

double BVProfile::polyline(double x, bool from_left) const {
  if (x <= a_) return points_.front().y;
  if (x >= b_) return points_.back().y;
  // First breakpoint with abscissa >= x (from the left) or > x (from the right).
  auto it = from_left
                ? std::lower_bound(points_.begin(), points_.end(), x,
                                   [](const Vec2& p, double v) { return p.x < v; })
                : std::upper_bound(points_.begin(), points_.end(), x,
                                   [](double v, const Vec2& p) { return v < p.x; });
  if (from_left && it->x == x) return it->y;
  if (!from_left && (it - 1)->x == x) return (it - 1)->y;
  const Vec2& p = *(it - 1);
  const Vec2& q = *it;
  const double t = (x - p.x) / (q.x - p.x);
  return (1 - t) * p.y + t * q.y;
}

double BVProfile::lower_limit(double x) const {
  return std::min(polyline(x, true), polyline(x, false));
}

double BVProfile::value(double x) const {
  for (const auto& c : cuts_)
    if (c.x == x) return c.value;
  return lower_limit(x);
}

double BVProfile::integral() const {
  double total = 0;
  for (std::size_t k = 1; k < points_.size(); ++k)
    total += 0.5 * (points_[k].y + points_[k - 1].y) * (points_[k].x - points_[k - 1].x);
  return total;
}

double BVProfile::max_height() const {
  double m = 0;
  for (const auto& p : points_) m = std::max(m, p.y);
  return m;
}

double BVProfile::lipschitz() const {
  double l = 0;
  for (std::size_t k = 1; k < points_.size(); ++k) {
    const double dx = points_[k].x - points_[k - 1].x;
    if (dx > 0) l = std::max(l, std::abs(points_[k].y - points_[k - 1].y) / dx);
  }
  return l;
}

double BVProfile::total_variation() const {
  double tv = 0;
  for (std::size_t k = 1; k < points_.size(); ++k) tv += std::abs(points_[k].y - points_[k - 1].y);
  for (const auto& c : cuts_) tv += 2 * c.depth();
  return tv;
}

// ------------------------------------------------------------ decomposition

GraphDecomposition decompose(const BVProfile& profile) {
  GraphDecomposition g;
  const auto& pts = profile.breakpoints();
  for (std::size_t k = 1; k < pts.size(); ++k) {
    if (pts[k].x == pts[k - 1].x) continue;
    Segment s{pts[k - 1], pts[k]};
    g.regular_length += s.length();
    g.segments.push_back({s, SegmentClass::Regular});
  }
  for (const auto& j : profile.jumps()) {
    for (const auto& c : profile.cuts())
      if (c.x == j.x) throw InvalidInput("decompose: overlapping jump/cut abscissae");
    Segment s{{j.x, j.lower()}, {j.x, j.upper()}};
    g.jump_length += s.length();
    g.segments.push_back({s, SegmentClass::Jump});
  }
  for (const auto& c : profile.cuts()) {
    Segment s{{c.x, c.value}, {c.x, c.lower_limit}};
    g.cut_length += s.length();
    g.segments.push_back({s, SegmentClass::Cut});
  }
  return g;
}

// ------------------------------------------------------------ AdatomMeasure

AdatomMeasure::AdatomMeasure(std::vector<DensitySegment> segments, std::vector<Atom> atoms)
    : segments_(std::move(segments)) {
  for (const auto& s : segments_) require(s.u >= 0, "AdatomMeasure: densities must be non-negative");
  *this = with_atoms(std::move(atoms));
}

AdatomMeasure AdatomMeasure::uniform(const GraphDecomposition& graph, double u) {
  return per_class(graph, u, u, u);
}

AdatomMeasure AdatomMeasure::per_class(const GraphDecomposition& graph, double u_regular,
                                       double u_jump, double u_cut) {
  std::vector<DensitySegment> segs;
  for (const auto& s : graph.segments) {
    const double u = s.cls == SegmentClass::Regular ? u_regular
                     : s.cls == SegmentClass::Jump  ? u_jump
                                                    : u_cut;
    segs.push_back({s.segment, s.cls, u});
  }
  return AdatomMeasure(std::move(segs), {});
}

AdatomMeasure AdatomMeasure::per_segment(const GraphDecomposition& graph, std::span<const double> u) {
  require(u.size() == graph.segments.size(), "AdatomMeasure: one density per segment expected");
  std::vector<DensitySegment> segs;
  for (std::size_t k = 0; k < u.size(); ++k)
    segs.push_back({graph.segments[k].segment, graph.segments[k].cls, u[k]});
  return AdatomMeasure(std::move(segs), {});
}

AdatomMeasure AdatomMeasure::with_atoms(std::vector<Atom> atoms) const {
  AdatomMeasure out;
  out.segments_ = segments_;
  out.atoms_ = atoms_;
  for (const auto& a : atoms) {
    require(a.mass > 0, "AdatomMeasure: atom masses must be positive");
    double d = kInf;
    for (const auto& s : segments_) d = std::min(d, distance(a.at, s.segment));
    if (d > kOnSegmentTol) {
      std::ostringstream msg;
      msg << "AdatomMeasure: atom at (" << a.at.x << ", " << a.at.y << ") is not on Gamma";
      throw InvalidInput(msg.str());
    }
    out.atoms_.push_back(a);
  }
  return out;
}

double AdatomMeasure::continuous_mass() const {
  double m = 0;
  for (const auto& s : segments_) m += s.u * s.segment.length();
  return m;
}

double AdatomMeasure::singular_mass() const {
  double m = 0;
  for (const auto& a : atoms_) m += a.mass;
  return m;
}

double AdatomMeasure::max_density() const {
  double m = 0;
  for (const auto& s : segments_) m = std::max(m, s.u);
  return m;
}

void write_measure_csv(const std::string& path, const AdatomMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(12) << "class,x0,y0,x1,y1,u\n";
  for (const auto& s : mu.segments())
    out << to_string(s.cls) << ',' << s.segment.p0.x << ',' << s.segment.p0.y << ','
        << s.segment.p1.x << ',' << s.segment.p1.y << ',' << s.u << '\n';
  for (const auto& a : mu.atoms())
    out << "atom," << a.at.x << ',' << a.at.y << ',' << a.at.x << ',' << a.at.y << ',' << a.mass
        << '\n';
}

// ---------------------------------------------------------- BoundaryLocator

BoundaryLocator::BoundaryLocator(const BVProfile& profile)
    : profile_(profile), segments_(decompose(profile).segments) {
  require(!segments_.empty(), "signed distance: empty profile");
  const int n = std::clamp(static_cast<int>(segments_.size()), 1, 512);
  x0_ = profile.a();
  bucket_width_ = (profile.b() - profile.a()) / n;
  buckets_.assign(static_cast<std::size_t>(n), {});
  for (int k = 0; k < static_cast<int>(segments_.size()); ++k) {
    const auto& s = segments_[k].segment;
    const double lo = std::min(s.p0.x, s.p1.x), hi = std::max(s.p0.x, s.p1.x);
    const int b0 = std::clamp(static_cast<int>((lo - x0_) / bucket_width_), 0, n - 1);
    const int b1 = std::clamp(static_cast<int>((hi - x0_) / bucket_width_), 0, n - 1);
    for (int b = b0; b <= b1; ++b) buckets_[b].push_back(k);
  }
}

double BoundaryLocator::nearest(Vec2 p, bool include_cuts) const {
  const int n = static_cast<int>(buckets_.size());
  const int home = std::clamp(static_cast<int>((p.x - x0_) / bucket_width_), 0, n - 1);
  double best = kInf;
  for (int r = 0; r < n; ++r) {
    // Buckets at ring r are at least this far away in x.
    const double gap = (r - 1) * bucket_width_;
    if (r > 0 && gap > best) break;
    for (int b : {home - r, home + r}) {
      if (b < 0 || b >= n || (r == 0 && b != home)) continue;
      for (int k : buckets_[b]) {
        if (!include_cuts && segments_[k].cls == SegmentClass::Cut) continue;
        best = std::min(best, distance(p, segments_[k].segment));
      }
      if (r == 0) break;
    }
  }
  return best;
}

bool BoundaryLocator::inside(Vec2 p) const { return p.y < profile_.value(p.x); }

double BoundaryLocator::distance_to_graph(Vec2 p) const { return nearest(p, true); }
double BoundaryLocator::distance_to_upper_boundary(Vec2 p) const { return nearest(p, false); }

double BoundaryLocator::signed_distance(Vec2 p) const {
  if (inside(p)) return -nearest(p, true);
  // Points on a crack are in the complement and in the closure of the film.
  if (p.y < profile_.lower_limit(p.x)) return 0.0;
  return nearest(p, false);
}

ScalarField signed_distance(const BVProfile& profile, const StripGrid& grid) {
  const BoundaryLocator loc(profile);
  ScalarField d(grid);
  for (int j = 0; j <= grid.ny(); ++j)
    for (int i = 0; i <= grid.nx(); ++i) d.at(i, j) = loc.signed_distance({grid.x(i), grid.y(j)});
  return d;
}

// ---------------------------------------------------------------- Hausdorff

std::vector<Vec2> sample_complement(const BVProfile& profile, const StripGrid& grid) {
  std::vector<Vec2> pts;
  for (int j = 0; j <= grid.ny(); ++j)
    for (int i = 0; i <= grid.nx(); ++i) {
      const Vec2 p{grid.x(i), grid.y(j)};
      if (p.y >= profile.value(p.x)) pts.push_back(p);
    }
  const double step = 0.5 * std::min(grid.hx(), grid.hy());
  for (const auto& s : decompose(profile).segments) {
    const int n = std::max(1, static_cast<int>(std::ceil(s.segment.length() / step)));
    for (int k = 0; k <= n; ++k) {
      const Vec2 p = s.segment.p0 + (static_cast<double>(k) / n) * (s.segment.p1 - s.segment.p0);
      if (p.y >= grid.y_min() && p.y <= grid.y_max()) pts.push_back(p);
    }
  }
  return pts;
}

HausdorffResult hausdorff_complement(const BVProfile& p1, const BVProfile& p2,
                                     const StripGrid& grid) {
  require(p1.a() == p2.a() && p1.b() == p2.b(), "hausdorff_complement: mismatched intervals");
  const BoundaryLocator l1(p1), l2(p2);
  auto one_sided = [&](const BVProfile& from, const BoundaryLocator& to) {
    double worst = 0;
    for (const Vec2& p : sample_complement(from, grid)) {
      // Distance to the closed complement of the other film.
      if (!to.inside(p)) continue;
      worst = std::max(worst, to.distance_to_graph(p));
    }
    return worst;
  };
  HausdorffResult r;
  r.value = std::max(one_sided(p1, l2), one_sided(p2, l1));
  r.resolution = std::max(grid.hx(), grid.hy());
  return r;
}

// -------------------------------------------------------------------- covers

std::optional<Segment> clip(const Segment& s, const Rect& r) {
  // Liang-Barsky on the closed rectangle.
  const Vec2 d = s.p1 - s.p0;
  double t0 = 0, t1 = 1;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {s.p0.x - r.x0, r.x1 - s.p0.x, s.p0.y - r.y0, r.y1 - s.p0.y};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0) {
      if (q[k] < 0) return std::nullopt;
      continue;
    }
    const double t = q[k] / p[k];
    if (p[k] < 0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    if (t0 > t1) return std::nullopt;
  }
  return Segment{s.p0 + t0 * d, s.p0 + t1 * d};
}

double length_in(std::span<const ClassifiedSegment> segments, const Rect& r) {
  double l = 0;
  for (const auto& s : segments)
    if (auto c = clip(s.segment, r)) l += c->length();
  return l;
}

double length_in(std::span<const DensitySegment> segments, const Rect& r) {
  double l = 0;
  for (const auto& s : segments)
    if (auto c = clip(s.segment, r)) l += c->length();
  return l;
}

AdmissibleCover delta_cover(const BVProfile& profile, double delta, double min_cell) {
  require(delta > 0, "delta_cover: delta must be positive");
  if (delta < 4 * min_cell) {
    std::ostringstream msg;
    msg << "delta_cover: delta = " << delta << " is below 4 grid cells (" << 4 * min_cell
        << "); the cover cannot be resolved";
    throw InvalidInput(msg.str());
  }
  const auto graph = decompose(profile);
  const double len = profile.b() - profile.a();
  int columns = static_cast<int>(std::floor(len / delta)) + 1;
  if (len / columns > 0.95 * delta) ++columns;
  const double width = len / columns;
  const double slack = delta - width;

  std::vector<double> xs(static_cast<std::size_t>(columns) + 1);
  for (int k = 0; k <= columns; ++k) xs[k] = profile.a() + k * width;
  xs.back() = profile.b();
  // Interior column boundaries must not run along a vertical segment.
  for (int k = 1; k < columns; ++k)
    for (const auto& s : graph.segments)
      if (s.segment.vertical() && std::abs(s.segment.p0.x - xs[k]) < 1e-12) xs[k] += 0.25 * slack;

  AdmissibleCover cover;
  cover.delta = delta;
  const double margin = 0.1 * delta;
  for (int k = 0; k < columns; ++k) {
    const Rect column{xs[k], xs[k + 1], -kInf, kInf};
    double lo = kInf, hi = -kInf;
    std::vector<double> horizontal;
    for (const auto& s : graph.segments) {
      auto c = clip(s.segment, {column.x0, column.x1, -1e300, 1e300});
      if (!c) continue;
      lo = std::min({lo, c->p0.y, c->p1.y});
      hi = std::max({hi, c->p0.y, c->p1.y});
      if (c->p0.y == c->p1.y && c->length() > 0) horizontal.push_back(c->p0.y);
    }
    if (lo > hi) continue;
    const double y0 = lo - margin, height = hi - lo + 2 * margin;
    const int stack = static_cast<int>(std::floor(height / delta)) + 1;
    const double h = height / stack;
    std::vector<double> ys(static_cast<std::size_t>(stack) + 1);
    for (int m = 0; m <= stack; ++m) ys[m] = y0 + m * h;
    for (int m = 1; m < stack; ++m)
      for (double yh : horizontal)
        if (std::abs(ys[m] - yh) < 1e-12) ys[m] += 0.1 * h;
    for (int m = 0; m < stack; ++m) cover.rectangles.push_back({xs[k], xs[k + 1], ys[m], ys[m + 1]});
  }
  return cover;
}

std::string check_cover(const GraphDecomposition& graph, const AdmissibleCover& cover) {
  std::ostringstream msg;
  const auto& rs = cover.rectangles;
  for (std::size_t k = 0; k < rs.size(); ++k) {
    if (!(rs[k].width() < cover.delta && rs[k].height() < cover.delta)) {
      msg << "rectangle " << k << " has a side >= delta";
      return msg.str();
    }
    for (std::size_t l = k + 1; l < rs.size(); ++l) {
      const bool overlap = rs[k].x0 < rs[l].x1 && rs[l].x0 < rs[k].x1 && rs[k].y0 < rs[l].y1 &&
                           rs[l].y0 < rs[k].y1;
      if (overlap) {
        msg << "rectangles " << k << " and " << l << " overlap";
        return msg.str();
      }
    }
  }
  double covered = 0;
  for (const auto& r : rs) covered += length_in(graph.segments, r);
  if (std::abs(covered - graph.total_length()) > 1e-9 * std::max(1.0, graph.total_length())) {
    msg << "covered length " << covered << " differs from H1(Gamma) = " << graph.total_length();
    return msg.str();
  }
  return {};
}

AdatomMeasure grid_constant_project(const AdatomMeasure& mu, const AdmissibleCover& cover) {
  const auto& rs = cover.rectangles;
  std::vector<double> mass(rs.size(), 0.0), length(rs.size(), 0.0);
  for (std::size_t k = 0; k < rs.size(); ++k)
    for (const auto& s : mu.segments())
      if (auto c = clip(s.segment, rs[k])) {
        length[k] += c->length();
        mass[k] += s.u * c->length();
      }
  for (const auto& a : mu.atoms()) {
    auto it = std::find_if(rs.begin(), rs.end(), [&](const Rect& r) { return r.contains(a.at); });
    if (it == rs.end()) throw InvalidInput("grid_constant_project: atom outside the cover");
    mass[static_cast<std::size_t>(it - rs.begin())] += a.mass;
  }
  std::vector<DensitySegment> out;
  for (std::size_t k = 0; k < rs.size(); ++k) {
    if (length[k] == 0) {
      if (mass[k] > 0) {
        std::ostringstream msg;
        msg << "grid_constant_project: rectangle " << k << " carries mass " << mass[k]
            << " but meets Gamma in a null set";
        throw NumericalError(msg.str());
      }
      continue;
    }
    const double u = mass[k] / length[k];
    for (const auto& s : mu.segments())
      if (auto c = clip(s.segment, rs[k]); c && c->length() > 0) out.push_back({*c, s.cls, u});
  }
  return AdatomMeasure(std::move(out), {});
}

}  // namespace epitaxy
