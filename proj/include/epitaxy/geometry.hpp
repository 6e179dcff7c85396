// Film profiles h : (a,b) -> [0,inf) of bounded variation, represented as a
// polyline with jump and cut records, together with their extended graphs,
// adatom measures on the graph, signed distances and delta-admissible covers.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epitaxy/grid.hpp"

namespace epitaxy {

struct Vec2 {
  double x = 0, y = 0;
};

inline Vec2 operator+(Vec2 p, Vec2 q) { return {p.x + q.x, p.y + q.y}; }
inline Vec2 operator-(Vec2 p, Vec2 q) { return {p.x - q.x, p.y - q.y}; }
inline Vec2 operator*(double s, Vec2 p) { return {s * p.x, s * p.y}; }
double norm(Vec2 p);

struct Segment {
  Vec2 p0, p1;
  double length() const { return norm(p1 - p0); }
  bool vertical() const { return p0.x == p1.x; }
};

double distance(Vec2 p, const Segment& s);

enum class SegmentClass { Regular, Jump, Cut };
const char* to_string(SegmentClass c);

struct JumpRecord {
  double x;
  double left;   // h(x-)
  double right;  // h(x+)
  double lower() const { return left < right ? left : right; }
  double upper() const { return left < right ? right : left; }
};

/// Vertical crack at x: the pointwise value h(x) sits strictly below the
/// lower limit h^-(x), so {x} x [h(x), h^-(x)) lies outside the film.
struct CutRecord {
  double x;
  double value;
  double lower_limit = 0;  // filled in from the polyline by BVProfile
  double depth() const { return lower_limit - value; }
};

class BVProfile {
 public:
  /// Breakpoints sorted by x from a to b; two consecutive breakpoints with
  /// the same abscissa encode a jump (left limit first). Cut records carry
  /// x and the pointwise value; the lower limit is derived.
  BVProfile(double a, double b, std::vector<Vec2> breakpoints, std::vector<CutRecord> cuts = {});

  static BVProfile flat(double a, double b, double height);

  double a() const { return a_; }
  double b() const { return b_; }
  const std::vector<Vec2>& breakpoints() const { return points_; }
  const std::vector<JumpRecord>& jumps() const { return jumps_; }
  const std::vector<CutRecord>& cuts() const { return cuts_; }
  bool is_regular() const { return jumps_.empty() && cuts_.empty(); }

  /// Pointwise (lower semicontinuous) value: min of one-sided limits at a
  /// jump, the cut value at a cut.
  double value(double x) const;
  /// Lower limit liminf_{t->x} h(t); ignores cuts.
  double lower_limit(double x) const;

  double integral() const;
  double max_height() const;
  /// Largest slope of the non-vertical pieces.
  double lipschitz() const;
  /// Piece variations + jump heights + 2 * cut depths.
  double total_variation() const;

 private:
  double polyline(double x, bool from_left) const;

  double a_, b_;
  std::vector<Vec2> points_;
  std::vector<JumpRecord> jumps_;
  std::vector<CutRecord> cuts_;
};

struct ClassifiedSegment {
  Segment segment;
  SegmentClass cls;
};

/// Gamma = regular part (graph over continuity points), jump part and cut
/// part, as disjoint segment lists.
struct GraphDecomposition {
  std::vector<ClassifiedSegment> segments;
  double regular_length = 0;
  double jump_length = 0;
  double cut_length = 0;
  double total_length() const { return regular_length + jump_length + cut_length; }
};

GraphDecomposition decompose(const BVProfile& profile);

struct DensitySegment {
  Segment segment;
  SegmentClass cls;
  double u = 0;
};

struct Atom {
  Vec2 at;
  double mass = 0;
};

/// mu = u H^1 restricted to Gamma + sum of atoms.
class AdatomMeasure {
 public:
  AdatomMeasure() = default;
  AdatomMeasure(std::vector<DensitySegment> segments, std::vector<Atom> atoms);

  static AdatomMeasure uniform(const GraphDecomposition& graph, double u);
  static AdatomMeasure per_class(const GraphDecomposition& graph, double u_regular, double u_jump,
                                 double u_cut);
  static AdatomMeasure per_segment(const GraphDecomposition& graph, std::span<const double> u);

  /// Same density with atoms added; throws if an atom is not on a segment.
  AdatomMeasure with_atoms(std::vector<Atom> atoms) const;

  const std::vector<DensitySegment>& segments() const { return segments_; }
  const std::vector<Atom>& atoms() const { return atoms_; }

  double continuous_mass() const;
  double singular_mass() const;
  double total_mass() const { return continuous_mass() + singular_mass(); }
  double max_density() const;

 private:
  std::vector<DensitySegment> segments_;
  std::vector<Atom> atoms_;
};

/// CSV segment table: class,x0,y0,x1,y1,u (atoms as class "atom" rows with
/// the mass in the u column).
void write_measure_csv(const std::string& path, const AdatomMeasure& mu);

/// Nearest-segment queries against the extended graph, bucketed along x.
class BoundaryLocator {
 public:
  explicit BoundaryLocator(const BVProfile& profile);

  /// d_Omega = dist(p, Omega) - dist(p, R^2 \ Omega); negative in the film.
  double signed_distance(Vec2 p) const;
  bool inside(Vec2 p) const;
  /// Distance to all of Gamma (regular, jump and cut parts).
  double distance_to_graph(Vec2 p) const;
  /// Distance to the graph of the lower limit (regular and jump parts).
  double distance_to_upper_boundary(Vec2 p) const;

  const BVProfile& profile() const { return profile_; }

 private:
  double nearest(Vec2 p, bool include_cuts) const;

  BVProfile profile_;
  std::vector<ClassifiedSegment> segments_;
  std::vector<std::vector<int>> buckets_;
  double x0_ = 0, bucket_width_ = 1;
};

ScalarField signed_distance(const BVProfile& profile, const StripGrid& grid);

struct HausdorffResult {
  double value = 0;
  double resolution = 0;  // sampling error bound (grid spacing)
};

/// Hausdorff distance between the complements R^2 \ Omega_1 and R^2 \ Omega_2
/// restricted to the grid window, computed from samplings of both sets.
HausdorffResult hausdorff_complement(const BVProfile& p1, const BVProfile& p2,
                                     const StripGrid& grid);

/// Node and boundary samples of the complement of the film within the window.
std::vector<Vec2> sample_complement(const BVProfile& profile, const StripGrid& grid);

struct Rect {
  double x0, x1, y0, y1;
  bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

/// Part of a segment inside the closed rectangle (nullopt if it misses).
std::optional<Segment> clip(const Segment& s, const Rect& r);

struct AdmissibleCover {
  std::vector<Rect> rectangles;
  double delta = 0;
};

/// Columns of width < delta, each stacked with rectangles of height < delta
/// enclosing Gamma within the column. Throws for delta < 4 * min_cell.
AdmissibleCover delta_cover(const BVProfile& profile, double delta, double min_cell);

/// Verifies side lengths, disjointness and length additivity; returns an
/// empty string or a description of the first violation.
std::string check_cover(const GraphDecomposition& graph, const AdmissibleCover& cover);

/// H^1(Gamma cap R) for the segments of a measure or decomposition.
double length_in(std::span<const ClassifiedSegment> segments, const Rect& r);
double length_in(std::span<const DensitySegment> segments, const Rect& r);

/// Grid-constant projection u^j = mu(R^j) / H^1(Gamma cap R^j), atoms
/// absorbed into the density of the first rectangle containing them.
AdatomMeasure grid_constant_project(const AdatomMeasure& mu, const AdmissibleCover& cover);

}  // namespace epitaxy
