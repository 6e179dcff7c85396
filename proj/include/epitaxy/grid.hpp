// Uniform node-centred grid over the truncated strip [a,b] x [y_min,y_max],
// node and cell fields, difference operators and trapezoid quadrature.
//
// Nodes are indexed (i, j) with 0 <= i <= nx, 0 <= j <= ny; cells (i, j) with
// 0 <= i < nx, 0 <= j < ny, the cell (i, j) spanning nodes i..i+1, j..j+1.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace epitaxy {

class StripGrid {
 public:
  StripGrid(double a, double b, double y_min, double y_max, int nx, int ny);

  /// Grid with spacing <= max_cell whose substrate depth is rounded up so
  /// that y = 0 falls on a node row. The covered window is
  /// [a,b] x [-depth', top] with depth' >= depth.
  static StripGrid fitted(double a, double b, double depth, double top, double max_cell);

  double a() const { return a_; }
  double b() const { return b_; }
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double cell_area() const { return hx_ * hy_; }

  int node_count() const { return (nx_ + 1) * (ny_ + 1); }
  int cell_count() const { return nx_ * ny_; }
  int node(int i, int j) const { return j * (nx_ + 1) + i; }
  int cell(int i, int j) const { return j * nx_ + i; }

  double x(int i) const { return a_ + i * hx_; }
  double y(int j) const { return y_min_ + j * hy_; }
  double cell_x(int i) const { return a_ + (i + 0.5) * hx_; }
  double cell_y(int j) const { return y_min_ + (j + 0.5) * hy_; }

  /// First node row with y >= 0 (within round-off); ny+1 if none.
  int first_row_at_or_above_zero() const;

  bool operator==(const StripGrid&) const = default;

 private:
  double a_, b_, y_min_, y_max_;
  int nx_, ny_;
  double hx_, hy_;
};

struct NodeLocation {};
struct CellLocation {};

template <class Location>
class GridField {
 public:
  explicit GridField(StripGrid grid, double fill = 0.0)
      : grid_(grid), values_(count(grid), fill) {}
  GridField(StripGrid grid, std::vector<double> values);

  const StripGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }
  double& at(int i, int j) { return values_[index(i, j)]; }
  double at(int i, int j) const { return values_[index(i, j)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double max_abs() const;

 private:
  static std::size_t count(const StripGrid& g);
  std::size_t index(int i, int j) const;

  StripGrid grid_;
  std::vector<double> values_;
};

using ScalarField = GridField<NodeLocation>;
using CellField = GridField<CellLocation>;

struct VectorField2 {
  explicit VectorField2(const StripGrid& grid) : x(grid), y(grid) {}
  VectorField2(ScalarField x_, ScalarField y_);
  const StripGrid& grid() const { return x.grid(); }
  ScalarField x;
  ScalarField y;
};

/// Symmetric 2x2 tensor per node; xy is the tensor (not engineering) shear.
struct SymTensorField {
  explicit SymTensorField(const StripGrid& grid) : xx(grid), yy(grid), xy(grid) {}
  ScalarField xx;
  ScalarField yy;
  ScalarField xy;
};

/// Integration region. Cells are selected by their centre.
struct Region {
  enum class Kind { All, UpperHalf, Rectangle };
  Kind kind = Kind::All;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;

  static Region all() { return {}; }
  static Region upper_half() { return {Kind::UpperHalf}; }
  static Region rectangle(double x0, double x1, double y0, double y1);

  bool contains_cell(const StripGrid& grid, int i, int j) const;
};

/// Central differences in the interior, one-sided at the boundary.
VectorField2 gradient(const ScalarField& f);

/// E(v) = (grad v + grad v^T) / 2 with the same stencils as gradient().
SymTensorField sym_gradient(const VectorField2& v);

/// Trapezoid rule over the cells of the region (exact for bilinear data).
double integrate(const ScalarField& f, const Region& region = Region::all());

/// Midpoint rule for a cell field.
double integrate(const CellField& f, const Region& region = Region::all());

/// Node weights q with integrate(f, region) == sum_k q[k] f[k].
std::vector<double> trapezoid_weights(const StripGrid& grid, const Region& region);

/// Bilinear interpolation; points outside the window are clamped to it.
double interpolate(const ScalarField& f, double x, double y);

/// Bilinear (Q1) element data on one cell with 2x2 Gauss quadrature. Local
/// node order: (i,j), (i+1,j), (i,j+1), (i+1,j+1).
struct Q1Element {
  explicit Q1Element(const StripGrid& grid);

  static constexpr int kGauss = 4;
  std::array<std::array<double, 4>, kGauss> shape{};
  std::array<std::array<double, 4>, kGauss> dx{};
  std::array<std::array<double, 4>, kGauss> dy{};
  double weight = 0;  // quadrature weight per Gauss point (cell area / 4)
  /// Exact cell integral of grad N_a . grad N_b.
  std::array<std::array<double, 4>, 4> stiffness{};

  std::array<int, 4> nodes(const StripGrid& grid, int i, int j) const {
    return {grid.node(i, j), grid.node(i + 1, j), grid.node(i, j + 1), grid.node(i + 1, j + 1)};
  }
};

/// CSV dump "x,y,value" of node fields sharing one grid.
void write_field_csv(const std::string& path, std::span<const ScalarField* const> fields,
                     std::span<const std::string> names);

/// Minimal greyscale-to-colour SVG heat map of a node field.
void write_field_svg(const std::string& path, const ScalarField& f, const std::string& title);

}  // namespace epitaxy
