#include "epitaxy/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "epitaxy/errors.hpp"

namespace epitaxy {

StripGrid::StripGrid(double a, double b, double y_min, double y_max, int nx, int ny)
    : a_(a), b_(b), y_min_(y_min), y_max_(y_max), nx_(nx), ny_(ny) {
  require(b > a && y_max > y_min, "StripGrid: empty window");
  require(nx >= 8 && ny >= 8, "StripGrid: nx and ny must be at least 8");
  hx_ = (b - a) / nx;
  hy_ = (y_max - y_min) / ny;
}

StripGrid StripGrid::fitted(double a, double b, double depth, double top, double max_cell) {
  require(max_cell > 0 && top > 0 && depth >= 0, "StripGrid::fitted: bad extents");
  const int nx = std::max(8, static_cast<int>(std::ceil((b - a) / max_cell - 1e-9)));
  const int n_above = std::max(4, static_cast<int>(std::ceil(top / max_cell - 1e-9)));
  const double hy = top / n_above;
  const int n_below = std::max(4, static_cast<int>(std::ceil(depth / hy - 1e-9)));
  return StripGrid(a, b, -n_below * hy, top, nx, n_above + n_below);
}

int StripGrid::first_row_at_or_above_zero() const {
  const double tol = 1e-9 * hy_;
  for (int j = 0; j <= ny_; ++j)
    if (y(j) >= -tol) return j;
  return ny_ + 1;
}

template <class L>
GridField<L>::GridField(StripGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  require(values_.size() == count(grid_), "GridField: value count does not match grid");
}

template <class L>
std::size_t GridField<L>::count(const StripGrid& g) {
  if constexpr (std::is_same_v<L, NodeLocation>)
    return static_cast<std::size_t>(g.node_count());
  else
    return static_cast<std::size_t>(g.cell_count());
}

template <class L>
std::size_t GridField<L>::index(int i, int j) const {
  if constexpr (std::is_same_v<L, NodeLocation>)
    return static_cast<std::size_t>(grid_.node(i, j));
  else
    return static_cast<std::size_t>(grid_.cell(i, j));
}

template <class L>
double GridField<L>::max_abs() const {
  double m = 0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

template class GridField<NodeLocation>;
template class GridField<CellLocation>;

VectorField2::VectorField2(ScalarField x_, ScalarField y_) : x(std::move(x_)), y(std::move(y_)) {
  require(x.grid() == y.grid(), "VectorField2: component grids differ");
}

Region Region::rectangle(double x0, double x1, double y0, double y1) {
  require(x1 > x0 && y1 > y0, "Region: degenerate rectangle");
  return {Kind::Rectangle, x0, x1, y0, y1};
}

bool Region::contains_cell(const StripGrid& grid, int i, int j) const {
  switch (kind) {
    case Kind::All:
      return true;
    case Kind::UpperHalf:
      return grid.cell_y(j) > 0;
    case Kind::Rectangle: {
      const double cx = grid.cell_x(i), cy = grid.cell_y(j);
      return cx > x0 && cx < x1 && cy > y0 && cy < y1;
    }
  }
  return false;
}

namespace {

// d/dx of node values along x at node i (row-major stride 1).
double diff_x(const ScalarField& f, int i, int j) {
  const auto& g = f.grid();
  if (i == 0) return (f.at(1, j) - f.at(0, j)) / g.hx();
  if (i == g.nx()) return (f.at(i, j) - f.at(i - 1, j)) / g.hx();
  return (f.at(i + 1, j) - f.at(i - 1, j)) / (2 * g.hx());
}

double diff_y(const ScalarField& f, int i, int j) {
  const auto& g = f.grid();
  if (j == 0) return (f.at(i, 1) - f.at(i, 0)) / g.hy();
  if (j == g.ny()) return (f.at(i, j) - f.at(i, j - 1)) / g.hy();
  return (f.at(i, j + 1) - f.at(i, j - 1)) / (2 * g.hy());
}

}  // namespace

VectorField2 gradient(const ScalarField& f) {
  const auto& g = f.grid();
  VectorField2 out(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      out.x.at(i, j) = diff_x(f, i, j);
      out.y.at(i, j) = diff_y(f, i, j);
    }
  return out;
}

SymTensorField sym_gradient(const VectorField2& v) {
  const auto& g = v.grid();
  SymTensorField out(g);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      out.xx.at(i, j) = diff_x(v.x, i, j);
      out.yy.at(i, j) = diff_y(v.y, i, j);
      out.xy.at(i, j) = 0.5 * (diff_y(v.x, i, j) + diff_x(v.y, i, j));
    }
  return out;
}

std::vector<double> trapezoid_weights(const StripGrid& grid, const Region& region) {
  std::vector<double> q(static_cast<std::size_t>(grid.node_count()), 0.0);
  const double quarter = 0.25 * grid.cell_area();
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      if (!region.contains_cell(grid, i, j)) continue;
      q[grid.node(i, j)] += quarter;
      q[grid.node(i + 1, j)] += quarter;
      q[grid.node(i, j + 1)] += quarter;
      q[grid.node(i + 1, j + 1)] += quarter;
    }
  return q;
}

double integrate(const ScalarField& f, const Region& region) {
  const auto& g = f.grid();
  double total = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (!region.contains_cell(g, i, j)) continue;
      total += f.at(i, j) + f.at(i + 1, j) + f.at(i, j + 1) + f.at(i + 1, j + 1);
    }
  return 0.25 * g.cell_area() * total;
}

double integrate(const CellField& f, const Region& region) {
  const auto& g = f.grid();
  double total = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (region.contains_cell(g, i, j)) total += f.at(i, j);
  return g.cell_area() * total;
}

double interpolate(const ScalarField& f, double x, double y) {
  const auto& g = f.grid();
  const double sx = std::clamp((x - g.a()) / g.hx(), 0.0, static_cast<double>(g.nx()));
  const double sy = std::clamp((y - g.y_min()) / g.hy(), 0.0, static_cast<double>(g.ny()));
  const int i = std::min(static_cast<int>(sx), g.nx() - 1);
  const int j = std::min(static_cast<int>(sy), g.ny() - 1);
  const double tx = sx - i, ty = sy - j;
  return (1 - tx) * (1 - ty) * f.at(i, j) + tx * (1 - ty) * f.at(i + 1, j) +
         (1 - tx) * ty * f.at(i, j + 1) + tx * ty * f.at(i + 1, j + 1);
}

Q1Element::Q1Element(const StripGrid& grid) {
  const double hx = grid.hx(), hy = grid.hy();
  const double lo = 0.5 - 0.5 / std::sqrt(3.0), hi = 0.5 + 0.5 / std::sqrt(3.0);
  const std::array<std::array<double, 2>, kGauss> pts{{{lo, lo}, {hi, lo}, {lo, hi}, {hi, hi}}};
  for (int q = 0; q < kGauss; ++q) {
    const double s = pts[q][0], t = pts[q][1];
    shape[q] = {(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
    dx[q] = {-(1 - t) / hx, (1 - t) / hx, -t / hx, t / hx};
    dy[q] = {-(1 - s) / hy, -s / hy, (1 - s) / hy, s / hy};
  }
  weight = 0.25 * hx * hy;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      double k = 0;
      for (int q = 0; q < kGauss; ++q) k += weight * (dx[q][a] * dx[q][b] + dy[q][a] * dy[q][b]);
      stiffness[a][b] = k;
    }
}

void write_field_csv(const std::string& path, std::span<const ScalarField* const> fields,
                     std::span<const std::string> names) {
  require(!fields.empty() && fields.size() == names.size(), "write_field_csv: bad field list");
  const auto& g = fields.front()->grid();
  for (const auto* f : fields) require(f->grid() == g, "write_field_csv: fields on different grids");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "x,y";
  for (const auto& n : names) out << ',' << n;
  out << '\n' << std::setprecision(12);
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      out << g.x(i) << ',' << g.y(j);
      for (const auto* f : fields) out << ',' << f->at(i, j);
      out << '\n';
    }
}

void write_field_svg(const std::string& path, const ScalarField& f, const std::string& title) {
  const auto& g = f.grid();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : f.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const double px = 480.0 / (g.b() - g.a());
  const double scale = std::min(px, 640.0 / (g.y_max() - g.y_min()));
  const double width = (g.b() - g.a()) * scale, height = (g.y_max() - g.y_min()) * scale;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width + 20 << "\" height=\""
      << height + 40 << "\">\n<text x=\"10\" y=\"16\" font-size=\"12\">" << title << "</text>\n";
  // Down-sample to at most ~200 x 300 rectangles.
  const int si = std::max(1, g.nx() / 200), sj = std::max(1, g.ny() / 300);
  out << std::setprecision(6);
  for (int j = 0; j < g.ny(); j += sj)
    for (int i = 0; i < g.nx(); i += si) {
      const double t = (f.at(i, j) - lo) / span;
      const int r = static_cast<int>(255 * t), bl = static_cast<int>(255 * (1 - t));
      const double x0 = 10 + (g.x(i) - g.a()) * scale;
      const double y0 = 30 + (g.y_max() - g.y(std::min(j + sj, g.ny()))) * scale;
      out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << si * g.hx() * scale + 0.5
          << "\" height=\"" << sj * g.hy() * scale + 0.5 << "\" fill=\"rgb(" << r << ",64," << bl
          << ")\"/>\n";
    }
  out << "</svg>\n";
}

}  // namespace epitaxy
