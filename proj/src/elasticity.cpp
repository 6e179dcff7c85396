#include "epitaxy/elasticity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include "epitaxy/errors.hpp"

namespace epitaxy {

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat38 = Eigen::Matrix<double, 3, 8>;

Eigen::Matrix3d mandel(const Eigen::Matrix3d& d) {
  const Eigen::Vector3d s(1, 1, std::sqrt(2.0));
  // Mandel components (a11, a22, sqrt2 a12) relate to Voigt ones by a
  // scaling of the shear row: e_v = diag(1,1,sqrt2) e_m.
  return s.asDiagonal() * d * s.asDiagonal();
}

// Voigt strain operators at the Gauss points, local dof order
// (ux0, uy0, ux1, uy1, ...).
struct Operators {
  explicit Operators(const StripGrid& g, const Eigen::Matrix3d& d) : el(g) {
    for (int q = 0; q < Q1Element::kGauss; ++q) {
      Mat38 b = Mat38::Zero();
      for (int a = 0; a < 4; ++a) {
        b(0, 2 * a) = el.dx[q][a];
        b(1, 2 * a + 1) = el.dy[q][a];
        b(2, 2 * a) = el.dy[q][a];
        b(2, 2 * a + 1) = el.dx[q][a];
      }
      B[q] = b;
      K[q] = el.weight * b.transpose() * d * b;
      F[q] = el.weight * b.transpose() * d * Eigen::Vector3d(1, 0, 0);
    }
    const Eigen::Vector3d e0(1, 0, 0);
    w0 = 0.5 * el.weight * e0.dot(d * e0);
  }
  Q1Element el;
  std::array<Mat38, 4> B;
  std::array<Mat8, 4> K;
  std::array<Vec8, 4> F;
  double w0 = 0;  // |q| W(e1 x e1)
};

Vec8 gather(const VectorField2& v, const std::array<int, 4>& nodes) {
  Vec8 u;
  for (int a = 0; a < 4; ++a) {
    u(2 * a) = v.x[static_cast<std::size_t>(nodes[a])];
    u(2 * a + 1) = v.y[static_cast<std::size_t>(nodes[a])];
  }
  return u;
}

bool strained(const StripGrid& g, int j) { return g.cell_y(j) >= 0; }

}  // namespace

// -------------------------------------------------------------------- model

ElasticModel::ElasticModel(const Eigen::Matrix3d& d, double mismatch, double eta)
    : d_(d), t_(mismatch), eta_(eta) {
  require(std::isfinite(mismatch), "ElasticModel: mismatch must be finite");
  require(eta >= 0, "ElasticModel: eta must be non-negative");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(mandel(d_));
  if (!(es.eigenvalues().minCoeff() > 0)) {
    std::ostringstream msg;
    msg << "ElasticModel: tensor is not positive definite (smallest eigenvalue "
        << es.eigenvalues().minCoeff() << ")";
    throw InvalidInput(msg.str());
  }
}

ElasticModel ElasticModel::isotropic(double lambda, double mu, double mismatch, double eta) {
  require(mu > 0 && lambda + mu > 0, "ElasticModel: need mu > 0 and lambda + mu > 0");
  Eigen::Matrix3d d;
  d << lambda + 2 * mu, lambda, 0, lambda, lambda + 2 * mu, 0, 0, 0, mu;
  return ElasticModel(d, mismatch, eta);
}

ElasticModel ElasticModel::general(const std::array<double, 6>& c, double mismatch, double eta) {
  const auto [c1111, c1122, c1112, c2222, c2212, c1212] = c;
  Eigen::Matrix3d d;
  d << c1111, c1122, c1112, c1122, c2222, c2212, c1112, c2212, c1212;
  return ElasticModel(d, mismatch, eta);
}

ElasticModel ElasticModel::with_eta(double eta) const { return ElasticModel(d_, t_, eta); }

double ElasticModel::growth_constant() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(mandel(d_));
  return es.eigenvalues().maxCoeff();
}

double elastic_density(const ElasticModel& model, const Eigen::Matrix2d& a) {
  const Eigen::Vector3d e(a(0, 0), a(1, 1), a(0, 1) + a(1, 0));
  return 0.5 * e.dot(model.voigt() * e);
}

Eigen::Matrix2d eigenstrain(const ElasticModel& model, double y) {
  Eigen::Matrix2d e = Eigen::Matrix2d::Zero();
  if (y >= 0) e(0, 0) = model.mismatch();
  return e;
}

// ------------------------------------------------------------------ weights

ElasticWeight ElasticWeight::phase(const ScalarField& w) {
  const auto& g = w.grid();
  ElasticWeight out(g);
  out.from_phase_ = true;
  const Q1Element el(g);
  out.values_.resize(static_cast<std::size_t>(g.cell_count()));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      auto& vals = out.values_[static_cast<std::size_t>(g.cell(i, j))];
      if (!(g.cell_y(j) > 0)) {
        vals = {1, 1, 1, 1};
        continue;
      }
      const auto nodes = el.nodes(g, i, j);
      for (int q = 0; q < 4; ++q) {
        double s = 0;
        for (int a = 0; a < 4; ++a) s += el.shape[q][a] * w[static_cast<std::size_t>(nodes[a])];
        vals[q] = s;
      }
    }
  return out;
}

ElasticWeight ElasticWeight::cells(const CellField& chi) {
  const auto& g = chi.grid();
  ElasticWeight out(g);
  out.values_.resize(static_cast<std::size_t>(g.cell_count()));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double c = g.cell_y(j) > 0 ? chi.at(i, j) : 1.0;
      require(c >= 0, "ElasticWeight: negative weight");
      out.values_[static_cast<std::size_t>(g.cell(i, j))] = {c, c, c, c};
    }
  return out;
}

// ------------------------------------------------------------------ energies

double bulk_energy(const ElasticModel& model, const ElasticWeight& weight, const VectorField2& v) {
  const auto& g = v.grid();
  require(weight.grid() == g, "bulk_energy: weight and displacement grids differ");
  const Operators op(g, model.voigt());
  const Eigen::Vector3d e0(model.mismatch(), 0, 0);
  double total = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const Vec8 u = gather(v, op.el.nodes(g, i, j));
      const auto& wq = weight.at(g.cell(i, j));
      for (int q = 0; q < 4; ++q) {
        Eigen::Vector3d e = op.B[q] * u;
        if (strained(g, j)) e -= e0;
        total += (wq[q] + model.eta()) * op.el.weight * 0.5 * e.dot(model.voigt() * e);
      }
    }
  return total;
}

double bulk_energy(const ElasticModel& model, const ScalarField& w, const VectorField2& v) {
  require(w.grid() == v.grid(), "bulk_energy: phase and displacement grids differ");
  return bulk_energy(model, ElasticWeight::phase(w), v);
}

VectorField2 bulk_gradient_v(const ElasticModel& model, const ElasticWeight& weight,
                             const VectorField2& v) {
  const auto& g = v.grid();
  require(weight.grid() == g, "bulk_gradient_v: weight and displacement grids differ");
  const Operators op(g, model.voigt());
  const Eigen::Vector3d e0(model.mismatch(), 0, 0);
  VectorField2 out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const auto nodes = op.el.nodes(g, i, j);
      const Vec8 u = gather(v, nodes);
      const auto& wq = weight.at(g.cell(i, j));
      Vec8 r = Vec8::Zero();
      for (int q = 0; q < 4; ++q) {
        Eigen::Vector3d e = op.B[q] * u;
        if (strained(g, j)) e -= e0;
        r += (wq[q] + model.eta()) * op.el.weight * op.B[q].transpose() * (model.voigt() * e);
      }
      for (int a = 0; a < 4; ++a) {
        out.x[static_cast<std::size_t>(nodes[a])] += r(2 * a);
        out.y[static_cast<std::size_t>(nodes[a])] += r(2 * a + 1);
      }
    }
  return out;
}

ScalarField bulk_gradient_w(const ElasticModel& model, const ScalarField& w, const VectorField2& v) {
  const auto& g = v.grid();
  require(w.grid() == g, "bulk_gradient_w: phase and displacement grids differ");
  const Operators op(g, model.voigt());
  const Eigen::Vector3d e0(model.mismatch(), 0, 0);
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j) {
    if (!(g.cell_y(j) > 0)) continue;
    for (int i = 0; i < g.nx(); ++i) {
      const auto nodes = op.el.nodes(g, i, j);
      const Vec8 u = gather(v, nodes);
      for (int q = 0; q < 4; ++q) {
        Eigen::Vector3d e = op.B[q] * u;
        if (strained(g, j)) e -= e0;
        const double wq = op.el.weight * 0.5 * e.dot(model.voigt() * e);
        for (int a = 0; a < 4; ++a) out[static_cast<std::size_t>(nodes[a])] += op.el.shape[q][a] * wq;
      }
    }
  }
  return out;
}

double strain_norm_squared(const VectorField2& v, const Region& region) {
  const auto& g = v.grid();
  const Operators op(g, Eigen::Matrix3d::Identity());
  double total = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (!region.contains_cell(g, i, j)) continue;
      const Vec8 u = gather(v, op.el.nodes(g, i, j));
      for (int q = 0; q < 4; ++q) {
        const Eigen::Vector3d e = op.B[q] * u;
        // |E|^2 = e11^2 + e22^2 + 2 e12^2 with e(2) = 2 e12.
        total += op.el.weight * (e(0) * e(0) + e(1) * e(1) + 0.5 * e(2) * e(2));
      }
    }
  return total;
}

// -------------------------------------------------------------------- solver

struct ElasticSolver::Impl {
  Impl(const ElasticModel& m, const ElasticWeight& w, const DisplacementBC& b, std::vector<Crack> c,
       SolverOptions o)
      : model(m), weight(w), bc(b), cracks(std::move(c)), options(o), grid(w.grid()),
        op(grid, m.voigt()) {
    build_dofs();
    build_pattern();
  }

  ElasticModel model;
  ElasticWeight weight;
  DisplacementBC bc;
  std::vector<Crack> cracks;
  SolverOptions options;
  StripGrid grid;
  Operators op;

  std::vector<std::array<int, 8>> cell_dofs;  // -1: fixed or inactive
  std::vector<std::array<int, 4>> cell_base;  // grid node behind each local node
  std::vector<char> active_cell;
  int n = 0;
  Eigen::SparseMatrix<double> K;
  std::vector<std::array<int, 64>> positions;
  Eigen::VectorXd f;
  double constant = 0;

  bool cell_active(int c) const {
    const auto& w = weight.at(c);
    return *std::max_element(w.begin(), w.end()) + model.eta() > 0;
  }

  void build_dofs() {
    const int nx = grid.nx(), ny = grid.ny();
    const bool periodic = bc.lateral == LateralBC::Periodic;
    for (const auto& cr : cracks)
      require(cr.column > 0 && cr.column < nx && cr.y_high > cr.y_low,
              "ElasticSolver: crack must sit on an interior grid line");
    // Node identifiers before compression: grid nodes, then split copies.
    std::map<int, int> split_id;
    int next = grid.node_count();
    const int cells = grid.cell_count();
    std::vector<std::array<int, 4>> ids(static_cast<std::size_t>(cells));
    cell_base.resize(static_cast<std::size_t>(cells));
    active_cell.assign(static_cast<std::size_t>(cells), 0);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int c = grid.cell(i, j);
        const auto nodes = op.el.nodes(grid, i, j);
        cell_base[static_cast<std::size_t>(c)] = nodes;
        active_cell[static_cast<std::size_t>(c)] = cell_active(c);
        for (int a = 0; a < 4; ++a) {
          int ni = i + (a & 1), nj = j + (a >> 1);
          if (bc.clamp_bottom && nj == 0) {
            ids[c][a] = -1;
            continue;
          }
          int id = grid.node(periodic && ni == nx ? 0 : ni, nj);
          // The right-hand cell of a crack line uses its own copy.
          if (a % 2 == 0)
            for (const auto& cr : cracks)
              if (cr.column == ni && grid.y(nj) > cr.y_low && grid.y(nj) <= cr.y_high) {
                auto [it, fresh] = split_id.try_emplace(id, next);
                if (fresh) ++next;
                id = it->second;
              }
          ids[c][a] = id;
        }
      }
    std::vector<int> compress(static_cast<std::size_t>(next), -1);
    for (int c = 0; c < cells; ++c) {
      if (!active_cell[c]) continue;
      for (int id : ids[c])
        if (id >= 0 && compress[id] < 0) compress[id] = n++;
    }
    cell_dofs.resize(static_cast<std::size_t>(cells));
    for (int c = 0; c < cells; ++c)
      for (int a = 0; a < 4; ++a) {
        const int id = ids[c][a];
        const int k = id >= 0 && active_cell[c] ? compress[id] : -1;
        cell_dofs[c][2 * a] = k < 0 ? -1 : 2 * k;
        cell_dofs[c][2 * a + 1] = k < 0 ? -1 : 2 * k + 1;
      }
    n *= 2;
  }

  void build_pattern() {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(grid.cell_count()) * 64);
    for (std::size_t c = 0; c < cell_dofs.size(); ++c) {
      if (!active_cell[c]) continue;
      for (int r : cell_dofs[c])
        for (int s : cell_dofs[c])
          if (r >= 0 && s >= 0) trips.emplace_back(r, s, 1.0);
    }
    K.resize(n, n);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    positions.resize(cell_dofs.size());
    const int* outer = K.outerIndexPtr();
    const int* inner = K.innerIndexPtr();
    for (std::size_t c = 0; c < cell_dofs.size(); ++c)
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const int r = cell_dofs[c][a], s = cell_dofs[c][b];
          int pos = -1;
          if (r >= 0 && s >= 0 && active_cell[c])
            pos = static_cast<int>(std::lower_bound(inner + outer[s], inner + outer[s + 1], r) - inner);
          positions[c][8 * a + b] = pos;
        }
  }

  void assemble() {
    std::fill(K.valuePtr(), K.valuePtr() + K.nonZeros(), 0.0);
    f.setZero(n);
    constant = 0;
    const double t = model.mismatch();
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        const int c = grid.cell(i, j);
        const auto& wq = weight.at(c);
        if (!active_cell[c]) {
          if (*std::max_element(wq.begin(), wq.end()) + model.eta() > 0)
            throw InvalidInput("ElasticSolver: weight support grew after construction");
          continue;
        }
        Mat8 ke = Mat8::Zero();
        Vec8 fe = Vec8::Zero();
        for (int q = 0; q < 4; ++q) {
          const double s = wq[q] + model.eta();
          ke += s * op.K[q];
          if (strained(grid, j)) {
            fe += s * t * op.F[q];
            constant += s * t * t * op.w0;
          }
        }
        const auto& dofs = cell_dofs[c];
        const auto& pos = positions[c];
        for (int a = 0; a < 8; ++a) {
          if (dofs[a] < 0) continue;
          f(dofs[a]) += fe(a);
          for (int b = 0; b < 8; ++b)
            if (pos[8 * a + b] >= 0) K.valuePtr()[pos[8 * a + b]] += ke(a, b);
        }
      }
  }

  VectorField2 expand(const Eigen::VectorXd& u) const {
    VectorField2 v(grid);
    // Two passes so that the unsplit (left) copy wins at crack nodes.
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t c = 0; c < cell_dofs.size(); ++c)
        for (int a = 0; a < 4; ++a) {
          const int d = cell_dofs[c][2 * a];
          if (d < 0) continue;
          const bool left_side = (a % 2 == 1);
          if (pass == 1 && !left_side) continue;
          const auto node = static_cast<std::size_t>(cell_base[c][a]);
          v.x[node] = u(d);
          v.y[node] = u(d + 1);
        }
    if (bc.lateral == LateralBC::Periodic)
      for (int j = 0; j <= grid.ny(); ++j) {
        v.x.at(grid.nx(), j) = v.x.at(0, j);
        v.y.at(grid.nx(), j) = v.y.at(0, j);
      }
    return v;
  }
};

ElasticSolver::ElasticSolver(const ElasticModel& model, const ElasticWeight& weight,
                             const DisplacementBC& bc, std::vector<Crack> cracks,
                             SolverOptions options)
    : impl_(std::make_unique<Impl>(model, weight, bc, std::move(cracks), options)) {}
ElasticSolver::~ElasticSolver() = default;
ElasticSolver::ElasticSolver(ElasticSolver&&) noexcept = default;
ElasticSolver& ElasticSolver::operator=(ElasticSolver&&) noexcept = default;

int ElasticSolver::dof_count() const { return impl_->n; }

void ElasticSolver::set_weight(const ElasticWeight& weight) {
  require(weight.grid() == impl_->grid, "ElasticSolver: weight on a different grid");
  impl_->weight = weight;
}

double ElasticSolver::energy(const Eigen::VectorXd& u) const {
  impl_->assemble();
  return 0.5 * u.dot(impl_->K * u) - impl_->f.dot(u) + impl_->constant;
}

ElasticSolution ElasticSolver::solve(const Eigen::VectorXd* guess) {
  auto& m = *impl_;
  m.assemble();
  ElasticSolution out{VectorField2(m.grid), Eigen::VectorXd::Zero(m.n), m.constant, 0.0, 0};
  const double fnorm = m.f.norm();
  if (m.n == 0 || fnorm == 0) return out;

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::NaturalOrdering<int>>>
      cg;
  cg.setTolerance(m.options.tolerance);
  cg.setMaxIterations(m.options.max_iterations);
  cg.compute(m.K);
  if (cg.info() != Eigen::Success) throw SolverFailure("elastic solve: preconditioner failed", 1.0, 0);
  Eigen::VectorXd u;
  if (guess && guess->size() == m.n) u = cg.solveWithGuess(m.f, *guess);
  else u = cg.solve(m.f);
  const double residual = (m.K * u - m.f).norm() / fnorm;
  if (cg.info() != Eigen::Success || !(residual <= m.options.tolerance * 1.0001)) {
    std::ostringstream msg;
    msg << "elastic solve did not converge: relative residual " << residual << " after "
        << cg.iterations() << " iterations";
    throw SolverFailure(msg.str(), residual, static_cast<int>(cg.iterations()));
  }
  out.dofs = u;
  out.v = m.expand(u);
  out.energy = 0.5 * u.dot(m.K * u) - m.f.dot(u) + m.constant;
  out.residual = residual;
  out.iterations = static_cast<int>(cg.iterations());
  return out;
}

ElasticSolution solve_displacement(const ElasticModel& model, const ScalarField& w,
                                   const DisplacementBC& bc, SolverOptions options) {
  ElasticSolver solver(model, ElasticWeight::phase(w), bc, {}, options);
  return solver.solve();
}

void write_displacement_csv(const std::string& path, const VectorField2& v) {
  const ScalarField* fields[] = {&v.x, &v.y};
  const std::string names[] = {"vx", "vy"};
  write_field_csv(path, fields, names);
}

}  // namespace epitaxy
