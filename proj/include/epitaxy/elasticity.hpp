// Linearized elasticity with a lattice-mismatch eigenstrain on the strip
// grid, discretized with bilinear (Q1) elements and 2x2 Gauss quadrature.
//
// Strains are stored in Voigt order (xx, yy, 2xy) with engineering shear,
// so W(A) = 1/2 e^T D e with e = (a11, a22, a12 + a21).
#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "epitaxy/grid.hpp"

namespace epitaxy {

class ElasticModel {
 public:
  /// Isotropic tensor with Lame parameters lambda, mu.
  static ElasticModel isotropic(double lambda, double mu, double mismatch, double eta = 0.0);
  /// General tensor from c1111, c1122, c1112, c2222, c2212, c1212.
  static ElasticModel general(const std::array<double, 6>& c, double mismatch, double eta = 0.0);

  const Eigen::Matrix3d& voigt() const { return d_; }
  double mismatch() const { return t_; }
  double eta() const { return eta_; }
  ElasticModel with_eta(double eta) const;

  /// Largest eigenvalue of the tensor acting on symmetric matrices, i.e. the
  /// best K with W(A) <= K/2 |A|^2.
  double growth_constant() const;

 private:
  ElasticModel(const Eigen::Matrix3d& d, double mismatch, double eta);
  Eigen::Matrix3d d_;
  double t_;
  double eta_;
};

/// W(A) = 1/2 A . C[A]; only the symmetric part of A enters.
double elastic_density(const ElasticModel& model, const Eigen::Matrix2d& a);

/// t e1 x e1 for y >= 0, zero below.
Eigen::Matrix2d eigenstrain(const ElasticModel& model, double y);

enum class LateralBC { Periodic, TractionFree };

struct DisplacementBC {
  bool clamp_bottom = true;
  LateralBC lateral = LateralBC::Periodic;
};

/// Weight w multiplying W at the four Gauss points of every cell (eta is
/// added separately). Cells whose centre lies below y = 0 are substrate and
/// always carry weight 1.
class ElasticWeight {
 public:
  /// Bilinear interpolation of a nodal phase field.
  static ElasticWeight phase(const ScalarField& w);
  /// Cellwise constant weight.
  static ElasticWeight cells(const CellField& chi);

  const StripGrid& grid() const { return grid_; }
  const std::array<double, 4>& at(int cell) const { return values_[static_cast<std::size_t>(cell)]; }
  bool from_phase() const { return from_phase_; }

 private:
  explicit ElasticWeight(const StripGrid& g) : grid_(g) {}
  StripGrid grid_;
  std::vector<std::array<double, 4>> values_;
  bool from_phase_ = false;
};

/// Vertical crack along the grid line x = x(column), open for node rows
/// with y_low < y <= y_high: cells on either side get separate copies of
/// those nodes.
struct Crack {
  int column;
  double y_low, y_high;
};

/// Discrete bulk energy sum_c sum_q (w_q + eta) W(E(v)_q - E0(y_c)) |q|.
double bulk_energy(const ElasticModel& model, const ScalarField& w, const VectorField2& v);
double bulk_energy(const ElasticModel& model, const ElasticWeight& weight, const VectorField2& v);

/// Gradient of bulk_energy with respect to the nodal displacement values.
VectorField2 bulk_gradient_v(const ElasticModel& model, const ElasticWeight& weight,
                             const VectorField2& v);

/// Gradient of bulk_energy with respect to nodal w (zero on substrate-only
/// nodes).
ScalarField bulk_gradient_w(const ElasticModel& model, const ScalarField& w, const VectorField2& v);

/// Cellwise sum over Gauss points of |E(v)|^2 |q| (the strain norm integral).
double strain_norm_squared(const VectorField2& v, const Region& region = Region::all());

struct ElasticSolution {
  VectorField2 v;        // left copy at split crack nodes
  Eigen::VectorXd dofs;  // reduced unknowns (active, unclamped, split)
  double energy = 0;
  double residual = 0;   // ||K u - f|| / ||f||
  int iterations = 0;
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 20000;
};

/// Minimizer of the bulk energy at fixed weight, by preconditioned
/// conjugate gradients on the reduced stiffness system. The sparsity
/// pattern depends only on the grid, the boundary conditions, the cracks
/// and which cells carry positive weight; it is built once per solver.
class ElasticSolver {
 public:
  ElasticSolver(const ElasticModel& model, const ElasticWeight& weight, const DisplacementBC& bc,
                std::vector<Crack> cracks = {}, SolverOptions options = {});
  ~ElasticSolver();
  ElasticSolver(ElasticSolver&&) noexcept;
  ElasticSolver& operator=(ElasticSolver&&) noexcept;

  /// Solves with the stored weight; the optional guess is a previous dof
  /// vector of this solver.
  ElasticSolution solve(const Eigen::VectorXd* guess = nullptr);
  /// Replaces the weight (same grid, same support) before the next solve.
  void set_weight(const ElasticWeight& weight);

  int dof_count() const;
  /// Energy of a reduced dof vector.
  double energy(const Eigen::VectorXd& dofs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: one solve with a nodal phase weight.
ElasticSolution solve_displacement(const ElasticModel& model, const ScalarField& w,
                                   const DisplacementBC& bc, SolverOptions options = {});

/// Node-by-node CSV dump x,y,vx,vy.
void write_displacement_csv(const std::string& path, const VectorField2& v);

}  // namespace epitaxy
