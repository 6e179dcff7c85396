// Surface densities and their envelopes: convex envelope, convex
// sub-additive envelope (threshold s0, recession slope theta) and the cut
// envelope psi_c(s) = min { psi~(r) + psi~(t) : r + t = s }.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace epitaxy {

/// Surface energy density psi : [0, inf) -> (0, inf).
class SurfaceDensity {
 public:
  enum class Kind { Constant, Affine, Quadratic, Polynomial, Sampled };

  static SurfaceDensity constant(double c);
  static SurfaceDensity affine(double intercept, double slope);
  static SurfaceDensity quadratic(double c0, double c1, double c2);
  /// sum_k coefficients[k] s^k
  static SurfaceDensity polynomial(std::vector<double> coefficients);
  /// Piecewise linear through the samples; extended beyond the last sample
  /// with tail_slope. The first sample must sit at s = 0.
  static SurfaceDensity sampled(std::vector<std::pair<double, double>> samples, double tail_slope);

  Kind kind() const { return kind_; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  /// Throws InvalidInput for s < 0 or a non-positive value.
  double operator()(double s) const;
  double derivative(double s) const;

  std::string describe() const;

 private:
  SurfaceDensity() = default;
  double raw(double s) const;

  Kind kind_ = Kind::Constant;
  std::vector<double> coeffs_;
  std::vector<std::pair<double, double>> samples_;
  double tail_slope_ = 0;
};

/// Uniform grid 0 = s_0 < ... < s_{n-1} = s_max.
std::vector<double> uniform_grid(double s_max, int points);

/// Lower convex hull of the sampled graph, evaluated on the grid.
std::vector<double> convexify(const SurfaceDensity& psi, std::span<const double> grid);
std::vector<double> convexify(std::span<const double> grid, std::span<const double> values);

struct SubadditiveEnvelope {
  std::vector<double> values;
  std::optional<double> s0;  // empty: the threshold sits at +infinity
  double theta = 0;
};

/// psi~ from a convex sampled psi: psi~ = psi up to s0, theta * s beyond,
/// with s0 the left-most minimiser of psi(s)/s.
SubadditiveEnvelope subadditive_envelope(std::span<const double> grid,
                                         std::span<const double> psi_cvx);

/// psi_c(s) = 2 psi~(s/2) (midpoint split), psi~ interpolated linearly.
std::vector<double> cut_envelope(std::span<const double> grid, std::span<const double> psi_tilde);

/// Terminal chord slope of a sampled table. Throws NumericalError
/// ("unresolved recession") if the last two chord slopes differ by more
/// than rel_tol (relative to max(1, |slope|)).
double recession(std::span<const double> grid, std::span<const double> values,
                 double rel_tol = 1e-8);

struct EnvelopeOptions {
  double s_max = 16.0;
  int points = 2049;
};

/// All envelopes of one density sampled on a common uniform grid.
class EnvelopeTable {
 public:
  EnvelopeTable(const SurfaceDensity& psi, EnvelopeOptions options = {});

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& psi() const { return psi_; }
  const std::vector<double>& psi_cvx() const { return psi_cvx_; }
  const std::vector<double>& psi_tilde() const { return psi_tilde_; }
  const std::vector<double>& psi_cut() const { return psi_cut_; }
  std::optional<double> s0() const { return s0_; }
  double theta() const { return theta_; }
  double s_max() const { return grid_.back(); }

  /// Linear interpolation; throws InvalidInput outside [0, s_max].
  double tilde(double s) const;
  double cut(double s) const;

 private:
  double lookup(const std::vector<double>& table, double s) const;

  std::vector<double> grid_, psi_, psi_cvx_, psi_tilde_, psi_cut_;
  std::optional<double> s0_;
  double theta_ = 0;
};

/// CSV with header "# s0=<value|inf> theta=<value>" then
/// s,psi,psi_cvx,psi_tilde,psi_cut rows.
void write_envelope_csv(const std::string& path, const EnvelopeTable& table);

}  // namespace epitaxy
