// Convergence experiments: recovery-sequence gap tables, multi-seed
// minimization compared with the sharp energy of the extracted limit, and
// monitoring of the energy and strain bounds along a schedule. Reports are
// written as CSV and SVG.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epitaxy/elasticity.hpp"
#include "epitaxy/envelopes.hpp"
#include "epitaxy/geometry.hpp"
#include "epitaxy/phase_field.hpp"
#include "epitaxy/recovery.hpp"
#include "epitaxy/sharp_energy.hpp"

namespace epitaxy {

struct ExperimentSpec {
  std::string name = "experiment";
  BVProfile profile = BVProfile::flat(0, 1, 1);
  SurfaceDensity psi = SurfaceDensity::constant(1);
  DoubleWell potential = DoubleWell::quartic();
  ElasticModel model = ElasticModel::isotropic(1, 1, 0);
  DisplacementBC bc;
  /// Sharp adatom measure on the profile graph.
  AdatomMeasure measure;
  double m = 0;  // adatom mass
  double M = 0;  // film area
  std::vector<double> schedule{0.16, 0.08, 0.04, 0.02};
  std::vector<unsigned> seeds{1, 2, 3};
  double cell_fraction = 0.25;
  /// Amplitude of the random interface modes of the minimization seeds.
  double perturbation = 0.1;
  RecoveryOptions recovery;
  MinimizeOptions minimize;
  EnvelopeOptions envelope;

  /// Throws InvalidInput (non-decreasing schedule, cell_fraction > 1/4, ...).
  void validate() const;
};

/// Builds a spec from a JSON object; see README for the keys. Unknown keys
/// are rejected. m and M default to the mass of the measure and the area
/// under the profile.
ExperimentSpec parse_spec(const nlohmann::json& config);
ExperimentSpec load_spec(const std::string& path);

/// Grid used by the minimization runs at eps.
StripGrid experiment_grid(const ExperimentSpec& spec, double eps);

struct ReportRow {
  double eps = 0;
  double energy = 0;  // G_eps (best seed for minimization runs)
  double bulk = 0;
  double surface = 0;
  double sharp = 0;   // F of the target (limsup) or of the extracted limit (liminf)
  double gap = 0;     // (G_eps - F) / F
  double mass_w = 0;
  double mass_mu = 0;
  double l1_phase = 0;       // int_{Q+} |w - chi_Omega|
  double l1_profile = 0;     // int |h_ext - h| for the thresholded profile h_ext
  double l2_displacement = 0;
  double weak_star = 0;
  double hausdorff = 0;
  double strain = 0;         // int_{Q+} |E(v_eps)|^2
  double threshold_mass = 0; // area of {w >= 1/2} in Q+
};

struct Verdict {
  int criterion = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ConvergenceReport {
  std::string experiment;
  std::string kind;
  std::vector<ReportRow> rows;
  std::vector<Verdict> verdicts;
  std::vector<std::string> warnings;
  /// Least-squares slope of log|gap| against log eps (nan below two rows).
  double slope = 0;
  bool passed() const;
};

/// Per-eps values for the bound monitor: every energy and strain recorded
/// at that eps, and the final phase field.
struct MonitorSeries {
  double eps;
  std::vector<double> energies;
  std::vector<double> strains;
  ScalarField w;
};

/// Profile of {w >= 1/2}: per node column, the length of the part of
/// y >= 0 where the piecewise linear column of w is at least 1/2.
BVProfile extract_profile(const ScalarField& w);

struct ExtractedLimit {
  BVProfile profile;
  AdatomMeasure measure;
  double sharp = 0;
};

/// Thresholded profile, and the diffuse measure integrated over the cover
/// rectangles of that profile divided by the length of the graph inside.
/// The sharp energy is evaluated on the grid of the configuration.
ExtractedLimit extract_limit(const PhaseConfig& config, const ExperimentSpec& spec, double eps,
                             double sig, const EnvelopeTable& env);

struct LimsupRun {
  ConvergenceReport report;
  RecoveryBundle bundle;
};

struct LiminfRun {
  ConvergenceReport report;
  std::vector<MinimizeResult> best;  // best seed per eps
  std::vector<MonitorSeries> series;
};

/// Recovery sequence along the schedule with gap, metrics and verdicts
/// (final gap <= 5%, trend, positive slope, exact masses).
LimsupRun run_limsup(const ExperimentSpec& spec);

/// Multi-seed minimization per eps with extraction of the limit candidate
/// (liminf bound, L1 decay, exact masses, seed warnings).
LiminfRun run_liminf_probe(const ExperimentSpec& spec);

/// Energy and strain bounds across eps (<= 1.1 times the largest value at
/// the first eps) and thresholded mass within 2% of M at the smallest eps.
ConvergenceReport monitor(const std::vector<MonitorSeries>& series, double M,
                          const std::string& experiment);

std::vector<MonitorSeries> monitor_series(const RecoveryBundle& bundle);

enum class MonitorSource { Recovery, Minimization };
ConvergenceReport run_compactness_monitor(const ExperimentSpec& spec, MonitorSource source);

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& values);

/// CSV with fixed columns and 12 significant digits.
void emit_csv(const ConvergenceReport& report, const std::string& path);
/// One line per verdict: criterion,name,PASS|FAIL,detail.
void emit_verdicts(const ConvergenceReport& report, const std::string& path);
/// Log-log plot of |gap| against eps with the slope in the title.
void emit_svg(const ConvergenceReport& report, const std::string& path);

}  // namespace epitaxy
