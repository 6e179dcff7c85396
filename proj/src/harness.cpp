#include "epitaxy/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "epitaxy/errors.hpp"

namespace epitaxy {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    require(ok.contains(key), where + ": unknown key '" + key + "'");
}

std::vector<std::pair<double, double>> pairs(const json& j, const std::string& where) {
  std::vector<std::pair<double, double>> out;
  require(j.is_array(), where + ": expected a list of pairs");
  for (const auto& p : j) {
    require(p.is_array() && p.size() == 2, where + ": expected [x, y] pairs");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

BVProfile parse_profile(const json& j) {
  const std::string kind = j.value("kind", "flat");
  const double a = j.value("a", 0.0), b = j.value("b", 1.0);
  if (kind == "flat") {
    check_keys(j, {"kind", "a", "b", "height"}, "profile");
    return BVProfile::flat(a, b, j.value("height", 1.0));
  }
  if (kind == "bump") {
    check_keys(j, {"kind", "a", "b", "base", "amplitude", "samples"}, "profile");
    const double base = j.value("base", 0.8), amp = j.value("amplitude", 0.4);
    const int n = j.value("samples", 256);
    require(n >= 2, "profile: samples must be at least 2");
    std::vector<Vec2> pts;
    for (int k = 0; k <= n; ++k) {
      const double x = a + (b - a) * k / n;
      const double s = std::sin(std::numbers::pi * (x - a) / (b - a));
      pts.push_back({x, base + amp * s * s});
    }
    return BVProfile(a, b, std::move(pts));
  }
  if (kind == "polyline") {
    check_keys(j, {"kind", "a", "b", "points", "cuts"}, "profile");
    std::vector<Vec2> pts;
    for (auto [x, y] : pairs(j.at("points"), "profile.points")) pts.push_back({x, y});
    std::vector<CutRecord> cuts;
    if (j.contains("cuts"))
      for (auto [x, v] : pairs(j.at("cuts"), "profile.cuts")) cuts.push_back({x, v});
    return BVProfile(a, b, std::move(pts), std::move(cuts));
  }
  throw InvalidInput("profile: unknown kind '" + kind + "'");
}

SurfaceDensity parse_psi(const json& j) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") {
    check_keys(j, {"kind", "value"}, "psi");
    return SurfaceDensity::constant(j.value("value", 1.0));
  }
  if (kind == "affine") {
    check_keys(j, {"kind", "intercept", "slope"}, "psi");
    return SurfaceDensity::affine(j.at("intercept").get<double>(), j.at("slope").get<double>());
  }
  if (kind == "polynomial") {
    check_keys(j, {"kind", "coefficients"}, "psi");
    return SurfaceDensity::polynomial(j.at("coefficients").get<std::vector<double>>());
  }
  if (kind == "sampled") {
    check_keys(j, {"kind", "samples", "tail_slope"}, "psi");
    return SurfaceDensity::sampled(pairs(j.at("samples"), "psi.samples"),
                                   j.at("tail_slope").get<double>());
  }
  throw InvalidInput("psi: unknown kind '" + kind + "'");
}

DoubleWell parse_potential(const json& j) {
  const std::string kind = j.value("kind", "quartic");
  if (kind == "quartic") {
    check_keys(j, {"kind", "scale"}, "potential");
    return DoubleWell::quartic(j.value("scale", 1.0));
  }
  if (kind == "sampled") {
    check_keys(j, {"kind", "samples", "tail_slope"}, "potential");
    return DoubleWell::sampled(pairs(j.at("samples"), "potential.samples"),
                               j.at("tail_slope").get<double>());
  }
  throw InvalidInput("potential: unknown kind '" + kind + "'");
}

ElasticModel parse_elastic(const json& j) {
  check_keys(j, {"lambda", "mu", "tensor", "mismatch"}, "elastic");
  const double t = j.value("mismatch", 0.0);
  if (j.contains("tensor")) {
    const auto c = j.at("tensor").get<std::vector<double>>();
    require(c.size() == 6, "elastic.tensor: expected c1111, c1122, c1112, c2222, c2212, c1212");
    return ElasticModel::general({c[0], c[1], c[2], c[3], c[4], c[5]}, t);
  }
  return ElasticModel::isotropic(j.value("lambda", 1.0), j.value("mu", 1.0), t);
}

AdatomMeasure parse_adatoms(const json& j, const BVProfile& profile) {
  check_keys(j, {"density", "regular", "jump", "cut", "atoms"}, "adatoms");
  const auto graph = decompose(profile);
  const double u = j.value("density", 0.0);
  auto mu = AdatomMeasure::per_class(graph, j.value("regular", u), j.value("jump", u),
                                     j.value("cut", u));
  if (j.contains("atoms")) {
    std::vector<Atom> atoms;
    for (const auto& a : j.at("atoms")) {
      require(a.is_array() && a.size() == 3, "adatoms.atoms: expected [x, y, mass]");
      atoms.push_back({{a[0].get<double>(), a[1].get<double>()}, a[2].get<double>()});
    }
    mu = mu.with_atoms(std::move(atoms));
  }
  return mu;
}

ReportRow blank_row(double eps) {
  return {eps, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// int_a^b |h1 - h2| dx by the midpoint rule on a fine grid.
double l1_profile_distance(const BVProfile& h1, const BVProfile& h2) {
  constexpr int n = 8192;
  const double a = h1.a(), dx = (h1.b() - a) / n;
  double s = 0;
  for (int k = 0; k < n; ++k) {
    const double x = a + (k + 0.5) * dx;
    s += std::abs(h1.value(x) - h2.value(x));
  }
  return s * dx;
}

// int_{Q+} |w - chi_Omega| with trapezoid weights.
double l1_phase_distance(const ScalarField& w, const BVProfile& h) {
  const auto& g = w.grid();
  const auto q = trapezoid_weights(g, Region::upper_half());
  double s = 0;
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      const int k = g.node(i, j);
      if (q[static_cast<std::size_t>(k)] == 0) continue;
      const double chi = g.y(j) < h.value(g.x(i)) ? 1.0 : 0.0;
      s += q[static_cast<std::size_t>(k)] * std::abs(w[static_cast<std::size_t>(k)] - chi);
    }
  return s;
}

bool masses_exact(double mass_w, double M, double mass_mu, double m) {
  return std::abs(mass_w - M) <= 1e-9 && std::abs(mass_mu - m) <= 1e-8;
}

PhaseConfig seed_config(const ExperimentSpec& spec, const StripGrid& g, double eps, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  std::array<double, 3> amp{}, phase{};
  for (int k = 0; k < 3; ++k) {
    amp[static_cast<std::size_t>(k)] = spec.perturbation * sym(rng) / (k + 1);
    phase[static_cast<std::size_t>(k)] = 2 * std::numbers::pi * unit(rng);
  }
  const double a = g.a(), len = g.b() - g.a();
  PhaseConfig c(g);
  for (int i = 0; i <= g.nx(); ++i) {
    const double x = g.x(i);
    double hs = spec.profile.value(x);
    for (int k = 0; k < 3; ++k)
      hs += amp[static_cast<std::size_t>(k)] *
            std::sin(2 * std::numbers::pi * (k + 1) * (x - a) / len + phase[static_cast<std::size_t>(k)]);
    for (int j = 0; j <= g.ny(); ++j) {
      const double y = g.y(j);
      c.w.at(i, j) = y < 0 ? 1.0 : 1.0 / (1.0 + std::exp(std::min(50.0, (y - hs) / eps)));
    }
  }
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) c.u.at(i, j) = g.cell_y(j) > 0 ? 0.5 + unit(rng) : 0.0;
  return c;
}

// |gap| non-increasing along the schedule, one inversion of at most 10% allowed.
Verdict trend_verdict(const std::vector<ReportRow>& rows) {
  int inversions = 0;
  bool ok = true;
  std::ostringstream d;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double prev = std::abs(rows[k - 1].gap), cur = std::abs(rows[k].gap);
    if (cur <= prev) continue;
    ++inversions;
    if (cur - prev > 0.1 * prev || inversions > 1) {
      ok = false;
      d << "|gap| rises from " << fmt(prev) << " to " << fmt(cur) << " at eps = " << rows[k].eps;
      break;
    }
  }
  if (ok) d << inversions << " inversion(s)";
  return {5, "gap trend", ok, d.str()};
}

}  // namespace

void ExperimentSpec::validate() const {
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    require(schedule[k] > 0, "spec: schedule entries must be positive");
    if (k) require(schedule[k] < schedule[k - 1], "spec: schedule must be strictly decreasing");
  }
  require(cell_fraction > 0 && cell_fraction <= 0.25, "spec: cell_fraction must lie in (0, 1/4]");
  require(m >= 0, "spec: adatom mass must be non-negative");
  require(M > 0, "spec: film area must be positive");
  require(perturbation >= 0, "spec: perturbation must be non-negative");
}

ExperimentSpec parse_spec(const json& config) {
  try {
    check_keys(config, {"name", "profile", "psi", "potential", "elastic", "lateral", "clamp_bottom",
                        "adatoms", "masses", "schedule", "epsilon", "seeds", "cell_fraction",
                        "perturbation", "recovery", "minimize", "envelope"},
               "config");
    ExperimentSpec s;
    s.name = config.value("name", s.name);
    if (config.contains("profile")) s.profile = parse_profile(config.at("profile"));
    if (config.contains("psi")) s.psi = parse_psi(config.at("psi"));
    if (config.contains("potential")) s.potential = parse_potential(config.at("potential"));
    if (config.contains("elastic")) s.model = parse_elastic(config.at("elastic"));
    const std::string lateral = config.value("lateral", "periodic");
    require(lateral == "periodic" || lateral == "traction_free",
            "config: lateral must be 'periodic' or 'traction_free'");
    s.bc.lateral = lateral == "periodic" ? LateralBC::Periodic : LateralBC::TractionFree;
    s.bc.clamp_bottom = config.value("clamp_bottom", true);
    s.measure = parse_adatoms(config.value("adatoms", json::object()), s.profile);
    s.m = s.measure.total_mass();
    s.M = s.profile.integral();
    if (config.contains("masses")) {
      const auto& mm = config.at("masses");
      check_keys(mm, {"m", "M"}, "masses");
      s.m = mm.value("m", s.m);
      s.M = mm.value("M", s.M);
    }
    require(!(config.contains("schedule") && config.contains("epsilon")),
            "config: give either schedule or epsilon");
    if (config.contains("schedule")) s.schedule = config.at("schedule").get<std::vector<double>>();
    if (config.contains("epsilon")) s.schedule = {config.at("epsilon").get<double>()};
    if (config.contains("seeds")) s.seeds = config.at("seeds").get<std::vector<unsigned>>();
    s.cell_fraction = config.value("cell_fraction", s.cell_fraction);
    s.perturbation = config.value("perturbation", s.perturbation);
    if (config.contains("recovery")) {
      const auto& r = config.at("recovery");
      check_keys(r, {"lift", "delta_factor", "outset"}, "recovery");
      if (r.contains("lift")) s.recovery.lift = r.at("lift").get<double>();
      s.recovery.delta_factor = r.value("delta_factor", s.recovery.delta_factor);
      s.recovery.outset = r.value("outset", s.recovery.outset);
    }
    s.recovery.cell_fraction = s.cell_fraction;
    if (config.contains("minimize")) {
      const auto& r = config.at("minimize");
      check_keys(r, {"max_iterations", "rel_tol", "patience", "max_step"}, "minimize");
      s.minimize.max_iterations = r.value("max_iterations", s.minimize.max_iterations);
      s.minimize.rel_tol = r.value("rel_tol", s.minimize.rel_tol);
      s.minimize.patience = r.value("patience", s.minimize.patience);
      s.minimize.max_step = r.value("max_step", s.minimize.max_step);
    }
    if (config.contains("envelope")) {
      const auto& r = config.at("envelope");
      check_keys(r, {"s_max", "points"}, "envelope");
      s.envelope.s_max = r.value("s_max", s.envelope.s_max);
      s.envelope.points = r.value("points", s.envelope.points);
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path);
  try {
    return parse_spec(json::parse(in, nullptr, true, true));
  } catch (const json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

StripGrid experiment_grid(const ExperimentSpec& spec, double eps) {
  const auto& h = spec.profile;
  const double hmax = std::max(h.max_height(), spec.M / (h.b() - h.a()));
  return StripGrid::fitted(h.a(), h.b(), std::max(0.25, 0.5 * hmax), hmax + std::max(0.5, 8 * eps),
                           spec.cell_fraction * eps);
}

bool ConvergenceReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

BVProfile extract_profile(const ScalarField& w) {
  const auto& g = w.grid();
  const int j0 = g.first_row_at_or_above_zero();
  std::vector<Vec2> pts;
  for (int i = 0; i <= g.nx(); ++i) {
    double len = 0;
    for (int j = j0; j < g.ny(); ++j) {
      const double w0 = w.at(i, j), w1 = w.at(i, j + 1);
      const bool in0 = w0 >= 0.5, in1 = w1 >= 0.5;
      if (in0 && in1) len += g.hy();
      else if (in0 != in1) {
        const double frac = (0.5 - w0) / (w1 - w0);
        len += in0 ? frac * g.hy() : (1 - frac) * g.hy();
      }
    }
    pts.push_back({g.x(i), len});
  }
  return BVProfile(g.a(), g.b(), std::move(pts));
}

ExtractedLimit extract_limit(const PhaseConfig& config, const ExperimentSpec& spec, double eps,
                             double sig, const EnvelopeTable& env) {
  const auto& g = config.grid();
  auto profile = extract_profile(config.w);
  const auto graph = decompose(profile);
  const double cell = std::max(g.hx(), g.hy());
  const double ell = std::max(profile.lipschitz(), 1.0);
  const double delta = std::max(spec.recovery.delta_factor * eps * (1 + ell), 4.5 * cell);
  const auto cover = delta_cover(profile, delta, cell);

  // Graph pieces clipped to the rectangles, tagged by rectangle.
  std::vector<DensitySegment> pieces;
  std::vector<int> owner;
  for (std::size_t r = 0; r < cover.rectangles.size(); ++r)
    for (const auto& s : graph.segments)
      if (auto c = clip(s.segment, cover.rectangles[r]); c && c->length() > 0) {
        pieces.push_back({*c, s.cls, 0.0});
        owner.push_back(static_cast<int>(r));
      }
  std::vector<double> mass(cover.rectangles.size(), 0.0), len(cover.rectangles.size(), 0.0);
  for (std::size_t k = 0; k < pieces.size(); ++k)
    len[static_cast<std::size_t>(owner[k])] += pieces[k].segment.length();

  const auto mu = diffuse_measure(config, eps, spec.potential, sig);
  double lost = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double cm = mu.mass.at(i, j);
      if (cm <= 0) continue;
      const Vec2 c{g.cell_x(i), g.cell_y(j)};
      double best = std::numeric_limits<double>::infinity();
      int arg = -1;
      for (std::size_t k = 0; k < pieces.size(); ++k) {
        const double d = distance(c, pieces[k].segment);
        if (d < best) best = d, arg = static_cast<int>(k);
      }
      if (arg < 0) lost += cm;
      else mass[static_cast<std::size_t>(owner[static_cast<std::size_t>(arg)])] += cm;
    }
  if (lost > 0) throw NumericalError("extract_limit: diffuse mass with an empty graph");
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto r = static_cast<std::size_t>(owner[k]);
    pieces[k].u = mass[r] / len[r];
  }
  AdatomMeasure measure(std::move(pieces), {});
  const auto sharp = sharp_total({profile, measure, std::nullopt}, env, spec.model, g, spec.bc);
  return {std::move(profile), std::move(measure), sharp.total.value()};
}

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& values) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < eps.size() && k < values.size(); ++k) {
    const double v = std::abs(values[k]);
    if (!(v > 0) || !std::isfinite(v) || !(eps[k] > 0)) continue;
    const double x = std::log(eps[k]), y = std::log(v);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++n;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den <= 0) return kNaN;
  return (n * sxy - sx * sy) / den;
}

LimsupRun run_limsup(const ExperimentSpec& spec) {
  spec.validate();
  LimsupRun run;
  auto& rep = run.report;
  rep.experiment = spec.name;
  rep.kind = "limsup";
  const double m = spec.measure.total_mass(), M = spec.profile.integral();
  if (std::abs(spec.M - M) > 1e-12 * std::max(1.0, M) || std::abs(spec.m - m) > 1e-12 * std::max(1.0, m))
    rep.warnings.push_back("masses taken from the sharp configuration (m = " + fmt(m) +
                           ", M = " + fmt(M) + ")");
  if (spec.schedule.empty()) {
    rep.warnings.push_back("empty schedule");
    rep.slope = kNaN;
    return run;
  }
  run.bundle = recovery_sequence({spec.profile, spec.measure, std::nullopt}, spec.schedule,
                                 spec.potential, spec.psi, spec.model, spec.bc, spec.recovery);
  bool mass_ok = true;
  std::string mass_detail = "all builds exact";
  for (const auto& s : run.bundle.steps) {
    const auto& w = s.config.w;
    auto row = blank_row(s.eps);
    row.energy = s.bulk + s.surface;
    row.bulk = s.bulk;
    row.surface = s.surface;
    row.sharp = s.sharp_total;
    row.gap = s.gap;
    row.mass_w = s.mass_w;
    row.mass_mu = s.mass_mu;
    row.l1_phase = l1_phase_distance(w, spec.profile);
    row.l2_displacement = s.displacement_l2;
    const auto sig = sigma(spec.potential);
    row.weak_star = weak_star_distance(sample(diffuse_measure(s.config, s.eps, spec.potential, sig)),
                                       sample(spec.measure, std::max(w.grid().hx(), w.grid().hy())));
    const auto ext = extract_profile(w);
    row.l1_profile = l1_profile_distance(ext, spec.profile);
    row.hausdorff = hausdorff_complement(ext, spec.profile, w.grid()).value;
    row.strain = s.strain_squared;
    row.threshold_mass = ext.integral();
    if (mass_ok && !masses_exact(s.mass_w, M, s.mass_mu, m)) {
      mass_ok = false;
      mass_detail = "eps = " + fmt(s.eps) + ": |int w - M| = " + fmt(std::abs(s.mass_w - M)) +
                    ", |mu(R2) - m| = " + fmt(std::abs(s.mass_mu - m));
    }
    rep.rows.push_back(row);
  }
  std::vector<double> eps, gaps;
  for (const auto& r : rep.rows) eps.push_back(r.eps), gaps.push_back(r.gap);
  rep.slope = loglog_slope(eps, gaps);

  const double last = std::abs(rep.rows.back().gap);
  rep.verdicts.push_back({5, "final relative gap <= 5%", last <= 0.05,
                          "|gap| = " + fmt(last) + " at eps = " + fmt(rep.rows.back().eps)});
  if (rep.rows.size() < 2) {
    rep.warnings.push_back("schedule of length 1: trend and slope assertions skipped");
  } else {
    rep.verdicts.push_back(trend_verdict(rep.rows));
    rep.verdicts.push_back({5, "log-log gap slope positive", rep.slope > 0, "slope = " + fmt(rep.slope)});
  }
  rep.verdicts.push_back({7, "mass exactness (recovery)", mass_ok, mass_detail});
  return run;
}

LiminfRun run_liminf_probe(const ExperimentSpec& spec) {
  spec.validate();
  require(!spec.seeds.empty(), "run_liminf_probe: at least one seed is required");
  LiminfRun run;
  auto& rep = run.report;
  rep.experiment = spec.name;
  rep.kind = "liminf";
  if (spec.seeds.size() < 3) rep.warnings.push_back("fewer than 3 seeds");
  const double sig = sigma(spec.potential);
  const EnvelopeTable env(spec.psi, spec.envelope);
  bool mass_ok = true;
  std::string mass_detail = "all accepted iterates exact";

  for (double eps : spec.schedule) {
    const auto grid = experiment_grid(spec, eps);
    const auto prob = make_problem(eps, spec.potential, spec.psi, spec.model, spec.bc);
    MonitorSeries series{eps, {}, {}, ScalarField(grid)};
    std::optional<MinimizeResult> best;
    for (unsigned seed : spec.seeds) {
      auto res = minimize_eps(prob, spec.m, spec.M, seed_config(spec, grid, eps, seed), spec.minimize);
      if (res.warning)
        rep.warnings.push_back("eps = " + fmt(eps) + ", seed " + std::to_string(seed) + ": " + res.message);
      for (const auto& t : res.trace) {
        series.energies.push_back(t.total);
        if (mass_ok && !masses_exact(t.mass_w, spec.M, t.mass_u, spec.m)) {
          mass_ok = false;
          mass_detail = "eps = " + fmt(eps) + ", seed " + std::to_string(seed) + ", iteration " +
                        std::to_string(t.iter) + ": |int w - M| = " + fmt(std::abs(t.mass_w - spec.M)) +
                        ", |mu(R2) - m| = " + fmt(std::abs(t.mass_u - spec.m));
        }
      }
      series.strains.push_back(strain_norm_squared(res.config.v, Region::upper_half()));
      if (!best || res.trace.back().total < best->trace.back().total) best = std::move(res);
    }
    const auto& cfg = best->config;
    const auto ext = extract_limit(cfg, spec, eps, sig, env);
    const auto mu = diffuse_measure(cfg, eps, spec.potential, sig);
    const auto& last = best->trace.back();
    auto row = blank_row(eps);
    row.energy = last.total;
    row.bulk = last.bulk;
    row.surface = last.surface;
    row.sharp = ext.sharp;
    row.gap = (last.total - ext.sharp) / ext.sharp;
    row.mass_w = phase_mass(cfg.w);
    row.mass_mu = mu.total;
    row.l1_phase = l1_phase_distance(cfg.w, spec.profile);
    row.l1_profile = l1_profile_distance(ext.profile, spec.profile);
    row.weak_star = weak_star_distance(sample(mu), sample(ext.measure, std::max(grid.hx(), grid.hy())));
    row.hausdorff = hausdorff_complement(ext.profile, spec.profile, grid).value;
    row.strain = strain_norm_squared(cfg.v, Region::upper_half());
    row.threshold_mass = ext.profile.integral();
    rep.rows.push_back(row);
    series.w = cfg.w;
    run.series.push_back(std::move(series));
    run.best.push_back(std::move(*best));
  }

  std::vector<double> eps, gaps;
  for (const auto& r : rep.rows) eps.push_back(r.eps), gaps.push_back(r.gap);
  rep.slope = loglog_slope(eps, gaps);
  if (rep.rows.empty()) {
    rep.warnings.push_back("empty schedule");
    return run;
  }
  double gmin = rep.rows.front().energy;
  for (const auto& r : rep.rows) gmin = std::min(gmin, r.energy);
  const double F = rep.rows.back().sharp;
  rep.verdicts.push_back({8, "min G_eps >= F(extracted) - 5%", gmin >= F - 0.05 * std::abs(F),
                          "min G = " + fmt(gmin) + ", F = " + fmt(F) + " at eps = " + fmt(rep.rows.back().eps)});
  if (rep.rows.size() < 2) {
    rep.warnings.push_back("schedule of length 1: L1 decay assertion skipped");
  } else {
    bool dec = true;
    std::string d = "int |w - chi|:";
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      d += " " + fmt(rep.rows[k].l1_phase);
      if (k && !(rep.rows[k].l1_phase < rep.rows[k - 1].l1_phase)) dec = false;
    }
    rep.verdicts.push_back({8, "L1 phase distance decreasing", dec, d});
  }
  {
    bool flat = true;
    std::string d = "Hausdorff / cell:";
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      const auto g = experiment_grid(spec, rep.rows[k].eps);
      const double ratio = rep.rows[k].hausdorff / std::max(g.hx(), g.hy());
      d += " " + fmt(ratio);
      if (!(ratio <= 1)) flat = false;
    }
    rep.verdicts.push_back({8, "extracted profile within one cell", flat, d});
  }
  rep.verdicts.push_back({7, "mass exactness (minimization)", mass_ok, mass_detail});
  return run;
}

std::vector<MonitorSeries> monitor_series(const RecoveryBundle& bundle) {
  std::vector<MonitorSeries> out;
  for (const auto& s : bundle.steps)
    out.push_back({s.eps, {s.bulk + s.surface}, {s.strain_squared}, s.config.w});
  return out;
}

ConvergenceReport monitor(const std::vector<MonitorSeries>& series, double M,
                          const std::string& experiment) {
  ConvergenceReport rep;
  rep.experiment = experiment;
  rep.kind = "monitor";
  rep.slope = kNaN;
  if (series.empty()) {
    rep.warnings.push_back("empty schedule");
    return rep;
  }
  auto top = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  };
  const double e_bound = 1.1 * top(series.front().energies);
  const double s_bound = 1.1 * top(series.front().strains);
  Verdict ev{10, "energy trace bounded", true, "bound " + fmt(e_bound)};
  Verdict sv{10, "strain trace bounded", true, "bound " + fmt(s_bound)};
  for (const auto& s : series) {
    auto row = blank_row(s.eps);
    row.energy = top(s.energies);
    row.strain = top(s.strains);
    row.threshold_mass = extract_profile(s.w).integral();
    if (ev.pass && row.energy > e_bound) {
      ev.pass = false;
      ev.detail = "eps = " + fmt(s.eps) + ": " + fmt(row.energy) + " > " + fmt(e_bound);
    }
    if (sv.pass && row.strain > s_bound + 1e-12) {
      sv.pass = false;
      sv.detail = "eps = " + fmt(s.eps) + ": " + fmt(row.strain) + " > " + fmt(s_bound);
    }
    rep.rows.push_back(row);
  }
  const double tm = rep.rows.back().threshold_mass;
  const double rel = std::abs(tm - M) / M;
  rep.verdicts.push_back(ev);
  rep.verdicts.push_back(sv);
  rep.verdicts.push_back({10, "thresholded mass within 2% of M", rel <= 0.02,
                          "area " + fmt(tm) + " vs M = " + fmt(M) + " at eps = " + fmt(rep.rows.back().eps)});
  return rep;
}

ConvergenceReport run_compactness_monitor(const ExperimentSpec& spec, MonitorSource source) {
  if (source == MonitorSource::Recovery) {
    const auto run = run_limsup(spec);
    return monitor(monitor_series(run.bundle), spec.profile.integral(), spec.name);
  }
  const auto run = run_liminf_probe(spec);
  return monitor(run.series, spec.M, spec.name);
}

void emit_csv(const ConvergenceReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epsilon,energy,bulk,surface,sharp,gap,mass_w,mass_mu,l1_phase,l1_profile,"
         "l2_displacement,weak_star,hausdorff,strain,threshold_mass\n";
  out << std::setprecision(12);
  for (const auto& r : report.rows)
    out << r.eps << ',' << r.energy << ',' << r.bulk << ',' << r.surface << ',' << r.sharp << ','
        << r.gap << ',' << r.mass_w << ',' << r.mass_mu << ',' << r.l1_phase << ','
        << r.l1_profile << ',' << r.l2_displacement << ',' << r.weak_star << ',' << r.hausdorff << ',' << r.strain << ','
        << r.threshold_mass << '\n';
}

void emit_verdicts(const ConvergenceReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "criterion,name,verdict,detail\n";
  for (const auto& v : report.verdicts)
    out << v.criterion << ',' << v.name << ',' << (v.pass ? "PASS" : "FAIL") << ",\"" << v.detail << "\"\n";
  for (const auto& w : report.warnings) out << ",warning,,\"" << w << "\"\n";
}

void emit_svg(const ConvergenceReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : report.rows)
    if (std::abs(r.gap) > 0 && std::isfinite(r.gap)) pts.emplace_back(std::log10(r.eps), std::log10(std::abs(r.gap)));
  constexpr double W = 480, H = 360, L = 60, T = 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + L + 20 << "\" height=\"" << H + T + 50
      << "\">\n";
  out << "<text x=\"" << L << "\" y=\"20\" font-size=\"13\">" << report.experiment << " (" << report.kind
      << "): |gap| vs eps, slope " << std::setprecision(4) << report.slope << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W << "\" height=\"" << H
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (pts.empty()) {
    out << "<text x=\"" << L + 10 << "\" y=\"" << T + 20 << "\" font-size=\"12\">no data</text>\n</svg>\n";
    return;
  }
  double x0 = pts[0].first, x1 = x0, y0 = pts[0].second, y1 = y0;
  for (auto [x, y] : pts) x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
  x0 -= 0.1, x1 += 0.1, y0 -= 0.1, y1 += 0.1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * W; };
  auto py = [&](double y) { return T + H - (y - y0) / (y1 - y0) * H; };
  out << std::setprecision(6) << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
  for (auto [x, y] : pts) out << px(x) << ',' << py(y) << ' ';
  out << "\"/>\n";
  for (auto [x, y] : pts) {
    out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    out << "<text x=\"" << px(x) - 10 << "\" y=\"" << T + H + 16 << "\" font-size=\"10\">"
        << std::pow(10.0, x) << "</text>\n";
  }
  out << "<text x=\"" << L + W / 2 << "\" y=\"" << T + H + 36 << "\" font-size=\"12\">eps (log)</text>\n";
  out << "<text x=\"4\" y=\"" << T + H / 2 << "\" font-size=\"12\">|gap| (log)</text>\n";
  out << "<text x=\"8\" y=\"" << py(y1 - 0.1) << "\" font-size=\"10\">" << std::pow(10.0, y1 - 0.1) << "</text>\n";
  out << "<text x=\"8\" y=\"" << py(y0 + 0.1) << "\" font-size=\"10\">" << std::pow(10.0, y0 + 0.1) << "</text>\n";
  out << "</svg>\n";
}

}  // namespace epitaxy
