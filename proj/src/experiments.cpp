#include "hypoot/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hypoot/errors.hpp"
#include "json.hpp"

namespace hypoot {

namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
json vec_json(Vec2 z) { return json::array({z.x, z.v}); }
json sym_json(const Sym2& s) { return json::array({json::array({s.xx, s.xv}), json::array({s.xv, s.vv})}); }

std::string out_path(const RunOptions& opt, const std::string& name) {
  return (std::filesystem::path(opt.out_dir) / name).string();
}

void write_json(const RunOptions& opt, const std::string& name, const json& j) {
  if (opt.out_dir.empty()) return;
  std::filesystem::create_directories(opt.out_dir);
  std::ofstream os(out_path(opt, name));
  if (!os) throw Error(ErrorKind::io_error, "cannot write " + out_path(opt, name));
  os << j.dump(2) << '\n';
}

json constants_json(const RateConstants& k) {
  return {{"b", k.b},           {"gamma", k.gamma}, {"kappa1", k.kappa1}, {"kappa2", k.kappa2},
          {"kappa3", k.kappa3}, {"kappa", k.kappa}, {"rho_base", k.rho_base}};
}

// kappa from rate_constants when A has the theorem form with c = 2b; NaN otherwise
double required_kappa(const Potential& U, const TwistMatrix& A, std::string& note) {
  const double b = A.b();
  if (!(b > 0.0)) {
    note = "A is not of theorem form; no rate bound";
    return kNaN;
  }
  const TwistMatrix t = theorem_matrix(U.alpha, 2.0 * b);
  if (std::abs(t.a() - A.a()) > 1e-12 * A.a() || std::abs(t.c() - A.c()) > 1e-12 * A.c()) {
    note = "A is not of theorem form; no rate bound";
    return kNaN;
  }
  try {
    return rate_constants(U.alpha, U.psi, b).kappa;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::hypothesis_violated) throw;
    note = e.what();
    return kNaN;
  }
}

struct Setup {
  Potential U;
  TwistMatrix A;
  PhaseGrid grid;
  DensityGrid sigma;
  Trajectory traj;
};

Setup evolve_configured(const ExperimentConfig& cfg) {
  Potential U = build_potential(cfg.potential);
  TwistMatrix A = build_matrix(cfg.matrix, U);
  PhaseGrid grid = build_grid(cfg.grid, U);
  DensityGrid sigma = equilibrium_density(U, grid);
  const DensityGrid f0 = build_initial_density(cfg.initial, U, grid);
  Trajectory traj = evolve(f0, U, build_solver(cfg.solver, grid, U));
  return {std::move(U), A, grid, std::move(sigma), std::move(traj)};
}

double max_of(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, x);
  return m;
}

}  // namespace

AdmissibilityRun run_admissibility(const ExperimentConfig& cfg, const RunOptions& opt) {
  AdmissibilityRun r{build_potential(cfg.potential), {}, std::nullopt};
  r.report = check_admissibility(r.U.alpha, r.U.psi);
  const auto& rep = r.report;
  if (rep.admissible) r.mid_window = rate_constants(r.U.alpha, r.U.psi, 0.5 * (rep.b_star + 0.5 * rep.c_star));
  json j = {{"alpha", rep.alpha},
            {"perturbation", r.U.psi.label()},
            {"scale", r.U.psi.novoid_scale()},
            {"radius", rep.radius},
            {"norm_psi", rep.norm_psi},
            {"norm_dpsi", rep.norm_dpsi},
            {"norm_ddpsi", rep.norm_ddpsi},
            {"gamma", rep.gamma},
            {"b_star", num(rep.b_star)},
            {"c_star", num(rep.c_star)},
            {"c_window", json::array({num(rep.c_low), num(rep.c_high)})},
            {"conditions",
             {{"dpsi_below_alpha", rep.dpsi_below_alpha},
              {"alpha_below_ddpsi", rep.alpha_below_ddpsi},
              {"ddpsi_below_tenth", rep.ddpsi_below_tenth},
              {"sqrt_defined", rep.sqrt_defined},
              {"c_window_open", rep.c_window_open},
              {"gamma_below_ddpsi_sq", rep.gamma_below_ddpsi_sq}}},
            {"admissible", rep.admissible},
            {"reason", rep.reason}};
  j["rate_constants_mid_window"] = r.mid_window ? constants_json(*r.mid_window) : json(nullptr);
  write_json(opt, "admissibility.json", j);
  return r;
}

DecayRun run_decay(const ExperimentConfig& cfg, const RunOptions& opt) {
  Setup s = evolve_configured(cfg);
  DecayRun run;
  run.total_leakage = s.traj.total_leakage;
  run.max_mass_deviation = max_of(s.traj.mass_deviation);

  DistanceOptions dopt;
  dopt.method = cfg.transport.method;
  dopt.mass_floor = cfg.transport.mass_floor;
  dopt.max_cells = cfg.transport.max_cells;
  dopt.eps_rel = cfg.transport.eps_rel;
  JOptions jopt;
  jopt.levels = cfg.transport.j_levels;
  jopt.eps_cells = cfg.transport.eps_cells;

  if (!opt.out_dir.empty() && cfg.decay.write_snapshots)
    std::filesystem::create_directories(std::filesystem::path(opt.out_dir) / "snapshots");

  for (std::size_t k = 0; k < s.traj.snapshots.size(); ++k) {
    const auto& raw = s.traj.snapshots[k];
    const DensityGrid f = DensityGrid::normalized(s.grid, raw.values());
    DecayRow row{s.traj.times[k], 0, 0, kNaN, kNaN, 0, raw.mass()};
    row.wa = w_distance(f, s.sigma, s.A, dopt);
    row.w2 = w_distance(f, s.sigma, TwistMatrix::identity(), dopt);
    if (cfg.transport.compute_j) {
      const auto rep = j_extrapolated(f, s.sigma, s.A, s.U, jopt);
      row.j_extrapolated = rep.j_extrapolated;
      double eps_min = std::numeric_limits<double>::infinity();
      for (const auto& [eps, j] : rep.eps_ladder) {
        if (eps < eps_min) {
          eps_min = eps;
          row.j_raw = j;
        }
      }
    }
    row.h_rel = relative_entropy(f, s.sigma);
    run.rows.push_back(row);
    if (!opt.out_dir.empty() && cfg.decay.write_snapshots) {
      std::ostringstream name;
      name << "snapshots/density_" << std::setw(4) << std::setfill('0') << k << ".txt";
      write_density(out_path(opt, name.str()), raw, s.traj.times[k]);
    }
  }

  for (std::size_t k = 1; k < run.rows.size(); ++k) {
    const double prev = run.rows[k - 1].wa;
    const double inc = prev > 0.0 ? (run.rows[k].wa - prev) / prev : 0.0;
    run.max_relative_increase = std::max(run.max_relative_increase, inc);
  }
  run.monotone = run.max_relative_increase <= cfg.decay.monotone_tol;

  std::vector<double> ts, ds;
  for (const auto& r : run.rows) {
    if (r.t >= cfg.decay.fit_from - 1e-9 && r.t <= cfg.decay.fit_to + 1e-9) {
      ts.push_back(r.t);
      ds.push_back(r.wa);
    }
  }
  if (ts.size() >= 5) {
    run.fit = fit_decay_rate(ts, ds);
  } else {
    run.note = "fewer than 5 snapshots in the fit window; no rate fitted";
  }
  std::string knote;
  run.kappa_required = required_kappa(s.U, s.A, knote);
  if (!knote.empty()) run.note += (run.note.empty() ? "" : "; ") + knote;

  if (run.fit) {
    const bool rate_ok = std::isnan(run.kappa_required) ? false : run.fit->kappa_observed() >= run.kappa_required;
    run.pass = rate_ok && run.fit->r_squared >= cfg.decay.min_r_squared && run.monotone;
  } else {
    run.pass = run.monotone;
  }
  if (opt.strict && (run.total_leakage > 1e-6 || run.max_mass_deviation > 1e-8)) {
    run.pass = false;
    run.note += (run.note.empty() ? "" : "; ") + std::string("strict: solver mass budget exceeded");
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_decay_csv(out_path(opt, "decay.csv"), run.rows);
    json j = {{"name", cfg.name},
              {"kappa_required", num(run.kappa_required)},
              {"kappa_observed", run.fit ? num(run.fit->kappa_observed()) : json(nullptr)},
              {"slope", run.fit ? num(run.fit->slope) : json(nullptr)},
              {"intercept", run.fit ? num(run.fit->intercept) : json(nullptr)},
              {"r_squared", run.fit ? num(run.fit->r_squared) : json(nullptr)},
              {"fit_times", ts},
              {"fit_distances", ds},
              {"monotone", run.monotone},
              {"max_relative_increase", run.max_relative_increase},
              {"dt_used", s.traj.dt_used},
              {"total_leakage", run.total_leakage},
              {"max_mass_deviation", run.max_mass_deviation},
              {"matrix", {{"a", s.A.a()}, {"b", s.A.b()}, {"c", s.A.c()}}},
              {"pass", run.pass},
              {"note", run.note}};
    write_json(opt, "decay.json", j);
  }
  return run;
}

DissipationRun run_dissipation(const ExperimentConfig& cfg, const RunOptions& opt) {
  Setup s = evolve_configured(cfg);
  DissipationRun run;
  DissipationOptions dopt;
  dopt.method = cfg.dissipation.method;
  dopt.max_cells = cfg.dissipation.max_cells;
  dopt.tol_factor = cfg.dissipation.tol_factor;
  dopt.j.levels = cfg.transport.j_levels;
  dopt.j.eps_cells = cfg.transport.eps_cells;

  std::function<JEstimate(const DensityGrid&, double)> oracle;
  if (cfg.dissipation.gaussian_oracle && s.U.psi.is_none() && cfg.initial.kind == InitialSpec::Kind::gaussian) {
    const double alpha = s.U.alpha;
    const Vec2 m0 = cfg.initial.mean;
    const Sym2 S0 = cfg.initial.cov;
    const TwistMatrix A = s.A;
    oracle = [=](const DensityGrid&, double t) {
      const auto mo = ou_moments(alpha, m0, S0, t);
      return JEstimate{gaussian_j_oracle(mo.mean, mo.cov, alpha, A), 0.0};
    };
    run.used_oracle = true;
  }
  run.checks = verify_dissipation(s.traj, s.A, s.U, s.sigma, dopt, oracle);
  run.pass = !run.checks.empty();
  for (const auto& c : run.checks) run.pass = run.pass && c.pass;

  if (cfg.dissipation.key_check) {
    for (std::size_t k = 0; k < s.traj.snapshots.size(); ++k) {
      const DensityGrid f = DensityGrid::normalized(s.grid, s.traj.snapshots[k].values());
      const KeyCheck kc = verify_key_inequality(f, s.A, s.U, dopt.j);
      run.key_checks.emplace_back(s.traj.times[k], kc);
      run.pass = run.pass && kc.pass;
    }
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream os(out_path(opt, "dissipation.csv"));
    if (!os) throw Error(ErrorKind::io_error, "cannot write dissipation.csv");
    os << "t,lhs,rhs,tol_time,tol_ot,tol_eps,pass\n" << std::setprecision(12);
    json checks = json::array();
    for (const auto& c : run.checks) {
      os << c.t << ',' << c.lhs << ',' << c.rhs << ',' << c.tol_time << ',' << c.tol_ot << ',' << c.tol_eps << ','
         << (c.pass ? 1 : 0) << '\n';
      checks.push_back({{"t", c.t},
                        {"lhs", c.lhs},
                        {"rhs", c.rhs},
                        {"tol_time", c.tol_time},
                        {"tol_ot", c.tol_ot},
                        {"tol_eps", c.tol_eps},
                        {"pass", c.pass}});
    }
    json keys = json::array();
    for (const auto& [t, k] : run.key_checks)
      keys.push_back({{"t", t},
                      {"kappa_required", k.kappa_required},
                      {"j", k.j},
                      {"wa_sq", k.wa_sq},
                      {"ratio", num(k.ratio)},
                      {"vacuous", k.vacuous},
                      {"pass", k.pass}});
    write_json(opt, "dissipation.json",
               {{"name", cfg.name},
                {"rhs_source", run.used_oracle ? "gaussian_closed_form" : "numerical"},
                {"tol_factor", dopt.tol_factor},
                {"checks", checks},
                {"key_checks", keys},
                {"pass", run.pass}});
  }
  return run;
}

std::vector<LemmaVerdict> run_verify(const ExperimentConfig& cfg, const RunOptions& opt) {
  VerifyOptions v;
  v.samples = opt.strict ? cfg.verify.strict_samples : cfg.verify.samples;
  v.seed = cfg.seed;
  v.reading = cfg.verify.reading;
  v.include_printed_diagnostic = cfg.verify.printed_diagnostic;
  auto verdicts = verify_all(v);
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_verdicts_json(out_path(opt, "lemmas.json"), verdicts);
  }
  return verdicts;
}

OracleRun run_oracle(const ExperimentConfig& cfg, const RunOptions& opt) {
  const Potential U = build_potential(cfg.potential);
  if (!U.psi.is_none()) throw Error(ErrorKind::invalid_parameter, "the Gaussian oracle needs psi = 0");
  const TwistMatrix A = build_matrix(cfg.matrix, U);
  const PhaseGrid grid = build_grid(cfg.grid, U);
  const DensityGrid sigma = equilibrium_density(U, grid);
  const Sym2 Sinf = Sym2::diag(1.0 / U.alpha, 1.0);

  std::vector<OracleCase> cases = cfg.oracle.cases;
  if (cases.empty()) {
    cases = {{{0.5, 0.0}, Sym2::diag(1.0, 1.0)}, {{0.0, 0.0}, Sym2{1.3, 0.2, 0.8}}, {{0.4, -0.3}, Sym2{0.8, -0.1, 1.2}}};
  }
  std::string knote;
  const double kappa = required_kappa(U, A, knote);

  DistanceOptions dopt;
  dopt.method = cfg.transport.method;
  dopt.mass_floor = cfg.transport.mass_floor;
  dopt.eps_rel = cfg.transport.eps_rel;
  dopt.max_cells = cfg.oracle.wa_max_cells;
  JOptions jopt;
  jopt.levels = cfg.transport.j_levels;
  jopt.eps_cells = cfg.transport.eps_cells;

  OracleRun run;
  run.pass = true;
  json rows = json::array();
  for (const auto& c : cases) {
    OracleRow r;
    r.mean = c.mean;
    r.cov = c.cov;
    const DensityGrid f = gaussian_density(c.mean, c.cov, grid);
    r.wa_closed = gaussian_wa(c.mean, c.cov, {0.0, 0.0}, Sinf, A);
    r.wa_numeric = w_distance(f, sigma, A, dopt);
    r.wa_rel = std::abs(r.wa_numeric - r.wa_closed) / r.wa_closed;
    r.j_closed = gaussian_j_oracle(c.mean, c.cov, U.alpha, A);
    r.j_numeric = j_extrapolated(f, sigma, A, U, jopt).j_extrapolated;
    // J vanishes for some translations, so its error is measured against max(|J|, W_A^2)
    r.j_rel = std::abs(r.j_numeric - r.j_closed) / std::max(std::abs(r.j_closed), r.wa_closed * r.wa_closed);
    if (!std::isnan(kappa)) r.key = verify_key_gaussian(c.mean, c.cov, U.alpha, A, kappa);
    r.pass = r.wa_rel <= cfg.oracle.wa_tolerance && r.j_rel <= cfg.oracle.j_tolerance && (!r.key || r.key->pass);
    run.pass = run.pass && r.pass;
    run.rows.push_back(r);
    json jr = {{"mean", vec_json(c.mean)},
               {"cov", sym_json(c.cov)},
               {"wa_numeric", r.wa_numeric},
               {"wa_closed_form", r.wa_closed},
               {"wa_relative_error", r.wa_rel},
               {"j_numeric", r.j_numeric},
               {"j_closed_form", r.j_closed},
               {"j_scaled_error", r.j_rel},
               {"pass", r.pass}};
    jr["key_inequality"] = r.key ? json{{"kappa_required", r.key->kappa_required},
                                       {"j", r.key->j},
                                       {"wa_sq", r.key->wa_sq},
                                       {"ratio", num(r.key->ratio)},
                                       {"pass", r.key->pass}}
                                 : json(nullptr);
    rows.push_back(jr);
  }
  write_json(opt, "oracle.json",
             {{"name", cfg.name},
              {"alpha", U.alpha},
              {"matrix", {{"a", A.a()}, {"b", A.b()}, {"c", A.c()}}},
              {"grid", {{"Lx", grid.Lx}, {"Lv", grid.Lv}, {"nx", grid.nx}, {"nv", grid.nv}}},
              {"wa_method", dopt.method == OtMethod::exact ? "exact" : "sinkhorn"},
              {"wa_tolerance", cfg.oracle.wa_tolerance},
              {"j_tolerance", cfg.oracle.j_tolerance},
              {"cases", rows},
              {"pass", run.pass}});
  return run;
}

SdeRun run_simulate_sde(const ExperimentConfig& cfg, const RunOptions& opt) {
  const Potential U = build_potential(cfg.potential);
  const InitSpec init = build_particle_init(cfg.initial, U);
  const auto& sc = cfg.sde;
  SdeRun run;
  run.ensemble = simulate(U, sc.particles, sc.dt, sc.t_end, cfg.seed, init);

  const double n = static_cast<double>(run.ensemble.size());
  Vec2 m{};
  for (const auto& z : run.ensemble.states) m = m + (1.0 / n) * z;
  Sym2 S{};
  for (const auto& z : run.ensemble.states) {
    const Vec2 d = z - m;
    S = S + (1.0 / n) * Sym2{d.x * d.x, d.x * d.v, d.v * d.v};
  }
  run.empirical = {m, S};

  if (U.psi.is_none() && init.kind != InitSpec::Kind::equilibrium) {
    const Sym2 S0 = init.kind == InitSpec::Kind::point ? Sym2{0.0, 0.0, 0.0} : init.cov;
    const auto ref = ou_moments(U.alpha, init.mean, S0, run.ensemble.time);
    run.reference = Moments{ref.mean, ref.cov};
    run.mean_z_scores = {(m.x - ref.mean.x) / std::sqrt(ref.cov.xx / n), (m.v - ref.mean.v) / std::sqrt(ref.cov.vv / n)};
    for (double z : run.mean_z_scores) run.pass = run.pass && std::abs(z) <= 5.0;
  }

  if (sc.paired_initial) {
    const InitSpec other = build_particle_init(*sc.paired_initial, U);
    const TwistMatrix A = build_matrix(cfg.matrix, U);
    run.paired = synchronous_pair(U, sc.particles, sc.dt, sc.t_end, cfg.seed, init, other, A, sc.record_every);
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_ensemble(out_path(opt, "ensemble.txt"), run.ensemble);
    json hist = nullptr;
    if (sc.histogram) {
      const auto h = empirical_density(run.ensemble, build_grid(cfg.grid, U));
      write_density(out_path(opt, "histogram.txt"), h.density, run.ensemble.time);
      hist = {{"outside", h.outside}, {"outside_fraction", h.outside_fraction}};
    }
    if (run.paired) write_paired_csv(out_path(opt, "paired.csv"), run.paired->msd);
    json j = {{"name", cfg.name},
              {"particles", run.ensemble.size()},
              {"time", run.ensemble.time},
              {"seed", cfg.seed},
              {"empirical", {{"mean", vec_json(m)}, {"cov", sym_json(S)}}},
              {"histogram", hist},
              {"pass", run.pass}};
    if (run.reference) {
      j["reference"] = {{"mean", vec_json(run.reference->mean)}, {"cov", sym_json(run.reference->cov)}};
      j["mean_z_scores"] = run.mean_z_scores;
    }
    if (run.paired && !run.paired->msd.empty()) j["paired_final_msd_A"] = run.paired->msd.back().second;
    write_json(opt, "sde.json", j);
  }
  return run;
}

}  // namespace hypoot
