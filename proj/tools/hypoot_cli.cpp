// hypoot: batch front end for the experiment pipelines.
//
// Exit codes: 0 pass, 1 scientific check failed, 2 usage or config error,
// 3 numerical non-convergence.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hypoot/config.hpp"
#include "hypoot/errors.hpp"
#include "hypoot/experiments.hpp"
#include "json.hpp"

using namespace hypoot;

namespace {

enum Exit { kPass = 0, kFail = 1, kUsage = 2, kNoConvergence = 3 };

int exit_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse_error:
    case ErrorKind::invalid_parameter: return kUsage;
    case ErrorKind::no_convergence: return kNoConvergence;
    default: return kFail;
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Globals {
  std::string config;
  std::string out;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

int dispatch(const std::string& cmd, const ExperimentConfig& cfg, const RunOptions& ro) {
  if (cmd == "admissibility") {
    const auto r = run_admissibility(cfg, ro);
    std::cout << "admissible: " << (r.report.admissible ? "yes" : "no");
    if (!r.report.admissible) std::cout << " (" << r.report.reason << ")";
    std::cout << "\nb* = " << r.report.b_star << ", c* = " << r.report.c_star << '\n';
    return r.report.admissible ? kPass : kFail;
  }
  if (cmd == "decay") {
    const auto r = run_decay(cfg, ro);
    std::cout << "snapshots: " << r.rows.size() << '\n';
    if (r.fit)
      std::cout << "kappa_observed = " << r.fit->kappa_observed() << " (r^2 = " << r.fit->r_squared << ")\n";
    std::cout << "kappa_required = " << r.kappa_required << "\nmonotone: " << (r.monotone ? "yes" : "no") << '\n';
    if (!r.note.empty()) std::cout << "note: " << r.note << '\n';
    return r.pass ? kPass : kFail;
  }
  if (cmd == "dissipation") {
    const auto r = run_dissipation(cfg, ro);
    for (const auto& c : r.checks)
      std::cout << "t = " << c.t << "  lhs = " << c.lhs << "  rhs = " << c.rhs << "  " << (c.pass ? "ok" : "FAIL")
                << '\n';
    return r.pass ? kPass : kFail;
  }
  if (cmd == "verify") {
    const auto vs = run_verify(cfg, ro);
    bool ok = true;
    for (const auto& v : vs) {
      std::cout << (v.diagnostic ? "[diagnostic] " : "") << v.name << ": " << (v.pass ? "pass" : "fail")
                << "  samples = " << v.samples << "  min_gap = " << v.min_gap << '\n';
      if (!v.diagnostic) ok = ok && v.pass;
    }
    return ok ? kPass : kFail;
  }
  if (cmd == "oracle") {
    const auto r = run_oracle(cfg, ro);
    for (const auto& row : r.rows)
      std::cout << "mean (" << row.mean.x << ", " << row.mean.v << ")  W_A rel err " << row.wa_rel
                << "  J_A scaled err " << row.j_rel << "  " << (row.pass ? "ok" : "FAIL") << '\n';
    return r.pass ? kPass : kFail;
  }
  if (cmd == "simulate-sde") {
    const auto r = run_simulate_sde(cfg, ro);
    std::cout << "particles: " << r.ensemble.size() << "  t = " << r.ensemble.time << '\n';
    if (r.reference)
      std::cout << "mean z-scores: " << r.mean_z_scores[0] << ", " << r.mean_z_scores[1] << '\n';
    return r.pass ? kPass : kFail;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted Wasserstein hypocoercivity workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory (overrides output_dir)");
  app.add_option("--jobs", g.jobs, "worker cap (pipelines currently run on one thread)")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides seed)");
  app.add_flag("--strict", g.strict, "stricter verdicts (more lemma samples, solver mass budget)");

  const char* names[] = {"admissibility", "decay", "dissipation", "verify", "oracle", "simulate-sde"};
  const char* help[] = {"admissibility report for the configured potential",
                        "evolve, distances, dissipation and fitted decay rate",
                        "finite-difference check of the dissipation inequality",
                        "randomized checks of the scalar lemma inequalities",
                        "Gaussian closed forms against the numerical pipeline",
                        "Euler-Maruyama particle ensemble"};
  for (int k = 0; k < 6; ++k) app.add_subcommand(names[k], help[k]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  const std::string cmd = app.get_subcommands().front()->get_name();

  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  int code = kPass;
  std::string error;
  ExperimentConfig cfg;
  RunOptions ro;
  try {
    if (!g.config.empty()) cfg = load_config(g.config);
    if (!g.out.empty()) cfg.output_dir = g.out;
    if (g.seed) cfg.seed = *g.seed;
    ro.out_dir = cfg.output_dir;
    ro.strict = g.strict;
    std::filesystem::create_directories(ro.out_dir);
    {
      std::ofstream os(std::filesystem::path(ro.out_dir) / "config.json");
      os << config_to_json(cfg) << '\n';
    }
    code = dispatch(cmd, cfg, ro);
  } catch (const Error& e) {
    error = e.what();
    code = exit_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    error = e.what();
    code = kUsage;
  } catch (const std::exception& e) {
    error = e.what();
    code = kFail;
  }
  if (!error.empty()) std::cerr << "error: " << error << '\n';

  // timings live in a sidecar so the result files stay byte-identical across reruns
  if (!ro.out_dir.empty() && std::filesystem::is_directory(ro.out_dir)) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const nlohmann::json meta = {{"command", cmd},     {"config", g.config},   {"started_utc", started},
                                 {"elapsed_s", elapsed}, {"jobs", g.jobs},       {"seed", cfg.seed},
                                 {"strict", g.strict}, {"exit_code", code},    {"error", error}};
    std::ofstream os(std::filesystem::path(ro.out_dir) / "run_meta.json");
    os << meta.dump(2) << '\n';
  }
  std::cout << cmd << ": " << (code == kPass ? "PASS" : "FAIL") << " (exit " << code << ")\n";
  return code;
}
