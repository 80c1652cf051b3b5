#pragma once

// Configured pipelines behind the command-line subcommands. Each run_* writes
// its files into out_dir (nothing when out_dir is empty) and returns the data
// needed for the verdict.

#include <optional>
#include <string>
#include <vector>

#include "hypoot/config.hpp"
#include "hypoot/dissipation.hpp"
#include "hypoot/lemma_suite.hpp"

namespace hypoot {

struct RunOptions {
  std::string out_dir;
  bool strict = false;
};

struct AdmissibilityRun {
  Potential U;
  AdmissibilityReport report;
  std::optional<RateConstants> mid_window;  ///< constants at b = (b* + c*/2) / 2 when admissible
};

/// admissibility.json
AdmissibilityRun run_admissibility(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct DecayRun {
  std::vector<DecayRow> rows;
  std::optional<RateFit> fit;
  double kappa_required = 0.0;  ///< NaN when A is not the theorem matrix or the hypothesis fails
  bool monotone = true;
  double max_relative_increase = 0.0;
  double total_leakage = 0.0;
  double max_mass_deviation = 0.0;
  bool pass = false;
  std::string note;
};

/// decay.csv, decay.json, and snapshots/ when requested.
DecayRun run_decay(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct DissipationRun {
  std::vector<DissipationCheck> checks;
  std::vector<std::pair<double, KeyCheck>> key_checks;
  bool used_oracle = false;
  bool pass = false;
};

/// dissipation.csv, dissipation.json
DissipationRun run_dissipation(const ExperimentConfig& cfg, const RunOptions& opt = {});

/// lemmas.json; strict mode uses verify.strict_samples.
std::vector<LemmaVerdict> run_verify(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct OracleRow {
  Vec2 mean;
  Sym2 cov;
  double wa_numeric = 0.0, wa_closed = 0.0, wa_rel = 0.0;
  double j_numeric = 0.0, j_closed = 0.0;
  double j_rel = 0.0;  ///< |J_num - J| / max(|J|, W_A^2)
  std::optional<KeyCheck> key;
  bool pass = false;
};

struct OracleRun {
  std::vector<OracleRow> rows;
  bool pass = false;
};

/// oracle.json. Needs psi = 0; without configured cases three defaults are used.
/// W_A uses the configured transport method on at most oracle.wa_max_cells cells.
OracleRun run_oracle(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct SdeRun {
  ParticleEnsemble ensemble;
  Moments empirical;
  std::optional<Moments> reference;   ///< psi = 0 with a Gaussian or point start
  std::vector<double> mean_z_scores;  ///< (x, v) standardized mean errors
  std::optional<PairedRun> paired;
  bool pass = true;
};

/// ensemble.txt, sde.json, histogram.txt and paired.csv when configured.
SdeRun run_simulate_sde(const ExperimentConfig& cfg, const RunOptions& opt = {});

}  // namespace hypoot
