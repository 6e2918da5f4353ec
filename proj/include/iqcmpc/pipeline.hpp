#pragma once

/**
 * @file
 * @brief End-to-end workflow on a problem configuration: offline synthesis to
 * a design artifact, artifact verification, and closed-loop runs.
 */

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/config.hpp"
#include "iqcmpc/design_types.hpp"
#include "iqcmpc/sim.hpp"

namespace iqcmpc {

/// Everything the online stage and the verifier need from the offline design.
struct DesignArtifact {
  TubeParams tube;  ///< p_e and p_diff are always derived from p
  TerminalSet terminal;
  IQCFilter filter;
  SymMatrix m;
  std::optional<SymMatrix> x_weight;
  int tau_max = 0;
  double lmi_margin = 0.0;
};

/// Runs the offline steps in order; errors name the failing stage.
DesignArtifact synthesize(const ProblemConfig& cfg);

std::string design_to_json(const DesignArtifact& art);
/// Throws Parse on malformed or inconsistent content.
DesignArtifact design_from_json(const std::string& text);
void save_design(const DesignArtifact& art, const std::filesystem::path& path);
DesignArtifact load_design(const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  ///< measured quantity
  double bound = 0.0;  ///< the check passes when value <= bound
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool passed() const noexcept;
  std::string to_json() const;
};

/**
 * @brief Re-checks an artifact against its configuration: design inequality,
 * multiplier family, tightening, terminal conditions by sampling, and the
 * exhaustive containment oracle on three nominal excitations.
 */
VerifyReport verify_design(const ProblemConfig& cfg, const DesignArtifact& art);

/// Nominal output sequences driving the containment oracle: zero, unit pulse, ramp.
std::vector<std::pair<std::string, std::vector<Vector>>> oracle_excitations(Index ny, int horizon);

MPCConfig make_mpc_config(const ProblemConfig& cfg, const DesignArtifact& art);
Controller make_controller(const ProblemConfig& cfg, const DesignArtifact& art);

struct RunRequest {
  Vector x0;
  int steps = 50;
  std::uint64_t seed = 1;
  int keep_every = 0;
};

SimTrace run_closed_loop(const ProblemConfig& cfg, const DesignArtifact& art, const RunRequest& req);

struct RunSummary {
  bool infeasible_start = false;
  int steps = 0;
  double max_violation = 0.0;          ///< max over t and rows of F [x; u] - f
  double min_containment_slack = 0.0;  ///< min over claims of s - |e|^2_Pe
  int containment_violations = 0;
  double s_terminal0 = 0.0;            ///< s_{T|0}
  double s_omega = 0.0;
  int suboptimal_steps = 0;
  double worst_candidate_gap = 0.0;    ///< largest violation of a shifted candidate
  double replay_residual = 0.0;
  double final_norm = 0.0;
};

RunSummary summarize(const SimTrace& trace, const ProblemConfig& cfg, const DesignArtifact& art);

/// Predicted tubes as CSV with columns t, k, s, z1.., s_omega. Throws Io.
void export_predictions(const SimTrace& trace, double s_omega, const std::filesystem::path& path);

}  // namespace iqcmpc
