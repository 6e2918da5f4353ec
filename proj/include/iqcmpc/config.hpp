#pragma once

/**
 * @file
 * @brief Problem configuration: plant, constraints, uncertainty, design
 * choices, controller weights and run settings, read from and written to YAML.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/iqc_model.hpp"
#include "iqcmpc/mpc.hpp"
#include "iqcmpc/sim.hpp"

namespace iqcmpc {

/// Weights of the LQR problem that produces the tube feedback when no gain is given.
struct LqrWeights {
  SymMatrix q, r;
};

enum class DelayPolicy { Random, Constant };

struct ProblemConfig {
  LinearSystem sys;
  ConstraintSet cons;
  DisturbanceModel dist;
  int tau_max = 0;

  // Offline design.
  double rho = 0.0;
  std::optional<Matrix> k;           ///< tube feedback, or
  std::optional<LqrWeights> k_lqr;   ///< weights that produce it
  std::optional<double> gamma;       ///< proposed by the design when absent
  std::optional<SymMatrix> gamma_mat;  ///< gamma * I when absent
  Matrix k_omega;
  std::optional<double> s_omega;

  // Online problem.
  int horizon = 0;
  SymMatrix q, r;
  InitMode init = InitMode::Free;
  TubeMode tube_mode = TubeMode::General;

  // Runs.
  int steps = 50;
  std::uint64_t seed = 1;        ///< disturbance sequence
  std::uint64_t delay_seed = 1;  ///< delay schedule
  DelayPolicy delay = DelayPolicy::Random;
  int delay_value = 0;           ///< constant policy only
  DisturbancePolicy disturbance = DisturbancePolicy::Uniform;
  std::vector<Vector> initial_states;

  // Verification.
  std::size_t verify_samples = 1000;
  std::uint64_t verify_seed = 7;
  int oracle_horizon = 6;

  /// Cross-checks every dimension and range. Throws Parse.
  void validate() const;
};

/// Throws Parse with a line number on malformed or inconsistent input.
ProblemConfig parse_config(const std::string& text);
/// Throws Io when the file cannot be read, Parse otherwise.
ProblemConfig load_config(const std::filesystem::path& path);

/// YAML text that parses back to an identical configuration.
std::string serialize_config(const ProblemConfig& cfg);
void save_config(const ProblemConfig& cfg, const std::filesystem::path& path);

/// Matrix-level equality of two configurations.
bool same_config(const ProblemConfig& a, const ProblemConfig& b);

DelayUncertainty make_delay(const ProblemConfig& cfg);

}  // namespace iqcmpc
