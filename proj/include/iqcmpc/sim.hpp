#pragma once

/**
 * @file
 * @brief Closed-loop simulation of the uncertain plant, disturbance sources,
 * an exhaustive worst-case error oracle, a tube-free MPC baseline and CSV
 * trace export.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iqcmpc/mpc.hpp"
#include "iqcmpc/tube.hpp"

namespace iqcmpc {

enum class DisturbancePolicy { Zero, Uniform, Vertex };

const char* to_string(DisturbancePolicy p) noexcept;
DisturbancePolicy parse_disturbance_policy(const std::string& name);

/// Seeded disturbances with |d|_xi <= d_max.
class DisturbanceSource {
 public:
  DisturbanceSource(DisturbanceModel model, DisturbancePolicy policy, std::uint64_t seed);

  /// Uniform draws fill the ellipsoid uniformly; vertex draws lie on its boundary.
  Vector next();

 private:
  DisturbanceModel model_;
  DisturbancePolicy policy_;
  std::mt19937_64 rng_;
  Matrix shape_;  ///< xi^{-1/2}
};

/// Plant step with the delay uncertainty closed; y history is appended with y_t.
struct PlantStep {
  Vector x_next;
  Vector y;
  Vector w;
};

PlantStep plant_step(const LinearSystem& sys, const Vector& x, const Vector& u, const Vector& d, int tau,
                     int tau_max, std::vector<Vector>& y_history);

struct SimStep {
  int t = 0;
  Vector x, u, d, w, y;
  int tau = 0;
  Vector z0, v0;
  double s0 = 0.0;
  double s1 = 0.0;  ///< s_{1|t}
  Vector z1;        ///< z_{1|t}
  SolveStatus status = SolveStatus::Optimal;
  double cost = 0.0;
  double max_violation = 0.0;           ///< max_i F_i [x; u] - f_i of the true plant
  std::optional<double> candidate_gap;  ///< worst violation of the shifted candidate, t >= 1
  std::optional<double> candidate_cost;
  std::vector<double> s_pred;  ///< full predicted tube, kept at selected steps
  std::vector<Vector> z_pred;
};

struct SimTrace {
  std::vector<SimStep> steps;
  Vector x_final;
  bool infeasible_start = false;
  bool diverged = false;
  bool fallback_used = false;  ///< baseline only: the saturated LQR replaced an infeasible problem

  std::size_t size() const noexcept { return steps.size(); }
};

struct RunOptions {
  int steps = 50;
  DisturbancePolicy policy = DisturbancePolicy::Uniform;
  std::uint64_t seed = 1;
  /// Keep the whole predicted tube every `keep_every` steps (0 keeps only t = 0).
  int keep_every = 0;
};

/**
 * @brief Runs the tube MPC on the uncertain plant.
 *
 * An infeasible problem at t = 0 is recorded in the trace; at t >= 1 it is an error.
 */
SimTrace closed_loop_run(const LinearSystem& sys, DelayUncertainty uncertainty, Controller& ctrl,
                         const DisturbanceModel& dist, const Vector& x0, const RunOptions& opts);

/// Claims |x_t - z_{0|t}|^2_Pe <= s_{0|t} and |x_{t+1} - z_{1|t}|^2_Pe <= s_{1|t} along a run.
std::vector<ContainmentSample> containment_samples(const SimTrace& trace);

/// Largest deviation of the logged next state from the plant equation.
double replay_residual(const LinearSystem& sys, const SimTrace& trace, int tau_max);

/**
 * @brief Exact per-step maximum of |e_k|^2_Pe over every delay schedule in
 * {0..tau_max}^h and every disturbance vertex sequence, with e_0 = 0 and zero
 * output history, for the error system driven by the nominal output ybar.
 */
std::vector<double> brute_force_worst_error(const LinearSystem& sys, const Matrix& k, const SymMatrix& p_e,
                                            int horizon, int tau_max, const std::vector<Vector>& vertices,
                                            const std::vector<Vector>& ybar,
                                            std::uint64_t budget = 50'000'000);

/// Disturbance vertices {+-d_max} along each principal axis of xi (two points when nd = 1).
std::vector<Vector> disturbance_vertices(const DisturbanceModel& dist);

struct BaselineOptions {
  int steps = 50;
  double divergence = 1e3;
  /// Same disturbance stream as a tube run with equal policy and seed.
  DisturbancePolicy policy = DisturbancePolicy::Zero;
  std::uint64_t seed = 0;
};

/**
 * @brief Certainty-equivalent MPC: nominal model, untightened constraints,
 * LQR terminal cost, no terminal set. Falls back to a saturated LQR when the
 * problem is infeasible (flagged in the trace).
 */
SimTrace nominal_mpc_baseline(const LinearSystem& sys, const ConstraintSet& cons, const SymMatrix& q,
                              const SymMatrix& r, int horizon, const Vector& x0, DelayUncertainty uncertainty,
                              const DisturbanceModel& dist, const BaselineOptions& opts = {});

/// Column names: t, x1.., u, d, tau, w, s0, z01.., v0, status, cost.
std::vector<std::string> trace_header(Index nx, Index nu, Index nd, Index nw);

/// Writes the trace as CSV with 17 significant digits. Throws Io.
void export_trace(const SimTrace& trace, const std::filesystem::path& path);

/// Reads a CSV written by export_trace. Throws Io or Parse.
SimTrace import_trace(const std::filesystem::path& path);

}  // namespace iqcmpc
