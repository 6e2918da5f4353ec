#pragma once

/**
 * @file
 * @brief Plant, uncertainty filter and multiplier data, augmented-plant
 * assembly, and the time-varying input-delay uncertainty with its IQC.
 */

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "iqcmpc/lin_core.hpp"

namespace iqcmpc {

/**
 * @brief x+ = A x + Bw w + Bd d + Bu u,  y = C x + Dw w + Dd d + Du u.
 *
 * y is the signal entering the uncertainty, not a measurement.
 */
struct LinearSystem {
  Matrix a, b_w, b_d, b_u;
  Matrix c, d_w, d_d, d_u;

  Index nx() const { return a.rows(); }
  Index nw() const { return b_w.cols(); }
  Index nd() const { return b_d.cols(); }
  Index nu() const { return b_u.cols(); }
  Index ny() const { return c.rows(); }

  /// Throws DimensionMismatch unless all eight matrices agree.
  void validate() const;
};

/// Disturbance set {d : ||d||_xi <= d_max}.
struct DisturbanceModel {
  SymMatrix xi;
  double d_max = 0.0;

  void validate() const;
};

/// State-space realization of the IQC filter; its state always starts at zero.
struct IQCFilter {
  Matrix a_psi, b_psi1, b_psi2;
  Matrix c_psi, d_psi1, d_psi2;

  Index npsi() const { return a_psi.rows(); }
  Index nz() const { return c_psi.rows(); }
  Index ny() const { return b_psi1.cols(); }
  Index nw() const { return b_psi2.cols(); }

  void validate() const;
};

struct Multiplier {
  SymMatrix m;
};

/// Polytopic constraints F [x; u] <= f.
struct ConstraintSet {
  Matrix h_mat;
  Vector h_vec;

  Index rows() const { return h_mat.rows(); }
  void validate(Index nx, Index nu) const;
  /// Row-wise F [x; u] - f.
  Vector residual(const Vector& x, const Vector& u) const;
};

/// Transfer w -> z of the plant/filter interconnection with feedback u = K e.
struct AugmentedRealization {
  Matrix a, b, c, d;
};

AugmentedRealization assemble_augmented(const LinearSystem& sys, const Matrix& k, const IQCFilter& filt);

struct FilterStep {
  Vector psi_next;
  Vector z;
};

FilterStep filter_step(const IQCFilter& filt, const Vector& psi, const Vector& y, const Vector& w);

/**
 * @brief Shift/difference filter and the multiplier family of a delay
 * uncertainty w_t = y_{t - tau_t} - y_t with 0 <= tau_t <= tau_max.
 *
 * The filter state stacks [y_{t-tau_max}; ...; y_{t-1}] and its output is
 * [y_{t-tau_max} - y_{t-tau_max+1}; ...; y_{t-1} - y_t; w_t]. Any M with
 * M >= lower_bound(tau, X) for all tau and some X >= 0 defines a valid hard IQC.
 */
struct DelayIqc {
  IQCFilter filter;
  int tau_max = 0;
  Index ny = 0;

  /// M_tau(X) = diag(X_tau, -X) with X_tau = diag(0_{tau_max-tau}, ones_tau) kron X.
  SymMatrix lower_bound(int tau, const SymMatrix& x) const;
  /// The ones-pattern diag(0, ones_tau) of size tau_max x tau_max.
  Matrix delay_pattern(int tau) const;
};

DelayIqc build_delay_iqc(int tau_max, Index ny);

/**
 * @brief w_t = y_{t - tau_t} - y_t. history.back() is y_t; entries before the
 * start of history are zero.
 */
Vector delay_operator(std::span<const Vector> history, int tau_t, int tau_max);

/// Emits delays in [0, tau_max], from a fixed (cycled) schedule or a seeded uniform generator.
class DelayUncertainty {
 public:
  static DelayUncertainty fixed(int tau_max, std::vector<int> schedule);
  static DelayUncertainty constant(int tau_max, int tau);
  static DelayUncertainty random(int tau_max, std::uint64_t seed);

  int tau_max() const noexcept { return tau_max_; }
  int next();

 private:
  DelayUncertainty() = default;

  int tau_max_ = 0;
  std::vector<int> schedule_;
  std::size_t pos_ = 0;
  std::optional<std::mt19937_64> rng_;
};

}  // namespace iqcmpc
