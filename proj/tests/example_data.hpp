#pragma once

// Two-state delay example used across the test suites. Values are typed in
// here independently of the shipped config so tests do not depend on parsing.

#include <Eigen/Dense>

namespace example {

inline Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.begin()->size());
  Eigen::MatrixXd m(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Eigen::MatrixXd a() { return mat({{1.05, -0.3}, {0.0, 0.95}}); }
inline Eigen::MatrixXd b_u() { return mat({{0.0}, {1.0}}); }
inline Eigen::MatrixXd b_w() { return mat({{0.0}, {1.0}}); }
inline Eigen::MatrixXd b_d() { return mat({{1.0}, {0.0}}); }
inline Eigen::MatrixXd c() { return mat({{0.0, 0.0}}); }
inline Eigen::MatrixXd d_u() { return mat({{1.0}}); }
inline Eigen::MatrixXd d_w() { return mat({{0.0}}); }
inline Eigen::MatrixXd d_d() { return mat({{0.0}}); }

inline Eigen::MatrixXd k() { return mat({{0.18, -0.35}}); }
inline Eigen::MatrixXd k_omega() { return mat({{0.19, -0.28}}); }
constexpr double rho = 0.95;
constexpr double d_max = 0.001;
constexpr double gamma = 244.0;
constexpr int tau_max = 2;
constexpr int horizon = 25;

inline Eigen::MatrixXd f_mat() {
  return mat({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
}
inline Eigen::VectorXd f_vec() {
  Eigen::VectorXd f(6);
  f << 0.4, 0.4, 0.2, 0.2, 0.1, 0.1;
  return f;
}

// Published design, one decimal. The printed P is slightly asymmetric.
inline Eigen::MatrixXd printed_p() {
  return mat({{5.9, -8.1, -4.1, -11.7}, {-8.1, 15.7, 6.0, 22.2}, {-4.2, 6.0, 40.2, -17.0}, {-11.7, 22.2, -17.0, 81.7}});
}
inline Eigen::MatrixXd printed_m() { return mat({{29.0, 14.5, 0.0}, {14.5, 25.4, 0.0}, {0.0, 0.0, -20.7}}); }
constexpr double printed_x = 20.7;
inline Eigen::MatrixXd printed_s() { return mat({{9.2, -5.6}, {-5.6, 7.7}}); }
constexpr double printed_x_omega = 0.0039;
constexpr double printed_s_omega = 0.1;

}  // namespace example
