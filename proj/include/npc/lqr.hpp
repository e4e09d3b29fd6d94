#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

#include "npc/domain.hpp"

namespace npc {

struct LqrWeights {
  double q1 = 1.0;
  double q2 = 0.5;
  double r = 0.1;

  void validate() const {
    if (!(r > 0.0)) throw ConfigError("lqr: control weight r must be positive");
    if (q1 < 0.0 || q2 < 0.0) throw ConfigError("lqr: state weights must be non-negative");
  }
};

struct GainVector {
  double k1 = 0.0;
  double k2 = 0.0;
};

/// Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0, taken from the
/// stable invariant subspace of the Hamiltonian matrix.
template <int N>
Eigen::Matrix<double, N, N> solve_care(const Eigen::Matrix<double, N, N>& A,
                                       const Eigen::Matrix<double, N, 1>& B,
                                       const Eigen::Matrix<double, N, N>& Q, double R) {
  using Ham = Eigen::Matrix<double, 2 * N, 2 * N>;
  Ham H;
  H.template topLeftCorner<N, N>() = A;
  H.template topRightCorner<N, N>() = -(B * B.transpose()) / R;
  H.template bottomLeftCorner<N, N>() = -Q;
  H.template bottomRightCorner<N, N>() = -A.transpose();

  Eigen::EigenSolver<Ham> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("solve_care: eigensolver failed");

  Eigen::Matrix<std::complex<double>, N, N> U, V;
  int col = 0;
  for (int i = 0; i < 2 * N && col < N; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      U.col(col) = es.eigenvectors().col(i).template head<N>();
      V.col(col) = es.eigenvectors().col(i).template tail<N>();
      ++col;
    }
  }
  if (col != N) throw std::runtime_error("solve_care: no stabilizing solution");

  Eigen::Matrix<double, N, N> P = (V * U.inverse()).real();
  return (P + P.transpose()) / 2.0;
}

/// Continuous-time LQR gain for the double integrator x1' = x2, x2' = u.
inline GainVector lqr_gain(const LqrWeights& w) {
  w.validate();
  Eigen::Matrix2d A;
  A << 0.0, 1.0, 0.0, 0.0;
  const Eigen::Vector2d B(0.0, 1.0);
  const Eigen::Matrix2d Q = Eigen::Vector2d(w.q1, w.q2).asDiagonal();
  const Eigen::Matrix2d P = solve_care<2>(A, B, Q, w.r);
  const Eigen::RowVector2d K = B.transpose() * P / w.r;
  return {K(0), K(1)};
}

/// Negative feedback on the tracking error.
inline ControlValue control_law(const PlantState& x, const PlantState& ref, const GainVector& K) {
  return -K.k1 * (x.x1 - ref.x1) - K.k2 * (x.x2 - ref.x2);
}

}  // namespace npc
