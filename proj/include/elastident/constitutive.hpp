#pragma once

#include <cmath>
#include <utility>

#include "elastident/error.hpp"
#include "elastident/linalg.hpp"
#include "elastident/material.hpp"

namespace elastident {

/// F = U * diag(sigma) * V^T with U, V proper rotations and sigma descending.
struct PolarSvd {
  Mat3 U;
  Vec3 sigma;
  Mat3 V;

  Mat3 rotation() const { return U * V.transpose(); }
};

inline constexpr double kDegenerateDeterminant = 1e-10;

namespace detail {

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix. On return A is
/// (numerically) diagonal and V holds the eigenvectors as columns.
inline void symmetric_jacobi(Mat3& A, Mat3& V) {
  V.setIdentity();
  constexpr int kPairs[3][3] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};  // p, q, remaining index
  for (int sweep = 0; sweep < 16; ++sweep) {
    const double off = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
    const double diag = A(0, 0) * A(0, 0) + A(1, 1) * A(1, 1) + A(2, 2) * A(2, 2);
    if (off <= 1e-32 * diag) break;
    for (const auto& pqr : kPairs) {
      const int p = pqr[0], q = pqr[1], r = pqr[2];
      const double apq = A(p, q);
      if (apq == 0.0) continue;
      const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
      const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      A(p, p) -= t * apq;
      A(q, q) += t * apq;
      A(p, q) = A(q, p) = 0.0;
      const double arp = A(r, p), arq = A(r, q);
      A(r, p) = A(p, r) = c * arp - s * arq;
      A(r, q) = A(q, r) = s * arp + c * arq;
      for (int k = 0; k < 3; ++k) {
        const double vkp = V(k, p), vkq = V(k, q);
        V(k, p) = c * vkp - s * vkq;
        V(k, q) = s * vkp + c * vkq;
      }
    }
  }
}

}  // namespace detail

/// Right singular vectors come from a Jacobi eigen-decomposition of F^T F; the
/// left ones from a Gram-Schmidt QR of F V, which keeps U a proper rotation.
inline PolarSvd polar_svd(const Mat3& F) {
  const double J = F.determinant();
  if (!std::isfinite(J) || J <= kDegenerateDeterminant)
    fail(ErrorCategory::degenerate_deformation,
         "deformation gradient is degenerate or inverted (det F = " + std::to_string(J) + ")");

  Mat3 A = F.transpose() * F;
  Mat3 V;
  detail::symmetric_jacobi(A, V);

  // Order by descending eigenvalue.
  int order[3] = {0, 1, 2};
  if (A(order[0], order[0]) < A(order[1], order[1])) std::swap(order[0], order[1]);
  if (A(order[1], order[1]) < A(order[2], order[2])) std::swap(order[1], order[2]);
  if (A(order[0], order[0]) < A(order[1], order[1])) std::swap(order[0], order[1]);
  Mat3 Vs;
  for (int c = 0; c < 3; ++c) Vs.col(c) = V.col(order[c]);
  // A reflection in V is moved onto the smallest singular direction.
  if (Vs.determinant() < 0.0) Vs.col(2) *= -1.0;

  const Mat3 B = F * Vs;
  PolarSvd out;
  out.V = Vs;
  const Vec3 b0 = B.col(0), b1 = B.col(1), b2 = B.col(2);
  out.sigma(0) = b0.norm();
  const Vec3 u0 = b0 / out.sigma(0);
  Vec3 r1 = b1 - u0.dot(b1) * u0;
  const double n1 = r1.norm();
  Vec3 u1;
  if (n1 > 1e-300) {
    u1 = r1 / n1;
  } else {
    // b1 vanishes only for a degenerate F, which is rejected above; keep U orthonormal anyway.
    u1 = u0.unitOrthogonal();
  }
  const Vec3 u2 = u0.cross(u1);
  out.sigma(1) = u1.dot(b1);
  out.sigma(2) = u2.dot(b2);
  out.U.col(0) = u0;
  out.U.col(1) = u1;
  out.U.col(2) = u2;
  return out;
}

/// Rotation factor of the polar decomposition F = R S by scaled Newton
/// iteration. Equal to polar_svd(F).rotation() for det F > 0.
inline Mat3 polar_rotation(const Mat3& F) {
  const double J = F.determinant();
  if (!std::isfinite(J) || J <= kDegenerateDeterminant)
    fail(ErrorCategory::degenerate_deformation,
         "deformation gradient is degenerate or inverted (det F = " + std::to_string(J) + ")");
  Mat3 X = F;
  for (int it = 0; it < 32; ++it) {
    Mat3 cof;
    cof.col(0) = X.col(1).cross(X.col(2));
    cof.col(1) = X.col(2).cross(X.col(0));
    cof.col(2) = X.col(0).cross(X.col(1));
    const double det = X.col(0).dot(cof.col(0));
    const Mat3 inv_t = cof / det;
    const double gamma = std::sqrt(std::sqrt(inv_t.squaredNorm() / X.squaredNorm()));
    const Mat3 next = 0.5 * (gamma * X + inv_t / gamma);
    const double change = (next - X).squaredNorm();
    X = next;
    if (change < 1e-30) break;
  }
  return X;
}

/// Fixed-corotated energy density: mu * sum (sigma_i - 1)^2 + lambda/2 (J - 1)^2.
inline double fixed_corotated_energy(const Mat3& F, const LameParams& lame) {
  const PolarSvd d = polar_svd(F);
  const double J = F.determinant();
  return lame.mu * (d.sigma.array() - 1.0).square().sum() + 0.5 * lame.lambda * (J - 1.0) * (J - 1.0);
}

/// Kirchhoff stress tau = 2 mu (F - R) F^T + lambda J (J - 1) I.
inline Mat3 kirchhoff_stress(const Mat3& F, const LameParams& lame) {
  const Mat3 R = polar_rotation(F);
  const double J = F.determinant();
  Mat3 tau = 2.0 * lame.mu * (F - R) * F.transpose();
  tau.diagonal().array() += lame.lambda * J * (J - 1.0);
  return tau;
}

/// First Piola stress P = tau F^{-T}.
inline Mat3 first_piola_stress(const Mat3& F, const LameParams& lame) {
  return kirchhoff_stress(F, lame) * F.inverse().transpose();
}

}  // namespace elastident
