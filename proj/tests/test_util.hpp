#pragma once

#include <cmath>
#include <functional>

#include "spgd/linalg.hpp"
#include "spgd/rng.hpp"

namespace spgd::testutil {

// Dense oracle for f(A)g on a symmetric matrix, via full eigendecomposition.
// Independent of the Lanczos code path.
inline Vector dense_func_apply(const Matrix& a, const Vector& g,
                               const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  Vector fvals = es.eigenvalues();
  for (Eigen::Index i = 0; i < fvals.size(); ++i) fvals[i] = f(fvals[i]);
  return es.eigenvectors() *
         fvals.cwiseProduct(es.eigenvectors().transpose() * g);
}

// Random symmetric PSD matrix A = G^T G scaled to unit spectral radius-ish.
inline Matrix random_psd(Rng& rng, Eigen::Index m) {
  Matrix g = rng.gaussian_matrix(m, m);
  return g.transpose() * g / static_cast<double>(m);
}

// Hand-rolled one-sided Jacobi SVD for 2x2 matrices; serves as an oracle
// fully independent of the library SVD.
struct Svd2 {
  double s0, s1;    // singular values, descending
  Matrix u, v;      // 2x2 orthogonal factors
};

inline Svd2 jacobi_svd_2x2(const Matrix& a) {
  // One Jacobi rotation of the columns diagonalizes A^T A for 2x2.
  const double p = a.col(0).squaredNorm();
  const double q = a.col(1).squaredNorm();
  const double r = a.col(0).dot(a.col(1));
  double c = 1.0, s = 0.0;
  if (std::abs(r) > 1e-300) {
    // Annihilation condition r (1 - t^2) + (q - p) t = 0 with t = s/c;
    // the small-magnitude root keeps the rotation close to the identity.
    const double zeta = (q - p) / (2.0 * r);
    const double t =
        -(zeta >= 0 ? 1.0 : -1.0) /
        (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
    c = 1.0 / std::sqrt(1.0 + t * t);
    s = c * t;
  }
  Matrix vrot(2, 2);
  vrot << c, -s, s, c;
  Matrix b = a * vrot;  // columns now orthogonal
  double n0 = b.col(0).norm();
  double n1 = b.col(1).norm();
  Matrix u(2, 2), v = vrot;
  Vector u0 = n0 > 0 ? Vector(b.col(0) / n0) : Vector(Vector::Unit(2, 0));
  Vector u1;
  if (n1 > 0) {
    u1 = b.col(1) / n1;
  } else {
    u1 = Vector(2);
    u1 << -u0[1], u0[0];
  }
  u.col(0) = u0;
  u.col(1) = u1;
  if (n0 < n1) {
    std::swap(n0, n1);
    u.col(0).swap(u.col(1));
    v.col(0).swap(v.col(1));
  }
  return Svd2{n0, n1, u, v};
}

}  // namespace spgd::testutil
