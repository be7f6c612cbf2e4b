#pragma once

#include <functional>

#include <Eigen/Dense>

#include "spgd/errors.hpp"
#include "spgd/rng.hpp"

namespace spgd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD A = U diag(sigma) V^T restricted to the retained numerical rank.
/// Singular values <= trunc_tol * sigma_max are dropped.
struct SvdFactors {
  Matrix u;        // n x r, orthonormal columns
  Vector sigma;    // r, descending, all positive
  Matrix v;        // m x r, orthonormal columns
  Eigen::Index rank = 0;
  double trunc_tol = 0.0;

  double sigma_max() const { return rank > 0 ? sigma[0] : 0.0; }
  double sigma_min() const { return rank > 0 ? sigma[rank - 1] : 0.0; }
};

/// Relative truncation threshold used when the caller does not pass one.
double default_trunc_tol(Eigen::Index rows, Eigen::Index cols);

/// Economy SVD with rank truncation. Pass trunc_tol < 0 for the default
/// max(rows, cols) * machine epsilon.
SvdFactors thin_svd(const Matrix& a, double trunc_tol = -1.0);

/// Symmetric tridiagonal matrix in the Lanczos convention (betas >= 0).
struct Tridiagonal {
  Vector alphas;  // k diagonal entries
  Vector betas;   // k-1 off-diagonal entries

  Eigen::Index size() const { return alphas.size(); }
  Matrix dense() const;
};

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns
};

SymEig sym_eig(const Tridiagonal& t);

/// Matrix-free operator with forward and adjoint application.
struct LinearMap {
  Eigen::Index in_dim = 0;
  Eigen::Index out_dim = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_adjoint;
};

LinearMap matrix_map(const Matrix& a);

/// <Av, u> == <v, A^T u> on random probes, to rel_tol relative accuracy.
bool adjoint_consistent(const LinearMap& op, Rng& rng, int probes = 10,
                        double rel_tol = 1e-9);

struct LanczosBasis {
  Matrix q;         // m x k_eff, orthonormal columns, q.col(0) = g/|g|
  Tridiagonal tri;  // k_eff x k_eff projection of the operator
  Eigen::Index k_eff = 0;
  bool breakdown = false;  // invariant subspace found; result is exact
};

/// Lanczos tridiagonalization of a symmetric operator with full
/// reorthogonalization every step. Terminates early (breakdown) when the
/// next beta falls below 1e-12 * |g|, in which case the Krylov space is
/// invariant and downstream matrix functions are exact.
LanczosBasis lanczos(const LinearMap& op, const Vector& g, Eigen::Index k);

/// g_norm * Q f(T) e_1 evaluated through the eigendecomposition of T.
/// Throws NumericalFailure naming the eigenvalue if f produces a non-finite
/// value somewhere on the spectrum.
Vector tridiag_func_apply(const LanczosBasis& basis, double g_norm,
                          const std::function<double(double)>& f);

}  // namespace spgd
