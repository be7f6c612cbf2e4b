#pragma once

#include <vector>

#include "spgd/linalg.hpp"

namespace spgd {

enum class PrecondKind {
  ExactSvd,            // V U^T F through the thin SVD of J
  DampedDense,         // (J^T J + mu I)^{-p} by dense eigendecomposition
  DampedLanczos,       // same function applied through a Krylov basis
  CrossEntropyLanczos  // (J^T C J + delta I)^{-1/2} with Fisher blocks
};

struct PrecondSpec {
  PrecondKind kind = PrecondKind::ExactSvd;
  double mu = 1e-5;       // damping for the (J^T J + mu I)^{-p} family
  double p = 0.5;         // preconditioning exponent
  Eigen::Index k = 10;    // Lanczos depth
  double delta = 1e-4;    // cross-entropy damping
  double trunc_tol = -1;  // SVD truncation; negative means the default

  void validate() const;
};

/// V (U^T F): the SPGD descent direction from retained SVD factors.
Vector spgd_direction(const SvdFactors& svd, const Vector& f);

/// V diag(1/sigma) V^T grad: the pseudoinverse-square-root preconditioner
/// applied to a gradient. Equals spgd_direction(svd, F) whenever
/// grad = J^T F.
Vector precond_gradient_exact(const SvdFactors& svd, const Vector& grad);

/// W diag((lambda_i + mu)^{-p}) W^T g from the dense eigendecomposition of
/// J^T J. Throws NumericalFailure if some lambda_i + mu <= 0.
Vector damped_apply_dense(const Matrix& j, const Vector& g, double mu,
                          double p);

/// Krylov approximation of (J^T J + mu I)^{-p} g. The Lanczos space is built
/// for J^T J itself; the shift mu enters only through the scalar function
/// applied to the small tridiagonal eigenvalues. jac provides jvp (apply)
/// and vjp (apply_adjoint) access to J at a fixed point.
Vector damped_apply_lanczos(const LinearMap& jac, const Vector& g,
                            const PrecondSpec& spec);

/// C_i u = p_i . u - p_i (p_i^T u), the categorical Fisher block applied
/// without materializing the matrix.
Vector fisher_block_apply(const Vector& p_i, const Vector& u);

/// Symmetric PSD operator v -> J^T blockdiag(C_i) J v + delta v for
/// cross-entropy preconditioning. probs holds one probability vector per
/// sample; jac.out_dim must equal probs.size() * K.
LinearMap ce_operator(const LinearMap& jac, const std::vector<Vector>& probs,
                      double delta);

/// lambda^{-1/2} of the (already shifted) cross-entropy operator applied to
/// g through k Lanczos steps.
Vector ce_apply_lanczos(const LinearMap& op, const Vector& g, Eigen::Index k);

}  // namespace spgd
