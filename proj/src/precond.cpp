#include "spgd/precond.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace spgd {

void PrecondSpec::validate() const {
  if (kind == PrecondKind::DampedLanczos ||
      kind == PrecondKind::CrossEntropyLanczos) {
    if (k < 1) throw InvalidConfig("precond: lanczos depth k must be >= 1");
  }
  if (mu < 0) throw InvalidConfig("precond: mu must be >= 0");
  if (delta < 0) throw InvalidConfig("precond: delta must be >= 0");
  if (p <= 0) throw InvalidConfig("precond: exponent p must be > 0");
}

Vector spgd_direction(const SvdFactors& svd, const Vector& f) {
  if (f.size() != svd.u.rows())
    throw InvalidInput("spgd_direction: residual length mismatch");
  return svd.v * (svd.u.transpose() * f);
}

Vector precond_gradient_exact(const SvdFactors& svd, const Vector& grad) {
  if (grad.size() != svd.v.rows())
    throw InvalidInput("precond_gradient_exact: gradient length mismatch");
  const Vector coeffs = svd.v.transpose() * grad;
  return svd.v * coeffs.cwiseQuotient(svd.sigma);
}

Vector damped_apply_dense(const Matrix& j, const Vector& g, double mu,
                          double p) {
  if (g.size() != j.cols())
    throw InvalidInput("damped_apply_dense: dimension mismatch");
  const Matrix jtj = j.transpose() * j;
  Eigen::SelfAdjointEigenSolver<Matrix> es(jtj);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("damped_apply_dense: eigensolver failed");
  Vector lam = es.eigenvalues();
  const double lmax = lam.size() ? std::max(lam.maxCoeff(), 0.0) : 0.0;
  Vector f(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    // J^T J is PSD; tiny negative eigenvalues are roundoff.
    double li = lam[i];
    if (li < 0 && li > -1e-14 * std::max(1.0, lmax)) li = 0.0;
    const double shifted = li + mu;
    if (shifted <= 0.0) {
      std::ostringstream msg;
      msg << "damped_apply_dense: eigenvalue " << li << " + mu " << mu
          << " is not positive";
      throw NumericalFailure(msg.str());
    }
    f[i] = std::pow(shifted, -p);
  }
  return es.eigenvectors() *
         f.cwiseProduct(es.eigenvectors().transpose() * g);
}

Vector damped_apply_lanczos(const LinearMap& jac, const Vector& g,
                            const PrecondSpec& spec) {
  if (g.size() != jac.in_dim)
    throw InvalidInput("damped_apply_lanczos: dimension mismatch");
  if (!g.allFinite())
    throw NumericalFailure("damped_apply_lanczos: non-finite gradient");
  if (g.norm() == 0.0) return Vector::Zero(g.size());

  LinearMap normal_op;
  normal_op.in_dim = jac.in_dim;
  normal_op.out_dim = jac.in_dim;
  normal_op.apply = [&jac](const Vector& v) {
    return jac.apply_adjoint(jac.apply(v));
  };
  normal_op.apply_adjoint = normal_op.apply;

  const LanczosBasis basis = lanczos(normal_op, g, spec.k);
  const double mu = spec.mu;
  const double p = spec.p;
  // J^T J is PSD; eigenvalues of T below zero at roundoff scale are noise.
  double tnorm = basis.tri.alphas.cwiseAbs().maxCoeff();
  if (basis.tri.betas.size() > 0)
    tnorm += basis.tri.betas.cwiseAbs().maxCoeff();
  const double clamp = -1e-14 * std::max(1.0, tnorm);
  return tridiag_func_apply(basis, g.norm(), [mu, p, clamp](double lam) {
    if (lam < 0 && lam > clamp) lam = 0.0;
    const double shifted = lam + mu;
    if (shifted <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::pow(shifted, -p);
  });
}

Vector fisher_block_apply(const Vector& p_i, const Vector& u) {
  if (p_i.size() != u.size())
    throw InvalidInput("fisher_block_apply: dimension mismatch");
  return p_i.cwiseProduct(u) - p_i * p_i.dot(u);
}

LinearMap ce_operator(const LinearMap& jac, const std::vector<Vector>& probs,
                      double delta) {
  const Eigen::Index batch = static_cast<Eigen::Index>(probs.size());
  if (batch == 0) throw InvalidInput("ce_operator: empty probability list");
  const Eigen::Index k = probs[0].size();
  for (const Vector& p : probs) {
    if (p.size() != k)
      throw InvalidInput("ce_operator: ragged probability vectors");
    if (std::abs(p.sum() - 1.0) > 1e-9)
      throw InvalidInput("ce_operator: probabilities do not sum to 1");
  }
  if (jac.out_dim != batch * k)
    throw InvalidInput("ce_operator: residual dim != batch * classes");

  LinearMap op;
  op.in_dim = jac.in_dim;
  op.out_dim = jac.in_dim;
  op.apply = [jac, probs, delta, batch, k](const Vector& v) {
    Vector jv = jac.apply(v);
    for (Eigen::Index i = 0; i < batch; ++i)
      jv.segment(i * k, k) = fisher_block_apply(probs[i], jv.segment(i * k, k));
    return Vector(jac.apply_adjoint(jv) + delta * v);
  };
  op.apply_adjoint = op.apply;
  return op;
}

Vector ce_apply_lanczos(const LinearMap& op, const Vector& g, Eigen::Index k) {
  if (g.norm() == 0.0) return Vector::Zero(g.size());
  const LanczosBasis basis = lanczos(op, g, k);
  return tridiag_func_apply(basis, g.norm(), [](double lam) {
    return 1.0 / std::sqrt(lam);
  });
}

}  // namespace spgd
