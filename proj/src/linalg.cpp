#include "spgd/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace spgd {

double default_trunc_tol(Eigen::Index rows, Eigen::Index cols) {
  return static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon();
}

SvdFactors thin_svd(const Matrix& a, double trunc_tol) {
  if (a.size() == 0) throw InvalidInput("thin_svd: empty matrix");
  if (!a.allFinite()) throw InvalidInput("thin_svd: non-finite input");
  if (trunc_tol < 0.0) trunc_tol = default_trunc_tol(a.rows(), a.cols());

  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (!sv.allFinite()) throw NumericalFailure("thin_svd: SVD did not converge");

  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > trunc_tol * smax) ++rank;

  SvdFactors out;
  out.rank = rank;
  out.trunc_tol = trunc_tol;
  out.u = svd.matrixU().leftCols(rank);
  out.sigma = sv.head(rank);
  out.v = svd.matrixV().leftCols(rank);
  return out;
}

Matrix Tridiagonal::dense() const {
  const Eigen::Index k = size();
  Matrix t = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    t(i, i) = alphas[i];
    if (i + 1 < k) {
      t(i, i + 1) = betas[i];
      t(i + 1, i) = betas[i];
    }
  }
  return t;
}

SymEig sym_eig(const Tridiagonal& t) {
  const Eigen::Index k = t.size();
  if (k < 1) throw InvalidInput("sym_eig: empty tridiagonal");
  if (t.betas.size() != k - 1)
    throw InvalidInput("sym_eig: betas must have size k-1");

  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(t.alphas, t.betas, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("sym_eig: eigensolver did not converge");

  SymEig out;
  out.values = es.eigenvalues();
  out.vectors = es.eigenvectors();
  return out;
}

LinearMap matrix_map(const Matrix& a) {
  LinearMap op;
  op.in_dim = a.cols();
  op.out_dim = a.rows();
  op.apply = [a](const Vector& v) -> Vector { return a * v; };
  op.apply_adjoint = [a](const Vector& u) -> Vector {
    return a.transpose() * u;
  };
  return op;
}

bool adjoint_consistent(const LinearMap& op, Rng& rng, int probes,
                        double rel_tol) {
  for (int i = 0; i < probes; ++i) {
    const Vector v = rng.gaussian_vector(op.in_dim);
    const Vector u = rng.gaussian_vector(op.out_dim);
    const Vector av = op.apply(v);
    const Vector atu = op.apply_adjoint(u);
    const double lhs = av.dot(u);
    const double rhs = v.dot(atu);
    const double scale = av.norm() * u.norm() + v.norm() * atu.norm() + 1e-300;
    if (std::abs(lhs - rhs) > rel_tol * scale) return false;
  }
  return true;
}

LanczosBasis lanczos(const LinearMap& op, const Vector& g, Eigen::Index k) {
  if (k < 1) throw InvalidInput("lanczos: k must be >= 1");
  if (op.in_dim != op.out_dim)
    throw InvalidInput("lanczos: operator must be square");
  const double gnorm = g.norm();
  if (gnorm == 0.0) throw InvalidInput("lanczos: zero start vector");

  const Eigen::Index m = op.in_dim;
  k = std::min<Eigen::Index>(k, m);
  const double breakdown_tol = 1e-12 * gnorm;

  Matrix q(m, k);
  Vector alphas(k);
  Vector betas(k > 1 ? k - 1 : 0);
  q.col(0) = g / gnorm;

  LanczosBasis out;
  out.breakdown = false;
  Eigen::Index j = 0;
  for (; j < k; ++j) {
    Vector w = op.apply(q.col(j));
    alphas[j] = q.col(j).dot(w);
    w -= alphas[j] * q.col(j);
    if (j > 0) w -= betas[j - 1] * q.col(j - 1);
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i <= j; ++i) w -= q.col(i).dot(w) * q.col(i);

    if (j + 1 == k) break;
    const double beta = w.norm();
    if (beta < breakdown_tol) {
      out.breakdown = true;
      break;
    }
    betas[j] = beta;
    q.col(j + 1) = w / beta;
  }

  const Eigen::Index k_eff = std::min<Eigen::Index>(j + 1, k);
  out.k_eff = k_eff;
  out.q = q.leftCols(k_eff);
  out.tri.alphas = alphas.head(k_eff);
  out.tri.betas = betas.head(k_eff > 1 ? k_eff - 1 : 0);
  return out;
}

Vector tridiag_func_apply(const LanczosBasis& basis, double g_norm,
                          const std::function<double(double)>& f) {
  if (basis.k_eff < 1) throw InvalidInput("tridiag_func_apply: empty basis");
  const SymEig eig = sym_eig(basis.tri);

  Vector fvals(eig.values.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double fi = f(eig.values[i]);
    if (!std::isfinite(fi)) {
      std::ostringstream msg;
      msg << "tridiag_func_apply: f is non-finite at eigenvalue "
          << eig.values[i];
      throw NumericalFailure(msg.str());
    }
    fvals[i] = fi;
  }

  // f(T) e_1 = V diag(f(lambda)) V^T e_1
  const Vector coeffs = eig.vectors.row(0).transpose();
  const Vector y = eig.vectors * fvals.cwiseProduct(coeffs);
  return g_norm * (basis.q * y);
}

}  // namespace spgd
