#include <doctest.h>

#include <cmath>

#include "spgd/precond.hpp"
#include "spgd/problems.hpp"
#include "test_util.hpp"

using namespace spgd;
using namespace spgd::testutil;

TEST_CASE("spgd_direction with identity factors") {
  Matrix j(2, 2);
  j << 2, 0, 0, 1;
  Vector f(2);
  f << 4, 3;
  const Vector d = spgd_direction(thin_svd(j), f);
  CHECK(d[0] == doctest::Approx(4.0));
  CHECK(d[1] == doctest::Approx(3.0));
}

TEST_CASE("spgd_direction filters residual outside range(J)") {
  Matrix j(2, 2);
  j << 1, 0, 0, 0;
  Vector f(2);
  f << 0, 1;
  const Vector d = spgd_direction(thin_svd(j, 1e-12), f);
  CHECK(d.norm() <= 1e-14);
}

TEST_CASE("spgd_direction on the antidiagonal equals J F") {
  // For J = [[0,1],[1,0]] the 2x2 SVD oracle gives V U^T = J.
  Matrix j(2, 2);
  j << 0, 1, 1, 0;
  const Svd2 oracle = jacobi_svd_2x2(j);
  const Matrix vut_oracle = oracle.v * oracle.u.transpose();
  CHECK((vut_oracle - j).norm() < 1e-12);

  Vector f(2);
  f << 1, 2;
  const Vector d = spgd_direction(thin_svd(j), f);
  CHECK(d[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("precond_gradient_exact on diag(2,1)") {
  Matrix j(2, 2);
  j << 2, 0, 0, 1;
  Vector grad(2);
  grad << 8, 3;  // J^T F for F = [4, 3]
  const Vector out = precond_gradient_exact(thin_svd(j), grad);
  CHECK(out[0] == doctest::Approx(4.0));
  CHECK(out[1] == doctest::Approx(3.0));
}

TEST_CASE("precond_gradient_exact annihilates the complement of range(V)") {
  Matrix j(2, 2);
  j << 1, 0, 0, 0;  // rank 1, range(V) = span(e0)
  Vector grad(2);
  grad << 0, 5;
  const Vector out = precond_gradient_exact(thin_svd(j, 1e-12), grad);
  CHECK(out.norm() <= 1e-14);
}

TEST_CASE("precond_gradient_exact is identity for orthogonal J") {
  Rng rng(3);
  const Matrix q = thin_svd(rng.gaussian_matrix(5, 5)).u;  // orthogonal
  Vector grad = rng.gaussian_vector(5);
  const Vector out = precond_gradient_exact(thin_svd(q), grad);
  CHECK((out - grad).norm() <= 1e-10 * grad.norm());
}

TEST_CASE("section 3.1 identity on random full-rank problems") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = 2 + rng.uniform_index(31);
    const Eigen::Index n = 2 + rng.uniform_index(31);
    const Matrix j = rng.gaussian_matrix(n, m);
    const Vector f = rng.gaussian_vector(n);
    const SvdFactors svd = thin_svd(j);
    const Vector lhs = spgd_direction(svd, f);
    const Vector rhs = precond_gradient_exact(svd, j.transpose() * f);
    CHECK((lhs - rhs).norm() <= 1e-10 * f.norm());
  }
}

TEST_CASE("VU^T is a partial isometry") {
  Rng rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index m = 3 + rng.uniform_index(10);
    const Eigen::Index n = m + rng.uniform_index(4);
    const Matrix j = rng.gaussian_matrix(n, m);
    const SvdFactors svd = thin_svd(j);
    const Matrix vut = svd.v * svd.u.transpose();
    // (VU^T)(VU^T)^T = V V^T projects onto range(V); the transpose product
    // projects onto range(U).
    const Vector x = rng.gaussian_vector(m);
    const Vector y = rng.gaussian_vector(n);
    CHECK((vut * vut.transpose() * x - svd.v * (svd.v.transpose() * x)).norm() <=
          1e-9 * x.norm());
    CHECK((vut.transpose() * vut * y - svd.u * (svd.u.transpose() * y)).norm() <=
          1e-9 * y.norm());
  }
}

TEST_CASE("damped_apply_dense examples") {
  Matrix j(2, 2);
  j << 2, 0, 0, 1;
  Vector g(2);
  g << 8, 3;
  const Vector half = damped_apply_dense(j, g, 0.0, 0.5);
  CHECK(half[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(half[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("damped_apply_dense p=1 solves the normal equations") {
  Rng rng(41);
  const Matrix j = rng.gaussian_matrix(6, 6) + 3.0 * Matrix::Identity(6, 6);
  const Vector g = rng.gaussian_vector(6);
  const Vector out = damped_apply_dense(j, g, 0.0, 1.0);
  const Vector oracle = (j.transpose() * j).ldlt().solve(g);
  CHECK((out - oracle).norm() <= 1e-9 * oracle.norm());
}

TEST_CASE("damped_apply_dense with huge damping scales by mu^-p") {
  Rng rng(43);
  const Matrix j = rng.gaussian_matrix(5, 4);
  const Vector g = rng.gaussian_vector(4);
  const double mu = 1e8, p = 0.5;
  const Vector out = damped_apply_dense(j, g, mu, p);
  CHECK((out - g / std::pow(mu, p)).norm() <=
        1e-6 * g.norm() / std::pow(mu, p));
}

TEST_CASE("damped_apply_dense rejects a zero spectrum without damping") {
  Matrix j = Matrix::Zero(3, 3);
  Vector g(3);
  g << 1, 0, 0;
  CHECK_THROWS_AS(damped_apply_dense(j, g, 0.0, 0.5), NumericalFailure);
}

TEST_CASE("damped_apply_lanczos agrees with the dense path at k = m") {
  Rng rng(47);
  for (double p : {0.5, 1.0}) {
    for (double mu : {1e-5, 1e-3, 1e-1}) {
      const Eigen::Index m = 4 + rng.uniform_index(29);  // <= 32
      const Matrix j = rng.gaussian_matrix(m + 2, m);
      const Vector g = rng.gaussian_vector(m);
      PrecondSpec spec;
      spec.kind = PrecondKind::DampedLanczos;
      spec.mu = mu;
      spec.p = p;
      spec.k = m;
      const Vector approx = damped_apply_lanczos(matrix_map(j), g, spec);
      const Vector exact = damped_apply_dense(j, g, mu, p);
      CHECK((approx - exact).norm() <= 1e-8 * exact.norm());
    }
  }
}

TEST_CASE("damped_apply_lanczos on an eigenvector is exact at any k") {
  // J^T J = diag(4, 1); g = e0 is an eigenvector with eigenvalue 4.
  Matrix j(2, 2);
  j << 2, 0, 0, 1;
  Vector g(2);
  g << 3, 0;
  PrecondSpec spec;
  spec.kind = PrecondKind::DampedLanczos;
  spec.mu = 1e-3;
  spec.p = 0.5;
  spec.k = 5;
  const Vector out = damped_apply_lanczos(matrix_map(j), g, spec);
  const double expected = 3.0 / std::sqrt(4.0 + 1e-3);
  CHECK(out[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(out[1]) <= 1e-14);
}

TEST_CASE("damped_apply_lanczos on the zero operator returns g") {
  const Matrix j = Matrix::Zero(3, 3);
  Rng rng(53);
  const Vector g = rng.gaussian_vector(3);
  PrecondSpec spec;
  spec.kind = PrecondKind::DampedLanczos;
  spec.mu = 1.0;
  spec.p = 0.5;
  spec.k = 3;
  const Vector out = damped_apply_lanczos(matrix_map(j), g, spec);
  CHECK((out - g).norm() <= 1e-12 * g.norm());
}

TEST_CASE("damped_apply_lanczos returns zero for zero gradient") {
  Rng rng(59);
  const Matrix j = rng.gaussian_matrix(4, 4);
  PrecondSpec spec;
  spec.kind = PrecondKind::DampedLanczos;
  const Vector out = damped_apply_lanczos(matrix_map(j), Vector::Zero(4), spec);
  CHECK(out.norm() == 0.0);
}

TEST_CASE("fisher_block_apply examples") {
  Vector p(2);
  p << 0.5, 0.5;
  Vector u(2);
  u << 1, 0;
  Vector out = fisher_block_apply(p, u);
  CHECK(out[0] == doctest::Approx(0.25));
  CHECK(out[1] == doctest::Approx(-0.25));

  u << 1, 1;  // constants are in the null space
  CHECK(fisher_block_apply(p, u).norm() <= 1e-15);

  p << 0.9, 0.1;
  u << 1, 0;
  out = fisher_block_apply(p, u);
  CHECK(out[0] == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-0.09).epsilon(1e-12));

  CHECK(fisher_block_apply(p, Vector::Zero(2)).norm() == 0.0);
}

TEST_CASE("fisher null space holds for any constant vector") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index k = 2 + rng.uniform_index(6);
    Vector p = rng.gaussian_vector(k).cwiseAbs();
    p /= p.sum();
    const double c = rng.gaussian();
    CHECK(fisher_block_apply(p, Vector::Constant(k, c)).norm() <= 1e-12);
    // 1^T (C u) = 0 for arbitrary u.
    const Vector u = rng.gaussian_vector(k);
    CHECK(std::abs(fisher_block_apply(p, u).sum()) <= 1e-12);
  }
}

TEST_CASE("near one-hot probabilities give a vanishing block") {
  {
    // Two classes: the block norm is bounded by twice the clamp level.
    Vector p(2);
    p << 1.0 - 1e-12, 1e-12;
    Rng rng(67);
    const Vector u = rng.gaussian_vector(2).normalized();
    CHECK(fisher_block_apply(p, u).norm() <= 2e-12);
  }
  {
    // More classes scale the bound with the class count.
    const Eigen::Index k = 4;
    Vector p = Vector::Constant(k, 1e-12);
    p[1] = 1.0 - 3e-12;
    Rng rng(68);
    const Vector u = rng.gaussian_vector(k).normalized();
    CHECK(fisher_block_apply(p, u).norm() <= 2.0 * double(k) * 1e-12);
  }
}

TEST_CASE("ce_operator blockwise apply matches dense assembly") {
  Rng rng(71);
  const Eigen::Index batch = 2, k = 2, m = 5;
  const Matrix j = rng.gaussian_matrix(batch * k, m);
  std::vector<Vector> probs;
  for (Eigen::Index i = 0; i < batch; ++i) {
    Vector p = rng.gaussian_vector(k).cwiseAbs();
    p /= p.sum();
    probs.push_back(p);
  }
  const double delta = 1e-4;
  const LinearMap op = ce_operator(matrix_map(j), probs, delta);

  Matrix c = Matrix::Zero(batch * k, batch * k);
  for (Eigen::Index i = 0; i < batch; ++i)
    c.block(i * k, i * k, k, k) =
        Matrix(probs[i].asDiagonal()) - probs[i] * probs[i].transpose();
  const Matrix dense = j.transpose() * c * j + delta * Matrix::Identity(m, m);

  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = rng.gaussian_vector(m);
    CHECK((op.apply(u) - dense * u).norm() <= 1e-12 * std::max(1.0, u.norm()));
  }
}

TEST_CASE("ce_operator is PSD with a delta floor") {
  Rng rng(73);
  const Eigen::Index batch = 3, k = 4, m = 6;
  const Matrix j = rng.gaussian_matrix(batch * k, m);
  std::vector<Vector> probs;
  for (Eigen::Index i = 0; i < batch; ++i) {
    Vector p = rng.gaussian_vector(k).cwiseAbs();
    p /= p.sum();
    probs.push_back(p);
  }
  const double delta = 1e-4;
  const LinearMap op = ce_operator(matrix_map(j), probs, delta);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector v = rng.gaussian_vector(m);
    CHECK(v.dot(op.apply(v)) >= delta * v.squaredNorm() - 1e-9);
  }
  CHECK(adjoint_consistent(op, rng));
}

TEST_CASE("ce_operator rejects unnormalized probabilities") {
  Rng rng(79);
  const Matrix j = rng.gaussian_matrix(4, 3);
  std::vector<Vector> probs(2, Vector::Constant(2, 0.6));
  CHECK_THROWS_AS(ce_operator(matrix_map(j), probs, 1e-4), InvalidInput);
}

TEST_CASE("ce_apply_lanczos matches dense inverse square root") {
  Rng rng(83);
  const Eigen::Index batch = 2, k = 3, m = 6;
  const Matrix j = rng.gaussian_matrix(batch * k, m);
  std::vector<Vector> probs;
  for (Eigen::Index i = 0; i < batch; ++i) {
    Vector p = rng.gaussian_vector(k).cwiseAbs();
    p /= p.sum();
    probs.push_back(p);
  }
  const double delta = 1e-3;
  const LinearMap op = ce_operator(matrix_map(j), probs, delta);
  const Vector g = rng.gaussian_vector(m);
  const Vector approx = ce_apply_lanczos(op, g, m);

  Matrix c = Matrix::Zero(batch * k, batch * k);
  for (Eigen::Index i = 0; i < batch; ++i)
    c.block(i * k, i * k, k, k) =
        Matrix(probs[i].asDiagonal()) - probs[i] * probs[i].transpose();
  const Matrix dense = j.transpose() * c * j + delta * Matrix::Identity(m, m);
  const Vector oracle = spgd::testutil::dense_func_apply(
      dense, g, [](double x) { return 1.0 / std::sqrt(x); });
  CHECK((approx - oracle).norm() <= 1e-8 * oracle.norm());
}
