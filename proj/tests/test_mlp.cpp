#include <doctest.h>

#include <cmath>

#include "spgd/mlp.hpp"
#include "test_util.hpp"

using namespace spgd;

namespace {

// Directional finite difference of a vector-valued map.
template <typename F>
Vector fd_directional(const F& f, const Vector& theta, const Vector& v,
                      double h = 1e-6) {
  return (f(theta + h * v) - f(theta - h * v)) / (2.0 * h);
}

}  // namespace

TEST_CASE("mlp parameter packing and zero init") {
  Mlp net(2, {3}, 1);
  // W1: 3x2 (6), b1: 3, W2: 1x3 (3), b2: 1.
  CHECK(net.param_dim() == 13);
  Matrix x(4, 2);
  x << 0.1, 0.2, -0.3, 0.4, 0.0, 0.0, 1.0, -1.0;
  const Matrix y = net.forward(Vector::Zero(13), x);
  CHECK(y.norm() == 0.0);  // zero weights and biases give zero output
}

TEST_CASE("single linear layer jvp is delta_w x + delta_b") {
  Mlp net(3, {}, 2);
  Rng rng(2);
  const Vector theta = rng.gaussian_vector(net.param_dim());
  const Vector dtheta = rng.gaussian_vector(net.param_dim());
  Matrix x(1, 3);
  x << 0.5, -1.0, 2.0;
  const Matrix jv = net.forward_jvp(theta, x, dtheta);
  // Hand formula: dW (2x3 row-major at offset 0) times x plus db (offset 6).
  Eigen::Map<const Mlp::RowMat> dw(dtheta.data(), 2, 3);
  Eigen::Map<const Vector> db(dtheta.data() + 6, 2);
  const Vector expected = dw * x.row(0).transpose() + db;
  CHECK((jv.row(0).transpose() - expected).norm() < 1e-14);
}

TEST_CASE("one hidden unit chain rule by hand") {
  // u(x) = w2 * tanh(w1 x + b1) + b2, packing [w1, b1, w2, b2].
  Mlp net(1, {1}, 1);
  REQUIRE(net.param_dim() == 4);
  Vector theta(4);
  theta << 0.7, -0.2, 1.3, 0.4;
  Matrix x(1, 1);
  x << 0.9;
  const double z = 0.7 * 0.9 - 0.2;
  const double t = std::tanh(z);
  CHECK(net.forward(theta, x)(0, 0) == doctest::Approx(1.3 * t + 0.4));

  Vector d(4);
  d << 0.11, -0.05, 0.21, 0.07;
  const double sp = 1.0 - t * t;
  const double expected =
      0.21 * t + 1.3 * sp * (0.11 * 0.9 - 0.05) + 0.07;
  CHECK(net.forward_jvp(theta, x, d)(0, 0) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("zero tangent gives zero jvp") {
  Mlp net(2, {5, 4}, 3);
  Rng rng(7);
  const Vector theta = net.xavier_init(rng);
  const Matrix x = rng.gaussian_matrix(6, 2);
  CHECK(net.forward_jvp(theta, x, Vector::Zero(net.param_dim())).norm() == 0.0);
}

TEST_CASE("mlp jvp matches finite differences") {
  Mlp net(2, {6, 5}, 2);
  Rng rng(11);
  const Vector theta = net.xavier_init(rng) + 0.1 * rng.gaussian_vector(net.param_dim());
  const Matrix x = rng.gaussian_matrix(4, 2);
  const auto flat = [&](const Vector& th) -> Vector {
    const Matrix y = net.forward(th, x);
    return Eigen::Map<const Vector>(y.data(), y.size());
  };
  for (int i = 0; i < 3; ++i) {
    const Vector v = rng.gaussian_vector(net.param_dim());
    const Matrix jv = net.forward_jvp(theta, x, v);
    const Vector jv_flat = Eigen::Map<const Vector>(jv.data(), jv.size());
    const Vector fd = fd_directional(flat, theta, v);
    CHECK((jv_flat - fd).norm() <= 1e-5 * (fd.norm() + 1.0));
  }
}

TEST_CASE("mlp vjp adjoint-consistent with jvp") {
  Mlp net(3, {8, 8}, 2);
  Rng rng(13);
  const Vector theta = net.xavier_init(rng);
  const Matrix x = rng.gaussian_matrix(5, 3);
  for (int i = 0; i < 10; ++i) {
    const Vector v = rng.gaussian_vector(net.param_dim());
    const Matrix u = rng.gaussian_matrix(5, 2);
    const Matrix jv = net.forward_jvp(theta, x, v);
    const Vector jtu = net.forward_vjp(theta, x, u);
    const double lhs = (jv.cwiseProduct(u)).sum();
    const double rhs = v.dot(jtu);
    CHECK(std::abs(lhs - rhs) <= 1e-9 * (std::abs(lhs) + std::abs(rhs) + 1.0));
  }
}

TEST_CASE("laplace matches finite differences in x") {
  Mlp net(2, {7, 6}, 1);
  Rng rng(17);
  const Vector theta = net.xavier_init(rng);
  Matrix x = rng.gaussian_matrix(3, 2);
  const Mlp::LaplaceEval le = net.laplace(theta, x);
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double lap_fd = 0.0;
    for (int k = 0; k < 2; ++k) {
      Matrix xp = x.row(i), xm = x.row(i), x0 = x.row(i);
      xp(0, k) += h;
      xm(0, k) -= h;
      const double up = net.forward(theta, xp)(0, 0);
      const double um = net.forward(theta, xm)(0, 0);
      const double u0 = net.forward(theta, x0)(0, 0);
      lap_fd += (up - 2.0 * u0 + um) / (h * h);
    }
    CHECK(le.lap[i] == doctest::Approx(lap_fd).epsilon(1e-5));
  }
}

TEST_CASE("laplace_jvp matches finite differences in theta") {
  Mlp net(2, {6, 5}, 1);
  Rng rng(19);
  const Vector theta = net.xavier_init(rng);
  const Matrix x = rng.gaussian_matrix(4, 2);
  const auto lap_of = [&](const Vector& th) -> Vector {
    return net.laplace(th, x).lap;
  };
  const auto u_of = [&](const Vector& th) -> Vector {
    return net.laplace(th, x).u;
  };
  for (int i = 0; i < 3; ++i) {
    const Vector v = rng.gaussian_vector(net.param_dim());
    const Mlp::LaplaceEval dle = net.laplace_jvp(theta, x, v);
    const Vector fd_lap = fd_directional(lap_of, theta, v);
    const Vector fd_u = fd_directional(u_of, theta, v);
    CHECK((dle.lap - fd_lap).norm() <= 2e-5 * (fd_lap.norm() + 1.0));
    CHECK((dle.u - fd_u).norm() <= 1e-5 * (fd_u.norm() + 1.0));
  }
}

TEST_CASE("laplace_vjp adjoint-consistent with laplace_jvp") {
  Mlp net(3, {6, 6}, 1);
  Rng rng(23);
  const Vector theta = net.xavier_init(rng);
  const Matrix x = rng.gaussian_matrix(5, 3);
  for (int i = 0; i < 10; ++i) {
    const Vector v = rng.gaussian_vector(net.param_dim());
    const Vector ubar = rng.gaussian_vector(5);
    const Vector lapbar = rng.gaussian_vector(5);
    const Mlp::LaplaceEval jv = net.laplace_jvp(theta, x, v);
    const Vector vjp = net.laplace_vjp(theta, x, ubar, lapbar);
    const double lhs = jv.u.dot(ubar) + jv.lap.dot(lapbar);
    const double rhs = v.dot(vjp);
    CHECK(std::abs(lhs - rhs) <= 1e-9 * (std::abs(lhs) + std::abs(rhs) + 1.0));
  }
}
