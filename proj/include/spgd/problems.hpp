#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "spgd/linalg.hpp"
#include "spgd/mlp.hpp"
#include "spgd/rng.hpp"

namespace spgd {

/// Residual map F: R^m -> R^n with matrix-free Jacobian access.
///
/// The objective minimized by every optimizer is loss(theta), which defaults
/// to 1/2 |F(theta)|^2. The cross-entropy toy overrides loss/loss_gradient
/// while keeping F (the network output) as the object the preconditioner
/// differentiates.
class ResidualProblem {
 public:
  virtual ~ResidualProblem() = default;

  virtual Eigen::Index param_dim() const = 0;
  virtual Eigen::Index residual_dim() const = 0;
  virtual Vector residual(const Vector& theta) const = 0;

  virtual Vector jvp(const Vector& theta, const Vector& v) const = 0;
  virtual Vector vjp(const Vector& theta, const Vector& u) const = 0;

  /// Dense Jacobian; the default assembles rows via vjp with unit cotangents.
  virtual Matrix jacobian(const Vector& theta) const;
  virtual bool has_dense_jacobian() const { return true; }

  virtual double loss(const Vector& theta) const;
  virtual Vector loss_gradient(const Vector& theta) const;

  /// Mini-batch problems resample their batch once per epoch.
  virtual bool is_stochastic() const { return false; }
  virtual void resample(Rng&) {}

  virtual Vector initial_theta(Rng& rng) const = 0;

  /// Held-out evaluation where the problem defines one.
  virtual std::optional<double> test_loss(const Vector&) const {
    return std::nullopt;
  }

  /// A certified zero-residual point, when one is known by construction.
  virtual std::optional<Vector> certified_solution() const {
    return std::nullopt;
  }
};

/// 1/2 |F(theta)|^2. Throws NumericalFailure if the residual is non-finite.
double objective(const ResidualProblem& p, const Vector& theta);

/// J_F(theta)^T F(theta).
Vector gradient(const ResidualProblem& p, const Vector& theta);

/// Matrix-free view of J_F at a fixed point.
LinearMap jacobian_map(const ResidualProblem& p, const Vector& theta);

/// Central finite-difference gradient with per-coordinate step
/// h_i = 1e-6 (1 + |theta_i|), used as the independent gradient oracle.
Vector fd_gradient(const ResidualProblem& p, const Vector& theta);

// ---------------------------------------------------------------------------

/// Consistent linear least squares F(theta) = A theta - b with prescribed
/// condition number and a known solution theta*.
class LinearLsq : public ResidualProblem {
 public:
  LinearLsq(Matrix a, Vector b, Vector theta_star);

  Eigen::Index param_dim() const override { return a_.cols(); }
  Eigen::Index residual_dim() const override { return a_.rows(); }
  Vector residual(const Vector& theta) const override { return a_ * theta - b_; }
  Vector jvp(const Vector&, const Vector& v) const override { return a_ * v; }
  Vector vjp(const Vector&, const Vector& u) const override {
    return a_.transpose() * u;
  }
  Matrix jacobian(const Vector&) const override { return a_; }
  Vector initial_theta(Rng&) const override {
    return Vector::Zero(param_dim());
  }
  std::optional<Vector> certified_solution() const override {
    return theta_star_;
  }
  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }

 private:
  Matrix a_;
  Vector b_;
  Vector theta_star_;
};

/// A = U0 diag(geomspace(kappa, 1)) V0^T with seeded random orthogonal
/// factors; b = A theta* for a random theta*. Deterministic per seed.
LinearLsq make_linear_lsq(Eigen::Index m, Eigen::Index n, double kappa,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------

enum class PdeNonlinearity { Zero, Cubic };

/// 1D discrete PDE residual F(theta) = Delta_h theta + g(theta) on an
/// interior grid of size N with zero Dirichlet boundary, h = 1/(N+1).
class DiscretePde : public ResidualProblem {
 public:
  DiscretePde(Eigen::Index n, PdeNonlinearity g, double init_radius = 0.1);

  Eigen::Index param_dim() const override { return n_; }
  Eigen::Index residual_dim() const override { return n_; }
  Vector residual(const Vector& theta) const override;
  Vector jvp(const Vector& theta, const Vector& v) const override;
  Vector vjp(const Vector& theta, const Vector& u) const override;
  Matrix jacobian(const Vector& theta) const override;
  Vector initial_theta(Rng& rng) const override;
  std::optional<Vector> certified_solution() const override {
    return Vector(Vector::Zero(n_));
  }
  double h() const { return h_; }

 private:
  double g_value(double u) const;
  double g_deriv(double u) const;
  Vector laplacian_apply(const Vector& v) const;

  Eigen::Index n_;
  double h_;
  PdeNonlinearity g_;
  double init_radius_;
};

// ---------------------------------------------------------------------------

struct MlpRegressionConfig {
  Eigen::Index dim = 1;                     // input dimension d
  double frequency = 3.0;                   // n in sin(n pi sum x_i)
  std::vector<Eigen::Index> hidden = {16, 16};
  Eigen::Index batch = 256;
  Eigen::Index test_size = 4096;
  std::uint64_t data_seed = 0;
};

/// Regression of sin(n pi sum_i x_i) on [0,1]^d by a tanh network.
/// Residual entries are scaled by 1/sqrt(batch), so the objective equals
/// half the mean squared error and thresholds are batch-size independent.
class MlpRegression : public ResidualProblem {
 public:
  explicit MlpRegression(MlpRegressionConfig cfg);

  Eigen::Index param_dim() const override { return net_.param_dim(); }
  Eigen::Index residual_dim() const override { return x_batch_.rows(); }
  Vector residual(const Vector& theta) const override;
  Vector jvp(const Vector& theta, const Vector& v) const override;
  Vector vjp(const Vector& theta, const Vector& u) const override;
  bool is_stochastic() const override { return true; }
  void resample(Rng& rng) override;
  Vector initial_theta(Rng& rng) const override {
    return net_.xavier_init(rng);
  }
  std::optional<double> test_loss(const Vector& theta) const override;

  const Mlp& net() const { return net_; }
  double target(const Eigen::Ref<const Vector>& x) const;

 private:
  Matrix sample_points(Rng& rng, Eigen::Index count) const;
  Vector targets(const Matrix& x) const;

  MlpRegressionConfig cfg_;
  Mlp net_;
  Matrix x_batch_;
  Vector y_batch_;
  Matrix x_test_;
  Vector y_test_;
  double scale_;  // 1/sqrt(batch)
};

// ---------------------------------------------------------------------------

struct PoissonConfig {
  Eigen::Index dim = 2;
  Eigen::Index n_interior = 256;
  Eigen::Index n_boundary = 128;
  double lambda_bc = 1000.0;
  std::vector<Eigen::Index> hidden = {16, 16};
  Eigen::Index test_size = 1024;
  std::uint64_t data_seed = 0;
};

/// Collocation residual for -Delta u = -2d on the unit ball with u = 1 on
/// the boundary (exact solution u*(x) = |x|^2). The residual stacks interior
/// entries (Delta u(x_i) - 2d) and boundary entries
/// sqrt(lambda_bc) (u(x_b) - 1).
class PoissonCollocation : public ResidualProblem {
 public:
  explicit PoissonCollocation(PoissonConfig cfg);

  Eigen::Index param_dim() const override { return net_.param_dim(); }
  Eigen::Index residual_dim() const override {
    return x_int_.rows() + x_bc_.rows();
  }
  Vector residual(const Vector& theta) const override;
  Vector jvp(const Vector& theta, const Vector& v) const override;
  Vector vjp(const Vector& theta, const Vector& u) const override;
  Vector initial_theta(Rng& rng) const override {
    return net_.xavier_init(rng);
  }
  /// Relative L2 error against u*(x) = |x|^2 on a fixed test set.
  std::optional<double> test_loss(const Vector& theta) const override;

  const Mlp& net() const { return net_; }

 private:
  Matrix sample_ball(Rng& rng, Eigen::Index count, bool boundary) const;

  PoissonConfig cfg_;
  Mlp net_;
  Matrix x_int_;
  Matrix x_bc_;
  Matrix x_test_;
  double sqrt_lambda_;
};

// ---------------------------------------------------------------------------

struct SoftmaxToyConfig {
  Eigen::Index samples = 64;
  Eigen::Index features = 8;
  Eigen::Index classes = 3;
  std::vector<Eigen::Index> hidden = {};  // empty = linear logits
  std::uint64_t data_seed = 0;
};

/// Multiclass toy with cross-entropy loss. F(theta) is the flattened logits
/// matrix (sample-major), the quantity the Fisher-block preconditioner
/// differentiates; loss/loss_gradient are the cross-entropy objective.
class SoftmaxToy : public ResidualProblem {
 public:
  explicit SoftmaxToy(SoftmaxToyConfig cfg);

  Eigen::Index param_dim() const override { return net_.param_dim(); }
  Eigen::Index residual_dim() const override {
    return cfg_.samples * cfg_.classes;
  }
  Vector residual(const Vector& theta) const override;
  Vector jvp(const Vector& theta, const Vector& v) const override;
  Vector vjp(const Vector& theta, const Vector& u) const override;
  double loss(const Vector& theta) const override;
  Vector loss_gradient(const Vector& theta) const override;
  Vector initial_theta(Rng& rng) const override {
    return net_.xavier_init(rng);
  }

  /// Row-softmax probabilities, clamped at 1e-12 and renormalized.
  std::vector<Vector> probs(const Vector& theta) const;
  Eigen::Index classes() const { return cfg_.classes; }
  Eigen::Index samples() const { return cfg_.samples; }

 private:
  Matrix softmax(const Matrix& logits) const;

  SoftmaxToyConfig cfg_;
  Mlp net_;
  Matrix x_;
  std::vector<Eigen::Index> labels_;
};

}  // namespace spgd
