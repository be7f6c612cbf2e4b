#include "spgd/problems.hpp"

#include <cmath>
#include <sstream>

namespace spgd {

Matrix ResidualProblem::jacobian(const Vector& theta) const {
  const Eigen::Index n = residual_dim();
  const Eigen::Index m = param_dim();
  Matrix j(n, m);
  Vector e = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    j.row(i) = vjp(theta, e).transpose();
    e[i] = 0.0;
  }
  return j;
}

double ResidualProblem::loss(const Vector& theta) const {
  return objective(*this, theta);
}

Vector ResidualProblem::loss_gradient(const Vector& theta) const {
  return gradient(*this, theta);
}

double objective(const ResidualProblem& p, const Vector& theta) {
  const Vector f = p.residual(theta);
  if (!f.allFinite()) {
    std::ostringstream msg;
    msg << "objective: non-finite residual at |theta| = " << theta.norm();
    throw NumericalFailure(msg.str());
  }
  return 0.5 * f.squaredNorm();
}

Vector gradient(const ResidualProblem& p, const Vector& theta) {
  const Vector f = p.residual(theta);
  if (!f.allFinite()) {
    std::ostringstream msg;
    msg << "gradient: non-finite residual at |theta| = " << theta.norm();
    throw NumericalFailure(msg.str());
  }
  return p.vjp(theta, f);
}

LinearMap jacobian_map(const ResidualProblem& p, const Vector& theta) {
  LinearMap op;
  op.in_dim = p.param_dim();
  op.out_dim = p.residual_dim();
  op.apply = [&p, theta](const Vector& v) { return p.jvp(theta, v); };
  op.apply_adjoint = [&p, theta](const Vector& u) { return p.vjp(theta, u); };
  return op;
}

Vector fd_gradient(const ResidualProblem& p, const Vector& theta) {
  const Eigen::Index m = theta.size();
  Vector g(m);
  Vector t = theta;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(theta[i]));
    t[i] = theta[i] + h;
    const double fp = p.loss(t);
    t[i] = theta[i] - h;
    const double fm = p.loss(t);
    t[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// --------------------------------------------------------------------------
// LinearLsq

LinearLsq::LinearLsq(Matrix a, Vector b, Vector theta_star)
    : a_(std::move(a)), b_(std::move(b)), theta_star_(std::move(theta_star)) {
  if (a_.rows() != b_.size() || a_.cols() != theta_star_.size())
    throw InvalidInput("LinearLsq: inconsistent shapes");
}

namespace {

// Thin orthonormal factor from a seeded Gaussian matrix, signs fixed so the
// result is unique.
Matrix random_orthonormal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const Matrix g = rng.gaussian_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < cols; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

LinearLsq make_linear_lsq(Eigen::Index m, Eigen::Index n, double kappa,
                          std::uint64_t seed) {
  if (m < 2 || n < m) throw InvalidInput("make_linear_lsq: need n >= m >= 2");
  if (kappa < 1.0) throw InvalidInput("make_linear_lsq: kappa must be >= 1");
  Rng rng(seed);
  const Matrix u0 = random_orthonormal(rng, n, m);
  const Matrix v0 = random_orthonormal(rng, m, m);
  Vector sigma(m);
  for (Eigen::Index i = 0; i < m; ++i)
    sigma[i] = std::pow(kappa, double(m - 1 - i) / double(m - 1));
  const Matrix a = u0 * sigma.asDiagonal() * v0.transpose();
  const Vector theta_star = rng.gaussian_vector(m);
  return LinearLsq(a, a * theta_star, theta_star);
}

// --------------------------------------------------------------------------
// DiscretePde

DiscretePde::DiscretePde(Eigen::Index n, PdeNonlinearity g, double init_radius)
    : n_(n), h_(1.0 / double(n + 1)), g_(g), init_radius_(init_radius) {
  if (n < 1) throw InvalidInput("DiscretePde: need at least one grid point");
  if (init_radius <= 0) throw InvalidInput("DiscretePde: init_radius > 0");
}

double DiscretePde::g_value(double u) const {
  return g_ == PdeNonlinearity::Zero ? 0.0 : u * u * u;
}

double DiscretePde::g_deriv(double u) const {
  return g_ == PdeNonlinearity::Zero ? 0.0 : 3.0 * u * u;
}

Vector DiscretePde::laplacian_apply(const Vector& v) const {
  Vector out(n_);
  const double inv_h2 = 1.0 / (h_ * h_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const double left = i > 0 ? v[i - 1] : 0.0;
    const double right = i + 1 < n_ ? v[i + 1] : 0.0;
    out[i] = (left - 2.0 * v[i] + right) * inv_h2;
  }
  return out;
}

Vector DiscretePde::residual(const Vector& theta) const {
  Vector f = laplacian_apply(theta);
  for (Eigen::Index i = 0; i < n_; ++i) f[i] += g_value(theta[i]);
  return f;
}

Vector DiscretePde::jvp(const Vector& theta, const Vector& v) const {
  Vector out = laplacian_apply(v);
  for (Eigen::Index i = 0; i < n_; ++i) out[i] += g_deriv(theta[i]) * v[i];
  return out;
}

Vector DiscretePde::vjp(const Vector& theta, const Vector& u) const {
  // The stencil is symmetric, so J^T u = Delta_h u + diag(g') u.
  return jvp(theta, u);
}

Matrix DiscretePde::jacobian(const Vector& theta) const {
  Matrix j = Matrix::Zero(n_, n_);
  const double inv_h2 = 1.0 / (h_ * h_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    j(i, i) = -2.0 * inv_h2 + g_deriv(theta[i]);
    if (i > 0) j(i, i - 1) = inv_h2;
    if (i + 1 < n_) j(i, i + 1) = inv_h2;
  }
  return j;
}

Vector DiscretePde::initial_theta(Rng& rng) const {
  // Uniform in the ball of radius init_radius around the certified root.
  Vector dir = rng.gaussian_vector(n_);
  dir.normalize();
  const double r =
      init_radius_ * std::pow(rng.uniform(), 1.0 / double(n_));
  return r * dir;
}

// --------------------------------------------------------------------------
// MlpRegression

MlpRegression::MlpRegression(MlpRegressionConfig cfg)
    : cfg_(cfg),
      net_(cfg.dim, cfg.hidden, 1),
      scale_(1.0 / std::sqrt(double(cfg.batch))) {
  if (cfg_.batch < 1 || cfg_.test_size < 1)
    throw InvalidInput("MlpRegression: batch and test_size must be positive");
  Rng rng(cfg_.data_seed);
  x_test_ = sample_points(rng, cfg_.test_size);
  y_test_ = targets(x_test_);
  // Initial batch; stochastic runs replace it every epoch.
  x_batch_ = sample_points(rng, cfg_.batch);
  y_batch_ = targets(x_batch_);
}

Matrix MlpRegression::sample_points(Rng& rng, Eigen::Index count) const {
  Matrix x(count, cfg_.dim);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = 0; j < cfg_.dim; ++j) x(i, j) = rng.uniform();
  return x;
}

double MlpRegression::target(const Eigen::Ref<const Vector>& x) const {
  return std::sin(cfg_.frequency * M_PI * x.sum());
}

Vector MlpRegression::targets(const Matrix& x) const {
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y[i] = target(x.row(i).transpose());
  return y;
}

void MlpRegression::resample(Rng& rng) {
  x_batch_ = sample_points(rng, cfg_.batch);
  y_batch_ = targets(x_batch_);
}

Vector MlpRegression::residual(const Vector& theta) const {
  return scale_ * (net_.forward(theta, x_batch_).col(0) - y_batch_);
}

Vector MlpRegression::jvp(const Vector& theta, const Vector& v) const {
  return scale_ * net_.forward_jvp(theta, x_batch_, v).col(0);
}

Vector MlpRegression::vjp(const Vector& theta, const Vector& u) const {
  return scale_ * net_.forward_vjp(theta, x_batch_, u);
}

std::optional<double> MlpRegression::test_loss(const Vector& theta) const {
  const Vector r = net_.forward(theta, x_test_).col(0) - y_test_;
  return 0.5 * r.squaredNorm() / double(x_test_.rows());
}

// --------------------------------------------------------------------------
// PoissonCollocation

PoissonCollocation::PoissonCollocation(PoissonConfig cfg)
    : cfg_(cfg),
      net_(cfg.dim, cfg.hidden, 1),
      sqrt_lambda_(std::sqrt(cfg.lambda_bc)) {
  if (cfg_.dim < 1) throw InvalidInput("PoissonCollocation: dim must be >= 1");
  if (cfg_.lambda_bc < 0)
    throw InvalidInput("PoissonCollocation: lambda_bc must be >= 0");
  Rng rng(cfg_.data_seed);
  x_int_ = sample_ball(rng, cfg_.n_interior, false);
  x_bc_ = sample_ball(rng, cfg_.n_boundary, true);
  x_test_ = sample_ball(rng, cfg_.test_size, false);
}

Matrix PoissonCollocation::sample_ball(Rng& rng, Eigen::Index count,
                                       bool boundary) const {
  // Direction from a normalized Gaussian, radius u^(1/d) for interior points.
  Matrix x(count, cfg_.dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    Vector dir = rng.gaussian_vector(cfg_.dim);
    double norm = dir.norm();
    while (norm == 0.0) {
      dir = rng.gaussian_vector(cfg_.dim);
      norm = dir.norm();
    }
    dir /= norm;
    const double r =
        boundary ? 1.0 : std::pow(rng.uniform(), 1.0 / double(cfg_.dim));
    x.row(i) = (r * dir).transpose();
  }
  return x;
}

Vector PoissonCollocation::residual(const Vector& theta) const {
  const Mlp::LaplaceEval le = net_.laplace(theta, x_int_);
  const Vector u_bc = net_.forward(theta, x_bc_).col(0);
  Vector f(residual_dim());
  f.head(x_int_.rows()) = le.lap.array() - 2.0 * double(cfg_.dim);
  f.tail(x_bc_.rows()) = sqrt_lambda_ * (u_bc.array() - 1.0);
  return f;
}

Vector PoissonCollocation::jvp(const Vector& theta, const Vector& v) const {
  const Mlp::LaplaceEval dle = net_.laplace_jvp(theta, x_int_, v);
  const Vector du_bc = net_.forward_jvp(theta, x_bc_, v).col(0);
  Vector out(residual_dim());
  out.head(x_int_.rows()) = dle.lap;
  out.tail(x_bc_.rows()) = sqrt_lambda_ * du_bc;
  return out;
}

Vector PoissonCollocation::vjp(const Vector& theta, const Vector& u) const {
  const Vector lapbar = u.head(x_int_.rows());
  const Vector ubar_bc = sqrt_lambda_ * u.tail(x_bc_.rows());
  Vector grad = net_.laplace_vjp(theta, x_int_,
                                 Vector::Zero(x_int_.rows()), lapbar);
  grad += net_.forward_vjp(theta, x_bc_, ubar_bc);
  return grad;
}

std::optional<double> PoissonCollocation::test_loss(const Vector& theta) const {
  const Vector u = net_.forward(theta, x_test_).col(0);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < x_test_.rows(); ++i) {
    const double exact = x_test_.row(i).squaredNorm();
    num += (u[i] - exact) * (u[i] - exact);
    den += exact * exact;
  }
  return std::sqrt(num / den);
}

// --------------------------------------------------------------------------
// SoftmaxToy

SoftmaxToy::SoftmaxToy(SoftmaxToyConfig cfg)
    : cfg_(cfg), net_(cfg.features, cfg.hidden, cfg.classes) {
  if (cfg_.classes < 2) throw InvalidInput("SoftmaxToy: need >= 2 classes");
  if (cfg_.samples < 1) throw InvalidInput("SoftmaxToy: need >= 1 sample");
  Rng rng(cfg_.data_seed);
  x_ = rng.gaussian_matrix(cfg_.samples, cfg_.features);
  // Labels from a random linear teacher, so the task is learnable.
  const Matrix teacher = rng.gaussian_matrix(cfg_.features, cfg_.classes);
  const Matrix scores = x_ * teacher;
  labels_.resize(cfg_.samples);
  for (Eigen::Index i = 0; i < cfg_.samples; ++i) {
    Eigen::Index arg = 0;
    scores.row(i).maxCoeff(&arg);
    labels_[i] = arg;
  }
}

Vector SoftmaxToy::residual(const Vector& theta) const {
  const Matrix logits = net_.forward(theta, x_);
  Vector f(residual_dim());
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    f.segment(i * cfg_.classes, cfg_.classes) = logits.row(i).transpose();
  return f;
}

Vector SoftmaxToy::jvp(const Vector& theta, const Vector& v) const {
  const Matrix dl = net_.forward_jvp(theta, x_, v);
  Vector out(residual_dim());
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    out.segment(i * cfg_.classes, cfg_.classes) = dl.row(i).transpose();
  return out;
}

Vector SoftmaxToy::vjp(const Vector& theta, const Vector& u) const {
  Matrix cot(cfg_.samples, cfg_.classes);
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    cot.row(i) = u.segment(i * cfg_.classes, cfg_.classes).transpose();
  return net_.forward_vjp(theta, x_, cot);
}

Matrix SoftmaxToy::softmax(const Matrix& logits) const {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    Eigen::ArrayXd row = e / e.sum();
    row = row.max(1e-12);  // clamp, then renormalize
    p.row(i) = (row / row.sum()).matrix();
  }
  return p;
}

std::vector<Vector> SoftmaxToy::probs(const Vector& theta) const {
  const Matrix p = softmax(net_.forward(theta, x_));
  std::vector<Vector> out(cfg_.samples);
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    out[i] = p.row(i).transpose();
  return out;
}

double SoftmaxToy::loss(const Vector& theta) const {
  const Matrix p = softmax(net_.forward(theta, x_));
  double total = 0.0;
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    total -= std::log(p(i, labels_[i]));
  return total / double(cfg_.samples);
}

Vector SoftmaxToy::loss_gradient(const Vector& theta) const {
  Matrix dlogits = softmax(net_.forward(theta, x_));
  for (Eigen::Index i = 0; i < cfg_.samples; ++i)
    dlogits(i, labels_[i]) -= 1.0;
  dlogits /= double(cfg_.samples);
  return net_.forward_vjp(theta, x_, dlogits);
}

}  // namespace spgd
