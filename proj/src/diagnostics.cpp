#include "spgd/diagnostics.hpp"

#include <cmath>

namespace spgd {

RateFit fit_rate(const std::vector<TraceRow>& trace, long start, long end) {
  std::vector<double> xs, ys;
  for (const TraceRow& row : trace) {
    if (row.epoch < start || row.epoch >= end) continue;
    if (row.loss < 1e-14) continue;  // floating-point floor
    xs.push_back(double(row.epoch));
    ys.push_back(std::log(row.loss));
  }
  if (xs.size() < 5)
    throw InvalidInput("fit_rate: fewer than 5 usable rows in window");

  const double n = double(xs.size());
  double sx = 0, sy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;

  RateFit fit;
  fit.rho = std::exp(slope);
  fit.start = start;
  fit.end = end;
  if (syy <= 1e-300) {
    // Constant trace: the flat fit is exact.
    fit.rho = 1.0;
    fit.r2 = 1.0;
  } else {
    double ss_res = 0;
    const double intercept = my - slope * mx;
    for (size_t i = 0; i < xs.size(); ++i) {
      const double pred = intercept + slope * xs[i];
      ss_res += (ys[i] - pred) * (ys[i] - pred);
    }
    fit.r2 = 1.0 - ss_res / syy;
  }
  return fit;
}

RateFit fit_rate_tail(const std::vector<TraceRow>& trace) {
  if (trace.empty()) throw InvalidInput("fit_rate_tail: empty trace");
  const long end = trace.back().epoch + 1;
  return fit_rate(trace, end / 2, end);
}

double pl_ratio(const ResidualProblem& p, const Vector& theta) {
  const double f = p.loss(theta);
  if (f <= 1e-16)
    throw InvalidInput("pl_ratio: undefined at (numerical) solution");
  return p.loss_gradient(theta).squaredNorm() / (2.0 * f);
}

SpectralProbe spectral_probe(const ResidualProblem& p, const Vector& theta) {
  const SvdFactors svd = thin_svd(p.jacobian(theta));
  SpectralProbe out;
  out.rank = svd.rank;
  out.sigma_max = svd.sigma_max();
  out.sigma_min = svd.sigma_min();
  out.kappa = out.sigma_min > 0 ? out.sigma_max / out.sigma_min : 1.0;
  return out;
}

std::map<double, std::optional<long>> milestones(
    const std::vector<TraceRow>& trace,
    const std::vector<double>& thresholds) {
  for (size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] <= 0)
      throw InvalidInput("milestones: thresholds must be positive");
    if (i > 0 && thresholds[i] >= thresholds[i - 1])
      throw InvalidInput("milestones: thresholds must be descending");
  }
  std::map<double, std::optional<long>> out;
  for (double tau : thresholds) {
    std::optional<long> first;
    for (const TraceRow& row : trace) {
      if (row.loss <= tau) {
        first = row.epoch;
        break;
      }
    }
    out[tau] = first;
  }
  return out;
}

AmsgradRecord record_amsgrad_run(ResidualProblem& p, const HyperParams& h,
                                 long steps, std::uint64_t seed) {
  if (steps < 1) throw InvalidInput("record_amsgrad_run: steps >= 1");
  h.validate(Method::SpgdAmsgrad);
  Rng rng(seed);
  OptimizerState state = OptimizerState::init(p.initial_theta(rng));

  AmsgradRecord rec;
  rec.hyper = h;
  rec.theta.push_back(state.theta);
  for (long t = 1; t <= steps; ++t) {
    if (p.is_stochastic()) p.resample(rng);
    const StepResult r = spgd_amsgrad_step(p, state, h, h.alpha);
    state = r.state;
    rec.theta.push_back(state.theta);
    rec.lambda.push_back(r.lambda);
    rec.m.push_back(state.m);
    rec.vhat.push_back(state.v_hat);
  }
  return rec;
}

namespace {

Vector a_diag(const Vector& vhat, const HyperParams& h) {
  return h.alpha * (vhat.array() + h.eps).rsqrt().matrix();
}

}  // namespace

double z_identity_residual(const Vector& theta_prev, const Vector& theta_t,
                           const Vector& theta_next, const Vector& m_prev,
                           const Vector& lambda_t, const Vector& vhat_prev,
                           const Vector& vhat_t, const HyperParams& h) {
  const double c = h.beta1 / (1.0 - h.beta1);
  const Vector z_t = theta_t + c * (theta_t - theta_prev);
  const Vector z_next = theta_next + c * (theta_next - theta_t);
  const Vector a_prev = a_diag(vhat_prev, h);
  const Vector a_t = a_diag(vhat_t, h);
  const Vector rhs =
      c * (a_prev - a_t).cwiseProduct(m_prev) - a_t.cwiseProduct(lambda_t);
  return (z_next - z_t - rhs).norm();
}

double z_first_step_residual(const Vector& theta_1, const Vector& theta_2,
                             const Vector& lambda_1, const Vector& vhat_1,
                             const HyperParams& h) {
  // z_1 = theta_1 (theta_0 = theta_1 by convention),
  // z_2 = theta_2 + c (theta_2 - theta_1).
  const double c = h.beta1 / (1.0 - h.beta1);
  const Vector z_2 = theta_2 + c * (theta_2 - theta_1);
  const Vector a_1 = a_diag(vhat_1, h);
  return (z_2 - theta_1 + a_1.cwiseProduct(lambda_1)).norm();
}

std::vector<double> z_identity_residuals(const AmsgradRecord& rec) {
  const size_t steps = rec.lambda.size();
  if (steps < 3)
    throw InvalidInput("z_identity_residuals: need at least 3 steps (t >= 2)");
  std::vector<double> out;
  // Identity for t = 2 .. T-1 needs theta_{t+1}, so t runs to steps-1.
  for (size_t t = 2; t + 1 <= steps; ++t) {
    out.push_back(z_identity_residual(
        rec.theta[t - 2], rec.theta[t - 1], rec.theta[t], rec.m[t - 2],
        rec.lambda[t - 1], rec.vhat[t - 2], rec.vhat[t - 1], rec.hyper));
  }
  return out;
}

bool at_bound_check(const AmsgradRecord& rec) {
  double max_lambda_inf = 0.0;
  for (const Vector& l : rec.lambda)
    max_lambda_inf = std::max(max_lambda_inf, l.lpNorm<Eigen::Infinity>());
  const HyperParams& h = rec.hyper;
  const double bound = std::pow(
      (max_lambda_inf * max_lambda_inf + h.eps) / (h.alpha * h.alpha), 0.25);
  for (const Vector& vhat : rec.vhat) {
    const double lhs =
        std::pow(vhat.maxCoeff() + h.eps, 0.25) / std::sqrt(h.alpha);
    if (lhs > bound + 1e-12) return false;
  }
  return true;
}

}  // namespace spgd
