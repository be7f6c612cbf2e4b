#pragma once

#include <map>
#include <optional>
#include <vector>

#include "spgd/optimizer.hpp"

namespace spgd {

/// Per-step contraction factor fitted by least squares on log loss over an
/// epoch window, with entries below 1e-14 excluded as floating-point floor.
struct RateFit {
  double rho = 1.0;  // fitted per-step factor exp(slope)
  double r2 = 0.0;   // goodness of the log-linear fit
  long start = 0;
  long end = 0;
};

/// Fit over rows with start <= epoch < end. Requires >= 5 usable rows.
RateFit fit_rate(const std::vector<TraceRow>& trace, long start, long end);

/// Convenience: fit over the last half of the trace.
RateFit fit_rate_tail(const std::vector<TraceRow>& trace);

/// |grad f|^2 / (2 f): the local Polyak-Lojasiewicz ratio. Requires
/// f(theta) > 1e-16.
double pl_ratio(const ResidualProblem& p, const Vector& theta);

struct SpectralProbe {
  double sigma_min = 0.0;  // smallest retained singular value
  double sigma_max = 0.0;
  double kappa = 1.0;
  Eigen::Index rank = 0;
};

SpectralProbe spectral_probe(const ResidualProblem& p, const Vector& theta);

/// First epoch at which the loss reaches each threshold, or nullopt if it
/// never does. Thresholds must be positive and strictly descending.
std::map<double, std::optional<long>> milestones(
    const std::vector<TraceRow>& trace, const std::vector<double>& thresholds);

/// AMSGrad run recorded with the internal sequences the global-convergence
/// analysis manipulates. Indexing follows the 1-based convention of the
/// update rule: theta[t-1] = theta_t (theta[0] is the initial point),
/// lambda[t-1] = lambda_t, m[t-1] = m_t, vhat[t-1] = vhat_t for t = 1..T,
/// and theta has T+1 entries.
struct AmsgradRecord {
  std::vector<Vector> theta;
  std::vector<Vector> lambda;
  std::vector<Vector> m;
  std::vector<Vector> vhat;
  HyperParams hyper;
};

AmsgradRecord record_amsgrad_run(ResidualProblem& p, const HyperParams& h,
                                 long steps, std::uint64_t seed);

/// Residual of the auxiliary-sequence step identity at t >= 2:
/// | (z_{t+1} - z_t) - [ b1/(1-b1) (A_{t-1} - A_t) m_{t-1} - A_t lambda_t ] |
/// with z_t = theta_t + b1/(1-b1)(theta_t - theta_{t-1}) and
/// A_t = alpha / sqrt(vhat_t + eps) elementwise.
double z_identity_residual(const Vector& theta_prev, const Vector& theta_t,
                           const Vector& theta_next, const Vector& m_prev,
                           const Vector& lambda_t, const Vector& vhat_prev,
                           const Vector& vhat_t, const HyperParams& h);

/// The t = 1 base case: | (z_2 - z_1) + A_1 lambda_1 |, where z_1 = theta_1.
double z_first_step_residual(const Vector& theta_1, const Vector& theta_2,
                             const Vector& lambda_1, const Vector& vhat_1,
                             const HyperParams& h);

/// Evaluate z_identity_residual at every step of a recorded run (t >= 2).
std::vector<double> z_identity_residuals(const AmsgradRecord& rec);

/// Uniform bound on |A_t^{-1/2}|: checks
/// max_i (vhat_{t,i} + eps)^{1/4} / sqrt(alpha)
///   <= ((max_t |lambda_t|_inf^2 + eps) / alpha^2)^{1/4} + 1e-12
/// at every recorded step.
bool at_bound_check(const AmsgradRecord& rec);

}  // namespace spgd
