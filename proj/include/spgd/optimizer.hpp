#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "spgd/precond.hpp"
#include "spgd/problems.hpp"

namespace spgd {

/// Piecewise-constant decay: lr(t) = max(floor, alpha * factor^floor(t/interval)).
struct StaircaseSchedule {
  double factor = 1.0;
  long interval = 1;
  double floor = 0.0;
};

double lr_at(const StaircaseSchedule& s, double alpha, long epoch);

enum class Method { Gd, Spgd, SpgdAdam, SpgdAmsgrad, AdamBaseline };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct HyperParams {
  double alpha = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  StaircaseSchedule schedule;
  PrecondSpec precond;

  double lr(long epoch) const { return lr_at(schedule, alpha, epoch); }
  /// Throws InvalidConfig on bad values; beta1 < sqrt(beta2) is a hard
  /// requirement for the AMSGrad variant and a warning for the others.
  void validate(Method m) const;
};

struct OptimizerState {
  Vector theta;
  Vector m;
  Vector v;
  Vector v_hat;
  long t = 0;

  static OptimizerState init(Vector theta0);
};

/// One adaptive step together with the preconditioned direction it used.
struct StepResult {
  OptimizerState state;
  Vector lambda;
};

Vector gd_step(const ResidualProblem& p, const Vector& theta, double lr);
Vector spgd_step(const ResidualProblem& p, const Vector& theta, double lr,
                 double trunc_tol = -1.0);

/// The moment recurrences shared by the Adam-style variants:
/// m <- b1 m + (1-b1) lambda, v <- b2 v + (1-b2) lambda^2,
/// theta <- theta - lr m / sqrt(denom + eps), where denom is v or, for the
/// AMSGrad variant, the running elementwise max v_hat.
OptimizerState adam_core_update(const OptimizerState& s, const Vector& lambda,
                                const HyperParams& h, double lr, bool amsgrad);

StepResult spgd_adam_step(const ResidualProblem& p, const OptimizerState& s,
                          const HyperParams& h, double lr);
StepResult spgd_amsgrad_step(const ResidualProblem& p, const OptimizerState& s,
                             const HyperParams& h, double lr);
StepResult adam_baseline_step(const ResidualProblem& p,
                              const OptimizerState& s, const HyperParams& h,
                              double lr);

struct TraceRow {
  long epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double residual_norm = 0.0;  // sqrt(2 * loss); |F| for least-squares
  double lr = 0.0;
  double wall_ms = 0.0;
  double sigma_min = std::numeric_limits<double>::quiet_NaN();
  double sigma_max = std::numeric_limits<double>::quiet_NaN();
};

struct Trace {
  std::vector<TraceRow> rows;
  bool diverged = false;
  Vector final_theta;
};

/// Observer invoked after every completed step; used by the theory
/// diagnostics to record internal sequences.
struct StepEvent {
  long t = 0;  // 1-based step counter after the update
  double lr = 0.0;
  const Vector* lambda = nullptr;  // null for gd/spgd
  const OptimizerState* state = nullptr;
};
using StepObserver = std::function<void(const StepEvent&)>;

/// Deterministic optimization loop. One epoch is one step; stochastic
/// problems resample their batch at the top of each epoch. A non-finite
/// loss or a failed step truncates the trace and flags it diverged.
Trace run(ResidualProblem& p, Method method, const HyperParams& h, long epochs,
          std::uint64_t seed, const StepObserver& observer = {});

}  // namespace spgd
