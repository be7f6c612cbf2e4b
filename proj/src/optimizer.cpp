#include "spgd/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

namespace spgd {

double lr_at(const StaircaseSchedule& s, double alpha, long epoch) {
  if (epoch < 0) throw InvalidInput("lr_at: epoch must be >= 0");
  const long k = epoch / s.interval;
  return std::max(s.floor, alpha * std::pow(s.factor, double(k)));
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Gd: return "gd";
    case Method::Spgd: return "spgd";
    case Method::SpgdAdam: return "spgd-adam";
    case Method::SpgdAmsgrad: return "spgd-amsgrad";
    case Method::AdamBaseline: return "adam-baseline";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "gd") return Method::Gd;
  if (name == "spgd") return Method::Spgd;
  if (name == "spgd-adam") return Method::SpgdAdam;
  if (name == "spgd-amsgrad") return Method::SpgdAmsgrad;
  if (name == "adam-baseline") return Method::AdamBaseline;
  throw InvalidConfig("unknown method: " + name);
}

void HyperParams::validate(Method m) const {
  if (alpha <= 0) throw InvalidConfig("hyper: alpha must be > 0");
  if (beta1 < 0 || beta1 >= 1) throw InvalidConfig("hyper: beta1 in [0,1)");
  if (beta2 < 0 || beta2 >= 1) throw InvalidConfig("hyper: beta2 in [0,1)");
  if (eps <= 0) throw InvalidConfig("hyper: eps must be > 0");
  if (schedule.factor <= 0 || schedule.factor > 1)
    throw InvalidConfig("hyper: schedule factor in (0,1]");
  if (schedule.interval < 1)
    throw InvalidConfig("hyper: schedule interval must be >= 1");
  if (schedule.floor < 0)
    throw InvalidConfig("hyper: schedule floor must be >= 0");
  precond.validate();
  if (beta1 >= std::sqrt(beta2)) {
    if (m == Method::SpgdAmsgrad)
      throw InvalidConfig(
          "hyper: the AMSGrad variant requires beta1 < sqrt(beta2)");
    std::cerr << "spgd: warning: beta1 >= sqrt(beta2); the global "
                 "convergence analysis does not cover this setting\n";
  }
}

OptimizerState OptimizerState::init(Vector theta0) {
  OptimizerState s;
  const Eigen::Index m = theta0.size();
  s.theta = std::move(theta0);
  s.m = Vector::Zero(m);
  s.v = Vector::Zero(m);
  s.v_hat = Vector::Zero(m);
  s.t = 0;
  return s;
}

Vector gd_step(const ResidualProblem& p, const Vector& theta, double lr) {
  if (lr <= 0) throw InvalidInput("gd_step: lr must be > 0");
  const Vector g = p.loss_gradient(theta);
  if (!g.allFinite()) throw NumericalFailure("gd_step: non-finite gradient");
  return theta - lr * g;
}

Vector spgd_step(const ResidualProblem& p, const Vector& theta, double lr,
                 double trunc_tol) {
  if (lr <= 0) throw InvalidInput("spgd_step: lr must be > 0");
  const Vector f = p.residual(theta);
  if (!f.allFinite()) throw NumericalFailure("spgd_step: non-finite residual");
  const SvdFactors svd = thin_svd(p.jacobian(theta), trunc_tol);
  return theta - lr * spgd_direction(svd, f);
}

OptimizerState adam_core_update(const OptimizerState& s, const Vector& lambda,
                                const HyperParams& h, double lr,
                                bool amsgrad) {
  OptimizerState out = s;
  out.m = h.beta1 * s.m + (1.0 - h.beta1) * lambda;
  out.v = h.beta2 * s.v + (1.0 - h.beta2) * lambda.cwiseProduct(lambda);
  out.v_hat = amsgrad ? s.v_hat.cwiseMax(out.v) : out.v;
  const Vector& denom = amsgrad ? out.v_hat : out.v;
  out.theta =
      s.theta -
      lr * out.m.cwiseQuotient((denom.array() + h.eps).sqrt().matrix());
  out.t = s.t + 1;
  if (!out.theta.allFinite() || !out.m.allFinite() || !out.v.allFinite()) {
    std::ostringstream msg;
    msg << "adam step " << out.t << ": non-finite state";
    throw NumericalFailure(msg.str());
  }
  return out;
}

namespace {

Vector preconditioned_direction(const ResidualProblem& p, const Vector& theta,
                                const Vector& g, const PrecondSpec& spec,
                                double* sigma_min, double* sigma_max) {
  switch (spec.kind) {
    case PrecondKind::ExactSvd: {
      const SvdFactors svd = thin_svd(p.jacobian(theta), spec.trunc_tol);
      if (sigma_min) *sigma_min = svd.sigma_min();
      if (sigma_max) *sigma_max = svd.sigma_max();
      return precond_gradient_exact(svd, g);
    }
    case PrecondKind::DampedDense:
      return damped_apply_dense(p.jacobian(theta), g, spec.mu, spec.p);
    case PrecondKind::DampedLanczos:
      return damped_apply_lanczos(jacobian_map(p, theta), g, spec);
    case PrecondKind::CrossEntropyLanczos: {
      const auto* toy = dynamic_cast<const SoftmaxToy*>(&p);
      if (!toy)
        throw InvalidConfig(
            "cross-entropy preconditioner requires a softmax problem");
      if (g.norm() == 0.0) return Vector::Zero(g.size());
      const LinearMap op =
          ce_operator(jacobian_map(p, theta), toy->probs(theta), spec.delta);
      return ce_apply_lanczos(op, g, spec.k);
    }
  }
  throw InvalidConfig("unknown preconditioner kind");
}

StepResult adam_family_step(const ResidualProblem& p, const OptimizerState& s,
                            const HyperParams& h, double lr, bool amsgrad,
                            bool preconditioned) {
  const Vector g = p.loss_gradient(s.theta);
  if (!g.allFinite()) {
    std::ostringstream msg;
    msg << "adam step " << s.t + 1 << ": non-finite gradient";
    throw NumericalFailure(msg.str());
  }
  StepResult r;
  r.lambda = preconditioned ? preconditioned_direction(p, s.theta, g,
                                                       h.precond, nullptr,
                                                       nullptr)
                            : g;
  r.state = adam_core_update(s, r.lambda, h, lr, amsgrad);
  return r;
}

}  // namespace

StepResult spgd_adam_step(const ResidualProblem& p, const OptimizerState& s,
                          const HyperParams& h, double lr) {
  return adam_family_step(p, s, h, lr, /*amsgrad=*/false, true);
}

StepResult spgd_amsgrad_step(const ResidualProblem& p, const OptimizerState& s,
                             const HyperParams& h, double lr) {
  if (h.beta1 >= std::sqrt(h.beta2))
    throw InvalidConfig(
        "spgd_amsgrad_step: requires beta1 < sqrt(beta2)");
  return adam_family_step(p, s, h, lr, /*amsgrad=*/true, true);
}

StepResult adam_baseline_step(const ResidualProblem& p,
                              const OptimizerState& s, const HyperParams& h,
                              double lr) {
  return adam_family_step(p, s, h, lr, /*amsgrad=*/false, false);
}

Trace run(ResidualProblem& p, Method method, const HyperParams& h, long epochs,
          std::uint64_t seed, const StepObserver& observer) {
  if (epochs < 1) throw InvalidInput("run: epochs must be >= 1");
  h.validate(method);

  Rng rng(seed);
  OptimizerState state = OptimizerState::init(p.initial_theta(rng));

  Trace trace;
  trace.rows.reserve(epochs);

  for (long epoch = 0; epoch < epochs; ++epoch) {
    if (p.is_stochastic()) p.resample(rng);
    const double lr = h.lr(epoch);

    TraceRow row;
    row.epoch = epoch;
    row.lr = lr;
    try {
      row.loss = p.loss(state.theta);
      row.grad_norm = p.loss_gradient(state.theta).norm();
    } catch (const NumericalFailure&) {
      trace.diverged = true;
      break;
    }
    if (!std::isfinite(row.loss) || !std::isfinite(row.grad_norm)) {
      trace.diverged = true;
      break;
    }
    row.residual_norm = std::sqrt(2.0 * row.loss);

    const auto t0 = std::chrono::steady_clock::now();
    try {
      switch (method) {
        case Method::Gd:
          state.theta = gd_step(p, state.theta, lr);
          state.t += 1;
          break;
        case Method::Spgd: {
          const Vector f = p.residual(state.theta);
          if (!f.allFinite())
            throw NumericalFailure("spgd: non-finite residual");
          const SvdFactors svd =
              thin_svd(p.jacobian(state.theta), h.precond.trunc_tol);
          row.sigma_min = svd.sigma_min();
          row.sigma_max = svd.sigma_max();
          state.theta -= lr * spgd_direction(svd, f);
          state.t += 1;
          break;
        }
        case Method::SpgdAdam:
        case Method::SpgdAmsgrad:
        case Method::AdamBaseline: {
          StepResult r;
          if (method == Method::SpgdAdam)
            r = spgd_adam_step(p, state, h, lr);
          else if (method == Method::SpgdAmsgrad)
            r = spgd_amsgrad_step(p, state, h, lr);
          else
            r = adam_baseline_step(p, state, h, lr);
          state = std::move(r.state);
          if (observer) {
            StepEvent ev;
            ev.t = state.t;
            ev.lr = lr;
            ev.lambda = &r.lambda;
            ev.state = &state;
            observer(ev);
          }
          break;
        }
      }
    } catch (const NumericalFailure&) {
      trace.rows.push_back(row);
      trace.diverged = true;
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    trace.rows.push_back(row);

    if (observer && (method == Method::Gd || method == Method::Spgd)) {
      StepEvent ev;
      ev.t = state.t;
      ev.lr = lr;
      ev.state = &state;
      observer(ev);
    }
  }

  trace.final_theta = state.theta;
  return trace;
}

}  // namespace spgd
