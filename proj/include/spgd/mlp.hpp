#pragma once

#include <vector>

#include "spgd/linalg.hpp"
#include "spgd/rng.hpp"

namespace spgd {

/// Fully connected tanh network with a linear output layer and hand-rolled
/// forward/reverse differentiation.
///
/// Parameter packing (fixed, documented): for each layer in input-to-output
/// order, the weight matrix W_l (out_l x in_l) flattened row by row, followed
/// by the bias b_l. theta therefore has size
/// sum_l (out_l * in_l + out_l).
class Mlp {
 public:
  Mlp(Eigen::Index input_dim, std::vector<Eigen::Index> hidden,
      Eigen::Index output_dim);

  Eigen::Index input_dim() const { return widths_.front(); }
  Eigen::Index output_dim() const { return widths_.back(); }
  Eigen::Index param_dim() const { return param_dim_; }
  Eigen::Index num_layers() const {
    return static_cast<Eigen::Index>(widths_.size()) - 1;
  }

  /// Xavier normal weights, zero biases.
  Vector xavier_init(Rng& rng) const;

  /// x: batch x input_dim. Returns batch x output_dim.
  Matrix forward(const Vector& theta, const Matrix& x) const;

  /// Directional derivative of forward in the parameter direction dtheta.
  Matrix forward_jvp(const Vector& theta, const Matrix& x,
                     const Vector& dtheta) const;

  /// Pullback of an output cotangent (batch x output_dim) to parameter space.
  Vector forward_vjp(const Vector& theta, const Matrix& x,
                     const Matrix& cotangent) const;

  /// Values and Laplacians of a scalar network at each row of x.
  /// Requires output_dim == 1. Exact, via second-order forward propagation
  /// of per-coordinate derivative streams through the tanh layers.
  struct LaplaceEval {
    Vector u;    // batch
    Vector lap;  // batch, sum_k d^2 u / dx_k^2
  };
  LaplaceEval laplace(const Vector& theta, const Matrix& x) const;

  /// Parameter-directional derivative of (u, lap).
  LaplaceEval laplace_jvp(const Vector& theta, const Matrix& x,
                          const Vector& dtheta) const;

  /// Pullback of cotangents on (u, lap) to parameter space.
  Vector laplace_vjp(const Vector& theta, const Matrix& x, const Vector& ubar,
                     const Vector& lapbar) const;

  // Parameter views used internally and by tests. Weights are row-major.
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> weight(const Vector& theta, Eigen::Index layer) const;
  Eigen::Map<const Vector> bias(const Vector& theta, Eigen::Index layer) const;

 private:
  struct ForwardPass;
  struct LaplacePass;
  void check_shapes(const Vector& theta, const Matrix& x) const;
  ForwardPass run_forward(const Vector& theta, const Matrix& x) const;
  LaplacePass run_laplace(const Vector& theta, const Matrix& x) const;

  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::Index> w_offset_;  // per layer: offset of W_l in theta
  std::vector<Eigen::Index> b_offset_;  // per layer: offset of b_l in theta
  Eigen::Index param_dim_ = 0;
};

}  // namespace spgd
