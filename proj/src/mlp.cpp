#include "spgd/mlp.hpp"

#include <cmath>

namespace spgd {

namespace {

// tanh and its first three derivatives, expressed through the activation
// value a = tanh(z): s1 = 1-a^2, s2 = -2a s1, s3 = s1 (6a^2 - 2).
Matrix d1(const Matrix& a) { return 1.0 - a.array().square(); }
Matrix d2(const Matrix& a, const Matrix& s1) {
  return -2.0 * a.array() * s1.array();
}
Matrix d3(const Matrix& a, const Matrix& s1) {
  return s1.array() * (6.0 * a.array().square() - 2.0);
}

}  // namespace

Mlp::Mlp(Eigen::Index input_dim, std::vector<Eigen::Index> hidden,
         Eigen::Index output_dim) {
  if (input_dim < 1 || output_dim < 1)
    throw InvalidInput("Mlp: dimensions must be positive");
  widths_.push_back(input_dim);
  for (Eigen::Index h : hidden) {
    if (h < 1) throw InvalidInput("Mlp: hidden width must be positive");
    widths_.push_back(h);
  }
  widths_.push_back(output_dim);

  Eigen::Index offset = 0;
  for (Eigen::Index l = 1; l < static_cast<Eigen::Index>(widths_.size()); ++l) {
    w_offset_.push_back(offset);
    offset += widths_[l] * widths_[l - 1];
    b_offset_.push_back(offset);
    offset += widths_[l];
  }
  param_dim_ = offset;
}

Eigen::Map<const Mlp::RowMat> Mlp::weight(const Vector& theta,
                                          Eigen::Index layer) const {
  return Eigen::Map<const RowMat>(theta.data() + w_offset_[layer],
                                  widths_[layer + 1], widths_[layer]);
}

Eigen::Map<const Vector> Mlp::bias(const Vector& theta,
                                   Eigen::Index layer) const {
  return Eigen::Map<const Vector>(theta.data() + b_offset_[layer],
                                  widths_[layer + 1]);
}

Vector Mlp::xavier_init(Rng& rng) const {
  Vector theta = Vector::Zero(param_dim_);
  for (Eigen::Index l = 0; l < num_layers(); ++l) {
    const Eigen::Index fan_in = widths_[l];
    const Eigen::Index fan_out = widths_[l + 1];
    const double std = std::sqrt(2.0 / double(fan_in + fan_out));
    double* w = theta.data() + w_offset_[l];
    for (Eigen::Index i = 0; i < fan_out * fan_in; ++i)
      w[i] = std * rng.gaussian();
    // biases stay zero
  }
  return theta;
}

void Mlp::check_shapes(const Vector& theta, const Matrix& x) const {
  if (theta.size() != param_dim_)
    throw InvalidInput("Mlp: theta has wrong length");
  if (x.cols() != input_dim())
    throw InvalidInput("Mlp: input has wrong column count");
}

struct Mlp::ForwardPass {
  std::vector<Matrix> a;  // a[0] = x, a[l] = activation after layer l
};

Mlp::ForwardPass Mlp::run_forward(const Vector& theta, const Matrix& x) const {
  check_shapes(theta, x);
  ForwardPass fp;
  fp.a.resize(num_layers() + 1);
  fp.a[0] = x;
  for (Eigen::Index l = 0; l < num_layers(); ++l) {
    Matrix z = (fp.a[l] * weight(theta, l).transpose()).rowwise() +
               bias(theta, l).transpose();
    fp.a[l + 1] = (l + 1 < num_layers()) ? z.array().tanh().matrix() : z;
  }
  return fp;
}

Matrix Mlp::forward(const Vector& theta, const Matrix& x) const {
  return run_forward(theta, x).a.back();
}

Matrix Mlp::forward_jvp(const Vector& theta, const Matrix& x,
                        const Vector& dtheta) const {
  check_shapes(theta, x);
  if (dtheta.size() != param_dim_)
    throw InvalidInput("Mlp: tangent has wrong length");
  const ForwardPass fp = run_forward(theta, x);
  Matrix da = Matrix::Zero(x.rows(), input_dim());
  for (Eigen::Index l = 0; l < num_layers(); ++l) {
    const auto w = weight(theta, l);
    const auto dw = Eigen::Map<const RowMat>(dtheta.data() + w_offset_[l],
                                             widths_[l + 1], widths_[l]);
    const auto db = Eigen::Map<const Vector>(dtheta.data() + b_offset_[l],
                                             widths_[l + 1]);
    Matrix dz = (da * w.transpose() + fp.a[l] * dw.transpose()).rowwise() +
                db.transpose();
    if (l + 1 < num_layers()) {
      da = d1(fp.a[l + 1]).cwiseProduct(dz);
    } else {
      da = dz;
    }
  }
  return da;
}

Vector Mlp::forward_vjp(const Vector& theta, const Matrix& x,
                        const Matrix& cotangent) const {
  check_shapes(theta, x);
  if (cotangent.rows() != x.rows() || cotangent.cols() != output_dim())
    throw InvalidInput("Mlp: cotangent has wrong shape");
  const ForwardPass fp = run_forward(theta, x);
  Vector grad = Vector::Zero(param_dim_);
  Matrix zbar = cotangent;  // output layer is linear
  for (Eigen::Index l = num_layers() - 1; l >= 0; --l) {
    Eigen::Map<RowMat> wbar(grad.data() + w_offset_[l], widths_[l + 1],
                            widths_[l]);
    Eigen::Map<Vector> bbar(grad.data() + b_offset_[l], widths_[l + 1]);
    wbar = zbar.transpose() * fp.a[l];
    bbar = zbar.colwise().sum().transpose();
    if (l > 0) {
      Matrix abar = zbar * weight(theta, l);
      zbar = d1(fp.a[l]).cwiseProduct(abar);
    }
  }
  return grad;
}

// State of the second-order forward propagation. Per layer l and input
// coordinate k it carries the value stream a, the first-derivative stream
// ab[k] = d a / d x_k and the second-derivative stream ac[k] = d^2 a / d x_k^2,
// together with the pre-activation streams zb/zc and the tanh derivative
// factors needed by the reverse pass.
struct Mlp::LaplacePass {
  Eigen::Index d = 0;
  std::vector<Matrix> a;                  // a[l]
  std::vector<std::vector<Matrix>> ab;    // ab[l][k]
  std::vector<std::vector<Matrix>> ac;    // ac[l][k]
  std::vector<std::vector<Matrix>> zb;    // zb[l][k], hidden layers only
  std::vector<std::vector<Matrix>> zc;    // zc[l][k]
  std::vector<Matrix> s1, s2, s3;         // hidden layers only
};

Mlp::LaplacePass Mlp::run_laplace(const Vector& theta, const Matrix& x) const {
  check_shapes(theta, x);
  if (output_dim() != 1)
    throw InvalidInput("Mlp::laplace: requires scalar output");
  const Eigen::Index nb = x.rows();
  const Eigen::Index d = input_dim();
  const Eigen::Index nl = num_layers();

  LaplacePass lp;
  lp.d = d;
  lp.a.resize(nl + 1);
  lp.ab.resize(nl + 1);
  lp.ac.resize(nl + 1);
  lp.zb.resize(nl + 1);
  lp.zc.resize(nl + 1);
  lp.s1.resize(nl + 1);
  lp.s2.resize(nl + 1);
  lp.s3.resize(nl + 1);

  lp.a[0] = x;
  lp.ab[0].assign(d, Matrix::Zero(nb, d));
  lp.ac[0].assign(d, Matrix::Zero(nb, d));
  for (Eigen::Index k = 0; k < d; ++k) lp.ab[0][k].col(k).setOnes();

  for (Eigen::Index l = 0; l < nl; ++l) {
    const auto w = weight(theta, l);
    Matrix z = (lp.a[l] * w.transpose()).rowwise() + bias(theta, l).transpose();
    lp.zb[l + 1].resize(d);
    lp.zc[l + 1].resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      lp.zb[l + 1][k] = lp.ab[l][k] * w.transpose();
      lp.zc[l + 1][k] = lp.ac[l][k] * w.transpose();
    }
    lp.ab[l + 1].resize(d);
    lp.ac[l + 1].resize(d);
    if (l + 1 < nl) {
      lp.a[l + 1] = z.array().tanh().matrix();
      lp.s1[l + 1] = d1(lp.a[l + 1]);
      lp.s2[l + 1] = d2(lp.a[l + 1], lp.s1[l + 1]);
      lp.s3[l + 1] = d3(lp.a[l + 1], lp.s1[l + 1]);
      for (Eigen::Index k = 0; k < d; ++k) {
        const Matrix& zbk = lp.zb[l + 1][k];
        lp.ab[l + 1][k] = lp.s1[l + 1].cwiseProduct(zbk);
        lp.ac[l + 1][k] =
            lp.s2[l + 1].cwiseProduct(zbk.cwiseProduct(zbk)) +
            lp.s1[l + 1].cwiseProduct(lp.zc[l + 1][k]);
      }
    } else {
      lp.a[l + 1] = z;
      lp.ab[l + 1] = lp.zb[l + 1];
      lp.ac[l + 1] = lp.zc[l + 1];
    }
  }
  return lp;
}

Mlp::LaplaceEval Mlp::laplace(const Vector& theta, const Matrix& x) const {
  const LaplacePass lp = run_laplace(theta, x);
  LaplaceEval out;
  out.u = lp.a.back().col(0);
  out.lap = Vector::Zero(x.rows());
  for (Eigen::Index k = 0; k < lp.d; ++k) out.lap += lp.ac.back()[k].col(0);
  return out;
}

Mlp::LaplaceEval Mlp::laplace_jvp(const Vector& theta, const Matrix& x,
                                  const Vector& dtheta) const {
  check_shapes(theta, x);
  if (dtheta.size() != param_dim_)
    throw InvalidInput("Mlp: tangent has wrong length");
  const LaplacePass lp = run_laplace(theta, x);
  const Eigen::Index nb = x.rows();
  const Eigen::Index d = lp.d;
  const Eigen::Index nl = num_layers();

  Matrix da = Matrix::Zero(nb, input_dim());
  std::vector<Matrix> dab(d, Matrix::Zero(nb, input_dim()));
  std::vector<Matrix> dac(d, Matrix::Zero(nb, input_dim()));

  for (Eigen::Index l = 0; l < nl; ++l) {
    const auto w = weight(theta, l);
    const auto dw = Eigen::Map<const RowMat>(dtheta.data() + w_offset_[l],
                                             widths_[l + 1], widths_[l]);
    const auto db = Eigen::Map<const Vector>(dtheta.data() + b_offset_[l],
                                             widths_[l + 1]);
    Matrix dz = (da * w.transpose() + lp.a[l] * dw.transpose()).rowwise() +
                db.transpose();
    std::vector<Matrix> dzb(d), dzc(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      dzb[k] = dab[k] * w.transpose() + lp.ab[l][k] * dw.transpose();
      dzc[k] = dac[k] * w.transpose() + lp.ac[l][k] * dw.transpose();
    }
    if (l + 1 < nl) {
      const Matrix& s1 = lp.s1[l + 1];
      const Matrix& s2 = lp.s2[l + 1];
      const Matrix& s3 = lp.s3[l + 1];
      const Matrix ds1 = s2.cwiseProduct(dz);
      const Matrix ds2 = s3.cwiseProduct(dz);
      da = s1.cwiseProduct(dz);
      for (Eigen::Index k = 0; k < d; ++k) {
        const Matrix& zbk = lp.zb[l + 1][k];
        const Matrix& zck = lp.zc[l + 1][k];
        dab[k] = ds1.cwiseProduct(zbk) + s1.cwiseProduct(dzb[k]);
        dac[k] = ds2.cwiseProduct(zbk.cwiseProduct(zbk)) +
                 2.0 * s2.cwiseProduct(zbk.cwiseProduct(dzb[k])) +
                 ds1.cwiseProduct(zck) + s1.cwiseProduct(dzc[k]);
      }
    } else {
      da = dz;
      dab = dzb;
      dac = dzc;
    }
  }

  LaplaceEval out;
  out.u = da.col(0);
  out.lap = Vector::Zero(nb);
  for (Eigen::Index k = 0; k < d; ++k) out.lap += dac[k].col(0);
  return out;
}

Vector Mlp::laplace_vjp(const Vector& theta, const Matrix& x,
                        const Vector& ubar, const Vector& lapbar) const {
  check_shapes(theta, x);
  const LaplacePass lp = run_laplace(theta, x);
  const Eigen::Index nb = x.rows();
  const Eigen::Index d = lp.d;
  const Eigen::Index nl = num_layers();
  if (ubar.size() != nb || lapbar.size() != nb)
    throw InvalidInput("Mlp: cotangent has wrong length");

  Vector grad = Vector::Zero(param_dim_);
  // Output layer is linear, so post-activation adjoints are pre-activation
  // adjoints. lap = sum_k zc_k at the output, hence each zc_k gets lapbar.
  Matrix zbar = ubar;
  std::vector<Matrix> zbbar(d, Matrix::Zero(nb, 1));
  std::vector<Matrix> zcbar(d);
  for (Eigen::Index k = 0; k < d; ++k) zcbar[k] = lapbar;

  for (Eigen::Index l = nl - 1; l >= 0; --l) {
    Eigen::Map<RowMat> wbar(grad.data() + w_offset_[l], widths_[l + 1],
                            widths_[l]);
    Eigen::Map<Vector> bbar(grad.data() + b_offset_[l], widths_[l + 1]);
    wbar = zbar.transpose() * lp.a[l];
    for (Eigen::Index k = 0; k < d; ++k)
      wbar += zbbar[k].transpose() * lp.ab[l][k] +
              zcbar[k].transpose() * lp.ac[l][k];
    bbar = zbar.colwise().sum().transpose();

    if (l == 0) break;
    const auto w = weight(theta, l);
    Matrix abar = zbar * w;
    std::vector<Matrix> abbar(d), acbar(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      abbar[k] = zbbar[k] * w;
      acbar[k] = zcbar[k] * w;
    }
    // Convert post-activation adjoints of layer l-1 (index l in storage)
    // to pre-activation adjoints.
    const Matrix& s1 = lp.s1[l];
    const Matrix& s2 = lp.s2[l];
    const Matrix& s3 = lp.s3[l];
    Matrix znew = s1.cwiseProduct(abar);
    std::vector<Matrix> zbnew(d), zcnew(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const Matrix& zbk = lp.zb[l][k];
      const Matrix& zck = lp.zc[l][k];
      znew += s2.cwiseProduct(zbk).cwiseProduct(abbar[k]) +
              (s3.cwiseProduct(zbk.cwiseProduct(zbk)) + s2.cwiseProduct(zck))
                  .cwiseProduct(acbar[k]);
      zbnew[k] = s1.cwiseProduct(abbar[k]) +
                 2.0 * s2.cwiseProduct(zbk).cwiseProduct(acbar[k]);
      zcnew[k] = s1.cwiseProduct(acbar[k]);
    }
    zbar = znew;
    zbbar = zbnew;
    zcbar = zcnew;
  }
  return grad;
}

}  // namespace spgd
