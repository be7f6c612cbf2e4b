#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spgd/diagnostics.hpp"
#include "spgd/harness.hpp"

namespace py = pybind11;
using namespace spgd;

namespace {

PrecondSpec make_spec(const std::string& kind, double mu, double p,
                      Eigen::Index k, double delta, double trunc_tol) {
  PrecondSpec spec;
  if (kind == "exact-svd")
    spec.kind = PrecondKind::ExactSvd;
  else if (kind == "damped-dense")
    spec.kind = PrecondKind::DampedDense;
  else if (kind == "damped-lanczos")
    spec.kind = PrecondKind::DampedLanczos;
  else if (kind == "ce-lanczos")
    spec.kind = PrecondKind::CrossEntropyLanczos;
  else
    throw InvalidConfig("unknown preconditioner: " + kind);
  spec.mu = mu;
  spec.p = p;
  spec.k = k;
  spec.delta = delta;
  spec.trunc_tol = trunc_tol;
  return spec;
}

HyperParams make_hyper(double alpha, double beta1, double beta2, double eps,
                       double factor, long interval, double floor,
                       const PrecondSpec& precond) {
  HyperParams h;
  h.alpha = alpha;
  h.beta1 = beta1;
  h.beta2 = beta2;
  h.eps = eps;
  h.schedule = {factor, interval, floor};
  h.precond = precond;
  return h;
}

py::dict trace_to_dict(const Trace& trace) {
  const size_t n = trace.rows.size();
  Eigen::VectorXd loss(n), grad_norm(n), residual_norm(n), lr(n);
  std::vector<long> epoch(n);
  for (size_t i = 0; i < n; ++i) {
    epoch[i] = trace.rows[i].epoch;
    loss[i] = trace.rows[i].loss;
    grad_norm[i] = trace.rows[i].grad_norm;
    residual_norm[i] = trace.rows[i].residual_norm;
    lr[i] = trace.rows[i].lr;
  }
  py::dict d;
  d["epoch"] = epoch;
  d["loss"] = loss;
  d["grad_norm"] = grad_norm;
  d["residual_norm"] = residual_norm;
  d["lr"] = lr;
  d["diverged"] = trace.diverged;
  d["final_theta"] = trace.final_theta;
  return d;
}

}  // namespace

PYBIND11_MODULE(_spgd, m) {
  m.doc() = "SVD-preconditioned gradient descent for nonlinear least squares";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<InvalidConfig>(m, "InvalidConfig", PyExc_ValueError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure",
                                           PyExc_ArithmeticError);

  m.def(
      "thin_svd",
      [](const Matrix& a, double trunc_tol) {
        const SvdFactors f = thin_svd(a, trunc_tol);
        return py::make_tuple(f.u, f.sigma, f.v, f.rank);
      },
      py::arg("a"), py::arg("trunc_tol") = -1.0,
      "Economy SVD with rank truncation; returns (u, sigma, v, rank).");

  m.def(
      "spgd_direction",
      [](const Matrix& j, const Vector& f, double trunc_tol) {
        return spgd_direction(thin_svd(j, trunc_tol), f);
      },
      py::arg("jacobian"), py::arg("residual"), py::arg("trunc_tol") = -1.0,
      "V U^T F computed through the thin SVD of the Jacobian.");

  m.def("damped_apply_dense", &damped_apply_dense, py::arg("jacobian"),
        py::arg("g"), py::arg("mu"), py::arg("p"),
        "(J^T J + mu I)^{-p} g by dense eigendecomposition.");

  m.def(
      "damped_apply_lanczos",
      [](const Matrix& j, const Vector& g, double mu, double p,
         Eigen::Index k) {
        PrecondSpec spec = make_spec("damped-lanczos", mu, p, k, 1e-4, -1.0);
        return damped_apply_lanczos(matrix_map(j), g, spec);
      },
      py::arg("jacobian"), py::arg("g"), py::arg("mu") = 1e-5,
      py::arg("p") = 0.5, py::arg("k") = 10,
      "(J^T J + mu I)^{-p} g through k Lanczos steps.");

  m.def("fisher_block_apply", &fisher_block_apply, py::arg("probs"),
        py::arg("u"), "diag(p) u - p (p^T u).");

  py::class_<ResidualProblem>(m, "ResidualProblem")
      .def_property_readonly("param_dim", &ResidualProblem::param_dim)
      .def_property_readonly("residual_dim", &ResidualProblem::residual_dim)
      .def("residual", &ResidualProblem::residual)
      .def("jacobian", &ResidualProblem::jacobian)
      .def("jvp", &ResidualProblem::jvp)
      .def("vjp", &ResidualProblem::vjp)
      .def("loss", &ResidualProblem::loss)
      .def("loss_gradient", &ResidualProblem::loss_gradient)
      .def("initial_theta",
           [](const ResidualProblem& p, std::uint64_t seed) {
             Rng rng(seed);
             return p.initial_theta(rng);
           })
      .def("test_loss", &ResidualProblem::test_loss);

  m.def(
      "linear_lsq",
      [](Eigen::Index m_, Eigen::Index n, double kappa, std::uint64_t seed)
          -> std::unique_ptr<ResidualProblem> {
        return std::make_unique<LinearLsq>(make_linear_lsq(m_, n, kappa, seed));
      },
      py::arg("m"), py::arg("n"), py::arg("kappa"), py::arg("seed") = 0);

  m.def(
      "discrete_pde",
      [](Eigen::Index n, const std::string& g, double init_radius)
          -> std::unique_ptr<ResidualProblem> {
        const PdeNonlinearity kind =
            g == "zero" ? PdeNonlinearity::Zero : PdeNonlinearity::Cubic;
        return std::make_unique<DiscretePde>(n, kind, init_radius);
      },
      py::arg("n") = 31, py::arg("g") = "cubic", py::arg("init_radius") = 0.1);

  m.def(
      "mlp_regression",
      [](Eigen::Index dim, double frequency,
         const std::vector<Eigen::Index>& hidden, Eigen::Index batch,
         Eigen::Index test_size,
         std::uint64_t seed) -> std::unique_ptr<ResidualProblem> {
        MlpRegressionConfig cfg;
        cfg.dim = dim;
        cfg.frequency = frequency;
        cfg.hidden = hidden;
        cfg.batch = batch;
        cfg.test_size = test_size;
        cfg.data_seed = seed;
        return std::make_unique<MlpRegression>(cfg);
      },
      py::arg("dim") = 1, py::arg("frequency") = 3.0,
      py::arg("hidden") = std::vector<Eigen::Index>{16, 16},
      py::arg("batch") = 256, py::arg("test_size") = 4096,
      py::arg("seed") = 0);

  m.def(
      "poisson",
      [](Eigen::Index dim, Eigen::Index interior, Eigen::Index boundary,
         double lambda_bc, const std::vector<Eigen::Index>& hidden,
         Eigen::Index test_size,
         std::uint64_t seed) -> std::unique_ptr<ResidualProblem> {
        PoissonConfig cfg;
        cfg.dim = dim;
        cfg.n_interior = interior;
        cfg.n_boundary = boundary;
        cfg.lambda_bc = lambda_bc;
        cfg.hidden = hidden;
        cfg.test_size = test_size;
        cfg.data_seed = seed;
        return std::make_unique<PoissonCollocation>(cfg);
      },
      py::arg("dim") = 2, py::arg("interior") = 256, py::arg("boundary") = 128,
      py::arg("lambda_bc") = 1000.0,
      py::arg("hidden") = std::vector<Eigen::Index>{16, 16},
      py::arg("test_size") = 1024, py::arg("seed") = 0);

  m.def(
      "softmax_toy",
      [](Eigen::Index samples, Eigen::Index features, Eigen::Index classes,
         const std::vector<Eigen::Index>& hidden,
         std::uint64_t seed) -> std::unique_ptr<ResidualProblem> {
        SoftmaxToyConfig cfg;
        cfg.samples = samples;
        cfg.features = features;
        cfg.classes = classes;
        cfg.hidden = hidden;
        cfg.data_seed = seed;
        return std::make_unique<SoftmaxToy>(cfg);
      },
      py::arg("samples") = 64, py::arg("features") = 8, py::arg("classes") = 3,
      py::arg("hidden") = std::vector<Eigen::Index>{}, py::arg("seed") = 0);

  m.def(
      "run",
      [](ResidualProblem& p, const std::string& method, long epochs,
         std::uint64_t seed, double alpha, double beta1, double beta2,
         double eps, double factor, long interval, double floor,
         const std::string& precond, double mu, double pexp, Eigen::Index k,
         double delta, double trunc_tol) {
        const PrecondSpec spec =
            make_spec(precond, mu, pexp, k, delta, trunc_tol);
        const HyperParams h = make_hyper(alpha, beta1, beta2, eps, factor,
                                         interval, floor, spec);
        const Trace trace =
            run(p, method_from_name(method), h, epochs, seed);
        return trace_to_dict(trace);
      },
      py::arg("problem"), py::arg("method"), py::arg("epochs"),
      py::arg("seed") = 0, py::arg("alpha") = 1e-2, py::arg("beta1") = 0.9,
      py::arg("beta2") = 0.999, py::arg("eps") = 1e-8,
      py::arg("factor") = 1.0, py::arg("interval") = 1,
      py::arg("floor") = 0.0, py::arg("precond") = "exact-svd",
      py::arg("mu") = 1e-5, py::arg("p") = 0.5, py::arg("k") = 10,
      py::arg("delta") = 1e-4, py::arg("trunc_tol") = -1.0,
      "Optimize and return the trace as a dict of arrays.");

  m.def(
      "fit_rate",
      [](const Vector& losses, long start, long end) {
        std::vector<TraceRow> rows(losses.size());
        for (Eigen::Index i = 0; i < losses.size(); ++i) {
          rows[i].epoch = i;
          rows[i].loss = losses[i];
        }
        const RateFit fit =
            end < 0 ? fit_rate_tail(rows) : fit_rate(rows, start, end);
        return py::make_tuple(fit.rho, fit.r2);
      },
      py::arg("losses"), py::arg("start") = 0, py::arg("end") = -1,
      "Fitted per-step loss contraction (rho, r2) on a loss sequence.");

  m.def(
      "milestones",
      [](const Vector& losses, const std::vector<double>& thresholds) {
        std::vector<TraceRow> rows(losses.size());
        for (Eigen::Index i = 0; i < losses.size(); ++i) {
          rows[i].epoch = i;
          rows[i].loss = losses[i];
        }
        py::dict out;
        for (const auto& [tau, epoch] : milestones(rows, thresholds))
          out[py::float_(tau)] =
              epoch ? py::object(py::int_(*epoch)) : py::none();
        return out;
      },
      py::arg("losses"), py::arg("thresholds"));

  m.def(
      "spectral_probe",
      [](const ResidualProblem& p, const Vector& theta) {
        const SpectralProbe probe = spectral_probe(p, theta);
        py::dict d;
        d["sigma_min"] = probe.sigma_min;
        d["sigma_max"] = probe.sigma_max;
        d["kappa"] = probe.kappa;
        d["rank"] = probe.rank;
        return d;
      },
      py::arg("problem"), py::arg("theta"));

  m.def(
      "run_config",
      [](const std::string& path, const std::string& out_dir, bool compare,
         bool quiet) {
        RunConfig cfg = load_config(path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        std::ostringstream log;
        const int rc = compare ? cli_compare(cfg, quiet, log)
                               : cli_run(cfg, quiet, log);
        return py::make_tuple(rc, log.str());
      },
      py::arg("path"), py::arg("out_dir") = "", py::arg("compare") = false,
      py::arg("quiet") = true,
      "Execute a harness config file; returns (exit_code, log).");
}
