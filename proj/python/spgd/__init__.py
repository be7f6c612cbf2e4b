"""SVD-preconditioned gradient descent for nonlinear least squares."""

from ._spgd import (
    InvalidConfig,
    InvalidInput,
    NumericalFailure,
    ResidualProblem,
    damped_apply_dense,
    damped_apply_lanczos,
    discrete_pde,
    fisher_block_apply,
    fit_rate,
    linear_lsq,
    milestones,
    mlp_regression,
    poisson,
    run,
    run_config,
    softmax_toy,
    spectral_probe,
    spgd_direction,
    thin_svd,
)

__all__ = [
    "InvalidConfig",
    "InvalidInput",
    "NumericalFailure",
    "ResidualProblem",
    "damped_apply_dense",
    "damped_apply_lanczos",
    "discrete_pde",
    "fisher_block_apply",
    "fit_rate",
    "linear_lsq",
    "milestones",
    "mlp_regression",
    "poisson",
    "run",
    "run_config",
    "softmax_toy",
    "spectral_probe",
    "spgd_direction",
    "thin_svd",
]
