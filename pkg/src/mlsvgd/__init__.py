"""Multilevel Stein variational gradient descent with a PDE inverse-problem benchmark."""

from .errors import ConfigError, LevelNotAvailableError, NumericalFailureError
from .experiment import (
    ExperimentConfig,
    RateFit,
    SweepRow,
    estimate_beta,
    generate_reference,
    run_sweep,
    write_sweep_csv,
)
from .fem import ForwardMatrix, Mesh1D, NodalFunction, forward_matrix, observe, solve_bvp, spectral_to_nodal
from .kernels import KernelSpec, kernel_eval, kernel_grad1
from .multilevel import (
    CostLedger,
    CoupledPair,
    MLSchedule,
    init_coupled_pair,
    ledger_costs,
    run_ml,
    run_sl,
    schedule_ml,
    schedule_sl,
)
from .svgd import Ensemble, Functional, RunConfig, estimate, phi_l2_field, svgd_run, svgd_step
from .targets import (
    LevelTargetSpec,
    NoiseSpec,
    PriorSpec,
    analytic_posterior_moments,
    grad_log_posterior,
    synthesize_data,
)

__all__ = [
    "ConfigError",
    "CostLedger",
    "CoupledPair",
    "Ensemble",
    "ExperimentConfig",
    "ForwardMatrix",
    "Functional",
    "KernelSpec",
    "LevelNotAvailableError",
    "LevelTargetSpec",
    "MLSchedule",
    "Mesh1D",
    "NodalFunction",
    "NoiseSpec",
    "NumericalFailureError",
    "PriorSpec",
    "RateFit",
    "RunConfig",
    "SweepRow",
    "analytic_posterior_moments",
    "estimate",
    "estimate_beta",
    "forward_matrix",
    "generate_reference",
    "grad_log_posterior",
    "init_coupled_pair",
    "kernel_eval",
    "kernel_grad1",
    "ledger_costs",
    "observe",
    "phi_l2_field",
    "run_ml",
    "run_sl",
    "run_sweep",
    "schedule_ml",
    "schedule_sl",
    "solve_bvp",
    "spectral_to_nodal",
    "svgd_run",
    "svgd_step",
    "synthesize_data",
    "write_sweep_csv",
]
