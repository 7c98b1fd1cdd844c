"""Continuous-time distributional RL on a finite-difference lattice.

Thin wrapper over the C++ core; every numeric routine lives in ``_qhjb``.
"""

from ._qhjb import (
    ExperimentConfig,
    analytic_kink,
    analytic_return_distribution,
    analytic_value,
    evaluate_checkpoint,
    exact_w2_squared,
    export_checkpoint,
    fd_stencil,
    grad_source,
    jko_objective,
    jko_step,
    quantile_levels,
    run,
    sinkhorn_solve,
    sinkhorn_value,
    train,
)

__all__ = [
    "ExperimentConfig",
    "analytic_kink",
    "analytic_return_distribution",
    "analytic_value",
    "config",
    "evaluate_checkpoint",
    "exact_w2_squared",
    "export_checkpoint",
    "fd_stencil",
    "grad_source",
    "jko_objective",
    "jko_step",
    "quantile_levels",
    "run",
    "sinkhorn_solve",
    "sinkhorn_value",
    "train",
]


def config(path=None, **overrides):
    """Builds an ExperimentConfig from an optional config file plus keyword overrides.

    Keys are the config-file keys; values are rendered with ``str``.
    """
    cfg = ExperimentConfig.from_file(str(path)) if path is not None else ExperimentConfig()
    for key, value in overrides.items():
        cfg.set(key, str(value))
    cfg.validate()
    return cfg
