"""Desk-scale sweeps that check the analytic collapse theory."""

from .grid import Axis, SweepGrid, dump_json, fmt_value
from .sweeps import (
    DownstreamTask,
    beta_collapse_sweep,
    classify_origin,
    critical_n_sweep,
    downstream_eval,
    imbalance_robustness,
    landscape_slice,
    normalization_collapse,
    normalized_collapse_sigma,
    phase_boundary_check,
    phase_diagram,
    ridge_fit,
    sigma_scaling,
    trained_collapsed,
)

EXPERIMENTS = (
    "sigma_scaling",
    "critical_n_sweep",
    "beta_collapse_sweep",
    "normalization_collapse",
    "phase_diagram",
    "downstream_eval",
    "imbalance_robustness",
    "landscape_slice",
)

__all__ = [
    "EXPERIMENTS",
    "Axis",
    "DownstreamTask",
    "SweepGrid",
    "beta_collapse_sweep",
    "classify_origin",
    "critical_n_sweep",
    "downstream_eval",
    "dump_json",
    "normalized_collapse_sigma",
    "fmt_value",
    "imbalance_robustness",
    "landscape_slice",
    "normalization_collapse",
    "phase_boundary_check",
    "phase_diagram",
    "ridge_fit",
    "sigma_scaling",
    "trained_collapsed",
]
