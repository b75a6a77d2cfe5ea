"""Packet-level simulation of blocks: random runs, tight traces and reordering experiments."""

from .engine import SimConfig, SimReport, check_bounds, concat_reports, default_bounds, simulate_block, trial_seed
from .experiments import (
    hol_equivalence_check,
    random_hol_trace,
    rcsp_backtoback_experiment,
    rgcq_reorder_experiment,
)
from .sources import SourceSpec, conforms, generate
from .tightness import TARGETS, tightness_trace

__all__ = [
    "SimConfig",
    "SimReport",
    "SourceSpec",
    "TARGETS",
    "check_bounds",
    "concat_reports",
    "conforms",
    "default_bounds",
    "generate",
    "hol_equivalence_check",
    "random_hol_trace",
    "rcsp_backtoback_experiment",
    "rgcq_reorder_experiment",
    "simulate_block",
    "tightness_trace",
    "trial_seed",
]
