"""Active multi-task linear representation learning."""

import json

from ._amtl import (
    BudgetError,
    ConfigError,
    GroundTruth,
    IoError,
    __version__,
    allocate_active,
    allocate_known,
    allocate_uniform,
    beta_theory,
    fit_joint_erm,
    fit_target_head,
    make_random_environment,
    make_sparse_example,
    min_norm_combination,
    read_npy,
    s_star,
    sample_task,
    source_bound_known,
    source_bound_uniform,
    subspace_distance,
    write_npy,
)
from . import _amtl


def resolve_config(config):
    """Validated configuration with every default filled in."""
    return json.loads(_amtl._resolve_config(json.dumps(config)))


def run_experiment(config):
    """Runs a configuration in memory and returns the summary document."""
    return json.loads(_amtl._run_experiment(json.dumps(config)))


def run_and_write(config):
    """Runs a configuration, writes runlog.csv and summary.json to out_dir and
    returns the process-style exit code."""
    return _amtl._run_and_write(json.dumps(config))


__all__ = [name for name in dir() if not name.startswith("_")]
