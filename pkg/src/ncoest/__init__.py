"""Negative-control-outcome estimators of vaccine effects, an exact truth oracle and a simulation harness."""

__version__ = "0.1.0"

from .core import Design, EstimateReport, Method, ScenarioConfig, StudyDataset, TrueEffects, load_dataset, validate, write_dataset
from .datagen import default_params, gen_study
from .estimators import RegressionSpec, joint_mh, joint_nc, joint_reg, naive_mh, naive_reg, ss_joint
from .harness import relative_bias, run_scenario, run_table
from .oracle import calibrate_intercepts, calibrated_params, true_effects

__all__ = [
    "Design",
    "EstimateReport",
    "Method",
    "RegressionSpec",
    "ScenarioConfig",
    "StudyDataset",
    "TrueEffects",
    "calibrate_intercepts",
    "calibrated_params",
    "default_params",
    "gen_study",
    "joint_mh",
    "joint_nc",
    "joint_reg",
    "load_dataset",
    "naive_mh",
    "naive_reg",
    "relative_bias",
    "run_scenario",
    "run_table",
    "ss_joint",
    "true_effects",
    "validate",
    "write_dataset",
]
