"""Radial variational inference with a piecewise-linear transport-map dictionary."""
from .basis import Dictionary, apply_map, build_dictionary, invert_radial, radial_value
from .config import ConfigError, RunConfig, load_config, preset
from .gram import GramMatrix, gram_matrix
from .metrics import MetricReport, empirical_w2_squared, map_error_l2, snis_estimate
from .optimizer import OptimizerConfig, RadVIResult, radvi_run, radvi_step
from .oracles import RadialOracle, oracle_for_target
from .projection import project_nonneg_Q
from .runner import run, sweep
from .targets import TargetSpec, build_target, make_anisotropic
from .whitening import CompositeMap, GVIConfig, WhiteningTransform, gaussian_vi, laplace_approx, whiten_target

__version__ = "0.1.0"

__all__ = [
    "CompositeMap", "ConfigError", "Dictionary", "GVIConfig", "GramMatrix", "MetricReport",
    "OptimizerConfig", "RadVIResult", "RadialOracle", "RunConfig", "TargetSpec", "WhiteningTransform",
    "apply_map", "build_dictionary", "build_target", "empirical_w2_squared", "gaussian_vi",
    "gram_matrix", "invert_radial", "laplace_approx", "load_config", "make_anisotropic",
    "map_error_l2", "oracle_for_target", "preset", "project_nonneg_Q", "radial_value",
    "radvi_run", "radvi_step", "run", "snis_estimate", "sweep", "whiten_target",
]
