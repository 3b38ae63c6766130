"""Simulation protocols: random ground truth, corruptions and experiment runners."""

from transync.simulate.experiments import (
    GppConfig,
    NoiseConfig,
    ResultRow,
    format_result_table,
    load_shape_source,
    parse_config,
    run_experiment,
    run_gpp_experiment,
    run_noise_experiment,
    write_result_table,
)
from transync.simulate.generate import (
    GroundTruth,
    NoiseSpec,
    add_gaussian_noise,
    drop_points,
    gen_ground_truth,
    gen_shapes,
    scramble_correspondences,
    transform_error,
)

__all__ = [
    "GppConfig",
    "GroundTruth",
    "NoiseConfig",
    "NoiseSpec",
    "ResultRow",
    "add_gaussian_noise",
    "drop_points",
    "format_result_table",
    "gen_ground_truth",
    "gen_shapes",
    "load_shape_source",
    "parse_config",
    "run_experiment",
    "run_gpp_experiment",
    "run_noise_experiment",
    "scramble_correspondences",
    "transform_error",
    "write_result_table",
]
