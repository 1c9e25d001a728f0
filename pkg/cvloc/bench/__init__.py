from .engine import BenchEngine, BenchReport
from .metrics import ErrorRecord, MetricsTable, Thresholds, aggregate, localization_errors
from .synth import SynthConfig, SynthSample, gen_matches, gen_pose, gen_scene, trial_rng

__all__ = [
    "BenchEngine",
    "BenchReport",
    "ErrorRecord",
    "MetricsTable",
    "SynthConfig",
    "SynthSample",
    "Thresholds",
    "aggregate",
    "gen_matches",
    "gen_pose",
    "gen_scene",
    "localization_errors",
    "trial_rng",
]
