"""Monte Carlo extreme-value laws and logarithm laws for random walks on
tori and on spaces of unimodular lattices."""

__version__ = "0.1.0"

from .evt import LimitCurve, MaxSchedule, ScalingSequence, ball_volume_and_w, empirical_cdf, limit_curve, running_maxima
from .lattices import LatticeBasis, haar_sample_2d, modular_distance, reduce_basis, shortest_vector
from .torus import TorusAutomorphism, TorusPoint, apply_automorphism, torus_distance
from .walkcore import GeneratorMeasure, SeedPlan, default_measure, validate_measure, walk_stream

__all__ = [
    "GeneratorMeasure", "LatticeBasis", "LimitCurve", "MaxSchedule", "ScalingSequence", "SeedPlan",
    "TorusAutomorphism", "TorusPoint", "apply_automorphism", "ball_volume_and_w", "default_measure",
    "empirical_cdf", "haar_sample_2d", "limit_curve", "modular_distance", "reduce_basis",
    "running_maxima", "shortest_vector", "torus_distance", "validate_measure", "walk_stream",
]
