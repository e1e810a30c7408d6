"""Sequential A/B testing of long-term treatment effects in a single-trajectory MDP."""

from rlabtest.basis import BasisSpec, ContrastVector, ReferenceDistribution, basis_eval, compute_contrast
from rlabtest.data import Observation, Trajectory
from rlabtest.estimator import EstimatorConfig, SuffStats
from rlabtest.sequential import SequentialPlan, SequentialTest, StageSnapshot, run_sequential_test
from rlabtest.simulator import DesignPolicy, EnvSpec, simulate

__all__ = [
    "BasisSpec",
    "ContrastVector",
    "DesignPolicy",
    "EnvSpec",
    "EstimatorConfig",
    "Observation",
    "ReferenceDistribution",
    "SequentialPlan",
    "SequentialTest",
    "StageSnapshot",
    "SuffStats",
    "Trajectory",
    "basis_eval",
    "compute_contrast",
    "run_sequential_test",
    "simulate",
]

__version__ = "0.1.0"
