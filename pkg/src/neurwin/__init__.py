"""Neural Whittle index learning for restless bandits."""

from .arms import DeadlineArm, RecoveringArm, WirelessArm, make_arm
from .core import Arm, NoisyArm, noisy_wrapper
from .estimator import NeurWINIndex, WhittleIndexOracle
from .harness import ExperimentConfig, evaluate_policy
from .oracle import strong_indexability_check, whittle_indices
from .training import TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "Arm", "DeadlineArm", "ExperimentConfig", "NeurWINIndex", "NoisyArm", "RecoveringArm",
    "TrainingConfig", "WhittleIndexOracle", "WirelessArm", "evaluate_policy", "make_arm",
    "noisy_wrapper", "strong_indexability_check", "train", "whittle_indices",
]
