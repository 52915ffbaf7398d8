"""Denoising of 6-DOF head-impact kinematics with per-axis 1D convolutional models."""

from .core_types import (
    ComponentId,
    ImpactDataset,
    ImpactRecord,
    KinematicsTrace,
    Split,
    partition,
)
from .denoiser import DenoiserSuite, HyperGrid, denoise_trace, fit_suite
from .injury_metrics import HeadInertia, InjuryMetrics, compute_all
from .neuralnet import DenoiserNetwork, Strategy, TrainingConfig
from .synth_data import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "ComponentId",
    "DenoiserNetwork",
    "DenoiserSuite",
    "HeadInertia",
    "HyperGrid",
    "ImpactDataset",
    "ImpactRecord",
    "InjuryMetrics",
    "KinematicsTrace",
    "Split",
    "Strategy",
    "SynthConfig",
    "TrainingConfig",
    "compute_all",
    "denoise_trace",
    "fit_suite",
    "generate",
    "partition",
    "__version__",
]
