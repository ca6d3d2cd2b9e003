"""Invariant extended Kalman filtering with noise-free equality-constraint
pseudo-measurements, and a crane-pendulum Monte-Carlo benchmark."""

from .filters import (
    Belief,
    Iekf,
    NoiseFreeIekf,
    PlanarEkf,
    UpdateReport,
    kf_propagate,
    kf_update,
)
from .gain import (
    NotPsdError,
    PsdFactor,
    factor_psd,
    joseph_update_cov,
    limit_gain,
    noise_free_update_cov,
    pinv,
)
from .lie import SE2_2, SE2_3, GroupElement, PoseGroup, pose_group
from .model import (
    Constraint,
    ImuSample,
    NoiseParams,
    gravity_vector,
    innovation,
    jacobian_F,
    jacobian_H,
    propagate_mean,
)
from .sim import (
    BenchmarkResult,
    CableProfile,
    SimConfig,
    TruthTrajectory,
    crane_constraints,
    run_benchmark,
    run_single,
    simulate_truth,
    synthesize_imu,
)

__version__ = "0.1.0"

__all__ = [
    "Belief",
    "BenchmarkResult",
    "CableProfile",
    "Constraint",
    "GroupElement",
    "Iekf",
    "ImuSample",
    "NoiseFreeIekf",
    "NoiseParams",
    "NotPsdError",
    "PlanarEkf",
    "PoseGroup",
    "PsdFactor",
    "SE2_2",
    "SE2_3",
    "SimConfig",
    "TruthTrajectory",
    "UpdateReport",
    "crane_constraints",
    "factor_psd",
    "gravity_vector",
    "innovation",
    "jacobian_F",
    "jacobian_H",
    "joseph_update_cov",
    "kf_propagate",
    "kf_update",
    "limit_gain",
    "noise_free_update_cov",
    "pinv",
    "pose_group",
    "propagate_mean",
    "run_benchmark",
    "run_single",
    "simulate_truth",
    "synthesize_imu",
]
