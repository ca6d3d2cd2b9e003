"""IMU process model, equality-constraint outputs, and invariant Jacobians.

The discrete dynamics driven by gyro rate omega and specific force a are

    R+ = R exp(omega dt),   v+ = v + (R a + g) dt,   p+ = p + v dt,

with the position integrated from the pre-update velocity. A rigid-link
output R r + alpha v + beta p = y becomes the group action chi d with
d = (r, alpha, beta), so the innovation is chi_hat^{-1} y_lifted - d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie import (
    J2,
    GroupElement,
    pose_group,
    rot2,
    so3_exp,
    so3_hat,
)

GRAVITY = 9.81

# The trailing (alpha, beta) entries of a lifted innovation cancel exactly;
# anything above this signals a malformed constraint.
TAIL_TOL = 1e-12


def gravity_vector(spatial_dim: int, magnitude: float = GRAVITY) -> np.ndarray:
    """World-frame gravity, pointing along the negative last axis."""
    g = np.zeros(spatial_dim)
    g[-1] = -magnitude
    return g


@dataclass(frozen=True)
class ImuSample:
    """One IMU reading: angular rate (scalar in 2D, 3-vector in 3D), specific force, step."""

    omega: float | np.ndarray
    accel: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        accel = np.asarray(self.accel, dtype=float)
        if accel.shape not in ((2,), (3,)):
            raise ValueError("accel must be a 2- or 3-vector")
        if accel.shape == (2,):
            omega = float(np.asarray(self.omega))
        else:
            omega = np.asarray(self.omega, dtype=float)
            if omega.shape != (3,):
                raise ValueError("omega must be a 3-vector for a 3D sample")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "omega", omega)

    @property
    def spatial_dim(self) -> int:
        return self.accel.shape[0]


@dataclass(frozen=True)
class NoiseParams:
    """Process noise covariances plus the measurement covariance.

    meas_cov None marks an exactly noise-free pseudo-measurement; updates
    then route through the limit gain instead of inverting H P H^T + N.
    """

    gyro_cov: np.ndarray
    accel_cov: np.ndarray
    meas_cov: np.ndarray | None = None

    def __post_init__(self) -> None:
        gyro = np.atleast_2d(np.asarray(self.gyro_cov, dtype=float))
        accel = np.atleast_2d(np.asarray(self.accel_cov, dtype=float))
        for name, m in (("gyro_cov", gyro), ("accel_cov", accel)):
            if m.shape[0] != m.shape[1] or np.max(np.abs(m - m.T)) > 1e-9:
                raise ValueError(f"{name} must be square symmetric")
        meas = self.meas_cov
        if meas is not None:
            meas = np.atleast_2d(np.asarray(meas, dtype=float))
        object.__setattr__(self, "gyro_cov", gyro)
        object.__setattr__(self, "accel_cov", accel)
        object.__setattr__(self, "meas_cov", meas)

    @classmethod
    def from_stds(
        cls,
        gyro_std: float,
        accel_std: float,
        spatial_dim: int,
        meas_cov: np.ndarray | None = None,
    ) -> "NoiseParams":
        rot_dof = 1 if spatial_dim == 2 else 3
        return cls(
            gyro_cov=gyro_std**2 * np.eye(rot_dof),
            accel_cov=accel_std**2 * np.eye(spatial_dim),
            meas_cov=meas_cov,
        )


@dataclass(frozen=True)
class Constraint:
    """Rigid-link output descriptor: R r + alpha v + beta p = y."""

    r: np.ndarray
    alpha: float
    beta: float
    y: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if r.shape not in ((2,), (3,)) or y.shape != r.shape:
            raise ValueError("r and y must both be 2- or 3-vectors")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "y", y)

    @property
    def spatial_dim(self) -> int:
        return self.r.shape[0]

    @property
    def d(self) -> np.ndarray:
        """Homogeneous descriptor (r, alpha, beta) the group acts on."""
        return np.concatenate([self.r, [self.alpha, self.beta]])

    @property
    def lifted_y(self) -> np.ndarray:
        """Observed output lifted to homogeneous form (y, alpha, beta)."""
        return np.concatenate([self.y, [self.alpha, self.beta]])


def propagate_mean(chi: GroupElement, u: ImuSample, g: np.ndarray) -> GroupElement:
    """One noise-free step of the IMU dynamics."""
    d = chi.spatial_dim
    if u.spatial_dim != d:
        raise ValueError("IMU sample dimension does not match the state")
    if d == 2:
        R_next = chi.R @ rot2(u.omega * u.dt)
    else:
        R_next = chi.R @ so3_exp(u.omega * u.dt)
    v_next = chi.v + (chi.R @ u.accel + np.asarray(g, dtype=float)) * u.dt
    p_next = chi.p + chi.v * u.dt
    return pose_group(d).from_parts(R_next, v_next, p_next)


def jacobian_F(u: ImuSample) -> np.ndarray:
    """State-transition Jacobian of the left-invariant error; state-independent."""
    dt = u.dt
    if u.spatial_dim == 2:
        Om_inv = rot2(u.omega * dt).T
        F = np.zeros((5, 5))
        F[0, 0] = 1.0
        F[1:3, 0] = dt * (Om_inv @ (J2 @ u.accel))
        F[1:3, 1:3] = Om_inv
        F[3:5, 1:3] = dt * Om_inv
        F[3:5, 3:5] = Om_inv
        return F
    Om_inv = so3_exp(u.omega * dt).T
    F = np.zeros((9, 9))
    F[0:3, 0:3] = Om_inv
    F[3:6, 0:3] = -dt * (Om_inv @ so3_hat(u.accel))
    F[3:6, 3:6] = Om_inv
    F[6:9, 3:6] = dt * Om_inv
    F[6:9, 6:9] = Om_inv
    return F


def jacobian_H(c: Constraint) -> np.ndarray:
    """Measurement Jacobian of the innovation in left-invariant coordinates."""
    d = c.spatial_dim
    if d == 2:
        H = np.zeros((2, 5))
        H[:, 0] = J2 @ c.r
        H[:, 1:3] = c.alpha * np.eye(2)
        H[:, 3:5] = c.beta * np.eye(2)
        return H
    H = np.zeros((3, 9))
    H[:, 0:3] = -so3_hat(c.r)
    H[:, 3:6] = c.alpha * np.eye(3)
    H[:, 6:9] = c.beta * np.eye(3)
    return H


def innovation(chi_hat: GroupElement, c: Constraint) -> np.ndarray:
    """Prediction error chi_hat^{-1} (y, alpha, beta) - (r, alpha, beta), top block.

    The trailing two entries cancel identically; a non-cancelling tail means
    the constraint and state disagree structurally and raises ValueError.
    """
    d = c.spatial_dim
    if chi_hat.spatial_dim != d:
        raise ValueError("constraint dimension does not match the state")
    full = chi_hat.inverse().act(c.lifted_y) - c.d
    tail = full[d:]
    if np.max(np.abs(tail)) > TAIL_TOL:
        raise ValueError("malformed constraint: homogeneous tail does not cancel")
    return full[:d]
