"""Kalman filters sharing one belief currency.

Four variants:

* plain linear KF (kf_propagate / kf_update), including the noise-free
  limit-gain path when the measurement covariance is None;
* Iekf, the invariant EKF whose error lives in the tangent space of the
  extended-pose group, updated with a small measurement covariance;
* NoiseFreeIekf, which computes the limit gain once per epoch and cycles
  the same correction until the innovation stabilizes;
* PlanarEkf, a conventional EKF in the additive (theta, v, p) chart, used
  as the benchmark baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gain import (
    DEFAULT_REL_TOL,
    _roundoff_only,
    factor_psd,
    joseph_update_cov,
    limit_gain,
    noise_free_update_cov,
    pinv,
    plain_update_cov,
    symmetrize,
)
from .lie import J2, GroupElement, pose_group, rot2
from .model import (
    Constraint,
    ImuSample,
    NoiseParams,
    innovation,
    jacobian_F,
    jacobian_H,
    propagate_mean,
)


@dataclass(frozen=True)
class Belief:
    """Estimate mean (group element, or a plain vector for linear/chart filters)
    with a PSD covariance over the corresponding error coordinates."""

    mean: GroupElement | np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("cov must be square")
        if np.max(np.abs(cov - cov.T)) > 1e-9 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("cov must be symmetric within tolerance")
        cov = symmetrize(cov)
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class UpdateReport:
    """What one measurement epoch did: correction cycles, the innovation-norm
    sequence (length iterations + 1), the split of the initial innovation into
    its correctable part (range of H L) and the leftover the gain cannot see,
    and whether the cycle loop failed to stabilize."""

    iterations: int
    residual_norms: tuple[float, ...]
    z_par_norm: float
    z_perp_norm: float
    diverged: bool


def _split_innovation(z: np.ndarray, HL: np.ndarray, rel_tol: float) -> tuple[float, float]:
    """Norms of the projections of z onto range(HL) and its orthogonal complement."""
    if HL.size == 0:
        return 0.0, float(np.linalg.norm(z))
    U, s, _ = np.linalg.svd(HL, full_matrices=False)
    Ur = U[:, s > rel_tol * s[0]] if s[0] > 0 else U[:, :0]
    z_par = Ur @ (Ur.T @ z)
    return float(np.linalg.norm(z_par)), float(np.linalg.norm(z - z_par))


def _gain_solve(P: np.ndarray, H: np.ndarray, N: np.ndarray) -> np.ndarray:
    """K = P H^T (H P H^T + N)^{-1}; a singular innovation covariance raises."""
    S = H @ P @ H.T + N
    return np.linalg.solve(S, H @ P).T


def kf_propagate(
    belief: Belief,
    F: np.ndarray,
    B: np.ndarray | None = None,
    u: np.ndarray | None = None,
    Q: np.ndarray | None = None,
) -> Belief:
    """Linear propagation x+ = F x + B u, P+ = F P F^T + Q."""
    F = np.asarray(F, dtype=float)
    x = F @ belief.mean
    if B is not None:
        x = x + np.asarray(B, dtype=float) @ np.asarray(u, dtype=float)
    P = F @ belief.cov @ F.T
    if Q is not None:
        P = P + np.asarray(Q, dtype=float)
    return Belief(x, symmetrize(P))


def kf_update(
    belief: Belief,
    H: np.ndarray,
    y: np.ndarray,
    N: np.ndarray | None = None,
    *,
    joseph: bool = True,
    rel_tol: float = DEFAULT_REL_TOL,
) -> Belief:
    """Linear measurement update; N None means an exactly noise-free output.

    The noise-free path uses the limit gain, so repeated measurements and
    rank-deficient innovation covariances never hit a singular inversion.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    P = belief.cov
    z = y - H @ belief.mean
    if N is None:
        K = limit_gain(P, H, rel_tol)
        P_post = noise_free_update_cov(P, H, K) if joseph else plain_update_cov(P, H, K)
    else:
        N = np.asarray(N, dtype=float)
        K = _gain_solve(P, H, N)
        P_post = joseph_update_cov(P, H, K, N) if joseph else plain_update_cov(P, H, K)
    return Belief(belief.mean + K @ z, P_post)


class _InvariantFilter:
    """Shared invariant-filter plumbing: mean on the group, covariance over
    left-invariant tangent errors, process noise mapped block-wise into the
    (rotation, velocity, position) coordinates."""

    def __init__(self, noise: NoiseParams, gravity: np.ndarray, rel_tol: float = DEFAULT_REL_TOL):
        self.noise = noise
        self.gravity = np.asarray(gravity, dtype=float)
        self.group = pose_group(self.gravity.shape[0])
        self.rel_tol = rel_tol
        r, d, dof = self.group.rot_dof, self.group.spatial_dim, self.group.dof
        if noise.gyro_cov.shape != (r, r) or noise.accel_cov.shape != (d, d):
            raise ValueError("noise covariance shapes do not match the spatial dimension")
        Q = np.zeros((dof, dof))
        Q[:r, :r] = noise.gyro_cov
        Q[r:r + d, r:r + d] = noise.accel_cov
        Q.setflags(write=False)
        self.process_cov = Q

    def init_belief(self, chi0_hat: GroupElement, P0: np.ndarray) -> Belief:
        return Belief(chi0_hat, np.asarray(P0, dtype=float))

    def mean_pose(self, belief: Belief) -> GroupElement:
        return belief.mean

    def propagate(self, belief: Belief, u: ImuSample) -> Belief:
        mean = propagate_mean(belief.mean, u, self.gravity)
        F = jacobian_F(u)
        P = F @ belief.cov @ F.T + self.process_cov * u.dt
        return Belief(mean, symmetrize(P))


class Iekf(_InvariantFilter):
    """Invariant EKF: chi+ = chi exp(K z) with the standard gain when meas_cov
    is set; with meas_cov None the gain routes through the noise-free limit."""

    def update(self, belief: Belief, c: Constraint) -> tuple[Belief, UpdateReport]:
        P = belief.cov
        H = jacobian_H(c)
        z = innovation(belief.mean, c)
        if self.noise.meas_cov is None:
            K = limit_gain(P, H, self.rel_tol)
            P_post = noise_free_update_cov(P, H, K)
        else:
            K = _gain_solve(P, H, self.noise.meas_cov)
            P_post = joseph_update_cov(P, H, K, self.noise.meas_cov)
        mean = belief.mean @ self.group.exp(K @ z)
        z_post = innovation(mean, c)
        par, perp = _split_innovation(z, H @ factor_psd(P, self.rel_tol).L, self.rel_tol)
        report = UpdateReport(
            iterations=1,
            residual_norms=(float(np.linalg.norm(z)), float(np.linalg.norm(z_post))),
            z_par_norm=par,
            z_perp_norm=perp,
            diverged=False,
        )
        return Belief(mean, P_post), report


# Stabilization defaults for the noise-free filter. The exact limit gain has
# no noise floor: along directions whose measured expression is far below the
# dominant one, it amplifies the O(|xi|^2) linearization residue instead of
# signal, which can run the filter off. A coarser gain cutoff refuses those
# directions, and a small position jitter keeps the directions annihilated by
# previous updates from going numerically dead (process noise is what re-opens
# them; the plain IMU noise model injects none into position).
NF_GAIN_REL_TOL = 3e-3
NF_POS_JITTER_STD = 3e-5  # metres per sample


class NoiseFreeIekf(_InvariantFilter):
    """Invariant EKF for noise-free pseudo-measurements.

    Each epoch computes the limit gain once, then re-applies the same gain to
    the recomputed innovation until successive innovations differ by less
    than tol. The covariance is updated once, in Joseph form, after the loop.
    A capped or non-decreasing cycle marks the report diverged and keeps the
    iterate with the smallest innovation norm.
    """

    def __init__(
        self,
        noise: NoiseParams,
        gravity: np.ndarray,
        tol: float = 1e-7,
        max_iter: int = 20,
        gain_rel_tol: float = NF_GAIN_REL_TOL,
        pos_jitter_std: float = NF_POS_JITTER_STD,
        rel_tol: float = DEFAULT_REL_TOL,
    ):
        super().__init__(noise, gravity, rel_tol)
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.tol = tol
        self.max_iter = max_iter
        self.gain_rel_tol = gain_rel_tol
        self.pos_jitter_std = pos_jitter_std

    def propagate(self, belief: Belief, u: ImuSample) -> Belief:
        out = super().propagate(belief, u)
        if self.pos_jitter_std == 0.0:
            return out
        d = self.group.spatial_dim
        P = np.array(out.cov)
        pos = slice(self.group.rot_dof + d, self.group.dof)
        P[pos, pos] += self.pos_jitter_std**2 * np.eye(d)
        return Belief(out.mean, P)

    def update(self, belief: Belief, c: Constraint) -> tuple[Belief, UpdateReport]:
        P = belief.cov
        H = jacobian_H(c)
        # The coarse cutoff restricts the gain to the dominant covariance
        # subspace; directions whose eigenvalues or measured expression sit far
        # below the leading ones carry linearization residue, not signal.
        factor = factor_psd(P, self.gain_rel_tol)
        HL = H @ factor.L
        if _roundoff_only(HL, H, factor.L, self.rel_tol):
            K = np.zeros((factor.dim, H.shape[0]))
        else:
            K = factor.L @ pinv(HL, self.gain_rel_tol)

        chi = belief.mean
        z = innovation(chi, c)
        norms = [float(np.linalg.norm(z))]
        iterates = [(chi, norms[0])]
        par, perp = _split_innovation(z, HL, self.rel_tol)

        applied = 0
        stabilized = False
        while applied < self.max_iter:
            corr = K @ z
            if not corr.any():
                stabilized = True
                break
            chi = chi @ self.group.exp(corr)
            z_prev = z
            z = innovation(chi, c)
            applied += 1
            norms.append(float(np.linalg.norm(z)))
            iterates.append((chi, norms[-1]))
            if np.linalg.norm(z - z_prev) <= self.tol:
                stabilized = True
                break

        monotone = all(norms[i + 1] <= norms[i] + self.tol for i in range(len(norms) - 1))
        diverged = (not stabilized) or (not monotone)
        if diverged:
            chi = min(iterates, key=lambda it: it[1])[0]

        P_post = noise_free_update_cov(P, H, K)
        report = UpdateReport(
            iterations=applied,
            residual_norms=tuple(norms),
            z_par_norm=par,
            z_perp_norm=perp,
            diverged=diverged,
        )
        return Belief(chi, P_post), report


class PlanarEkf:
    """Conventional EKF in the additive planar chart x = (theta, v, p).

    Jacobians come from differentiating the IMU step and the rigid-link
    output directly in this chart; the update uses a small measurement
    covariance, which must therefore be set in the noise parameters.
    """

    def __init__(self, noise: NoiseParams, gravity: np.ndarray):
        self.noise = noise
        self.gravity = np.asarray(gravity, dtype=float)
        if self.gravity.shape != (2,):
            raise ValueError("PlanarEkf is two-dimensional")
        if noise.meas_cov is None:
            raise ValueError("PlanarEkf needs a measurement covariance")
        Q = np.zeros((5, 5))
        Q[0, 0] = noise.gyro_cov[0, 0]
        Q[1:3, 1:3] = noise.accel_cov
        Q.setflags(write=False)
        self.process_cov = Q

    def init_belief(self, chi0_hat: GroupElement, P0: np.ndarray) -> Belief:
        theta = float(np.arctan2(chi0_hat.R[1, 0], chi0_hat.R[0, 0]))
        x = np.concatenate([[theta], chi0_hat.v, chi0_hat.p])
        return Belief(x, np.asarray(P0, dtype=float))

    def mean_pose(self, belief: Belief) -> GroupElement:
        x = belief.mean
        return pose_group(2).from_parts(rot2(x[0]), x[1:3], x[3:5])

    def step_mean(self, x: np.ndarray, u: ImuSample) -> np.ndarray:
        R = rot2(x[0])
        return np.concatenate([
            [x[0] + u.omega * u.dt],
            x[1:3] + (R @ u.accel + self.gravity) * u.dt,
            x[3:5] + x[1:3] * u.dt,
        ])

    def transition_jacobian(self, x: np.ndarray, u: ImuSample) -> np.ndarray:
        F = np.eye(5)
        F[1:3, 0] = u.dt * (J2 @ rot2(x[0]) @ u.accel)
        F[3:5, 1:3] = u.dt * np.eye(2)
        return F

    def measure(self, x: np.ndarray, c: Constraint) -> np.ndarray:
        return rot2(x[0]) @ c.r + c.alpha * x[1:3] + c.beta * x[3:5]

    def measurement_jacobian(self, x: np.ndarray, c: Constraint) -> np.ndarray:
        H = np.zeros((2, 5))
        H[:, 0] = J2 @ rot2(x[0]) @ c.r
        H[:, 1:3] = c.alpha * np.eye(2)
        H[:, 3:5] = c.beta * np.eye(2)
        return H

    def propagate(self, belief: Belief, u: ImuSample) -> Belief:
        F = self.transition_jacobian(belief.mean, u)
        P = F @ belief.cov @ F.T + self.process_cov * u.dt
        return Belief(self.step_mean(belief.mean, u), symmetrize(P))

    def update(self, belief: Belief, c: Constraint) -> tuple[Belief, UpdateReport]:
        x, P = belief.mean, belief.cov
        z = c.y - self.measure(x, c)
        H = self.measurement_jacobian(x, c)
        K = _gain_solve(P, H, self.noise.meas_cov)
        x_post = x + K @ z
        P_post = joseph_update_cov(P, H, K, self.noise.meas_cov)
        z_post = c.y - self.measure(x_post, c)
        par, perp = _split_innovation(z, H @ factor_psd(P).L, DEFAULT_REL_TOL)
        report = UpdateReport(
            iterations=1,
            residual_norms=(float(np.linalg.norm(z)), float(np.linalg.norm(z_post))),
            z_par_norm=par,
            z_perp_norm=perp,
            diverged=False,
        )
        return Belief(x_post, P_post), report
