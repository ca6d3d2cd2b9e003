"""Rank-aware covariance factorization and the noise-free limit Kalman gain.

The gain K = L (H L)^+, with P = L L^T a full-column-rank factorization, is
the limit of P H^T (H P H^T + N)^{-1} as the measurement noise N shrinks to
zero. It stays well defined when H P H^T is singular, which is exactly what
happens when a noise-free measurement is repeated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative spectral cutoff shared by rank detection and the pseudo-inverse.
DEFAULT_REL_TOL = 1e-10

# Absolute dead-band: eigenvalues this close to zero are roundoff residue
# (e.g. a covariance fully annihilated by a noise-free update) and count
# neither toward the rank nor as indefiniteness.
ZERO_EIG_BAND = 100 * np.finfo(float).eps

SYM_TOL = 1e-9


class NotPsdError(ValueError):
    """Raised when a matrix required to be PSD has a significantly negative eigenvalue."""


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class PsdFactor:
    """Full-column-rank factor L of a PSD matrix P = L L^T.

    L has shape (dim, rank); its columns are orthogonal with norms equal to
    the square roots of the retained eigenvalues, so they are linearly
    independent by construction.
    """

    L: np.ndarray
    rank: int
    dim: int

    def reconstruct(self) -> np.ndarray:
        return self.L @ self.L.T


def factor_psd(P: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> PsdFactor:
    """Spectral factorization P = L L^T with rank decided by a relative cutoff.

    Eigenvalues above rel_tol times the largest one count toward the rank.
    An eigenvalue below minus that cutoff raises NotPsdError.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be square")
    asym = np.max(np.abs(P - P.T)) if P.size else 0.0
    if asym > SYM_TOL * max(1.0, np.max(np.abs(P))):
        raise ValueError("P must be symmetric within tolerance")
    P = symmetrize(P)
    w, U = np.linalg.eigh(P)
    lam_max = max(float(w[-1]), 0.0) if w.size else 0.0
    cutoff = max(rel_tol * lam_max, ZERO_EIG_BAND)
    if w.size and float(w[0]) < -cutoff:
        raise NotPsdError(f"matrix has negative eigenvalue {w[0]:.3e}")
    keep = w > cutoff
    L = U[:, keep] * np.sqrt(w[keep])
    return PsdFactor(L=L, rank=int(np.count_nonzero(keep)), dim=P.shape[0])


def pinv(A: np.ndarray, rel_tol: float = DEFAULT_REL_TOL, scale: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD with a relative singular-value cutoff.

    Singular values at or below rel_tol * scale are treated as zero; scale
    defaults to the largest singular value of A. Passing an external scale
    lets callers zero out blocks that are pure roundoff relative to the
    magnitudes they came from (e.g. H L after an exact annihilation).
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if scale is None:
        scale = float(s[0]) if s.size else 0.0
    keep = s > rel_tol * scale
    if not np.any(keep):
        return np.zeros((A.shape[1], A.shape[0]))
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def limit_gain(P_prior: np.ndarray, H: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Noise-free Kalman gain K = L (H L)^+ for prior covariance P = L L^T.

    A measurement already fully absorbed into P leaves H L at pure roundoff
    relative to |H| sigma_max(L); the gain is then exactly zero rather than a
    blown-up inverse, which makes repeated noise-free measurements no-ops.
    """
    H = np.asarray(H, dtype=float)
    factor = factor_psd(P_prior, rel_tol)
    if H.shape[1] != factor.dim:
        raise ValueError("H column count must match the covariance dimension")
    A = H @ factor.L
    if _roundoff_only(A, H, factor.L, rel_tol):
        return np.zeros((factor.dim, H.shape[0]))
    return factor.L @ pinv(A, rel_tol)


def gain_scale(H: np.ndarray, L: np.ndarray) -> float:
    """Reference magnitude |H|_2 sigma_max(L) for cutoffs on H L."""
    if L.size == 0 or H.size == 0:
        return 0.0
    return float(np.linalg.norm(H, 2) * np.linalg.norm(L, 2))


def _roundoff_only(A: np.ndarray, H: np.ndarray, L: np.ndarray, rel_tol: float) -> bool:
    if A.size == 0:
        return True
    return float(np.linalg.norm(A, 2)) <= rel_tol * gain_scale(H, L)


def noise_free_update_cov(P_prior: np.ndarray, H: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Joseph-form covariance update with zero measurement noise.

    With K from limit_gain on the same (P_prior, H), the result annihilates
    the measured directions: H P_post = 0 up to roundoff.
    """
    P_prior = np.asarray(P_prior, dtype=float)
    IKH = np.eye(P_prior.shape[0]) - np.asarray(K) @ np.asarray(H)
    return symmetrize(IKH @ P_prior @ IKH.T)


def joseph_update_cov(P_prior: np.ndarray, H: np.ndarray, K: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Joseph-form covariance update with measurement noise N."""
    P_prior = np.asarray(P_prior, dtype=float)
    K = np.asarray(K, dtype=float)
    IKH = np.eye(P_prior.shape[0]) - K @ np.asarray(H)
    return symmetrize(IKH @ P_prior @ IKH.T + K @ np.asarray(N) @ K.T)


def plain_update_cov(P_prior: np.ndarray, H: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Textbook covariance update (I - K H) P; kept for fidelity checks only."""
    P_prior = np.asarray(P_prior, dtype=float)
    IKH = np.eye(P_prior.shape[0]) - np.asarray(K) @ np.asarray(H)
    return IKH @ P_prior
