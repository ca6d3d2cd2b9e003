"""Matrix Lie group kernels for SO(2), SO(3) and the extended-pose groups.

An extended pose bundles rotation R, velocity v and position p into one
square matrix [R v p; 0 1 0; 0 0 1] (4x4 planar, 5x5 spatial). Tangent
coordinates are ordered (rotation, velocity, position).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation magnitude the trig coefficients switch to Taylor forms.
SMALL_ANGLE = 1e-7

# Orthogonality drift on R beyond this triggers polar re-projection.
ORTHO_TOL = 1e-9

# Principal logs require the rotation angle strictly inside (-pi, pi).
BRANCH_TOL = 1e-9

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])
J2.setflags(write=False)


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def so2_hat(theta: float) -> np.ndarray:
    return float(theta) * J2


def so2_vee(M: np.ndarray) -> float:
    return float(M[1, 0])


def so2_log(R: np.ndarray) -> float:
    """Principal rotation angle; raises at the +-pi branch cut."""
    theta = float(np.arctan2(R[1, 0], R[0, 0]))
    if np.pi - abs(theta) < BRANCH_TOL:
        raise ValueError("rotation angle at the +-pi branch cut, principal log undefined")
    return theta


def so3_hat(w: np.ndarray) -> np.ndarray:
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_vee(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    S = so3_hat(w)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * S + b * (S @ S)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Principal rotation vector; raises at the +-pi branch cut."""
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if np.pi - theta < BRANCH_TOL:
        raise ValueError("rotation angle at the +-pi branch cut, principal log undefined")
    # so3_vee(R - R^T) = 2 sin(theta) * axis
    if theta < SMALL_ANGLE:
        factor = 0.5 + theta**2 / 12.0
    else:
        factor = theta / (2.0 * np.sin(theta))
    return factor * so3_vee(R - R.T)


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    S = so3_hat(w)
    if theta < SMALL_ANGLE:
        b = 0.5 - theta**2 / 24.0
        c = 1.0 / 6.0 - theta**2 / 120.0
    else:
        b = (1.0 - np.cos(theta)) / theta**2
        c = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + b * S + c * (S @ S)


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    S = so3_hat(w)
    if theta < SMALL_ANGLE:
        c = 1.0 / 12.0 + theta**2 / 720.0
    else:
        c = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * S + c * (S @ S)


def _planar_coeffs(theta: float) -> tuple[float, float]:
    if abs(theta) < SMALL_ANGLE:
        return 1.0 - theta**2 / 6.0, theta / 2.0 - theta**3 / 24.0
    return np.sin(theta) / theta, (1.0 - np.cos(theta)) / theta


def planar_left_jacobian(theta: float) -> np.ndarray:
    a, b = _planar_coeffs(theta)
    return a * np.eye(2) + b * J2


def planar_left_jacobian_inv(theta: float) -> np.ndarray:
    a, b = _planar_coeffs(theta)
    return (a * np.eye(2) - b * J2) / (a * a + b * b)


@dataclass(frozen=True)
class GroupElement:
    """Extended pose [R v p; 0 1 0; 0 0 1].

    Construction snaps the two bottom rows exactly and re-orthonormalizes R
    by polar projection whenever its orthogonality drift exceeds ORTHO_TOL.
    The stored matrix is read-only; instances are safe to share.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape not in ((4, 4), (5, 5)):
            raise ValueError(f"expected a 4x4 or 5x5 extended-pose matrix, got {m.shape}")
        d = m.shape[0] - 2
        bottom = np.zeros((2, d + 2))
        bottom[0, d] = 1.0
        bottom[1, d + 1] = 1.0
        if np.max(np.abs(m[d:, :] - bottom)) > ORTHO_TOL:
            raise ValueError("bottom rows must be [0 1 0] and [0 0 1]")
        R = m[:d, :d]
        if np.linalg.det(R) <= 0.0:
            raise ValueError("rotation block must have positive determinant")
        if np.max(np.abs(R.T @ R - np.eye(d))) > ORTHO_TOL:
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
        out = np.zeros_like(m)
        out[:d, :d] = R
        out[:d, d] = m[:d, d]
        out[:d, d + 1] = m[:d, d + 1]
        out[d:, :] = bottom
        out.setflags(write=False)
        object.__setattr__(self, "matrix", out)

    @property
    def spatial_dim(self) -> int:
        return self.matrix.shape[0] - 2

    @property
    def R(self) -> np.ndarray:
        d = self.spatial_dim
        return self.matrix[:d, :d]

    @property
    def v(self) -> np.ndarray:
        d = self.spatial_dim
        return self.matrix[:d, d]

    @property
    def p(self) -> np.ndarray:
        d = self.spatial_dim
        return self.matrix[:d, d + 1]

    def compose(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.matrix @ other.matrix)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return self.compose(other)

    def inverse(self) -> "GroupElement":
        d = self.spatial_dim
        Rt = self.R.T
        out = np.eye(d + 2)
        out[:d, :d] = Rt
        out[:d, d] = -Rt @ self.v
        out[:d, d + 1] = -Rt @ self.p
        return GroupElement(out)

    def act(self, d_vec: np.ndarray) -> np.ndarray:
        """Apply the group element to a homogeneous vector (r, alpha, beta)."""
        d_vec = np.asarray(d_vec, dtype=float)
        if d_vec.shape != (self.matrix.shape[0],):
            raise ValueError(f"expected a homogeneous vector of length {self.matrix.shape[0]}")
        return self.matrix @ d_vec


class PoseGroup:
    """Extended-pose group keyed by spatial dimension: 2 (planar) or 3.

    Tangent vectors stack (rotation, velocity, position) blocks, giving
    5 degrees of freedom in the plane and 9 in space.
    """

    def __init__(self, spatial_dim: int):
        if spatial_dim not in (2, 3):
            raise ValueError("spatial_dim must be 2 or 3")
        self.spatial_dim = spatial_dim
        self.rot_dof = 1 if spatial_dim == 2 else 3
        self.dof = self.rot_dof + 2 * spatial_dim
        self.matrix_size = spatial_dim + 2

    def _check_tangent(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dof,):
            raise ValueError(f"expected a tangent vector of length {self.dof}, got {xi.shape}")
        return xi

    def split(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xi = self._check_tangent(xi)
        r, d = self.rot_dof, self.spatial_dim
        return xi[:r], xi[r:r + d], xi[r + d:]

    def hat(self, xi: np.ndarray) -> np.ndarray:
        rot, v, p = self.split(xi)
        d = self.spatial_dim
        out = np.zeros((d + 2, d + 2))
        out[:d, :d] = so2_hat(rot[0]) if d == 2 else so3_hat(rot)
        out[:d, d] = v
        out[:d, d + 1] = p
        return out

    def vee(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != (self.matrix_size, self.matrix_size):
            raise ValueError(f"expected a {self.matrix_size}x{self.matrix_size} algebra matrix")
        d = self.spatial_dim
        rot = [so2_vee(M[:d, :d])] if d == 2 else list(so3_vee(M[:d, :d]))
        return np.array(rot + list(M[:d, d]) + list(M[:d, d + 1]))

    def exp(self, xi: np.ndarray) -> GroupElement:
        rot, v, p = self.split(xi)
        d = self.spatial_dim
        if d == 2:
            R = rot2(rot[0])
            V = planar_left_jacobian(rot[0])
        else:
            R = so3_exp(rot)
            V = so3_left_jacobian(rot)
        return self.from_parts(R, V @ v, V @ p)

    def log(self, chi: GroupElement) -> np.ndarray:
        if chi.spatial_dim != self.spatial_dim:
            raise ValueError("group element dimension mismatch")
        if self.spatial_dim == 2:
            theta = so2_log(chi.R)
            Vinv = planar_left_jacobian_inv(theta)
            rot = [theta]
        else:
            w = so3_log(chi.R)
            Vinv = so3_left_jacobian_inv(w)
            rot = list(w)
        return np.array(rot + list(Vinv @ chi.v) + list(Vinv @ chi.p))

    def identity(self) -> GroupElement:
        return GroupElement(np.eye(self.matrix_size))

    def from_parts(self, R: np.ndarray, v: np.ndarray, p: np.ndarray) -> GroupElement:
        d = self.spatial_dim
        out = np.eye(d + 2)
        out[:d, :d] = R
        out[:d, d] = v
        out[:d, d + 1] = p
        return GroupElement(out)


SE2_2 = PoseGroup(2)
SE2_3 = PoseGroup(3)


def pose_group(spatial_dim: int) -> PoseGroup:
    if spatial_dim == 2:
        return SE2_2
    if spatial_dim == 3:
        return SE2_3
    raise ValueError("spatial_dim must be 2 or 3")
