import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfiekf.lie import (
    SE2_2,
    SE2_3,
    GroupElement,
    J2,
    pose_group,
    rot2,
    so2_hat,
    so3_exp,
    so3_hat,
    so3_log,
)


def bounded_tangent(dof, bound=2.0):
    def clip_norm(values):
        xi = np.array(values)
        n = np.linalg.norm(xi)
        return xi if n <= bound else xi * (bound / n)

    return st.lists(
        st.floats(-1.5, 1.5, allow_nan=False), min_size=dof, max_size=dof
    ).map(clip_norm)


def matrix_series_exp(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ M / k
        out = out + term
    return out


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
def test_hat_of_zero_is_zero(group):
    assert np.all(group.hat(np.zeros(group.dof)) == 0.0)


def test_hat_3d_unit_rotation_block():
    xi = np.zeros(9)
    xi[2] = 1.0
    M = SE2_3.hat(xi)
    expected_rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.array_equal(M[:3, :3], expected_rot)
    assert np.all(M[:, 3:] == 0.0)


def test_hat_2d_is_generator_of_exp():
    # d/dt exp(t xi) at t = 0 equals hat(xi), by central difference
    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(10):
        xi = rng.normal(size=5)
        deriv = (SE2_2.exp(eps * xi).matrix - SE2_2.exp(-eps * xi).matrix) / (2 * eps)
        assert np.allclose(deriv, SE2_2.hat(xi), atol=1e-8)


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
@settings(deadline=None, max_examples=60)
@given(data=st.data())
def test_hat_vee_roundtrip(group, data):
    xi = data.draw(bounded_tangent(group.dof))
    assert np.allclose(group.vee(group.hat(xi)), xi, atol=1e-14)
    M = group.hat(xi)
    assert np.allclose(group.hat(group.vee(M)), M, atol=1e-14)


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
def test_exp_of_zero_is_identity(group):
    assert np.array_equal(group.exp(np.zeros(group.dof)).matrix, np.eye(group.matrix_size))


def test_exp_2d_pure_rotation():
    chi = SE2_2.exp(np.array([np.pi / 2, 0.0, 0.0, 0.0, 0.0]))
    assert np.allclose(chi.R, np.array([[0.0, -1.0], [1.0, 0.0]]), atol=1e-15)
    assert np.allclose(chi.v, 0.0) and np.allclose(chi.p, 0.0)


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
@settings(deadline=None, max_examples=60)
@given(data=st.data())
def test_exp_matches_power_series(group, data):
    xi = data.draw(bounded_tangent(group.dof))
    assert np.allclose(group.exp(xi).matrix, matrix_series_exp(group.hat(xi)), atol=1e-12)


def test_so_exponentials_match_power_series():
    rng = np.random.default_rng(11)
    for _ in range(20):
        theta = rng.uniform(-2, 2)
        assert np.allclose(rot2(theta), matrix_series_exp(so2_hat(theta)), atol=1e-12)
        w = rng.normal(size=3)
        if np.linalg.norm(w) > 2:
            w *= 2 / np.linalg.norm(w)
        assert np.allclose(so3_exp(w), matrix_series_exp(so3_hat(w)), atol=1e-12)


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
def test_log_of_identity_is_zero(group):
    assert np.array_equal(group.log(group.identity()), np.zeros(group.dof))


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
@settings(deadline=None, max_examples=60)
@given(data=st.data())
def test_log_exp_roundtrip(group, data):
    xi = data.draw(bounded_tangent(group.dof))
    assert np.allclose(group.log(group.exp(xi)), xi, atol=1e-10)


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
def test_exp_log_roundtrip_on_elements(group):
    rng = np.random.default_rng(13)
    for _ in range(20):
        xi = rng.normal(size=group.dof)
        if np.linalg.norm(xi) > 2:
            xi *= 2 / np.linalg.norm(xi)
        chi = group.exp(xi)
        assert np.allclose(group.exp(group.log(chi)).matrix, chi.matrix, atol=1e-10)


def test_log_matches_newton_oracle():
    # Principal log of a specific planar element, frozen from a damped-Newton
    # root solve of exp(xi) = chi with finite-difference Jacobians.
    target = np.eye(4)
    target[:2, :2] = rot2(0.3)
    target[:2, 2] = [1.0, 0.0]
    target[:2, 3] = [0.0, 1.0]
    frozen = np.array([0.3, 0.9924887258384925, -0.15, 0.15, 0.9924887258384926])

    def newton_log(target_matrix, iters=60, eps=1e-8):
        xi = np.zeros(5)
        for _ in range(iters):
            residual = (SE2_2.exp(xi).matrix - target_matrix)[:2, :].ravel()
            J = np.empty((residual.size, 5))
            for j in range(5):
                e = np.zeros(5)
                e[j] = eps
                bumped = (SE2_2.exp(xi + e).matrix - target_matrix)[:2, :].ravel()
                J[:, j] = (bumped - residual) / eps
            step, *_ = np.linalg.lstsq(J, -residual, rcond=None)
            xi = xi + step
            if np.linalg.norm(step) < 1e-14:
                break
        return xi

    assert np.allclose(newton_log(target), frozen, atol=1e-9)
    assert np.allclose(SE2_2.log(GroupElement(target)), frozen, atol=1e-10)


def test_log_raises_at_branch_cut():
    flipped = np.eye(4)
    flipped[:2, :2] = rot2(np.pi)
    with pytest.raises(ValueError):
        SE2_2.log(GroupElement(flipped))
    half_turn = np.eye(5)
    half_turn[:3, :3] = so3_exp(np.array([np.pi, 0.0, 0.0]))
    with pytest.raises(ValueError):
        SE2_3.log(GroupElement(half_turn))


def test_so3_log_roundtrip_and_branch():
    rng = np.random.default_rng(17)
    for _ in range(20):
        w = rng.normal(size=3)
        if np.linalg.norm(w) > 2:
            w *= 2 / np.linalg.norm(w)
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-10)
    with pytest.raises(ValueError):
        so3_log(so3_exp(np.array([0.0, np.pi, 0.0])))


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
def test_compose_inverse_is_identity(group):
    rng = np.random.default_rng(19)
    for _ in range(10):
        chi = group.exp(rng.normal(size=group.dof))
        assert np.allclose((chi @ chi.inverse()).matrix, np.eye(group.matrix_size), atol=1e-12)
        xi = rng.normal(size=group.dof)
        prod = group.exp(xi) @ group.exp(-xi)
        assert np.allclose(prod.matrix, np.eye(group.matrix_size), atol=1e-12)


def test_act_with_identity_returns_input():
    d = np.array([0.3, -0.7, 0.2, 1.0, 0.5])
    assert np.array_equal(SE2_3.identity().act(np.append(d[:3], [1.0, 0.5])), np.append(d[:3], [1.0, 0.5]))


@pytest.mark.parametrize("group,dim", [(SE2_2, 2), (SE2_3, 3)], ids=["2d", "3d"])
def test_act_block_formula(group, dim):
    # chi (r, alpha, beta) = (R r + alpha v + beta p, alpha, beta)
    rng = np.random.default_rng(23)
    chi = group.exp(rng.normal(size=group.dof))
    r = rng.normal(size=dim)
    alpha, beta = 0.8, -1.3
    out = chi.act(np.concatenate([r, [alpha, beta]]))
    assert np.allclose(out[:dim], chi.R @ r + alpha * chi.v + beta * chi.p, atol=1e-13)
    assert out[dim] == alpha and out[dim + 1] == beta


@pytest.mark.parametrize("group", [SE2_2, SE2_3], ids=["2d", "3d"])
@settings(deadline=None, max_examples=40)
@given(data=st.data())
def test_act_homomorphism(group, data):
    xa = data.draw(bounded_tangent(group.dof))
    xb = data.draw(bounded_tangent(group.dof))
    d = np.arange(1.0, group.matrix_size + 1.0)
    a, b = group.exp(xa), group.exp(xb)
    assert np.allclose((a @ b).act(d), a.act(b.act(d)), atol=1e-12)


def test_constructor_projects_drifted_rotation():
    rng = np.random.default_rng(29)
    m = SE2_2.exp(rng.normal(size=5)).matrix.copy()
    m[:2, :2] += 1e-6 * rng.normal(size=(2, 2))
    chi = GroupElement(m)
    assert np.allclose(chi.R.T @ chi.R, np.eye(2), atol=1e-12)
    assert np.isclose(np.linalg.det(chi.R), 1.0, atol=1e-12)


def test_constructor_rejects_reflections_and_bad_rows():
    bad = np.eye(4)
    bad[0, 0] = -1.0  # determinant -1
    with pytest.raises(ValueError):
        GroupElement(bad)
    bad_rows = np.eye(4)
    bad_rows[3, 0] = 0.5
    with pytest.raises(ValueError):
        GroupElement(bad_rows)


def test_dimension_validation():
    with pytest.raises(ValueError):
        SE2_2.hat(np.zeros(9))
    with pytest.raises(ValueError):
        SE2_3.exp(np.zeros(5))
    with pytest.raises(ValueError):
        SE2_2.log(SE2_3.identity())
    with pytest.raises(ValueError):
        pose_group(4)
    with pytest.raises(ValueError):
        SE2_2.identity().act(np.zeros(5))


def test_matrices_are_immutable():
    chi = SE2_2.identity()
    with pytest.raises(ValueError):
        chi.matrix[0, 0] = 2.0
