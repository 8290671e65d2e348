import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from proxopt import manifold
from proxopt.errors import AmbiguousProjection, NoConvergence, RankDeficient
from proxopt.manifold import (
    TubeStatus,
    constraint_from_name,
    levelset,
    project_levelset,
    project_sphere,
    project_stiefel,
    sphere,
    stiefel,
    stiefel_mat,
    stiefel_vec,
    tangent_project,
    tangent_projector,
    tube_membership,
)


def ellipse():
    return levelset(
        2, 1,
        eval_g=lambda x: np.array([x[0] ** 2 / 4 + x[1] ** 2 - 1]),
        eval_jacobian=lambda x: np.array([[x[0] / 2, 2 * x[1]]]),
        eval_hessians=lambda x: np.array([[[0.5, 0.0], [0.0, 2.0]]]),
        prox_radius=0.25,
        name="ellipse",
    )


def hyperplane():
    return levelset(
        2, 1,
        eval_g=lambda x: np.array([x[0] + x[1]]),
        eval_jacobian=lambda x: np.array([[1.0, 1.0]]),
        eval_hessians=lambda x: np.zeros((1, 2, 2)),
        prox_radius=1e6,
    )


def generic_sphere(n):
    s = sphere(n)
    return levelset(n, 1, s.eval_g, s.eval_jacobian, s.eval_hessians, 1.0, sampler=s.sampler)


# ---------------------------------------------------------------- ConstraintMap


def test_constraint_map_validates_dimensions():
    with pytest.raises(ValueError):
        levelset(2, 2, np.sum, np.sum, np.sum, 1.0)
    with pytest.raises(ValueError):
        levelset(3, 1, np.sum, np.sum, np.sum, 0.0)


def test_stiefel_constraints_are_upper_triangle_of_gram(rng):
    n, k = 6, 3
    c = stiefel(n, k)
    assert c.m == 6 and c.n == 18
    X = rng.standard_normal((n, k))
    G = X.T @ X - np.eye(k)
    expected = [G[i, j] for i in range(k) for j in range(i, k)]
    np.testing.assert_allclose(c.g(stiefel_vec(X)), expected, atol=1e-14)
    np.testing.assert_array_equal(stiefel_mat(stiefel_vec(X), n, k), X)
    # column-major: first n entries are the first column
    np.testing.assert_array_equal(stiefel_vec(X)[:n], X[:, 0])


@pytest.mark.parametrize("c", [sphere(4), stiefel(5, 2), stiefel(4, 3)], ids=["sphere", "st52", "st43"])
def test_full_rank_and_symmetric_hessians_on_S(c, rng):
    for _ in range(20):
        x = c.sampler(rng)
        assert np.linalg.norm(c.g(x)) <= 1e-10
        assert np.linalg.matrix_rank(c.jacobian(x)) == c.m
        H = c.hessians(x)
        assert np.max(np.abs(H - np.transpose(H, (0, 2, 1)))) <= 1e-12


def test_constraint_from_name():
    c = constraint_from_name("sphere(2.5)", n=3)
    assert c.name == "sphere" and c.R == 2.5 and c.n == 3
    c = constraint_from_name("stiefel(7, 2)")
    assert (c.n, c.m) == (14, 3)
    with pytest.raises(ValueError):
        constraint_from_name("sphere(1)")
    with pytest.raises(ValueError):
        constraint_from_name("levelset")
    with pytest.raises(ValueError):
        constraint_from_name("torus(1,2)")


# ---------------------------------------------------------------- tangent projection


def test_tangent_project_sphere_examples():
    c = sphere(3)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    np.testing.assert_allclose(tangent_project(c, e1, e1), 0.0, atol=1e-15)
    np.testing.assert_allclose(tangent_project(c, e1, e2), e2, atol=1e-15)


def test_tangent_project_hyperplane_against_basis_oracle():
    c = hyperplane()
    x = np.array([0.3, -0.3])
    # orthonormal basis of null(g') = span{(1,-1)/sqrt2}
    B = np.array([[1.0], [-1.0]]) / math.sqrt(2)
    for v in (np.array([1.0, 1.0]) / math.sqrt(2), np.array([1.0, -1.0]) / math.sqrt(2), np.array([0.7, 0.1])):
        np.testing.assert_allclose(tangent_project(c, x, v), B @ (B.T @ v), atol=1e-15)
    np.testing.assert_allclose(tangent_project(c, x, np.array([1.0, 1.0]) / math.sqrt(2)), 0.0, atol=1e-15)


@pytest.mark.parametrize("c", [sphere(5), stiefel(5, 2), ellipse()], ids=["sphere", "stiefel", "ellipse"])
def test_tangent_projector_invariants(c, rng):
    for _ in range(20):
        if c.sampler is not None:
            x = c.sampler(rng)
        else:
            t = rng.uniform(0, 2 * np.pi)
            x = np.array([2 * np.cos(t), np.sin(t)])
        P = tangent_projector(c, x)
        assert np.linalg.norm(P @ P - P) <= 1e-10
        assert np.linalg.norm(P - P.T) <= 1e-10
        v = rng.standard_normal(c.n)
        Pv = tangent_project(c, x, v)
        np.testing.assert_allclose(Pv, P @ v, atol=1e-12)
        assert np.linalg.norm(c.jacobian(x) @ Pv) <= 1e-10 * np.linalg.norm(v)
        assert np.linalg.norm(Pv) <= np.linalg.norm(v) * (1 + 1e-12)


def test_tangent_project_rank_deficient():
    c = sphere(3)
    with pytest.raises(RankDeficient):
        tangent_project(c, np.zeros(3), np.ones(3))


# ---------------------------------------------------------------- sphere projection


def test_project_sphere_examples():
    np.testing.assert_allclose(project_sphere([3.0, 4.0]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(project_sphere([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(project_sphere([1.0, 1.0, 1.0], 2.0), 2 / math.sqrt(3) * np.ones(3), atol=1e-15)
    with pytest.raises(AmbiguousProjection):
        project_sphere(np.zeros(3))


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.floats(0.1, 10))
def test_project_sphere_norm_and_idempotence(vals, radius):
    x = np.array(vals)
    if np.linalg.norm(x) <= 1e-6:
        return
    y = project_sphere(x, radius)
    assert abs(np.linalg.norm(y) - radius) <= 1e-12 * radius
    np.testing.assert_allclose(project_sphere(y, radius), y, atol=1e-10 * radius)


# ---------------------------------------------------------------- Stiefel projection


def test_project_stiefel_examples():
    np.testing.assert_allclose(project_stiefel(np.array([[0.5]])), [[1.0]])
    X = np.zeros((3, 2))
    X[0, 0], X[1, 1] = 0.9, 1.2
    np.testing.assert_allclose(project_stiefel(X), np.eye(3)[:, :2], atol=1e-15)
    Q = ortho_group.rvs(5, random_state=1)[:, :3]
    np.testing.assert_allclose(project_stiefel(Q), Q, atol=1e-12)


def test_project_stiefel_diag_example_brute_force():
    X = np.zeros((3, 2))
    X[0, 0], X[1, 1] = 0.9, 1.2
    P = project_stiefel(X)
    frames = [ortho_group.rvs(3, random_state=s)[:, :2] for s in range(3000)]
    best = min(np.linalg.norm(X - Q) for Q in frames)
    assert np.linalg.norm(X - P) <= best + 1e-12
    # columns are already orthogonal, so normalising each column is the answer
    np.testing.assert_allclose(P, X / np.linalg.norm(X, axis=0), atol=1e-15)


def test_project_stiefel_boundary_is_ambiguous():
    X0 = np.zeros((3, 2))
    X0[:, 1] = [0, 1, 0]
    with pytest.raises(AmbiguousProjection):
        project_stiefel(X0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(1, 4))
def test_project_stiefel_properties(seed, n, k):
    k = min(k, n - 1)
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, k))
    P = project_stiefel(X)
    assert np.linalg.norm(P.T @ P - np.eye(k)) <= 1e-12
    np.testing.assert_allclose(project_stiefel(P), P, atol=1e-10)
    # nearest point: the residual X - P is normal, i.e. P^T X symmetric positive definite
    S = P.T @ X
    np.testing.assert_allclose(S, S.T, atol=1e-10)
    assert np.linalg.eigvalsh(0.5 * (S + S.T)).min() > 0


# ---------------------------------------------------------------- generic level-set projection


def test_project_levelset_fixed_point():
    c = ellipse()
    x = np.array([2.0 * np.cos(0.4), np.sin(0.4)])
    np.testing.assert_allclose(project_levelset(c, x), x, atol=1e-14)


def test_project_levelset_ellipse_brute_force():
    c = ellipse()
    y = project_levelset(c, np.array([0.0, 2.0]))
    np.testing.assert_allclose(y, [0.0, 1.0], atol=1e-10)
    # 1-D parameter oracle for another point
    x = np.array([1.5, 0.9])
    t = np.linspace(0, 2 * np.pi, 2_000_001)
    pts = np.stack([2 * np.cos(t), np.sin(t)], axis=1)
    best = pts[np.argmin(np.linalg.norm(pts - x, axis=1))]
    y = project_levelset(c, x)
    np.testing.assert_allclose(y, best, atol=1e-5)
    assert np.linalg.norm(x - y) <= np.linalg.norm(x - best) + 1e-12
    assert abs(c.g(y)[0]) <= 1e-10


def test_project_levelset_matches_sphere_closed_form(rng):
    c = generic_sphere(6)
    for _ in range(100):
        v = rng.standard_normal(6)
        x = v / np.linalg.norm(v) * rng.uniform(0.2, 1.8)
        np.testing.assert_allclose(project_levelset(c, x), project_sphere(x), atol=1e-10)


def test_constraint_project_dispatch(rng):
    c = generic_sphere(4)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(c.project(x), project_sphere(x), atol=1e-10)


def test_project_levelset_no_convergence():
    c = ellipse()
    with pytest.raises(NoConvergence):
        project_levelset(c, np.array([0.0, 2.0]), max_iters=0)


# ---------------------------------------------------------------- tube membership


def test_tube_membership_examples():
    c = sphere(2)
    m = tube_membership(c, np.array([0.5, 0.0]))
    assert m.status == TubeStatus.INSIDE and m.distance == 0.5 and not m.estimated
    assert tube_membership(c, np.zeros(2)).status == TubeStatus.BOUNDARY
    assert tube_membership(c, np.array([2.5, 0.0])).status == TubeStatus.OUTSIDE
    X0 = np.zeros((3, 2))
    X0[:, 1] = [0, 1, 0]
    assert tube_membership(stiefel(3, 2), stiefel_vec(X0)).status == TubeStatus.BOUNDARY


def test_tube_membership_generic_is_estimated():
    m = tube_membership(ellipse(), np.array([0.0, 1.1]))
    assert m.estimated and m.status == TubeStatus.INSIDE
    assert m.distance == pytest.approx(0.1, abs=1e-10)


def test_prox_radius_scalar():
    assert manifold.prox_radius_scalar(2.0, 4.0) == 0.5
