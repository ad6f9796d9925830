"""Adam, proximal maps, l-inf projection, and conjugate gradient."""

import numpy as np
import pytest

from nerdct import (
    AdamState,
    NonFiniteGradientError,
    adam_step,
    cg_solve,
    project_linf_ball,
    soft_threshold,
)
from nerdct.rng import Xoshiro256PP


# ---------------------------------------------------------------- Adam

def test_adam_first_step_magnitude():
    # With bias correction the very first update is lr * sign(grad)
    # up to the eps cushion, independent of gradient scale.
    for scale_factor in (1e-3, 1.0, 1e6):
        state = AdamState(lr=0.01)
        x = np.zeros(5)
        g = np.full(5, scale_factor)
        x1 = adam_step(state, x, g)
        assert np.allclose(x1, -0.01, rtol=1e-4)


def test_adam_descends_quadratic():
    # Minimize 0.5*||x - c||^2; Adam should approach c.
    rng = Xoshiro256PP(0)
    c = rng.normal_array((8,))
    x = np.zeros(8)
    state = AdamState(lr=0.05)
    for _ in range(500):
        x = adam_step(state, x, x - c)
    assert np.max(np.abs(x - c)) < 1e-2


def test_adam_bias_correction_reference():
    # Follow the textbook recursion by hand for three steps.
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    state = AdamState(lr=lr)
    x = np.array([1.0, -2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    xs = x.copy()
    for t in range(1, 4):
        g = 2.0 * xs  # gradient of ||x||^2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        xs = xs - lr * mhat / (np.sqrt(vhat) + eps)
        x = adam_step(state, x, 2.0 * x)
        assert np.allclose(x, xs, atol=1e-14)


def test_adam_rejects_nonfinite_gradient():
    state = AdamState(lr=0.1)
    with pytest.raises(NonFiniteGradientError):
        adam_step(state, np.zeros(3), np.array([1.0, np.nan, 0.0]))
    with pytest.raises(NonFiniteGradientError):
        adam_step(state, np.zeros(3), np.array([np.inf, 0.0, 0.0]))


def test_adam_state_isolated_between_instances():
    s1 = AdamState(lr=0.1)
    s2 = AdamState(lr=0.1)
    x = np.ones(4)
    g = np.ones(4)
    a = adam_step(s1, x, g)
    adam_step(s1, a, g)
    b = adam_step(s2, x, g)
    assert np.allclose(a, b)
    assert s1.t == 2 and s2.t == 1


# ------------------------------------------------- proximal operators

def test_soft_threshold_closed_form():
    v = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    out = soft_threshold(v, 1.0)
    assert np.allclose(out, [-1.0, 0.0, 0.0, 0.0, 1.0])
    # kappa = 0 is the identity.
    assert np.array_equal(soft_threshold(v, 0.0), v)
    with pytest.raises(ValueError):
        soft_threshold(v, -0.1)


def test_soft_threshold_is_prox_via_grid():
    # Brute-force argmin of 0.5*(x-v)^2 + kappa*|x| over a dense grid.
    rng = Xoshiro256PP(1)
    for _ in range(100):
        v = float(rng.normals(1)[0]) * 2.0
        kappa = float(rng.uniforms(1)[0]) * 1.5
        grid = np.linspace(-12.0, 12.0, 480_001)
        obj = 0.5 * (grid - v) ** 2 + kappa * np.abs(grid)
        best = grid[int(np.argmin(obj))]
        got = float(soft_threshold(np.array([v]), kappa)[0])
        assert abs(got - best) <= 1e-4


def test_project_linf_ball_equals_clamp():
    rng = Xoshiro256PP(2)
    for _ in range(20):
        u = rng.normal_array((4, 3, 3)) * 3.0
        proj = project_linf_ball(u)
        assert np.array_equal(proj, np.clip(u, -1.0, 1.0))
        assert np.max(np.abs(proj)) <= 1.0
    # Idempotent and identity inside the ball.
    inside = np.array([0.3, -0.9, 0.0])
    assert np.array_equal(project_linf_ball(inside), inside)
    assert np.array_equal(project_linf_ball(project_linf_ball(u)), project_linf_ball(u))


# ------------------------------------------------- conjugate gradient

def test_cg_identity_system():
    b = Xoshiro256PP(3).normal_array((10,))
    res = cg_solve(lambda x: x, b, tol=1e-12)
    assert res.converged
    assert res.iterations <= 2
    assert np.allclose(res.x, b, atol=1e-10)


def test_cg_hand_solved_2x2():
    # [[4,1],[1,3]] x = [1,2] has solution [1/11, 7/11].
    mat = np.array([[4.0, 1.0], [1.0, 3.0]])
    res = cg_solve(lambda x: mat @ x, np.array([1.0, 2.0]), tol=1e-14)
    assert res.converged
    assert np.allclose(res.x, [1.0 / 11.0, 7.0 / 11.0], atol=1e-12)


def test_cg_random_spd():
    rng = Xoshiro256PP(4)
    for _ in range(5):
        mat = rng.normal_array((12, 12))
        spd = mat.T @ mat + np.eye(12)
        b = rng.normal_array((12,))
        res = cg_solve(lambda x: spd @ x, b, tol=1e-10, max_iter=200)
        assert res.converged
        assert np.linalg.norm(spd @ res.x - b) <= 1e-9 * np.linalg.norm(b) * 10


def test_cg_residual_monotone_reported():
    rng = Xoshiro256PP(5)
    mat = rng.normal_array((20, 20))
    spd = mat.T @ mat + np.eye(20)
    b = rng.normal_array((20,))
    res = cg_solve(lambda x: spd @ x, b, tol=1e-12, max_iter=100)
    # CG residual history tracked and final entry at least meets the tolerance.
    assert len(res.residual_norms) == res.iterations + 1
    assert res.residual_norms[-1] <= 1e-12 * np.linalg.norm(b)
    assert res.relative_residual <= 1e-12


def test_cg_max_iter_respected():
    rng = Xoshiro256PP(6)
    mat = rng.normal_array((30, 30))
    spd = mat.T @ mat + 1e-4 * np.eye(30)
    b = rng.normal_array((30,))
    res = cg_solve(lambda x: spd @ x, b, tol=1e-16, max_iter=3)
    assert not res.converged
    assert res.iterations == 3


def test_cg_breakdown_on_indefinite():
    # A matrix with a negative eigenvalue produces non-positive curvature.
    mat = np.diag([1.0, -1.0])
    b = np.array([1.0, 1.0])
    res = cg_solve(lambda x: mat @ x, b, tol=1e-12, max_iter=10)
    assert res.breakdown


def test_cg_warm_start():
    mat = np.array([[4.0, 1.0], [1.0, 3.0]])
    exact = np.array([1.0 / 11.0, 7.0 / 11.0])
    res = cg_solve(lambda x: mat @ x, np.array([1.0, 2.0]), tol=1e-14, x0=exact)
    assert res.converged
    assert res.iterations == 0
    assert np.allclose(res.x, exact)


def test_cg_zero_rhs():
    res = cg_solve(lambda x: 2.0 * x, np.zeros(5), tol=1e-12)
    assert res.converged
    assert np.all(res.x == 0.0)
