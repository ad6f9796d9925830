"""Shared optimization primitives: Adam, proximal maps, conjugate gradients."""

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(ValueError):
    """Raised when an optimizer receives a NaN/inf gradient."""


@dataclass
class AdamState:
    """Adam with bias correction; moments live with the state object.

    m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
    x <- x - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    The first step on any nonzero gradient therefore has magnitude close
    to lr per coordinate.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)


def adam_step(state, x, grad):
    """One Adam update; mutates `state`, returns the new iterate."""
    if grad.shape != x.shape:
        raise ValueError(f"gradient shape {grad.shape} != iterate shape {x.shape}")
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise NonFiniteGradientError(
            f"non-finite gradient ({bad} entries) at Adam step {state.t + 1}"
        )
    if state.m is None:
        state.m = np.zeros_like(x)
        state.v = np.zeros_like(x)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return x - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def soft_threshold(v, kappa):
    """prox of kappa*|.|: sign(v) * max(|v| - kappa, 0)."""
    if kappa < 0:
        raise ValueError(f"threshold must be >= 0, got {kappa}")
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def project_linf_ball(u):
    """Projection onto the unit l-inf ball, u_i / max(1, |u_i|)."""
    return u / np.maximum(1.0, np.abs(u))


@dataclass
class CGResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norms: list
    breakdown: bool = False

    @property
    def relative_residual(self):
        first = self.residual_norms[0]
        return self.residual_norms[-1] / first if first > 0 else 0.0


def cg_solve(apply_op, b, tol=1e-6, max_iter=None, x0=None):
    """Matrix-free CG for SPD operators.

    Stops when ||r|| <= tol * ||b||.  Non-convergence is reported through
    the result (converged=False), never silently; a non-positive curvature
    direction sets breakdown=True and returns the last iterate.
    """
    b = np.asarray(b, dtype=np.float64)
    if max_iter is None:
        max_iter = 10 * b.size
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_op(x)
    d = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    b_norm = float(np.linalg.norm(b.ravel()))
    norms = [np.sqrt(rs)]
    iterations = 0
    for _ in range(max_iter):
        if norms[-1] <= tol * b_norm:
            return CGResult(x, True, iterations, norms)
        op_d = apply_op(d)
        curvature = float(np.dot(d.ravel(), op_d.ravel()))
        if curvature <= 0.0:
            return CGResult(x, False, iterations, norms, breakdown=True)
        alpha = rs / curvature
        x = x + alpha * d
        r = r - alpha * op_d
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        d = r + (rs_new / rs) * d
        rs = rs_new
        iterations += 1
        norms.append(np.sqrt(rs))
    converged = norms[-1] <= tol * b_norm
    return CGResult(x, converged, iterations, norms)
