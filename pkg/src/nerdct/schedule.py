"""Diffusion noise schedule and the posterior-mean/noise conversions."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal fractions alpha_bar plus the sampling sub-schedule.

    alpha_bar has length T+1 with alpha_bar[0] = 1 by convention (index 0
    is the clean image) and is strictly decreasing.  sampling_steps are the
    strictly decreasing time indices the sampler visits, all within [1, T];
    the step after sampling_steps[-1] is index 0.
    """

    alpha_bar: np.ndarray
    sampling_steps: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        steps = np.asarray(self.sampling_steps, dtype=np.int64)
        if ab.ndim != 1 or len(ab) < 2:
            raise ValueError("alpha_bar must be a 1D array of length T+1 >= 2")
        if ab[0] != 1.0:
            raise ValueError(f"alpha_bar[0] must be 1, got {ab[0]}")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] <= 0 or ab[-1] > 1:
            raise ValueError("alpha_bar values must stay in (0, 1]")
        if steps.ndim != 1 or len(steps) < 1:
            raise ValueError("sampling_steps must be a non-empty 1D array")
        if np.any(np.diff(steps) >= 0):
            raise ValueError("sampling_steps must be strictly decreasing")
        if steps[-1] < 1 or steps[0] > self.num_train_steps:
            raise ValueError(
                f"sampling_steps must lie in [1, {self.num_train_steps}]"
            )
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "sampling_steps", steps)

    @property
    def num_train_steps(self):
        return len(self.alpha_bar) - 1

    @property
    def n_sampling_steps(self):
        return len(self.sampling_steps)

    @classmethod
    def linear_beta(cls, num_train_steps=1000, beta_start=1e-4, beta_end=0.02,
                    n_sampling_steps=30):
        """Linear beta ramp; alpha_bar[t] = prod_{s<=t} (1 - beta_s)."""
        if num_train_steps < 1:
            raise ValueError(f"num_train_steps must be >= 1, got {num_train_steps}")
        if not 0 < beta_start <= beta_end < 1:
            raise ValueError(
                f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )
        betas = np.linspace(beta_start, beta_end, num_train_steps)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        steps = uniform_sampling_steps(num_train_steps, n_sampling_steps)
        return cls(alpha_bar, steps)

    def with_sampling_steps(self, n_sampling_steps):
        steps = uniform_sampling_steps(self.num_train_steps, n_sampling_steps)
        return NoiseSchedule(self.alpha_bar, steps)


def uniform_sampling_steps(num_train_steps, n_sampling_steps):
    """n strictly decreasing indices spread uniformly over [1, T]."""
    if not 1 <= n_sampling_steps <= num_train_steps:
        raise ValueError(
            f"need 1 <= n_sampling_steps <= {num_train_steps}, "
            f"got {n_sampling_steps}"
        )
    steps = np.unique(
        np.round(np.linspace(num_train_steps, 1, n_sampling_steps)).astype(np.int64)
    )[::-1]
    if len(steps) != n_sampling_steps:
        raise ValueError(
            f"{n_sampling_steps} sampling steps do not fit strictly decreasing "
            f"into [1, {num_train_steps}]"
        )
    return steps


def tweedie_denoise(x_t, t, eps_pred, schedule):
    """Posterior-mean estimate from a noise prediction.

    x0_hat = (x_t - sqrt(1 - alpha_bar_t) * eps_pred) / sqrt(alpha_bar_t).
    """
    a = schedule.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - a) * eps_pred) / np.sqrt(a)


def eps_from_denoiser(x_t, t, x0_hat, schedule):
    """Inverse map: the noise estimate implied by a clean-image estimate."""
    a = schedule.alpha_bar[t]
    if a >= 1.0:
        raise ValueError("t = 0 has no noise component to recover")
    return (x_t - np.sqrt(a) * x0_hat) / np.sqrt(1.0 - a)
