"""Forward-process kernels.

All functions are pure: the caller draws noise and passes it in, which keeps
replays deterministic and lets tests feed hand-picked noise.
"""

from __future__ import annotations

import numpy as np

from .schedule import NoiseSchedule


def as_batch(x, name: str = "x") -> np.ndarray:
    """Coerce to a float64 array and reject non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch for {what}: {a.shape} vs {b.shape}")


def forward_step(x_prev, beta_t: float, noise) -> np.ndarray:
    """One noising step: ``sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * noise``."""
    x_prev = as_batch(x_prev, "x_prev")
    noise = as_batch(noise, "noise")
    _same_shape(x_prev, noise, "forward_step")
    if not (0.0 <= beta_t <= 1.0):
        raise ValueError(f"beta_t must lie in [0, 1], got {beta_t}")
    return np.sqrt(1.0 - beta_t) * x_prev + np.sqrt(beta_t) * noise


def forward_jump(x0, s: NoiseSchedule, t, noise) -> np.ndarray:
    """Sample ``x_t`` directly from ``x_0``.

    ``t`` may be a single step or an integer array with one step per row of
    ``x0``.
    """
    x0 = as_batch(x0, "x0")
    noise = as_batch(noise, "noise")
    _same_shape(x0, noise, "forward_jump")
    ab = _gather(s.alpha_bars, s, t, x0)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def posterior_coefficients(s: NoiseSchedule, t):
    """Coefficients ``(c_x0, c_xt)`` of the posterior mean at step ``t``."""
    idx = _indices(s, t)
    ab = s.alpha_bars[idx]
    ab_prev = s.alpha_bars_prev[idx]
    beta = s.betas[idx]
    c_x0 = np.sqrt(ab_prev) * beta / (1.0 - ab)
    c_xt = np.sqrt(s.alphas[idx]) * (1.0 - ab_prev) / (1.0 - ab)
    return c_x0, c_xt


def forward_posterior_params(x0, xt, s: NoiseSchedule, t):
    """Mean and variance of ``q(x_{t-1} | x_t, x_0)``.

    At ``t = 1`` the posterior collapses onto ``x_0`` (variance 0); the
    formula yields exactly that since ``alpha_bar_0 = 1``.
    Returns ``(mean, variance)``; variance is a float for scalar ``t`` and a
    column array for per-row steps.
    """
    x0 = as_batch(x0, "x0")
    xt = as_batch(xt, "xt")
    _same_shape(x0, xt, "forward_posterior_params")
    c_x0, c_xt = posterior_coefficients(s, t)
    idx = _indices(s, t)
    var = s.posterior_variances[idx]
    if np.ndim(idx) == 0:
        return float(c_x0) * x0 + float(c_xt) * xt, float(var)
    c_x0, c_xt, var = (_column(v, x0) for v in (c_x0, c_xt, var))
    return c_x0 * x0 + c_xt * xt, var


def _indices(s: NoiseSchedule, t):
    if np.ndim(t) == 0:
        return s.check_step(t) - 1
    t = np.asarray(t)
    if not np.issubdtype(t.dtype, np.integer):
        raise ValueError("per-row steps must be integers")
    if t.size and (t.min() < 1 or t.max() > s.T):
        raise ValueError(f"step indices must lie in [1, {s.T}]")
    return t.astype(np.int64) - 1


def _column(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    if like.ndim == 0 or values.shape[0] != like.shape[0]:
        raise ValueError("per-row steps need one entry per batch row")
    return values.reshape((-1,) + (1,) * (like.ndim - 1))


def _gather(table: np.ndarray, s: NoiseSchedule, t, like: np.ndarray):
    idx = _indices(s, t)
    if np.ndim(idx) == 0:
        return float(table[idx])
    return _column(table[idx], like)
