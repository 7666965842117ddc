"""Variance schedule tables for the forward noising chain.

Steps are 1-based throughout the public API: ``x_0`` is data and ``x_T`` is
terminal noise. Internally the tables are stored 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Precomputed beta / alpha / alpha-bar / posterior-variance tables.

    ``alpha_bars_prev`` holds ``alpha_bar_{t-1}`` with ``alpha_bar_0 = 1`` so
    posterior quantities can be looked up without special-casing ``t = 1``.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    alpha_bars_prev: np.ndarray
    posterior_variances: np.ndarray

    def __post_init__(self):
        for arr in (self.betas, self.alphas, self.alpha_bars,
                    self.alpha_bars_prev, self.posterior_variances):
            arr.setflags(write=False)

    def check_step(self, t: int, lowest: int = 1) -> int:
        if isinstance(t, (bool, np.bool_)) or int(t) != t:
            raise ValueError(f"step index must be an integer, got {t!r}")
        t = int(t)
        if not lowest <= t <= self.T:
            raise ValueError(f"step index {t} outside [{lowest}, {self.T}]")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self.check_step(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self.check_step(t) - 1])

    def alpha_bar_prev(self, t: int) -> float:
        return float(self.alpha_bars_prev[self.check_step(t) - 1])

    def as_rows(self):
        """Yield ``(t, beta, alpha, alpha_bar, posterior_variance)`` per step."""
        for i in range(self.T):
            yield (i + 1, float(self.betas[i]), float(self.alphas[i]),
                   float(self.alpha_bars[i]), float(self.posterior_variances[i]))


def schedule_from_betas(betas) -> NoiseSchedule:
    """Build all derived tables from an explicit beta sequence."""
    betas = np.array(betas, dtype=np.float64).reshape(-1)
    if betas.size == 0:
        raise ValueError("schedule needs at least one step")
    if not np.all(np.isfinite(betas)) or np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ValueError("every beta must lie in the open interval (0, 1)")
    alphas = 1.0 - betas
    # sequential product so alpha_bar[t] == alpha_bar[t-1] * alpha[t] exactly
    alpha_bars = np.empty_like(alphas)
    acc = 1.0
    for i, a in enumerate(alphas):
        acc = acc * a
        alpha_bars[i] = acc
    if alpha_bars[-1] <= 0.0:
        raise ValueError("cumulative alpha product underflows to zero; schedule is too long or too noisy")
    alpha_bars_prev = np.concatenate(([1.0], alpha_bars[:-1]))
    posterior_variances = (1.0 - alpha_bars_prev) / (1.0 - alpha_bars) * betas
    return NoiseSchedule(
        T=int(betas.size),
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        alpha_bars_prev=alpha_bars_prev,
        posterior_variances=posterior_variances,
    )


def build_linear_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                          beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` inclusive."""
    if isinstance(T, bool) or int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    T = int(T)
    if T == 1:
        betas = np.array([float(beta_start)])
    else:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return schedule_from_betas(betas)


def build_cosine_schedule(T: int, offset: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Cosine alpha-bar schedule. Optional; not used by default."""
    if isinstance(T, bool) or int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")

    def f(u):
        return np.cos((u / T + offset) / (1 + offset) * np.pi / 2) ** 2

    steps = np.arange(T + 1, dtype=np.float64)
    ab = f(steps) / f(0.0)
    betas = np.clip(1.0 - ab[1:] / ab[:-1], 1e-8, max_beta)
    return schedule_from_betas(betas)


def alpha_bar(s: NoiseSchedule, t: int) -> float:
    """Cumulative signal retention ``prod_{i<=t} alpha_i``."""
    return float(s.alpha_bars[s.check_step(t) - 1])


def posterior_variance(s: NoiseSchedule, t: int) -> float:
    """Variance of ``q(x_{t-1} | x_t, x_0)``; zero at ``t = 1``."""
    return float(s.posterior_variances[s.check_step(t) - 1])
