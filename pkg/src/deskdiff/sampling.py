"""Ancestral reverse sampling with classifier-free guidance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import CondBatch, ConditionEmbedding
from .forward import _gather
from .netgraph.tensor import Tensor, mul, sub
from .schedule import NoiseSchedule

VARIANCE_CHOICES = ("posterior", "beta")
DEFAULT_GUIDANCE = 3.0


@dataclass(frozen=True)
class SamplerConfig:
    guidance_scale: float = DEFAULT_GUIDANCE
    n_samples: int = 1000
    seed: int = 0
    record_trajectory: bool = False
    variance_choice: str = "posterior"

    def __post_init__(self):
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be nonnegative")
        if self.n_samples < 0:
            raise ValueError("n_samples must be nonnegative")
        if self.variance_choice not in VARIANCE_CHOICES:
            raise ValueError(f"variance_choice must be one of {VARIANCE_CHOICES}")


@dataclass
class SampleResult:
    samples: np.ndarray
    trajectory: np.ndarray | None = None   # (T + 1, n, d), x_T first


def mu_from_eps(xt, eps_hat, s: NoiseSchedule, t):
    """Reverse mean ``(x_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t)``.

    Works on arrays, or on a Tensor ``eps_hat`` to keep the graph.
    """
    x = xt.value if isinstance(xt, Tensor) else np.asarray(xt, dtype=np.float64)
    e_shape = eps_hat.shape if isinstance(eps_hat, Tensor) else np.shape(eps_hat)
    if x.shape != tuple(e_shape):
        raise ValueError(f"shape mismatch: x_t {x.shape} vs eps {tuple(e_shape)}")
    beta = _gather(s.betas, s, t, x)
    coef = beta / np.sqrt(1.0 - _gather(s.alpha_bars, s, t, x))
    inv_sqrt_alpha = 1.0 / np.sqrt(_gather(s.alphas, s, t, x))
    if isinstance(eps_hat, Tensor):
        return mul(sub(x, mul(eps_hat, coef)), inv_sqrt_alpha)
    return (x - coef * np.asarray(eps_hat, dtype=np.float64)) * inv_sqrt_alpha


def reverse_std(s: NoiseSchedule, t: int, variance_choice: str = "posterior") -> float:
    if variance_choice == "posterior":
        return float(np.sqrt(s.posterior_variances[s.check_step(t) - 1]))
    if variance_choice == "beta":
        return float(np.sqrt(s.betas[s.check_step(t) - 1]))
    raise ValueError(f"variance_choice must be one of {VARIANCE_CHOICES}")


def _predict(model, xt, t, cond) -> np.ndarray:
    if hasattr(model, "predict"):
        return model.predict(xt, t, cond)
    return np.asarray(model(xt, t, cond), dtype=np.float64)


def _is_null(cond) -> bool:
    if cond is None:
        return True
    if isinstance(cond, ConditionEmbedding):
        return cond.is_null
    return bool(cond.null.all())


def _null_of(cond, n: int):
    return None if cond is None else CondBatch.null_batch(n)


def guided_eps(model, xt, t, cond, s_scale: float) -> np.ndarray:
    """Classifier-free guided noise estimate.

    Computes ``(1 - s) * eps_null + s * eps_cond``, the same quantity as
    ``eps_null + s * (eps_cond - eps_null)``; the first form makes ``s = 1``
    and ``s = 0`` reproduce the single predictions bit for bit, and those
    two scales skip the unused network evaluation entirely.
    ``model`` is a ``DenoiserModel`` or any callable ``(xt, t, cond) -> eps``.
    """
    xt = np.asarray(xt, dtype=np.float64)
    n = xt.shape[0] if xt.ndim == 2 else 1
    if _is_null(cond) or s_scale == 1.0:
        return _predict(model, xt, t, cond)
    eps_null = _predict(model, xt, t, _null_of(cond, n))
    if s_scale == 0.0:
        return eps_null
    eps_cond = _predict(model, xt, t, cond)
    return (1.0 - s_scale) * eps_null + s_scale * eps_cond


def ancestral_sample(model, s: NoiseSchedule, cond, cfg: SamplerConfig,
                     rng: np.random.Generator, data_dim: int | None = None) -> SampleResult:
    """Run the reverse chain from ``x_T ~ N(0, I)`` down to ``x_0``.

    Fresh Gaussian noise is added at every step except the last (``t = 1``).
    Draw order from ``rng``: ``x_T`` first, then one ``(n, d)`` block per step
    ``t = T .. 2``.
    """
    if data_dim is None:
        data_dim = model.config.data_dim
    elif hasattr(model, "config") and model.config.data_dim != data_dim:
        raise ValueError(f"model width {model.config.data_dim} != requested {data_dim}")
    n = cfg.n_samples
    if isinstance(cond, CondBatch) and len(cond) != n:
        raise ValueError(f"condition batch has {len(cond)} rows for {n} samples")
    if isinstance(cond, ConditionEmbedding):
        cond = cond.as_batch(n)
    x = rng.standard_normal((n, data_dim))
    traj = [x] if cfg.record_trajectory else None
    for t in range(s.T, 0, -1):
        eps = guided_eps(model, x, t, cond, cfg.guidance_scale)
        mean = mu_from_eps(x, eps, s, t)
        if t > 1:
            x = mean + reverse_std(s, t, cfg.variance_choice) * rng.standard_normal((n, data_dim))
        else:
            x = mean
        if traj is not None:
            traj.append(x)
    return SampleResult(x, np.stack(traj) if traj is not None else None)
