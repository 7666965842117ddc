"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .conditioning import CondBatch
from .netgraph.denoiser import DenoiserModel, denoiser_forward
from .netgraph.tensor import backward, mean_all, no_grad, square, sub

FD_STEP = 1e-5
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)


def check_gradients(params: dict, loss_fn, step: float = FD_STEP) -> dict:
    """Max relative error per named parameter.

    ``loss_fn()`` must build a scalar Tensor from the current parameter
    values; it is re-evaluated twice per parameter entry.
    """
    for t in params.values():
        t.grad = None
    backward(loss_fn())
    report = {}
    for name, t in params.items():
        analytic = np.zeros_like(t.value) if t.grad is None else t.grad.copy()
        numeric = np.empty_like(t.value)
        flat = t.value.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = float(loss_fn().value)
                flat[i] = orig - step
                down = float(loss_fn().value)
                flat[i] = orig
                numeric.reshape(-1)[i] = (up - down) / (2.0 * step)
        report[name] = float(relative_error(analytic, numeric).max()) if flat.size else 0.0
    return report


def denoiser_probe(model: DenoiserModel, rng: np.random.Generator, batch: int = 6):
    """A fixed regression objective touching every parameter of ``model``.

    Rows mix full conditions, single-channel conditions and nulled rows so
    the class, style, channel-null and global-null embeddings all receive
    gradient.
    """
    cfg = model.config
    x = rng.standard_normal((batch, cfg.data_dim))
    target = rng.standard_normal((batch, cfg.data_dim))
    steps = rng.integers(1, 50, size=batch)
    class_ids = rng.integers(0, cfg.n_classes, size=batch)
    style_ids = rng.integers(0, cfg.n_styles, size=batch)
    class_ids[1] = -1
    style_ids[2] = -1
    cond = CondBatch.make(batch, class_ids, style_ids).nulled(np.arange(batch) == 0)

    def loss():
        return mean_all(square(sub(denoiser_forward(model, x, steps, cond), target)))

    return loss
