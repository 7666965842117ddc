"""Objectives, the Adam optimiser and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .conditioning import CondBatch, drop_conditions
from .forward import as_batch, forward_jump, forward_posterior_params
from .netgraph.denoiser import DenoiserModel, denoiser_forward
from .netgraph.tensor import (Tensor, add, backward, matmul, mean_all, mul, no_grad, square, sub,
                              sum_all, take_rows)
from .sampling import mu_from_eps
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

LOSS_KINDS = ("simple", "vlb", "hybrid")
HYBRID_VLB_WEIGHT = 0.001


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-3
    batch_size: int = 256
    total_steps: int = 3000
    cond_drop_prob: float = 0.1
    loss_kind: str = "simple"
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 100
    ema_decay: float = 0.0
    conditional: bool = True
    variance_choice: str = "posterior"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if not 0.0 <= self.cond_drop_prob <= 1.0:
            raise ValueError("cond_drop_prob must lie in [0, 1]")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")


@dataclass
class LossReport:
    step: int
    loss: float
    per_term: dict = field(default_factory=dict)


# --- KL machinery -----------------------------------------------------------

def gaussian_kl(mean1, var1, mean2, var2):
    """KL( N(mean1, var1 I) || N(mean2, var2 I) ) summed over all entries.

    Returns a float for array means and a scalar Tensor if either mean is a
    Tensor.
    """
    return _kl(mean1, var1, mean2, var2, reduce=True)


def _kl(mean1, var1, mean2, var2, reduce: bool):
    v1 = np.asarray(var1, dtype=np.float64)
    v2 = np.asarray(var2, dtype=np.float64)
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise ValueError("gaussian_kl needs strictly positive variances")
    const = 0.5 * np.log(v2 / v1) + v1 / (2.0 * v2) - 0.5
    if isinstance(mean1, Tensor) or isinstance(mean2, Tensor):
        diff = sub(mean1, mean2)
        terms = add(mul(square(diff), 1.0 / (2.0 * v2)), np.broadcast_to(const, diff.shape))
        if reduce:
            return sum_all(terms)
        return terms
    m1 = np.asarray(mean1, dtype=np.float64)
    m2 = np.asarray(mean2, dtype=np.float64)
    terms = (m1 - m2) ** 2 / (2.0 * v2) + const
    if reduce:
        return float(np.sum(np.broadcast_to(terms, np.broadcast(m1, m2).shape)))
    return terms


def _reverse_variance(s: NoiseSchedule, t, choice: str):
    table = s.posterior_variances if choice == "posterior" else s.betas
    if choice not in ("posterior", "beta"):
        raise ValueError(f"unknown variance choice {choice!r}")
    if np.ndim(t) == 0:
        return float(table[s.check_step(t) - 1])
    return table[np.asarray(t) - 1][:, None]


def _row_kl_tensor(x0, xt, eps_hat: Tensor, s: NoiseSchedule, t, variance_choice: str):
    """Per-row KL(q(x_{t-1}|x_t,x_0) || p(x_{t-1}|x_t)) as an (n, 1) Tensor."""
    q_mean, q_var = forward_posterior_params(x0, xt, s, t)
    p_mean = mu_from_eps(xt, eps_hat, s, t)
    p_var = _reverse_variance(s, t, variance_choice)
    terms = _kl(q_mean, q_var, p_mean, p_var, reduce=False)
    return matmul(terms, np.ones((terms.shape[1], 1)))


# --- objectives -------------------------------------------------------------

def _predict_tensor(model, xt, t, conds) -> Tensor:
    """Network output as a Tensor; plain callables ``(xt, t, cond) -> eps`` are wrapped."""
    if isinstance(model, DenoiserModel):
        return denoiser_forward(model, xt, t, conds)
    out = model(xt, t, conds)
    return out if isinstance(out, Tensor) else Tensor(out)


def _prepare(x0_batch, s, rng, low=1):
    x0 = as_batch(x0_batch, "x0_batch")
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ValueError("need a nonempty (n, d) batch")
    n = x0.shape[0]
    t = rng.integers(low, s.T + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    return x0, t, eps, forward_jump(x0, s, t, eps)


def simple_loss(model, x0_batch, s: NoiseSchedule, conds,
                rng: np.random.Generator) -> Tensor:
    """Mean squared error between injected and predicted noise.

    Draws one step per row uniformly from ``1..T``, then the noise, in that
    order.
    """
    x0, t, eps, xt = _prepare(x0_batch, s, rng)
    eps_hat = _predict_tensor(model, xt, t, conds)
    return mean_all(square(sub(eps_hat, eps)))


def vlb_term(model, x0, s: NoiseSchedule, t: int, cond,
             rng: np.random.Generator, variance_choice: str = "posterior") -> Tensor:
    """Batch-mean KL between the true posterior and the model's reverse step at ``t``."""
    t = s.check_step(t, lowest=2)
    x0 = as_batch(x0, "x0")
    eps = rng.standard_normal(x0.shape)
    xt = forward_jump(x0, s, t, eps)
    eps_hat = _predict_tensor(model, xt, t, cond)
    return mean_all(_row_kl_tensor(x0, xt, eps_hat, s, t, variance_choice))


def prior_term(x0, s: NoiseSchedule) -> float:
    """Batch-mean KL( q(x_T | x_0) || N(0, I) ); parameter free."""
    x0 = as_batch(x0, "x0")
    ab = s.alpha_bars[-1]
    return gaussian_kl(np.sqrt(ab) * x0, 1.0 - ab, 0.0, 1.0) / x0.shape[0]


def decoder_nll(model: DenoiserModel, x0, s: NoiseSchedule, cond, rng: np.random.Generator,
                variance_choice: str = "posterior") -> float:
    """Batch-mean Gaussian negative log-likelihood of ``x_0`` given ``x_1``.

    The reverse variance at ``t = 1`` is ``beta_1`` whichever choice is in
    effect, since the posterior variance vanishes there.
    """
    x0 = as_batch(x0, "x0")
    eps = rng.standard_normal(x0.shape)
    x1 = forward_jump(x0, s, 1, eps)
    with no_grad():
        eps_hat = _predict_tensor(model, x1, 1, cond).value
    mean = mu_from_eps(x1, eps_hat, s, 1)
    var = s.betas[0]
    nll = 0.5 * (np.log(2 * np.pi * var) + (x0 - mean) ** 2 / var)
    return float(nll.sum() / x0.shape[0])


def vlb_report(model: DenoiserModel, x0, s: NoiseSchedule, cond, rng: np.random.Generator,
               variance_choice: str = "posterior") -> dict:
    """All variational-bound terms for reporting: prior, decoder and each KL step."""
    out = {"prior": prior_term(x0, s),
           "decoder": decoder_nll(model, x0, s, cond, rng, variance_choice)}
    with no_grad():
        for t in range(2, s.T + 1):
            out[f"kl_{t}"] = float(vlb_term(model, x0, s, t, cond, rng, variance_choice).value)
    out["total"] = sum(out.values())
    return out


def batch_loss(model: DenoiserModel, x0, s: NoiseSchedule, conds, rng: np.random.Generator,
               loss_kind: str = "simple", variance_choice: str = "posterior"):
    """Training objective for one minibatch.

    Returns ``(loss_tensor, terms)``. ``vlb`` and ``hybrid`` share one
    network evaluation with the simple term; rows drawn at ``t = 1`` carry
    no KL term.
    """
    if loss_kind == "simple":
        loss = simple_loss(model, x0, s, conds, rng)
        return loss, {}
    x0, t, eps, xt = _prepare(x0, s, rng)
    eps_hat = _predict_tensor(model, xt, t, conds)
    simple = mean_all(square(sub(eps_hat, eps)))
    keep = t >= 2
    if keep.any():
        idx = np.flatnonzero(keep)
        rows = _row_kl_tensor(x0[idx], xt[idx], take_rows(eps_hat, idx), s, t[idx],
                              variance_choice)
        vlb = mul(sum_all(rows), 1.0 / len(t))
    else:
        vlb = Tensor(0.0)
    terms = {"simple": float(simple.value), "vlb": float(vlb.value)}
    if loss_kind == "vlb":
        return vlb, terms
    return add(simple, mul(vlb, HYBRID_VLB_WEIGHT)), terms


# --- optimiser ----------------------------------------------------------------

def init_adam_state(params: dict) -> dict:
    return {"m": {k: np.zeros_like(t.value) for k, t in params.items()},
            "v": {k: np.zeros_like(t.value) for k, t in params.items()}}


def adam_step(params: dict, grads: dict, state: dict, cfg: TrainConfig, step: int) -> None:
    """Bias-corrected Adam update, in place. ``step`` counts from 1."""
    missing = [k for k in params if k not in grads or grads[k] is None]
    if missing:
        raise ValueError(f"missing gradients for {missing}")
    if step < 1:
        raise ValueError("adam step counter starts at 1")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for k, t in params.items():
        g = grads[k]
        m = state["m"][k]
        v = state["v"][k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.value -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


def collect_grads(params: dict) -> dict:
    """Gradient table with zeros for parameters the loss never touched."""
    return {k: (np.zeros_like(t.value) if t.grad is None else t.grad) for k, t in params.items()}


def train_loop(model: DenoiserModel, dataset, s: NoiseSchedule, cfg: TrainConfig,
               rng: np.random.Generator | None = None):
    """Minibatch training with condition dropout.

    ``dataset`` is a ``LabeledDataset``. Each step draws row indices, applies
    condition dropout, evaluates the loss, backpropagates and takes one Adam
    step; all randomness comes from ``rng`` (by default a generator seeded
    with ``cfg.seed``). A report is emitted at step 1, every ``log_every``
    steps and at the last step; its loss is the mean over the steps since
    the previous report.
    Returns ``(model, reports)``; ``model`` is updated in place.
    """
    data = np.asarray(dataset.samples, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training needs a nonempty dataset")
    if data.shape[1] != model.config.data_dim:
        raise ValueError(f"dataset width {data.shape[1]} != model width {model.config.data_dim}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n_rows = data.shape[0]
    labels = CondBatch.make(n_rows, dataset.class_ids, dataset.style_ids)
    state = init_adam_state(model.params)
    ema = {k: t.value.copy() for k, t in model.params.items()} if cfg.ema_decay > 0 else None
    reports = []
    window = []
    for step in range(1, cfg.total_steps + 1):
        idx = rng.integers(0, n_rows, size=cfg.batch_size)
        if cfg.conditional:
            conds = drop_conditions(labels.take(idx), cfg.cond_drop_prob, rng)
        else:
            conds = CondBatch.null_batch(cfg.batch_size)
        loss, terms = batch_loss(model, data[idx], s, conds, rng, cfg.loss_kind,
                                 cfg.variance_choice)
        model.zero_grad()
        backward(loss)
        adam_step(model.params, collect_grads(model.params), state, cfg, step)
        if ema is not None:
            for k, t in model.params.items():
                ema[k] *= cfg.ema_decay
                ema[k] += (1.0 - cfg.ema_decay) * t.value
        window.append((float(loss.value), terms))
        if step == 1 or step % cfg.log_every == 0 or step == cfg.total_steps:
            mean_loss = float(np.mean([w[0] for w in window]))
            per_term = {k: float(np.mean([w[1][k] for w in window])) for k in terms}
            reports.append(LossReport(step, mean_loss, per_term))
            log.info("step %d loss %.5f", step, mean_loss)
            window = []
    model.zero_grad()
    if ema is not None:
        for k, t in model.params.items():
            t.value[...] = ema[k]
    return model, reports
