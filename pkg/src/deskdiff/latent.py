"""Autoencoder-defined latent space and diffusion inside it.

The autoencoder is a deterministic dense encoder/decoder pair trained on
reconstruction MSE. Latents are standardised per dimension before the
denoiser sees them; samples are de-standardised and decoded.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .netgraph.denoiser import DenoiserConfig, DenoiserModel
from .netgraph.layers import dense_forward, glorot_uniform
from .netgraph.tensor import Tensor, backward, mean_all, no_grad, silu, square, sub
from .sampling import SampleResult, SamplerConfig, ancestral_sample
from .schedule import NoiseSchedule
from .training import TrainConfig, adam_step, collect_grads, init_adam_state, train_loop


@dataclass
class Autoencoder:
    data_dim: int
    latent_dim: int
    hidden_widths: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if self.latent_dim < 1 or self.latent_dim > self.data_dim:
            raise ValueError(
                f"latent_dim must lie in [1, data_dim={self.data_dim}], got {self.latent_dim}")

    @classmethod
    def init(cls, data_dim: int, latent_dim: int, hidden_widths=(),
             rng: np.random.Generator | None = None) -> "Autoencoder":
        rng = np.random.default_rng(0) if rng is None else rng
        ae = cls(data_dim, latent_dim, hidden_widths)
        arrays = {}
        enc = [data_dim, *ae.hidden_widths, latent_dim]
        dec = enc[::-1]
        for prefix, widths in (("enc", enc), ("dec", dec)):
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]), start=1):
                arrays[f"{prefix}{i}.w"] = glorot_uniform(rng, a, b)
                arrays[f"{prefix}{i}.b"] = np.zeros((1, b))
        ae.set_arrays(arrays)
        return ae

    @classmethod
    def identity(cls, dim: int) -> "Autoencoder":
        ae = cls(dim, dim, ())
        ae.set_arrays({"enc1.w": np.eye(dim), "enc1.b": np.zeros((1, dim)),
                       "dec1.w": np.eye(dim), "dec1.b": np.zeros((1, dim))})
        return ae

    def set_arrays(self, arrays: dict) -> None:
        self.params = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=k)
                       for k, v in arrays.items()}

    def arrays(self) -> dict:
        return {k: t.value for k, t in self.params.items()}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def _run(self, prefix: str, x) -> Tensor:
        n_layers = len(self.hidden_widths) + 1
        h = x
        for i in range(1, n_layers + 1):
            h = dense_forward(h, self.params[f"{prefix}{i}.w"], self.params[f"{prefix}{i}.b"])
            if i < n_layers:
                h = silu(h)
        return h

    def encode_tensor(self, x) -> Tensor:
        return self._run("enc", x)

    def decode_tensor(self, z) -> Tensor:
        return self._run("dec", z)


def _check_width(x, width: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{what} expects (n, {width}) input, got shape {x.shape}")
    return x


def encode(ae: Autoencoder, x) -> np.ndarray:
    x = _check_width(x, ae.data_dim, "encode")
    with no_grad():
        return ae.encode_tensor(x).value


def decode(ae: Autoencoder, z) -> np.ndarray:
    z = _check_width(z, ae.latent_dim, "decode")
    with no_grad():
        return ae.decode_tensor(z).value


def reconstruction_mse(ae: Autoencoder, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean((decode(ae, encode(ae, x)) - x) ** 2))


def train_autoencoder(data, latent_dim: int, cfg: TrainConfig, hidden_widths=(),
                      init_rng: np.random.Generator | None = None,
                      rng: np.random.Generator | None = None):
    """Fit an autoencoder by minibatch Adam on reconstruction MSE.

    Returns ``(autoencoder, final_mse)`` with the MSE measured on all of
    ``data``.
    """
    x = np.asarray(data.samples if isinstance(data, LabeledDataset) else data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("autoencoder training needs a nonempty (n, d) dataset")
    if latent_dim > x.shape[1]:
        raise ValueError(f"latent_dim {latent_dim} exceeds data width {x.shape[1]}")
    ae = Autoencoder.init(x.shape[1], latent_dim, hidden_widths,
                          np.random.default_rng(cfg.seed) if init_rng is None else init_rng)
    rng = np.random.default_rng(cfg.seed + 1) if rng is None else rng
    state = init_adam_state(ae.params)
    for step in range(1, cfg.total_steps + 1):
        batch = x[rng.integers(0, x.shape[0], size=cfg.batch_size)]
        loss = mean_all(square(sub(ae.decode_tensor(ae.encode_tensor(batch)), batch)))
        ae.zero_grad()
        backward(loss)
        adam_step(ae.params, collect_grads(ae.params), state, cfg, step)
    ae.zero_grad()
    return ae, reconstruction_mse(ae, x)


@dataclass
class LatentStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, z) -> "LatentStats":
        z = np.asarray(z, dtype=np.float64)
        std = z.std(axis=0)
        if np.any(std == 0):
            raise ValueError("latent dimension with zero variance cannot be standardised")
        return cls(z.mean(axis=0), std)

    def normalize(self, z) -> np.ndarray:
        return (np.asarray(z, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, u) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) * self.std + self.mean


@dataclass
class LatentPipeline:
    autoencoder: Autoencoder
    denoiser: DenoiserModel
    stats: LatentStats
    schedule: NoiseSchedule
    reports: list = field(default_factory=list)
    ae_mse: float = float("nan")

    def decode_latents(self, u) -> np.ndarray:
        """Map standardised latents back to data space."""
        return decode(self.autoencoder, self.stats.denormalize(u))

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.decode_latents(rng.standard_normal((n, self.autoencoder.latent_dim)))

    def sample(self, cond, cfg: SamplerConfig, rng: np.random.Generator):
        """Ancestral sampling in latent space, then decode.

        Returns ``(decoded, latent_result)``; the latent result carries the
        trajectory when requested.
        """
        res: SampleResult = ancestral_sample(self.denoiser, self.schedule, cond, cfg, rng,
                                             data_dim=self.autoencoder.latent_dim)
        return self.decode_latents(res.samples), res


def latent_pipeline(data: LabeledDataset, schedule: NoiseSchedule, ae_cfg: TrainConfig,
                    diff_cfg: TrainConfig, latent_dim: int, denoiser_config: DenoiserConfig,
                    ae_hidden=(), seeds: dict | None = None,
                    autoencoder: Autoencoder | None = None,
                    normalize: bool = True) -> LatentPipeline:
    """Train (or take) an autoencoder, then a denoiser on standardised latents.

    ``seeds`` may hold generators under ``ae_init``, ``ae_train``, ``init``
    and ``train``. Passing ``autoencoder`` skips autoencoder training. With
    ``normalize=False`` the latents are used as encoded, so an identity
    autoencoder reproduces pixel-space training exactly.
    """
    seeds = seeds or {}
    if autoencoder is None:
        ae, mse = train_autoencoder(data, latent_dim, ae_cfg, ae_hidden,
                                    seeds.get("ae_init"), seeds.get("ae_train"))
    else:
        ae = autoencoder
        mse = reconstruction_mse(ae, data.samples)
    z = encode(ae, data.samples)
    stats = LatentStats.fit(z) if normalize else LatentStats(np.zeros(ae.latent_dim), np.ones(ae.latent_dim))
    latents = dataclasses.replace(data, samples=stats.normalize(z), metadata=copy.deepcopy(data.metadata))
    dcfg = dataclasses.replace(denoiser_config, data_dim=ae.latent_dim)
    init_rng = seeds.get("init") or np.random.default_rng(diff_cfg.seed)
    model = DenoiserModel.init(dcfg, init_rng)
    model, reports = train_loop(model, latents, schedule, diff_cfg, seeds.get("train"))
    return LatentPipeline(ae, model, stats, schedule, reports, mse)
