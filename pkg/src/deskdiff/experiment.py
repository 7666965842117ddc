"""Config-driven runs shared by the command line and the acceptance suite."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config_text, render_config
from .data import LabeledDataset, make_ring_mixture, make_sprites, random_isometry, sprite_base
from .latent import Autoencoder, LatentStats, latent_pipeline
from .netgraph.checkpoint import load_checkpoint, save_checkpoint
from .netgraph.denoiser import DenoiserConfig, DenoiserModel
from .rng import stream
from .training import train_loop

DENOISER_FILE = "denoiser.ckpt"
AUTOENCODER_FILE = "autoencoder.ckpt"
LOSS_FILE = "loss.csv"


@dataclass
class Datasets:
    train: LabeledDataset
    heldout: LabeledDataset
    centers: np.ndarray           # mode / template centres in data space
    center_classes: np.ndarray    # class id of each centre


def _generate(cfg: ExperimentConfig, n: int, rng) -> LabeledDataset:
    d = cfg.data
    if d.generator == "ring":
        return make_ring_mixture(n, d.k, d.radius, d.sigma, rng=rng)
    return make_sprites(n, d.shapes, d.palettes, d.size, rng=rng)


def build_datasets(cfg: ExperimentConfig) -> Datasets:
    """Training and held-out sets from the ``data`` and ``heldout`` streams.

    With ``data.ambient_dim`` set, ring data are lifted into that many
    dimensions by a fixed isometric affine map drawn from the ``embed``
    stream.
    """
    seed = cfg.train.seed
    d = cfg.data
    train = _generate(cfg, d.n, stream(seed, "data"))
    held = _generate(cfg, d.heldout_n, stream(seed, "heldout"))
    if d.generator == "ring":
        centers = train.centers
        center_classes = np.arange(d.k)
    else:
        palettes = np.arange(d.palettes)
        centers = np.array([sprite_base(s, d.size).reshape(-1) * (p + 1) / d.palettes
                            for s in d.shapes for p in palettes])
        center_classes = np.repeat(np.arange(len(d.shapes)), d.palettes)
    if d.generator == "ring" and d.ambient_dim:
        basis, offset = random_isometry(2, d.ambient_dim, stream(seed, "embed"))
        centers = centers @ basis + offset
        train = dataclasses.replace(train, samples=train.samples @ basis + offset, centers=centers)
        held = dataclasses.replace(held, samples=held.samples @ basis + offset, centers=centers)
    return Datasets(train, held, centers, center_classes)


@dataclass
class TrainedRun:
    config: ExperimentConfig
    model: DenoiserModel
    reports: list = field(default_factory=list)
    autoencoder: Autoencoder | None = None
    stats: LatentStats | None = None
    ae_mse: float | None = None


def train_from_config(cfg: ExperimentConfig) -> TrainedRun:
    seed = cfg.train.seed
    data = build_datasets(cfg).train
    schedule = cfg.build_schedule()
    if cfg.latent.enabled:
        dcfg = cfg.denoiser_config()
        pipe = latent_pipeline(
            data, schedule, cfg.ae_train_config(), cfg.train_config(), cfg.latent.latent_dim,
            dcfg, cfg.latent.hidden_widths,
            seeds={"ae_init": stream(seed, "ae_init"), "ae_train": stream(seed, "ae_train"),
                   "init": stream(seed, "init"), "train": stream(seed, "train")})
        return TrainedRun(cfg, pipe.denoiser, pipe.reports, pipe.autoencoder, pipe.stats, pipe.ae_mse)
    model = DenoiserModel.init(cfg.denoiser_config(), stream(seed, "init"))
    model, reports = train_loop(model, data, schedule, cfg.train_config(), stream(seed, "train"))
    return TrainedRun(cfg, model, reports)


def save_run(run: TrainedRun, ckpt_dir: Path) -> Path:
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config_text": render_config(run.config),
            "denoiser_config": run.model.config.to_dict(),
            "autoencoder": AUTOENCODER_FILE if run.autoencoder is not None else None}
    path = ckpt_dir / DENOISER_FILE
    save_checkpoint(path, "denoiser", meta, run.model.arrays())
    if run.autoencoder is not None:
        ae = run.autoencoder
        arrays = dict(ae.arrays())
        arrays["stats.mean"] = run.stats.mean
        arrays["stats.std"] = run.stats.std
        save_checkpoint(ckpt_dir / AUTOENCODER_FILE, "autoencoder",
                        {"data_dim": ae.data_dim, "latent_dim": ae.latent_dim,
                         "hidden_widths": list(ae.hidden_widths), "reconstruction_mse": run.ae_mse},
                        arrays)
    return path


def load_run(path) -> TrainedRun:
    """Rebuild a run (config, denoiser and optional autoencoder) from a checkpoint."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    _, meta, arrays = load_checkpoint(path, expect_kind="denoiser")
    cfg = parse_config_text(meta["config_text"], path.parent)
    model = DenoiserModel.from_arrays(DenoiserConfig.from_dict(meta["denoiser_config"]), arrays)
    run = TrainedRun(cfg, model)
    if meta.get("autoencoder"):
        _, ae_meta, ae_arrays = load_checkpoint(path.parent / meta["autoencoder"],
                                                expect_kind="autoencoder")
        stats = LatentStats(ae_arrays.pop("stats.mean"), ae_arrays.pop("stats.std"))
        ae = Autoencoder(ae_meta["data_dim"], ae_meta["latent_dim"], ae_meta["hidden_widths"])
        ae.set_arrays(ae_arrays)
        run.autoencoder, run.stats, run.ae_mse = ae, stats, ae_meta.get("reconstruction_mse")
    return run
