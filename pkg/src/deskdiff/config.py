"""Experiment configuration: a sectioned INI file parsed strictly.

Every key below is optional and falls back to its default; unknown
sections or keys are errors. Lists are comma separated.

``[schedule]``     T, beta_start, beta_end
``[model]``        hidden_widths, time_embed_dim, cond_embed_dim, cond_dim, fusion,
                   n_cond_tokens
``[conditioning]`` n_classes, n_styles, class_names, style_names, conditional
``[train]``        learning_rate, batch_size, total_steps, cond_drop_prob, loss_kind, seed,
                   adam_beta1, adam_beta2, adam_eps, log_every, ema_decay, variance_choice
``[latent]``       enabled, latent_dim, hidden_widths, total_steps, learning_rate, batch_size
``[data]``         generator (ring | sprites), n, heldout_n, k, radius, sigma, shapes,
                   palettes, size, ambient_dim
``[sampler]``      guidance_scale, variance_choice
``[paths]``        checkpoint_dir, output_dir (relative to the config file)
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .conditioning import FUSION_MODES, ConditionVocab
from .netgraph.denoiser import DenoiserConfig
from .sampling import VARIANCE_CHOICES
from .schedule import build_linear_schedule
from .training import LOSS_KINDS, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ScheduleSection:
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.2


@dataclass
class ModelSection:
    hidden_widths: tuple = (64, 64, 64)
    time_embed_dim: int = 16
    cond_embed_dim: int = 8
    cond_dim: int = 16
    fusion: str = "project"
    n_cond_tokens: int = 2


@dataclass
class ConditioningSection:
    n_classes: int = 8
    n_styles: int = 1
    class_names: tuple = ()
    style_names: tuple = ()
    conditional: bool = True


@dataclass
class TrainSection:
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
    variance_choice: str = "posterior"


@dataclass
class LatentSection:
    enabled: bool = False
    latent_dim: int = 2
    hidden_widths: tuple = ()
    total_steps: int = 2000
    learning_rate: float = 1e-2
    batch_size: int = 256


@dataclass
class DataSection:
    generator: str = "ring"
    n: int = 20000
    heldout_n: int = 2000
    k: int = 8
    radius: float = 4.0
    sigma: float = 0.1
    shapes: tuple = ("square", "cross", "disk")
    palettes: int = 3
    size: int = 8
    ambient_dim: int = 0


@dataclass
class SamplerSection:
    guidance_scale: float = 3.0
    variance_choice: str = "posterior"


@dataclass
class PathsSection:
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "outputs"


SECTIONS = {
    "schedule": ScheduleSection,
    "model": ModelSection,
    "conditioning": ConditioningSection,
    "train": TrainSection,
    "latent": LatentSection,
    "data": DataSection,
    "sampler": SamplerSection,
    "paths": PathsSection,
}


@dataclass
class ExperimentConfig:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    model: ModelSection = field(default_factory=ModelSection)
    conditioning: ConditioningSection = field(default_factory=ConditioningSection)
    train: TrainSection = field(default_factory=TrainSection)
    latent: LatentSection = field(default_factory=LatentSection)
    data: DataSection = field(default_factory=DataSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    paths: PathsSection = field(default_factory=PathsSection)
    base_dir: Path = field(default_factory=Path.cwd)

    # derived objects --------------------------------------------------------
    def build_schedule(self):
        s = self.schedule
        return build_linear_schedule(s.T, s.beta_start, s.beta_end)

    def vocab(self) -> ConditionVocab:
        c = self.conditioning
        return ConditionVocab(c.n_classes, c.n_styles, c.class_names, c.style_names)

    def data_dim(self) -> int:
        d = self.data
        if self.latent.enabled:
            return self.latent.latent_dim
        if d.generator == "sprites":
            return d.size * d.size
        return d.ambient_dim or 2

    def denoiser_config(self) -> DenoiserConfig:
        m = self.model
        c = self.conditioning
        return DenoiserConfig(
            data_dim=self.data_dim(), hidden_widths=m.hidden_widths,
            time_embed_dim=m.time_embed_dim, n_classes=c.n_classes, n_styles=c.n_styles,
            cond_embed_dim=m.cond_embed_dim, cond_dim=m.cond_dim, fusion=m.fusion,
            n_cond_tokens=m.n_cond_tokens)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            learning_rate=t.learning_rate, batch_size=t.batch_size, total_steps=t.total_steps,
            cond_drop_prob=t.cond_drop_prob, loss_kind=t.loss_kind, seed=t.seed,
            adam_beta1=t.adam_beta1, adam_beta2=t.adam_beta2, adam_eps=t.adam_eps,
            log_every=t.log_every, ema_decay=t.ema_decay,
            conditional=self.conditioning.conditional, variance_choice=t.variance_choice)

    def ae_train_config(self) -> TrainConfig:
        lt = self.latent
        return TrainConfig(learning_rate=lt.learning_rate, batch_size=lt.batch_size,
                           total_steps=lt.total_steps, seed=self.train.seed)

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out

    def validate(self) -> "ExperimentConfig":
        try:
            self.build_schedule()
            self.vocab()
            self.denoiser_config()
            self.train_config()
            self.ae_train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        m, d, lt = self.model, self.data, self.latent
        _choice("model.fusion", m.fusion, FUSION_MODES)
        _choice("train.loss_kind", self.train.loss_kind, LOSS_KINDS)
        _choice("train.variance_choice", self.train.variance_choice, VARIANCE_CHOICES)
        _choice("sampler.variance_choice", self.sampler.variance_choice, VARIANCE_CHOICES)
        _choice("data.generator", d.generator, ("ring", "sprites"))
        if self.sampler.guidance_scale < 0:
            raise ConfigError("sampler.guidance_scale: must be nonnegative")
        if d.n < 1 or d.heldout_n < 0:
            raise ConfigError("data.n: must be positive (data.heldout_n nonnegative)")
        if d.generator == "ring":
            if d.k < 1 or d.sigma <= 0 or d.radius < 0:
                raise ConfigError("data: ring needs k >= 1, sigma > 0, radius >= 0")
            if d.ambient_dim and d.ambient_dim < 2:
                raise ConfigError("data.ambient_dim: must be 0 (off) or >= 2")
            n_cls, n_sty = d.k, 1
        else:
            if d.size < 4:
                raise ConfigError("data.size: sprites need size >= 4")
            if d.ambient_dim:
                raise ConfigError("data.ambient_dim: only supported for the ring generator")
            n_cls, n_sty = len(d.shapes), d.palettes
        c = self.conditioning
        if c.n_classes < n_cls or c.n_styles < n_sty:
            raise ConfigError(
                f"conditioning: vocabulary ({c.n_classes} classes, {c.n_styles} styles) too small "
                f"for the data labels ({n_cls} classes, {n_sty} styles)")
        if lt.enabled:
            ambient = d.size * d.size if d.generator == "sprites" else (d.ambient_dim or 2)
            if not 1 <= lt.latent_dim <= ambient:
                raise ConfigError(f"latent.latent_dim: must lie in [1, {ambient}]")
        return self


def _choice(key, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{key}: {value!r} not one of {list(allowed)}")


def _convert(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(int(s) if s.lstrip("-").isdigit() else s for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def _section_types(cls) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig(base_dir=base_dir or Path.cwd())
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        types = _section_types(SECTIONS[section])
        values = {}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"{section}.{key}: unknown key")
            values[key] = _convert(f"{section}.{key}", raw, types[key])
        setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **values))
    for key in ("class_names", "style_names"):
        names = getattr(cfg.conditioning, key)
        setattr(cfg.conditioning, key, tuple(str(n) for n in names))
    cfg.data.shapes = tuple(str(s) for s in cfg.data.shapes)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    return parse_config_text(path.read_text(), path.parent)


def render_config(cfg: ExperimentConfig) -> str:
    """Serialise back to the INI text format (round-trips through the parser)."""
    lines = []
    for name, values in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for k, v in values.items():
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
