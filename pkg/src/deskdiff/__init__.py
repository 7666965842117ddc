"""Desk-scale denoising diffusion: schedules, forward kernels, a from-scratch
autodiff denoiser, guided ancestral sampling and latent diffusion."""

from .conditioning import CondBatch, ConditionEmbedding, drop_condition, embed, fuse
from .data import LabeledDataset, make_ring_mixture, make_sprites
from .forward import forward_jump, forward_posterior_params, forward_step
from .latent import Autoencoder, decode, encode, latent_pipeline, train_autoencoder
from .metrics import class_purity, mmd, mode_coverage
from .netgraph.denoiser import DenoiserConfig, DenoiserModel, denoiser_forward
from .sampling import SamplerConfig, ancestral_sample, guided_eps, mu_from_eps
from .schedule import NoiseSchedule, alpha_bar, build_linear_schedule, posterior_variance
from .training import TrainConfig, adam_step, gaussian_kl, simple_loss, train_loop, vlb_term

__version__ = "0.1.0"
