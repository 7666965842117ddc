"""Named random streams split from one experiment seed.

Every stream is ``SeedSequence(seed, spawn_key=(stream_id,))``; ids are
fixed here so adding a new purpose never shifts an existing stream.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "init": 0,        # denoiser parameter initialisation
    "data": 1,        # training set generation
    "train": 2,       # minibatches, steps, noise, condition dropout
    "sample": 3,      # ancestral sampling
    "heldout": 4,     # held-out reference set for evaluation
    "eval": 5,        # evaluation-time randomness
    "ae_init": 6,     # autoencoder initialisation
    "ae_train": 7,    # autoencoder minibatches
    "gradcheck": 8,   # gradient-check probe batch
    "embed": 9,       # fixed affine embedding of toy data
}


def stream(seed: int, purpose: str) -> np.random.Generator:
    try:
        key = STREAM_IDS[purpose]
    except KeyError:
        raise ValueError(f"unknown random stream {purpose!r}") from None
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
