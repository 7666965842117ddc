"""Reverse-mode autodiff layer and the skip-connected denoiser.

``denoiser`` is not imported here to keep ``deskdiff.conditioning`` free of
an import cycle; use ``deskdiff.netgraph.denoiser`` directly.
"""

from .layers import cross_attention, dense_forward, time_embedding
from .tensor import GraphConsumedError, Tensor, backward, no_grad, silu

__all__ = ["Tensor", "GraphConsumedError", "backward", "no_grad", "silu",
           "dense_forward", "time_embedding", "cross_attention"]
