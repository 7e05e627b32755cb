"""Multi-channel audio encoder.

Channels are projected into the model space (weights shared across
channels), run through a stack of channel-wise self-attention layers,
then a stack of cross-channel attention layers where each channel queries
a combination of the others, and finally fused by an elementwise average
into one state sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import INF, ContextMask, TransformerBlock, build_mask, positional_encoding
from .nn import Linear, Module
from .tensor import Tensor


@dataclass
class EncoderConfig:
    feat_dim: int
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers_csa: int = 2
    n_layers_cca: int = 2
    combiner: str = "avg"          # "avg" or "concat"
    left_context: int | float = INF
    right_context: int | float = INF
    # The cross-channel average divides by the full channel count; set False
    # to divide by the number of channels actually summed (C - 1) instead.
    avg_over_all_channels: bool = True

    def __post_init__(self):
        if self.combiner not in ("avg", "concat"):
            raise ValueError(f"unknown combiner {self.combiner!r}")
        if self.n_layers_csa < 1 or self.n_layers_cca < 1:
            raise ValueError("encoder needs at least one CSA and one CCA layer")

    @property
    def depth(self) -> int:
        return self.n_layers_csa + self.n_layers_cca


def combine(encodings: list[Tensor], skip: int, combiner: str,
            avg_over_all_channels: bool = True) -> Tensor:
    """Key/value source for one channel's cross-channel attention.

    avg:    scaled sum of the other channels (same T x d shape).
    concat: the other channels stacked along the time axis, ascending
            channel order, giving (C - 1) * T rows.
    """
    c = len(encodings)
    if c < 2:
        raise ValueError("combiner needs at least two channels")
    others = [enc for j, enc in enumerate(encodings) if j != skip]
    if combiner == "avg":
        total = others[0]
        for enc in others[1:]:
            total = total + enc
        divisor = c if avg_over_all_channels else c - 1
        return total * (1.0 / divisor)
    if combiner == "concat":
        return T.concat(others, axis=0)
    raise ValueError(f"unknown combiner {combiner!r}")


class MultiChannelEncoder(Module):
    """CSA stack, CCA stack, and average fusion over channels."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.in_proj = Linear(cfg.feat_dim, cfg.d_model, rng)
        self.csa_layers = [
            TransformerBlock(cfg.d_model, cfg.n_heads, cfg.d_ff, rng)
            for _ in range(cfg.n_layers_csa)
        ]
        self.cca_layers = [
            TransformerBlock(cfg.d_model, cfg.n_heads, cfg.d_ff, rng)
            for _ in range(cfg.n_layers_cca)
        ]

    def embed_channel(self, feats: np.ndarray) -> Tensor:
        """Project one channel's T x F slice and add positional encoding."""
        if feats.ndim != 2 or feats.shape[1] != self.cfg.feat_dim:
            raise ValueError(
                f"expected frames x {self.cfg.feat_dim} features, got {feats.shape}"
            )
        return self.in_proj(Tensor(feats)) + positional_encoding(feats.shape[0], self.cfg.d_model)

    def encode(self, mc_data: np.ndarray) -> Tensor:
        """C x T x F features -> T x d_model encoder states."""
        if mc_data.ndim != 3:
            raise ValueError(f"expected channels x frames x features, got shape {mc_data.shape}")
        n_channels, t, _ = mc_data.shape
        cfg = self.cfg
        mask = build_mask(t, t, cfg.left_context, cfg.right_context)
        xs = [self.embed_channel(mc_data[c]) for c in range(n_channels)]

        for block in self.csa_layers:
            xs = [block(x, x, mask) for x in xs]

        if n_channels >= 2:
            kv_mask = mask if cfg.combiner == "avg" else mask.tiled(n_channels - 1)
            for block in self.cca_layers:
                kvs = [
                    combine(xs, i, cfg.combiner, cfg.avg_over_all_channels)
                    for i in range(n_channels)
                ]
                xs = [block(xs[i], kvs[i], kv_mask) for i in range(n_channels)]

        fused = xs[0]
        for x in xs[1:]:
            fused = fused + x
        return fused * (1.0 / n_channels)
