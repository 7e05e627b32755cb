"""Multi-head attention block with windowed context masks.

The mask builder limits how many past (L) and future (R) key positions a
query may attend to; L or R may be unbounded.  The attention block applies
scaled dot-product attention per head, concatenates heads, projects, and
wraps both the attention and the feed-forward sublayer with residual
connections and post-norm layer normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, Module
from .tensor import Tensor

INF = math.inf
MASK_PENALTY = -1e9


def _check_bound(value, name: str):
    if value == INF:
        return INF
    if isinstance(value, (int, np.integer)) and value >= 0:
        return int(value)
    raise ValueError(f"{name} must be a non-negative integer or inf, got {value!r}")


@dataclass
class ContextMask:
    """Boolean T_q x T_k permission matrix for an (L, R) window."""

    allow: np.ndarray
    left: int | float
    right: int | float

    @property
    def bias(self) -> np.ndarray:
        """Additive score penalty: 0 where allowed, a large negative where not."""
        return np.where(self.allow, 0.0, MASK_PENALTY)

    def tiled(self, repeats: int) -> "ContextMask":
        """Repeat the key axis; each copy keeps the original time indexing."""
        return ContextMask(np.tile(self.allow, (1, repeats)), self.left, self.right)


def build_mask(t_q: int, t_k: int, left, right) -> ContextMask:
    """Permission matrix allowing key s for query t iff t - L <= s <= t + R."""
    left = _check_bound(left, "left context")
    right = _check_bound(right, "right context")
    if t_q < 1 or t_k < 1:
        raise ValueError(f"mask needs t_q >= 1 and t_k >= 1, got {t_q} x {t_k}")
    t = np.arange(t_q)[:, None]
    s = np.arange(t_k)[None, :]
    allow = np.ones((t_q, t_k), dtype=bool)
    if left != INF:
        allow &= s >= t - left
    if right != INF:
        allow &= s <= t + right
    if not allow.any(axis=1).all():
        bad = int(np.flatnonzero(~allow.any(axis=1))[0])
        raise ValueError(f"mask row {bad} has no allowed keys")
    return ContextMask(allow, left, right)


def positional_encoding(t: int, d_model: int) -> np.ndarray:
    """Sinusoidal positions: even columns sin, odd columns cos, shared wavelengths."""
    if d_model % 2 != 0:
        raise ValueError(f"d_model must be even, got {d_model}")
    pos = np.arange(t)[:, None]
    inv_wavelength = np.power(10000.0, -np.arange(0, d_model, 2) / d_model)
    pe = np.empty((t, d_model))
    pe[:, 0::2] = np.sin(pos * inv_wavelength)
    pe[:, 1::2] = np.cos(pos * inv_wavelength)
    return pe


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head projections."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = [Linear(d_model, self.d_head, rng) for _ in range(n_heads)]
        self.k_proj = [Linear(d_model, self.d_head, rng) for _ in range(n_heads)]
        self.v_proj = [Linear(d_model, self.d_head, rng) for _ in range(n_heads)]
        self.out_proj = Linear(d_model, d_model, rng)

    def __call__(self, q_in: Tensor, kv_in: Tensor, mask: ContextMask) -> Tensor:
        t_q, t_k = q_in.shape[0], kv_in.shape[0]
        if mask.allow.shape != (t_q, t_k):
            raise ValueError(
                f"mask shape {mask.allow.shape} does not match queries x keys ({t_q}, {t_k})"
            )
        bias = Tensor(mask.bias)
        scale = 1.0 / math.sqrt(self.d_head)
        heads = []
        for h in range(self.n_heads):
            q = self.q_proj[h](q_in)                      # (T_q, d_head)
            k = self.k_proj[h](kv_in)                     # (T_k, d_head)
            v = self.v_proj[h](kv_in)
            scores = T.matmul(q, T.transpose_last2(k)) * scale + bias
            att = T.softmax_lastdim(scores)               # rows sum to 1 over allowed keys
            heads.append(T.matmul(att, v))
        return self.out_proj(T.concat(heads, axis=-1))


class TransformerBlock(Module):
    """MHA sublayer + feed-forward sublayer, each residual with post-norm."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        self.mha = MultiHeadAttention(d_model, n_heads, rng)
        self.ff1 = Linear(d_model, d_ff, rng)
        self.ff2 = Linear(d_ff, d_model, rng)
        self.norm1_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.norm1_bias = Tensor(np.zeros(d_model), requires_grad=True)
        self.norm2_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.norm2_bias = Tensor(np.zeros(d_model), requires_grad=True)

    def __call__(self, q_in: Tensor, kv_in: Tensor, mask: ContextMask) -> Tensor:
        attended = T.layer_norm(q_in + self.mha(q_in, kv_in, mask),
                                self.norm1_gain, self.norm1_bias)
        ff = self.ff2(T.relu(self.ff1(attended)))
        return T.layer_norm(attended + ff, self.norm2_gain, self.norm2_bias)


# ---------------------------------------------------------------------------
# graph-free row application, for incremental decoding paths
# ---------------------------------------------------------------------------
# These mirror the block above on raw arrays.  Callers pass only the key rows
# the context window admits, so no mask is involved.

def _layer_norm_rows(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                     eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def attend_rows(mha: MultiHeadAttention, q_rows: np.ndarray, kv_rows: np.ndarray) -> np.ndarray:
    scale = 1.0 / math.sqrt(mha.d_head)
    heads = []
    for h in range(mha.n_heads):
        q = q_rows @ mha.q_proj[h].weight.data + mha.q_proj[h].bias.data
        k = kv_rows @ mha.k_proj[h].weight.data + mha.k_proj[h].bias.data
        v = kv_rows @ mha.v_proj[h].weight.data + mha.v_proj[h].bias.data
        scores = q @ k.T * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        att = e / e.sum(axis=-1, keepdims=True)
        heads.append(att @ v)
    return np.concatenate(heads, axis=-1) @ mha.out_proj.weight.data + mha.out_proj.bias.data


def block_rows(block: TransformerBlock, q_rows: np.ndarray, kv_rows: np.ndarray) -> np.ndarray:
    """Apply a block to query rows given their admissible key rows."""
    attended = _layer_norm_rows(q_rows + attend_rows(block.mha, q_rows, kv_rows),
                                block.norm1_gain.data, block.norm1_bias.data)
    hidden = np.maximum(attended @ block.ff1.weight.data + block.ff1.bias.data, 0.0)
    ff = hidden @ block.ff2.weight.data + block.ff2.bias.data
    return _layer_norm_rows(attended + ff, block.norm2_gain.data, block.norm2_bias.data)
