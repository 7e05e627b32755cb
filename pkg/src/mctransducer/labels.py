"""Vocabulary and the causal label encoder.

The label encoder is a transformer over previously emitted non-blank
tokens.  Row u of its output is conditioned on the start symbol and the
first u tokens only: every layer uses a causal mask (no future keys) with
a configurable left bound.  For decoding there is an incremental state
that appends one token at a time and reproduces the one-shot encoding's
last row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import INF, TransformerBlock, block_rows, build_mask, positional_encoding
from .nn import Module
from .tensor import Tensor, embedding

BLANK_ID = 0
SOS_ID = 1


@dataclass
class Vocabulary:
    """Dense id -> string table; id 0 is the blank, id 1 the start symbol."""

    tokens: list[str]

    def __post_init__(self):
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least blank and start-of-sentence entries")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate token strings")

    @property
    def size(self) -> int:
        """Table size, i.e. the joint network's output dimension."""
        return len(self.tokens)

    def string_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def id_of(self, token: str) -> int:
        return self.tokens.index(token)

    def encode(self, text: str) -> list[int]:
        return [self.id_of(tok) for tok in text.split()]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")


def check_labels(ids, vocab_size: int) -> list[int]:
    """Validate a reference/hypothesis token sequence (no blanks, in range)."""
    out = []
    for i in ids:
        i = int(i)
        if i == BLANK_ID:
            raise ValueError("label sequences must not contain the blank id")
        if not 0 <= i < vocab_size:
            raise ValueError(f"token id {i} outside vocabulary of size {vocab_size}")
        out.append(i)
    return out


class LabelEncoder(Module):
    """Causal transformer over [sos, y_1, ..., y_U]."""

    def __init__(self, vocab_size: int, d_model: int, n_heads: int, d_ff: int,
                 n_layers: int, left_context, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.left_context = left_context
        self.embed = Tensor(rng.normal(0.0, d_model ** -0.5, size=(vocab_size, d_model)),
                            requires_grad=True)
        self.layers = [TransformerBlock(d_model, n_heads, d_ff, rng) for _ in range(n_layers)]

    def encode_labels(self, y: list[int]) -> Tensor:
        """(U+1) x d_model states; row u sees y_0..y_u only."""
        ids = [SOS_ID] + check_labels(y, self.vocab_size)
        x = embedding(self.embed, ids) + positional_encoding(len(ids), self.d_model)
        mask = build_mask(len(ids), len(ids), self.left_context, 0)
        for block in self.layers:
            x = block(x, x, mask)
        return x

    def start_state(self) -> "LabelState":
        return LabelState(self)


class LabelState:
    """Incremental label encoding for one decoding hypothesis.

    Keeps, per layer, the input rows still inside the left context window;
    appending a token computes just one new row per layer.  Not shared
    across hypotheses.
    """

    def __init__(self, enc: LabelEncoder):
        self.enc = enc
        self.pos = 0
        self.caches: list[list[np.ndarray]] = [[] for _ in enc.layers]
        self.output = self._push(SOS_ID)

    def _push(self, token_id: int) -> np.ndarray:
        row = self.enc.embed.data[token_id] + _positional_row(self.pos, self.enc.d_model)
        left = self.enc.left_context
        for block, cache in zip(self.enc.layers, self.caches):
            kv = np.vstack(cache + [row]) if cache else row[None, :]
            new_row = block_rows(block, row[None, :], kv)[0]
            cache.append(row)
            if left != INF:
                while len(cache) > left:
                    cache.pop(0)
            row = new_row
        self.pos += 1
        return row

    def advance(self, token_id: int) -> np.ndarray:
        """Append one non-blank token; returns (and stores) the new state row."""
        token_id = int(token_id)
        if token_id == BLANK_ID:
            raise ValueError("label state must not consume the blank id")
        if not 0 <= token_id < self.enc.vocab_size:
            raise ValueError(f"token id {token_id} outside vocabulary of size {self.enc.vocab_size}")
        self.output = self._push(token_id)
        return self.output

    def cache_rows(self) -> int:
        return sum(len(c) for c in self.caches)


def _positional_row(pos: int, d_model: int) -> np.ndarray:
    inv_wavelength = np.power(10000.0, -np.arange(0, d_model, 2) / d_model)
    row = np.empty(d_model)
    row[0::2] = np.sin(pos * inv_wavelength)
    row[1::2] = np.cos(pos * inv_wavelength)
    return row
