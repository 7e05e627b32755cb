"""Frame-by-frame encoding and decoding.

With per-layer context bounds (L, R), output row s of any layer depends
on rows [s - L, s + R] of the layer below, so each encoder state h_t is
fully determined once frame t + depth * R has arrived.  The streaming
encoder keeps per-layer, per-channel row buffers and computes each new
row from its window alone; per-frame work is therefore independent of
utterance length.
"""

from __future__ import annotations

import numpy as np

from .attention import INF, block_rows
from .encoder import MultiChannelEncoder
from .labels import LabelEncoder
from .transducer import JointNetwork, greedy_step


class StreamingEncoder:
    """Incremental equivalent of ``MultiChannelEncoder.encode``.

    Feed frames with ``push``; each call returns the encoder states whose
    lookahead window just completed.  ``finish`` flushes the tail rows,
    whose windows clip at the end of the utterance exactly as the offline
    mask does.
    """

    def __init__(self, encoder: MultiChannelEncoder, n_channels: int):
        cfg = encoder.cfg
        if cfg.right_context == INF:
            raise ValueError("streaming requires a finite per-layer right context")
        self.encoder = encoder
        self.cfg = cfg
        self.n_channels = n_channels
        self.blocks = list(encoder.csa_layers)
        self.n_csa = cfg.n_layers_csa
        if n_channels >= 2:
            self.blocks += list(encoder.cca_layers)
        # rows[0] holds embedded inputs; rows[k] the output of block k-1.
        self.rows: list[list[list[np.ndarray]]] = [
            [[] for _ in range(n_channels)] for _ in range(len(self.blocks) + 1)
        ]
        self.n_input = 0
        self.finished = False
        self.n_emitted = 0

    def push(self, frame: np.ndarray) -> list[np.ndarray]:
        """Add one C x F frame; returns newly determined encoder states."""
        if self.finished:
            raise ValueError("stream already finished")
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.n_channels, self.cfg.feat_dim):
            raise ValueError(
                f"expected frame shape {(self.n_channels, self.cfg.feat_dim)}, got {frame.shape}"
            )
        proj = self.encoder.in_proj
        pe = _positional_row(self.n_input, self.cfg.d_model)
        for c in range(self.n_channels):
            self.rows[0][c].append(frame[c] @ proj.weight.data + proj.bias.data + pe)
        self.n_input += 1
        return self._advance()

    def finish(self) -> list[np.ndarray]:
        """Mark end of stream and compute the remaining tail states."""
        self.finished = True
        return self._advance()

    def _advance(self) -> list[np.ndarray]:
        left = self.cfg.left_context
        right = self.cfg.right_context
        for k, block in enumerate(self.blocks):
            level, below = self.rows[k + 1], self.rows[k]
            avail = len(below[0])
            while True:
                s = len(level[0])
                if s >= avail or (not self.finished and avail <= s + right):
                    break
                lo = 0 if left == INF else max(0, s - left)
                hi = min(s + right, avail - 1)
                if k < self.n_csa:
                    for c in range(self.n_channels):
                        window = np.vstack(below[c][lo : hi + 1])
                        level[c].append(block_rows(block, below[c][s][None, :], window)[0])
                else:
                    new_rows = [
                        block_rows(block, below[i][s][None, :], self._combine_window(below, i, lo, hi))[0]
                        for i in range(self.n_channels)
                    ]
                    for c in range(self.n_channels):
                        level[c].append(new_rows[c])

        top = self.rows[-1]
        out = []
        while self.n_emitted < len(top[0]):
            s = self.n_emitted
            fused = top[0][s].copy()
            for c in range(1, self.n_channels):
                fused += top[c][s]
            out.append(fused * (1.0 / self.n_channels))
            self.n_emitted += 1
        return out

    def _combine_window(self, below, skip: int, lo: int, hi: int) -> np.ndarray:
        others = [c for c in range(self.n_channels) if c != skip]
        if self.cfg.combiner == "avg":
            total = np.vstack(below[others[0]][lo : hi + 1]).copy()
            for c in others[1:]:
                total += np.vstack(below[c][lo : hi + 1])
            divisor = self.n_channels if self.cfg.avg_over_all_channels else self.n_channels - 1
            return total * (1.0 / divisor)
        return np.vstack([row for c in others for row in below[c][lo : hi + 1]])


def _positional_row(pos: int, d_model: int) -> np.ndarray:
    inv_wavelength = np.power(10000.0, -np.arange(0, d_model, 2) / d_model)
    row = np.empty(d_model)
    row[0::2] = np.sin(pos * inv_wavelength)
    row[1::2] = np.cos(pos * inv_wavelength)
    return row


def streaming_decode(
    mc_frames: np.ndarray,
    encoder: MultiChannelEncoder,
    label_encoder: LabelEncoder,
    joint: JointNetwork,
    max_symbols_per_frame: int = 5,
) -> list[int]:
    """Greedy decode emitting tokens as soon as each state's lookahead completes.

    ``mc_frames`` is the C x T x F feature array, consumed one frame at a
    time; the result matches offline greedy decoding of the full utterance.
    """
    stream = StreamingEncoder(encoder, mc_frames.shape[0])
    state = label_encoder.start_state()
    tokens: list[int] = []
    for t in range(mc_frames.shape[1]):
        for h in stream.push(mc_frames[:, t, :]):
            tokens.extend(greedy_step(joint, h, state, max_symbols_per_frame))
    for h in stream.finish():
        tokens.extend(greedy_step(joint, h, state, max_symbols_per_frame))
    return tokens
