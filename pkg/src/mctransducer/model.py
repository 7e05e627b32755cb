"""The complete recognizer: multi-channel encoder, label encoder, joint."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import INF
from .encoder import EncoderConfig, MultiChannelEncoder
from .labels import LabelEncoder
from .nn import Module
from .tensor import Tensor, log_softmax_lastdim
from .transducer import JointNetwork, greedy_decode, transducer_loss


@dataclass
class ModelConfig:
    feat_dim: int
    vocab_size: int                 # joint output size, blank included
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers_csa: int = 2
    n_layers_cca: int = 2
    n_layers_label: int = 2
    d_joint: int = 64
    combiner: str = "avg"
    left_audio: int | float = INF
    right_audio: int | float = INF
    left_label: int | float = INF
    avg_over_all_channels: bool = True

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            feat_dim=self.feat_dim,
            d_model=self.d_model,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            n_layers_csa=self.n_layers_csa,
            n_layers_cca=self.n_layers_cca,
            combiner=self.combiner,
            left_context=self.left_audio,
            right_context=self.right_audio,
            avg_over_all_channels=self.avg_over_all_channels,
        )


class TransducerModel(Module):
    """Holds all trainable parameters and wires the loss path together."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.encoder = MultiChannelEncoder(cfg.encoder_config(), rng)
        self.label_encoder = LabelEncoder(
            cfg.vocab_size, cfg.d_model, cfg.n_heads, cfg.d_ff,
            cfg.n_layers_label, cfg.left_label, rng,
        )
        self.joint = JointNetwork(cfg.d_model, cfg.d_joint, cfg.vocab_size, rng)

    def log_prob_lattice(self, mc_data: np.ndarray, labels: list[int]) -> Tensor:
        """(T, U+1, V+1) log-probabilities for one utterance."""
        audio = self.encoder.encode(mc_data)
        label_states = self.label_encoder.encode_labels(labels)
        return log_softmax_lastdim(self.joint.lattice(audio, label_states))

    def loss(self, mc_data: np.ndarray, labels: list[int]) -> Tensor:
        """Alignment-marginal negative log-likelihood (scalar graph node)."""
        return transducer_loss(self.log_prob_lattice(mc_data, labels), labels)

    def batch_loss(self, batch: list[tuple[np.ndarray, list[int]]]) -> Tensor:
        """Mean per-utterance loss over a batch."""
        if not batch:
            raise ValueError("empty batch")
        total = self.loss(*batch[0])
        for mc_data, labels in batch[1:]:
            total = total + self.loss(mc_data, labels)
        return total * (1.0 / len(batch))

    def decode(self, mc_data: np.ndarray, max_symbols_per_frame: int = 5) -> list[int]:
        """Offline greedy decode of one utterance."""
        audio = self.encoder.encode(mc_data).data
        return greedy_decode(audio, self.joint, self.label_encoder, max_symbols_per_frame)

    def trainable_parameters(self, n_channels: int) -> dict[str, Tensor]:
        """Parameters that participate in the loss for a given channel count.

        Single-channel input never reaches the cross-channel stack, so its
        parameters are excluded from optimization in that case.
        """
        params = dict(self.named_parameters())
        if n_channels < 2:
            params = {k: v for k, v in params.items() if not k.startswith("encoder.cca_layers")}
        return params
