"""Joint network, alignment-marginal loss, and greedy decoding.

The loss marginalizes over every monotone alignment of T blank emissions
and U label emissions: a blank at lattice node (t, u) consumes frame t,
a label emission advances u within frame t, and every complete path ends
by consuming the final frame with a blank from node (T-1, U).  The
forward recurrence, in log domain, is

    alpha[t][u] = logaddexp(alpha[t-1][u] + blank(t-1, u),
                            alpha[t][u-1] + emit(t, u-1, y_u))

with alpha[0][0] = 0, and the sequence log-probability is
alpha[T-1][U] + blank(T-1, U).  Gradients come from the matching backward
table; ``brute_force_nll`` enumerates the same path set explicitly and is
the reference the dynamic program is tested against.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .labels import BLANK_ID, LabelEncoder, LabelState, check_labels
from .nn import Linear, Module, glorot_uniform
from .tensor import Tensor, matmul, reshape, tanh

NEG_INF = -np.inf


class JointNetwork(Module):
    """One hidden tanh layer over an (audio state, label state) pair.

    The hidden layer's input weight is stored as two blocks, one applied
    to the audio state and one to the label state; their sum equals the
    single matrix applied to the concatenated pair.
    """

    def __init__(self, d_model: int, d_joint: int, n_outputs: int, rng: np.random.Generator):
        self.w_audio = Tensor(glorot_uniform(rng, d_model, d_joint), requires_grad=True)
        self.w_label = Tensor(glorot_uniform(rng, d_model, d_joint), requires_grad=True)
        self.hidden_bias = Tensor(np.zeros(d_joint), requires_grad=True)
        self.out = Linear(d_joint, n_outputs, rng)
        self.d_model = d_model
        self.n_outputs = n_outputs

    def __call__(self, h: Tensor, g: Tensor) -> Tensor:
        """Logits for a single (audio, label) state pair."""
        if h.shape != (self.d_model,) or g.shape != (self.d_model,):
            raise ValueError(f"joint expects two {self.d_model}-vectors, got {h.shape}, {g.shape}")
        hidden = tanh(matmul(reshape(h, (1, -1)), self.w_audio)
                      + matmul(reshape(g, (1, -1)), self.w_label)
                      + self.hidden_bias)
        return reshape(self.out(hidden), (self.n_outputs,))

    def lattice(self, audio: Tensor, labels_enc: Tensor) -> Tensor:
        """All-pairs logits: (T, U+1, n_outputs)."""
        t, u1 = audio.shape[0], labels_enc.shape[0]
        a = matmul(audio, self.w_audio)        # (T, d_joint)
        b = matmul(labels_enc, self.w_label)   # (U+1, d_joint)
        hidden = tanh(reshape(a, (t, 1, -1)) + reshape(b, (1, u1, -1)) + self.hidden_bias)
        return self.out(hidden)

    def row_np(self, h: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Graph-free logits for decoding."""
        hidden = np.tanh(h @ self.w_audio.data + g @ self.w_label.data + self.hidden_bias.data)
        return hidden @ self.out.weight.data + self.out.bias.data


# ---------------------------------------------------------------------------
# forward-backward loss
# ---------------------------------------------------------------------------

def _validate_lattice(log_probs: np.ndarray, labels: list[int]) -> tuple[int, int]:
    if log_probs.ndim != 3:
        raise ValueError(f"lattice must be T x (U+1) x (V+1), got shape {log_probs.shape}")
    t, u1, _ = log_probs.shape
    if t < 1:
        raise ValueError("impossible alignment: lattice has no frames")
    if u1 != len(labels) + 1:
        raise ValueError(f"lattice label axis {u1} does not match {len(labels)} labels + 1")
    norm = np.logaddexp.reduce(log_probs, axis=-1)
    if not np.allclose(norm, 0.0, atol=1e-4):
        raise ValueError("lattice rows are not normalized log-probabilities")
    return t, len(labels)


def forward_table(log_probs: np.ndarray, labels: list[int]) -> np.ndarray:
    """Alpha lattice, vectorized one frame-row at a time."""
    t_len, u_len = _validate_lattice(log_probs, labels)
    y = np.asarray(labels, dtype=np.intp)
    alpha = np.full((t_len, u_len + 1), NEG_INF)
    # Emission scores within frame row t: emit[u] moves (t, u) -> (t, u+1).
    for t in range(t_len):
        emit = log_probs[t, :u_len, :][np.arange(u_len), y] if u_len else np.empty(0)
        cum = np.concatenate([[0.0], np.cumsum(emit)])
        if t == 0:
            base = np.full(u_len + 1, NEG_INF)
            base[0] = 0.0
        else:
            base = alpha[t - 1] + log_probs[t - 1, :, BLANK_ID]
        # alpha[t][u] = logaddexp over k <= u of base[k] + (cum[u] - cum[k])
        alpha[t] = cum + np.logaddexp.accumulate(base - cum)
    return alpha


def backward_table(log_probs: np.ndarray, labels: list[int]) -> np.ndarray:
    """Beta lattice: log-probability of completing from each node."""
    t_len, u_len = _validate_lattice(log_probs, labels)
    y = np.asarray(labels, dtype=np.intp)
    beta = np.full((t_len, u_len + 1), NEG_INF)
    for t in range(t_len - 1, -1, -1):
        emit = log_probs[t, :u_len, :][np.arange(u_len), y] if u_len else np.empty(0)
        cum = np.concatenate([[0.0], np.cumsum(emit)])
        if t == t_len - 1:
            blank_term = np.full(u_len + 1, NEG_INF)
            blank_term[u_len] = log_probs[t, u_len, BLANK_ID]
        else:
            blank_term = log_probs[t, :, BLANK_ID] + beta[t + 1]
        # beta[t][u] = logaddexp over k >= u of blank_term[k] + (cum[k] - cum[u])
        shifted = blank_term + cum
        beta[t] = np.logaddexp.accumulate(shifted[::-1])[::-1] - cum
    return beta


def nll_and_grad(log_probs: np.ndarray, labels: list[int]) -> tuple[float, np.ndarray]:
    """Negative log-likelihood and its gradient w.r.t. the log-probs."""
    t_len, u_len = _validate_lattice(log_probs, labels)
    y = np.asarray(labels, dtype=np.intp)
    alpha = forward_table(log_probs, labels)
    beta = backward_table(log_probs, labels)
    log_p = alpha[t_len - 1, u_len] + log_probs[t_len - 1, u_len, BLANK_ID]

    grad = np.zeros_like(log_probs)
    # Blank transitions (t, u) -> (t+1, u); the final blank exits the lattice.
    if t_len > 1:
        occ = np.exp(alpha[:-1] + log_probs[:-1, :, BLANK_ID] + beta[1:] - log_p)
        grad[:-1, :, BLANK_ID] = -occ
    grad[t_len - 1, u_len, BLANK_ID] = -np.exp(
        alpha[t_len - 1, u_len] + log_probs[t_len - 1, u_len, BLANK_ID] - log_p
    )
    # Label transitions (t, u) -> (t, u+1).
    if u_len:
        t_idx = np.repeat(np.arange(t_len), u_len)
        u_idx = np.tile(np.arange(u_len), t_len)
        occ = np.exp(alpha[:, :-1] + log_probs[:, :u_len, :][:, np.arange(u_len), y]
                     + beta[:, 1:] - log_p)
        grad[t_idx, u_idx, y[u_idx]] = -occ.ravel()
    return -log_p, grad


def transducer_loss(log_probs: Tensor, labels: list[int]) -> Tensor:
    """Graph node for the alignment-marginal negative log-likelihood."""
    labels = check_labels(labels, log_probs.shape[-1])
    nll, grad = nll_and_grad(log_probs.data, labels)
    out = Tensor(nll)
    if log_probs.requires_grad or log_probs._parents:
        out._parents = (log_probs,)
        out._backward = lambda g: log_probs.accumulate_grad(float(g) * grad)
    return out


def brute_force_nll(log_probs: np.ndarray, labels: list[int]) -> float:
    """Reference loss by explicit path enumeration.

    Walks every valid sequence of blank/label transitions from (0, 0);
    each path ends with the mandatory blank at (T-1, U).  The number of
    such paths is C(T-1+U, U).
    """
    t_len, u_len = _validate_lattice(log_probs, labels)
    if t_len + u_len > 12:
        raise ValueError(f"enumeration bound exceeded: T + U = {t_len + u_len} > 12")
    y = list(labels)
    path_sums: list[float] = []

    def walk(t: int, u: int, acc: float) -> None:
        if t == t_len - 1 and u == u_len:
            path_sums.append(acc + log_probs[t, u, BLANK_ID])
        if u < u_len:
            walk(t, u + 1, acc + log_probs[t, u, y[u]])
        if t < t_len - 1:
            walk(t + 1, u, acc + log_probs[t, u, BLANK_ID])

    walk(0, 0, 0.0)
    assert len(path_sums) == comb(t_len - 1 + u_len, u_len)
    return -float(np.logaddexp.reduce(np.array(path_sums)))


def alignment_path_count(t_len: int, u_len: int) -> int:
    """Number of valid alignments for a T-frame, U-label instance."""
    return comb(t_len - 1 + u_len, u_len)


# ---------------------------------------------------------------------------
# greedy decoding
# ---------------------------------------------------------------------------

def greedy_step(joint: JointNetwork, h_t: np.ndarray, state: LabelState,
                max_symbols: int) -> list[int]:
    """Emit labels for one encoder state until blank wins or the cap hits."""
    emitted = []
    for _ in range(max_symbols):
        logits = joint.row_np(h_t, state.output)
        best = int(np.argmax(logits))
        if best == BLANK_ID:
            break
        emitted.append(best)
        state.advance(best)
    return emitted


def greedy_decode(audio_states: np.ndarray, joint: JointNetwork,
                  label_encoder: LabelEncoder, max_symbols_per_frame: int = 5) -> list[int]:
    """Frame-synchronous argmax decoding over precomputed encoder states."""
    if max_symbols_per_frame < 1:
        raise ValueError("max_symbols_per_frame must be at least 1")
    state = label_encoder.start_state()
    out: list[int] = []
    for t in range(audio_states.shape[0]):
        out.extend(greedy_step(joint, audio_states[t], state, max_symbols_per_frame))
    return out
