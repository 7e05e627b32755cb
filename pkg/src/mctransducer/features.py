"""Waveform framing and spectral feature extraction.

Each channel is framed (25 ms window / 10 ms hop by default), windowed
with a Hann taper, and transformed; the feature vector per frame stacks
the log square magnitude and the raw wrapped phase of every rfft bin,
giving F = 2 * (n_fft // 2 + 1) features.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

MAG_FLOOR = 1e-10


@dataclass
class Waveform:
    """Mono sample array in [-1, 1] at a fixed rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")


@dataclass
class MultiChannelFeatures:
    """C x T x F feature array plus the geometry it was built with."""

    data: np.ndarray
    n_fft: int
    hop_samples: int
    window_samples: int

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_features(self) -> int:
        return self.data.shape[2]


def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return 1 + (n_samples - window) // hop


def frame_signal(w: Waveform, window_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Slice a waveform into overlapping frames; the trailing partial frame is dropped."""
    if not (window_ms >= hop_ms > 0):
        raise ValueError(f"need window_ms >= hop_ms > 0, got {window_ms}, {hop_ms}")
    window = int(round(window_ms * w.sample_rate / 1000.0))
    hop = int(round(hop_ms * w.sample_rate / 1000.0))
    n = len(w.samples)
    t = frame_count(n, window, hop)
    if t == 0:
        raise ValueError(f"signal of {n} samples is shorter than one {window}-sample window")
    frames = np.empty((t, window))
    for i in range(t):
        frames[i] = w.samples[i * hop : i * hop + window]
    return frames


def stft_features(
    w: Waveform,
    n_fft: int = 512,
    window_ms: float = 25.0,
    hop_ms: float = 10.0,
) -> np.ndarray:
    """Per-channel T x F slice of log square magnitude stacked with phase."""
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("waveform contains non-finite samples")
    frames = frame_signal(w, window_ms, hop_ms)
    window = frames.shape[1]
    if n_fft < window:
        raise ValueError(f"n_fft={n_fft} is smaller than the {window}-sample analysis window")
    tapered = frames * np.hanning(window)
    spec = np.fft.rfft(tapered, n=n_fft, axis=1)
    log_sq_mag = np.log(spec.real**2 + spec.imag**2 + MAG_FLOOR)
    phase = np.angle(spec)
    phase[phase == -np.pi] = np.pi  # keep the wrap interval half-open: (-pi, pi]
    return np.concatenate([log_sq_mag, phase], axis=1)


def extract(
    channels: list[Waveform],
    n_fft: int = 512,
    window_ms: float = 25.0,
    hop_ms: float = 10.0,
    normalize: bool = False,
) -> MultiChannelFeatures:
    """Stack per-channel feature slices into a C x T x F array.

    ``normalize`` standardizes each feature bin over time (off by default).
    """
    if not channels:
        raise ValueError("extract needs at least one channel")
    lengths = {len(c.samples) for c in channels}
    if len(lengths) != 1:
        raise ValueError(f"channels must share one length, got {sorted(lengths)}")
    rates = {c.sample_rate for c in channels}
    if len(rates) != 1:
        raise ValueError(f"channels must share one sample rate, got {sorted(rates)}")
    slices = [stft_features(c, n_fft, window_ms, hop_ms) for c in channels]
    data = np.stack(slices, axis=0)
    if normalize:
        mean = data.mean(axis=1, keepdims=True)
        std = data.std(axis=1, keepdims=True)
        data = (data - mean) / np.maximum(std, 1e-8)
    sr = channels[0].sample_rate
    return MultiChannelFeatures(
        data=data,
        n_fft=n_fft,
        hop_samples=int(round(hop_ms * sr / 1000.0)),
        window_samples=int(round(window_ms * sr / 1000.0)),
    )


# ---------------------------------------------------------------------------
# 16-bit PCM WAV I/O
# ---------------------------------------------------------------------------

def write_wav(path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(sample_rate)
        f.writeframes(pcm.tobytes())


def read_wav(path) -> list[Waveform]:
    """Read a PCM WAV file; one Waveform per interleaved channel."""
    with wave.open(str(path), "rb") as f:
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM supported, got {8 * f.getsampwidth()}-bit")
        n_channels = f.getnchannels()
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").reshape(-1, n_channels)
    return [Waveform(pcm[:, c] / 32767.0, rate) for c in range(n_channels)]
