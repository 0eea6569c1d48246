"""Short-time Fourier analysis/synthesis used as the sparse-domain transform.

Synthesis follows the weighted overlap-add scheme: frames are windowed again
on the way out and the result is divided by the summed squared window, which
reconstructs unmodified coefficients exactly wherever that denominator is
nonzero (in practice: everywhere except the very first/last window tails).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import ColaError, ValidationError

_WINDOWS = ("hann", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    frame_len: int
    hop: int
    fft_size: int
    window: str = "hann"
    sample_rate: float = 8000.0

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.fft_size):
            raise ValidationError("need 0 < hop <= frame_len <= fft_size")
        if self.window not in _WINDOWS:
            raise ValidationError(f"window must be one of {_WINDOWS}")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each retained (nonnegative) bin."""
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate)

    def window_array(self) -> np.ndarray:
        if self.window == "rectangular":
            return np.ones(self.frame_len)
        return get_window("hann", self.frame_len, fftbins=True)

    def check_cola(self) -> None:
        """Raise unless weighted overlap-add can reconstruct interior samples."""
        w2 = self.window_array() ** 2
        span = self.frame_len + 4 * self.hop
        denom = np.zeros(span)
        m = 0
        while m * self.hop < span:
            lo = m * self.hop
            hi = min(lo + self.frame_len, span)
            denom[lo:hi] += w2[: hi - lo]
            m += 1
        interior = denom[self.frame_len : self.frame_len + self.hop]
        if interior.size and interior.min() < 1e-10 * denom.max():
            raise ColaError(
                f"window={self.window} frame_len={self.frame_len} hop={self.hop} "
                "leaves uncovered samples; synthesis is not defined"
            )


@dataclass(frozen=True)
class SpectroTemporalTensor:
    """Complex STFT coefficients indexed (channel, frequency bin, frame)."""

    data: np.ndarray
    config: StftConfig
    n_samples: int
    padded: bool = False

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValidationError("tensor data must be (channel, bin, frame)")
        if self.data.shape[1] != self.config.n_bins:
            raise ValidationError("bin count inconsistent with fft_size")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[2]


def analyze(signal, config: StftConfig) -> SpectroTemporalTensor:
    """STFT of a real signal, shape (samples,) or (channels, samples)."""
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise ValidationError("signal must be nonempty")
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[1]

    padded = n < config.frame_len
    n_frames = max(1, -(-(n - config.frame_len) // config.hop) + 1)
    total = (n_frames - 1) * config.hop + config.frame_len
    if total > n:
        x = np.pad(x, ((0, 0), (0, total - n)))

    win = config.window_array()
    idx = np.arange(config.frame_len)[None, :] + config.hop * np.arange(n_frames)[:, None]
    frames = x[:, idx] * win  # (C, T, frame_len)
    data = np.fft.rfft(frames, n=config.fft_size, axis=2)
    data = np.transpose(data, (0, 2, 1))  # (C, F, T)
    if squeeze:
        pass  # keep the channel axis; callers index channel 0
    return SpectroTemporalTensor(data=data, config=config, n_samples=n, padded=padded)


def synthesize(tensor: SpectroTemporalTensor) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`analyze`.

    Returns shape (channels, samples); single-channel input comes back as a
    1-D array.
    """
    cfg = tensor.config
    cfg.check_cola()
    win = cfg.window_array()
    C, F, T = tensor.data.shape
    total = (T - 1) * cfg.hop + cfg.frame_len
    out = np.zeros((C, total))
    denom = np.zeros(total)

    frames = np.fft.irfft(np.transpose(tensor.data, (0, 2, 1)), n=cfg.fft_size, axis=2)
    frames = frames[:, :, : cfg.frame_len] * win
    w2 = win**2
    for t in range(T):
        lo = t * cfg.hop
        out[:, lo : lo + cfg.frame_len] += frames[:, t, :]
        denom[lo : lo + cfg.frame_len] += w2
    nz = denom > 1e-12 * max(denom.max(), 1e-300)
    out[:, nz] /= denom[nz]
    out = out[:, : tensor.n_samples]
    return out[0] if C == 1 else out


def default_analysis_config(sample_rate: float) -> StftConfig:
    """Separation-pipeline default: 256 ms Hann frames with 25% overlap."""
    frame = int(round(0.256 * sample_rate))
    hop = int(round(0.75 * frame))
    fft = 1 << int(np.ceil(np.log2(frame)))
    return StftConfig(frame_len=frame, hop=hop, fft_size=fft, sample_rate=sample_rate)


def orthogonality_config(sample_rate: float) -> StftConfig:
    """Spectral-overlap study default: 128 ms frames with 50% overlap."""
    frame = int(round(0.128 * sample_rate))
    fft = 1 << int(np.ceil(np.log2(frame)))
    return StftConfig(frame_len=frame, hop=frame // 2, fft_size=fft, sample_rate=sample_rate)
