"""Frequency-domain acoustic operators, time-domain RIR synthesis, coherence.

Frequencies handed to the propagation kernel are angular (rad/s); helpers
that take Hz bins convert with ``omega = 2*pi*f``.  Columns of the
measurement operators keep the physical 1/distance gain; coherence
normalizes internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import SingularityError, TruncationError, ValidationError
from .scene import ImageSourceSet, MicArray, PlanarGrid, RoomSpec, enumerate_images

_FRAC_DELAY_TAPS = 81  # windowed-sinc kernel length for fractional delays


def green_coeff(src, mic, omega: float, gain: float = 1.0, c: float = 343.0) -> complex:
    """Free-space propagation coefficient gain/d * exp(-j*omega*d/c)."""
    if gain < 0:
        raise ValidationError("gain must be nonnegative")
    d = float(np.linalg.norm(np.asarray(mic, float) - np.asarray(src, float)))
    if d < 1e-12:
        raise SingularityError("source and microphone coincide")
    return gain / d * np.exp(-1j * omega * d / c)


def channel_response(images: ImageSourceSet, mic, omega: float, c: float = 343.0) -> complex:
    """Sum of the propagation coefficients of all images of one source."""
    if len(images) == 0:
        raise ValidationError("image set is empty")
    pos = images.positions()
    gains = images.gains()
    d = np.linalg.norm(pos - np.asarray(mic, float), axis=1)
    if np.any(d < 1e-12):
        raise SingularityError("an image coincides with the microphone")
    return complex(np.sum(gains / d * np.exp(-1j * omega * d / c)))


def free_space_matrix(points, array: MicArray, freq_hz: float, c: float = 343.0) -> np.ndarray:
    """M x P matrix of direct-path coefficients from each point to each mic."""
    pts = np.atleast_2d(np.asarray(points, float))
    mics = array.positions
    d = np.linalg.norm(mics[:, None, :] - pts[None, :, :], axis=2)
    if np.any(d < 1e-12):
        raise SingularityError("a point coincides with a microphone")
    omega = 2.0 * np.pi * freq_hz
    return np.exp(-1j * omega * d / c) / d


@dataclass(frozen=True)
class MeasurementMatrix:
    """Per-bin acoustic projection operators for a grid of candidate cells.

    ``blocks[f]`` is the M x G matrix at ``freq_bins[f]``.  The dense stacked
    form interleaves one diagonal frequency block per (mic, cell) pair; it is
    materialized on demand because the block-diagonal structure is what the
    solvers actually exploit.
    """

    blocks: np.ndarray  # (F, M, G) complex
    freq_bins: np.ndarray  # (F,) Hz
    cells: np.ndarray  # (G, 3) cell centers (column metadata)

    @property
    def n_bins(self) -> int:
        return self.blocks.shape[0]

    @property
    def n_mics(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_cells(self) -> int:
        return self.blocks.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Dense stacked matrix, rows (mic, bin) and columns (cell, bin)."""
        F, M, G = self.blocks.shape
        out = np.zeros((M * F, G * F), dtype=complex)
        for f in range(F):
            out[f :: F, f :: F] = self.blocks[f]  # noqa: E203
        return out

    def column_meta(self) -> list[int]:
        """Grid-cell index of each stacked column."""
        return [g for g in range(self.n_cells) for _ in range(self.n_bins)]


def build_phi(
    grid: PlanarGrid,
    array: MicArray,
    bins_hz,
    room: RoomSpec,
    max_order: int,
) -> MeasurementMatrix:
    """Measurement operator of the array over the grid at the given Hz bins.

    ``max_order=0`` yields the free-space operator.
    """
    bins_hz = np.atleast_1d(np.asarray(bins_hz, dtype=float))
    array.validate_inside(room)
    F, M, G = len(bins_hz), len(array), len(grid)
    blocks = np.zeros((F, M, G), dtype=complex)

    freq_dependent = any(not p.is_scalar for p in room.surfaces)
    for g, cell in enumerate(grid.cell_centers):
        if freq_dependent:
            image_sets = [enumerate_images(room, cell, max_order, f) for f in bins_hz]
        else:
            image_sets = [enumerate_images(room, cell, max_order)] * F
        for f, (fhz, imgs) in enumerate(zip(bins_hz, image_sets)):
            pos = imgs.positions()
            gains = imgs.gains()
            d = np.linalg.norm(array.positions[:, None, :] - pos[None, :, :], axis=2)
            if np.any(d < 1e-12):
                raise SingularityError("a grid cell coincides with a microphone")
            omega = 2.0 * np.pi * fhz
            blocks[f, :, g] = np.sum(
                gains / d * np.exp(-1j * omega * d / room.sound_speed), axis=1
            )
    return MeasurementMatrix(blocks=blocks, freq_bins=bins_hz, cells=grid.cell_centers.copy())


@dataclass(frozen=True)
class Rir:
    """Sampled room impulse response."""

    taps: np.ndarray
    sample_rate: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.size < 1 or not np.all(np.isfinite(taps)):
            raise ValidationError("RIR taps must be a nonempty finite sequence")
        object.__setattr__(self, "taps", taps)


def fractional_delay_kernel(delay: float) -> tuple[np.ndarray, int]:
    """Windowed-sinc pulse at fractional ``delay``; returns (kernel, start tap).

    At integer delays the kernel degenerates to a unit pulse because the
    Hann window is exactly 1 at its center and sinc vanishes on the other
    integers.
    """
    half = _FRAC_DELAY_TAPS // 2
    center = int(round(delay))
    frac = delay - center
    k = np.arange(-half, half + 1)
    window = np.hanning(_FRAC_DELAY_TAPS + 2)[1:-1]
    kernel = np.sinc(k - frac) * window
    return kernel, center - half


def synthesize_rir(
    room: RoomSpec,
    src,
    mic,
    sample_rate: float,
    max_order: int,
    length: int,
    frequency_hz: float | None = None,
) -> Rir:
    """Time-domain RIR by placing one band-limited pulse per mirror image."""
    images = enumerate_images(room, src, max_order, frequency_hz)
    mic = np.asarray(mic, dtype=float)
    taps = np.zeros(length)
    dropped = []
    for e in images.entries:
        d = float(np.linalg.norm(np.asarray(e.position) - mic))
        if d < 1e-12:
            raise SingularityError("an image coincides with the microphone")
        delay = d / room.sound_speed * sample_rate
        if round(delay) >= length:
            dropped.append((e.position, delay))
            continue
        if e.gain == 0.0:
            continue
        kernel, start = fractional_delay_kernel(delay)
        lo = max(start, 0)
        hi = min(start + kernel.size, length)
        if hi > lo:
            taps[lo:hi] += (e.gain / d) * kernel[lo - start : hi - start]
    if dropped:
        raise TruncationError(
            f"RIR length {length} drops {len(dropped)} image(s); "
            "increase length to cover the latest delay",
            dropped,
        )
    return Rir(taps=taps, sample_rate=sample_rate)


def rir_length_for(room: RoomSpec, src, mic, sample_rate: float, max_order: int) -> int:
    """Tap count covering every image delay plus the interpolation tail."""
    images = enumerate_images(room, src, max_order)
    mic = np.asarray(mic, dtype=float)
    d = np.linalg.norm(images.positions() - mic, axis=1)
    return int(np.ceil(d.max() / room.sound_speed * sample_rate)) + _FRAC_DELAY_TAPS


def simulate_recordings(
    sources,
    room: RoomSpec,
    array: MicArray,
    max_order: int,
    sample_rate: float,
    noise_snr_db: float | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Convolutive mixture of the sources at the array, optionally noisy.

    ``sources`` is a list of (signal, position) pairs sharing ``sample_rate``.
    Noise is white Gaussian, scaled so the mixture-to-noise power ratio
    matches ``noise_snr_db``.
    """
    if not sources:
        raise ValidationError("need at least one source")
    sigs = [np.asarray(s, dtype=float) for s, _ in sources]
    if any(s.ndim != 1 or s.size == 0 for s in sigs):
        raise ValidationError("source signals must be nonempty 1-D arrays")

    rirs = []
    for _, pos in sources:
        per_mic = []
        for mic in array.positions:
            L = rir_length_for(room, pos, mic, sample_rate, max_order)
            per_mic.append(synthesize_rir(room, pos, mic, sample_rate, max_order, L))
        rirs.append(per_mic)

    n_out = max(
        len(sig) + len(r.taps) - 1 for sig, per_mic in zip(sigs, rirs) for r in per_mic
    )
    out = np.zeros((len(array), n_out))
    for sig, per_mic in zip(sigs, rirs):
        for m, r in enumerate(per_mic):
            y = fftconvolve(sig, r.taps)
            out[m, : y.size] += y

    if noise_snr_db is not None:
        rng = rng or np.random.default_rng()
        p_sig = np.mean(out**2)
        p_noise = p_sig / 10.0 ** (noise_snr_db / 10.0)
        out = out + rng.normal(scale=np.sqrt(p_noise), size=out.shape)
    return out


def _pairwise_coherence(cols: np.ndarray) -> float:
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms == 0.0):
        raise ValidationError("operator has a zero column")
    unit = cols / norms
    gram = np.abs(unit.conj().T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def coherence(phi) -> tuple[float, float]:
    """Largest normalized column inner product and the sparsity it certifies.

    ``k_bound = (1/mu + 1)/2``; orthogonal columns report ``mu = 0`` and an
    unbounded (infinite) ``k_bound``.
    """
    if isinstance(phi, MeasurementMatrix):
        # Columns at distinct bins have disjoint row support, so the stacked
        # coherence is the max over per-bin coherences.
        mu = max(_pairwise_coherence(phi.blocks[f]) for f in range(phi.n_bins))
    else:
        mat = np.asarray(phi)
        if mat.ndim != 2 or mat.shape[1] < 2:
            raise ValidationError("coherence needs a matrix with >= 2 columns")
        mu = _pairwise_coherence(mat)
    mu = min(mu, 1.0)
    k_bound = np.inf if mu == 0.0 else 0.5 * (1.0 / mu + 1.0)
    return mu, k_bound


def block_coherence(phi: MeasurementMatrix) -> tuple[float, float]:
    """Coherence of the per-cell broadband columns (all bins stacked).

    This is the quantity that certifies recovery of whole cells when the
    structure spans every bin of a cell.
    """
    F, M, G = phi.blocks.shape
    cols = phi.blocks.transpose(1, 0, 2).reshape(M * F, G)
    mu = _pairwise_coherence(cols)
    mu = min(mu, 1.0)
    k_bound = np.inf if mu == 0.0 else 0.5 * (1.0 / mu + 1.0)
    return mu, k_bound
