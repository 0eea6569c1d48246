"""Absorption-coefficient estimation from multichannel recordings.

Two routes are provided:

* single source -- blind identification of a channel pair through the
  cross-relation identity with an L1 program constrained on the known
  reflection support, followed by a least-squares fit of per-surface
  reflection coefficients to the recovered impulse response;
* multiple sources -- block-sparse recovery of the per-group covariance
  blocks of the recordings under a free-space propagation model, from
  which source energies and absorption vectors are factored out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hankel

from ._prox import l2_shrink, power_iteration_norm, soft_threshold
from .errors import (
    AmbiguityError,
    DegenerateBlockError,
    DomainError,
    EstimationError,
    InsufficientDecayError,
    SingularityError,
    ValidationError,
)
from .forward import Rir, fractional_delay_kernel
from .scene import SOUND_SPEED, SURFACE_NAMES, ImageSourceSet, RoomSpec


# ---------------------------------------------------------------------------
# Cross-relation system
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CrossRelationSystem:
    """Pair-of-channels null-space system for blind impulse-response recovery.

    ``pi_matrix`` stacks two Hankel data matrices as ``[X_i, -X_j]`` so that
    the stacked reversed-tap vector ``[rev(h_j); rev(h_i)]`` lies in its null
    space whenever ``x_i * h_j == x_j * h_i`` (``*`` denoting convolution).
    """

    pi_matrix: np.ndarray
    tap_count: int
    channel_pair: tuple[int, int] = (0, 1)

    @property
    def n_taps(self) -> int:
        return self.tap_count

    def stacked_index(self, channel: int, tap: int) -> int:
        """Flat index of ``h_channel[tap]`` inside the stacked vector.

        ``channel`` 0 refers to the first recording (whose taps occupy the
        second half of the stack), 1 to the second.  Taps are stored reversed
        within each half.
        """
        if channel not in (0, 1):
            raise ValidationError("channel must be 0 or 1")
        if not 0 <= tap < self.tap_count:
            raise ValidationError(f"tap {tap} outside [0, {self.tap_count})")
        rev = self.tap_count - 1 - tap
        return rev if channel == 1 else self.tap_count + rev

    def unstack(self, h_stacked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split the stacked vector back into (h_i taps, h_j taps)."""
        t = self.tap_count
        h_j = h_stacked[:t][::-1].copy()
        h_i = h_stacked[t:][::-1].copy()
        return h_i, h_j


def _data_matrix(x: np.ndarray, taps: int) -> np.ndarray:
    n = x.shape[0]
    return hankel(x[taps : n - taps], x[n - taps - 1 :])


def build_cross_relation(
    x_i, x_j, taps: int, channel_pair: tuple[int, int] = (0, 1)
) -> CrossRelationSystem:
    """Cross-relation system for two recordings of a common source.

    ``taps`` is the filter memory L; each recovered response has L+1 taps.
    Signals must have at least ``2 * taps + 1`` samples.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.ndim != 1 or x_j.ndim != 1 or x_i.shape != x_j.shape:
        raise ValidationError("recordings must be 1-D arrays of equal length")
    if taps < 1:
        raise ValidationError("taps must be >= 1")
    if x_i.shape[0] < 2 * taps + 1:
        raise ValidationError(
            f"signals of length {x_i.shape[0]} too short for {taps} taps"
        )
    pi = np.hstack([_data_matrix(x_i, taps), -_data_matrix(x_j, taps)])
    return CrossRelationSystem(
        pi_matrix=pi, tap_count=taps + 1, channel_pair=channel_pair
    )


def estimate_rir_structured(
    system: CrossRelationSystem,
    direct_support,
    direct_value: float,
    reflection_support,
    eps: float = 0.1,
    max_iter: int = 20000,
    tol: float = 1e-9,
) -> tuple[Rir, Rir, dict]:
    """Sparse channel pair from the cross-relation null-space constraint.

    Solves ``min ||h||_1`` subject to ``||Pi h|| <= eps``, equality at the
    direct-path taps and nonnegativity at the reflection taps, by a
    primal-dual proximal iteration with the tap constraints enforced by
    projection.  Supports are given as ``(channel, tap)`` pairs with channel
    in {0, 1}.

    Returns ``(h_i, h_j, info)``; taps are in natural order and the sample
    rate is left at 1.0 (callers rescale).
    """
    if direct_value <= 0:
        raise ValidationError("direct_value must be positive")
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    pi = system.pi_matrix
    n = 2 * system.tap_count
    d_idx = np.array(
        sorted(system.stacked_index(c, t) for c, t in direct_support), dtype=int
    )
    r_idx = np.array(
        sorted(system.stacked_index(c, t) for c, t in reflection_support), dtype=int
    )
    if d_idx.size == 0:
        raise ValidationError("direct support must be nonempty (fixes the scale)")
    if np.intersect1d(d_idx, r_idx).size:
        raise ValidationError("direct and reflection supports overlap")

    L = power_iteration_norm(lambda v: pi @ v, lambda v: pi.conj().T @ v, (n,))
    if L == 0.0:
        # zero data: every h satisfies the constraint; L1 minimality fixes
        # all free taps at zero
        h = np.zeros(n)
        h[d_idx] = direct_value
        h_i, h_j = system.unstack(h)
        return (
            Rir(h_i, 1.0),
            Rir(h_j, 1.0),
            {"iterations": 0, "converged": True, "residual": 0.0},
        )
    tau = sigma = 0.95 / L

    def project(v: np.ndarray) -> np.ndarray:
        v[d_idx] = direct_value
        if r_idx.size:
            v[r_idx] = np.maximum(v[r_idx], 0.0)
        return v

    h = np.zeros(n)
    h = project(h)
    hbar = h.copy()
    y = np.zeros(pi.shape[0])
    obj_prev = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = l2_shrink(y + sigma * (pi @ hbar), sigma * eps)
        h_new = soft_threshold(h - tau * (pi.T @ y), tau)
        h_new = project(h_new)
        hbar = 2.0 * h_new - h
        h = h_new
        if iterations % 20 == 0 or iterations == max_iter:
            obj = float(np.abs(h).sum())
            feas = float(np.linalg.norm(pi @ h))
            slack = eps + tol * max(1.0, np.linalg.norm(pi, "fro"))
            if abs(obj - obj_prev) < 1e-9 * max(obj, 1.0) and feas <= slack:
                converged = True
                break
            obj_prev = obj
    feas = float(np.linalg.norm(pi @ h))
    if not converged and feas > 10 * (eps + 1e-9):
        warnings.warn(
            "cross-relation program did not reach the feasibility target",
            stacklevel=2,
        )
    h_i, h_j = system.unstack(h)
    info = {"iterations": iterations, "converged": converged, "residual": feas}
    return Rir(h_i, 1.0), Rir(h_j, 1.0), info


# ---------------------------------------------------------------------------
# Absorption from a recovered impulse response
# ---------------------------------------------------------------------------
def fit_absorption_ls(
    rir: Rir,
    images: ImageSourceSet,
    sample_rate: float,
    mic=(0.0, 0.0, 0.0),
    noise_floor: float = 0.01,
) -> dict[str, float]:
    """Per-surface reflection coefficients fitted to an impulse response.

    Each image contributes a fractional-delay pulse scaled by
    ``gain / distance`` where ``gain`` is a product of per-surface
    coefficients raised to that image's reflection counts.  The per-image
    amplitudes are first fit jointly by least squares on the taps above
    ``noise_floor * max |tap|``; the surviving reflective amplitudes are then
    fit in the log domain, which linearizes the product-of-coefficients
    model.
    """
    taps = rir.taps
    peak = np.abs(taps).max()
    if peak == 0.0:
        raise EstimationError("impulse response is identically zero")
    floor = noise_floor * peak
    active = np.flatnonzero(np.abs(taps) > floor)
    if active.size == 0:
        raise EstimationError("no taps above the noise floor")

    entries = images.entries
    mic = np.asarray(mic, dtype=float)
    n_taps = taps.shape[0]
    kernels = np.zeros((n_taps, len(entries)))
    distances = np.empty(len(entries))
    for k, img in enumerate(entries):
        d = float(np.linalg.norm(np.asarray(img.position) - mic))
        distances[k] = d
        delay = d / SOUND_SPEED * sample_rate
        kernel, start = fractional_delay_kernel(delay)
        lo, hi = max(start, 0), min(start + kernel.shape[0], n_taps)
        if lo < hi:
            kernels[lo:hi, k] = kernel[lo - start : hi - start]
    usable = kernels[active].any(axis=0)
    amps = np.zeros(len(entries))
    if usable.any():
        sol, _, _, _ = np.linalg.lstsq(kernels[np.ix_(active, np.flatnonzero(usable))],
                                       taps[active], rcond=None)
        amps[np.flatnonzero(usable)] = sol
    gains = amps * distances

    counts = np.array([img.reflection_counts for img in entries])
    orders = np.array([img.order for img in entries])
    keep = (orders > 0) & (gains > floor)
    out = {name: 0.0 for name in SURFACE_NAMES}
    if not keep.any():
        return out
    A = counts[keep].astype(float)
    b = np.log(gains[keep])
    seen = A.any(axis=0)
    log_c, _, _, _ = np.linalg.lstsq(A[:, seen], b, rcond=None)
    values = np.exp(log_c)
    for name, v in zip(np.array(SURFACE_NAMES)[seen], values):
        out[str(name)] = float(min(max(v, 0.0), 1.0))
    return out


# ---------------------------------------------------------------------------
# Reverberation time
# ---------------------------------------------------------------------------
def rt60_sabine(room: RoomSpec, surface_areas=None, freq_hz: float | None = None):
    """Sabine reverberation time 24 ln(10) V / (c * sum_i W_i (1 - r_i^2)).

    ``surface_areas`` optionally overrides the geometric areas (for example
    when a piece of furniture, not the floor itself, is the dominant
    reflector on that surface).
    """
    areas = np.asarray(
        room.surface_areas() if surface_areas is None else surface_areas, dtype=float
    )
    if areas.shape != (6,) or np.any(areas < 0):
        raise ValidationError("surface_areas must be 6 nonnegative values")
    coefs = np.array(
        [
            room.surfaces[i].at(freq_hz) if freq_hz is not None else _scalar_coef(room.surfaces[i])
            for i in range(6)
        ]
    )
    absorption = float(np.sum(areas * (1.0 - coefs**2)))
    if absorption <= 0.0:
        raise SingularityError("all surfaces fully reflective; RT60 diverges")
    return 24.0 * np.log(10.0) * room.volume / (room.sound_speed * absorption)


def _scalar_coef(profile) -> float:
    values = np.atleast_1d(np.asarray(profile.values, dtype=float))
    return float(values.mean())


def rt60_from_edc(rir: Rir, fit_range_db: tuple[float, float] = (-5.0, -25.0)):
    """Reverberation time from the Schroeder energy decay curve.

    Backward-integrates the squared taps, fits a line to the decay between
    ``fit_range_db`` (relative to the initial level), and extrapolates the
    slope to -60 dB.
    """
    e = rir.taps.astype(float) ** 2
    total = e.sum()
    if total == 0.0:
        raise ValidationError("impulse response is identically zero")
    edc = np.cumsum(e[::-1])[::-1] / total
    with np.errstate(divide="ignore"):
        edc_db = 10.0 * np.log10(edc)
    hi, lo = fit_range_db
    sel = np.flatnonzero((edc_db <= hi) & (edc_db >= lo) & np.isfinite(edc_db))
    if sel.size < 2:
        raise InsufficientDecayError(
            f"decay curve never spans [{hi}, {lo}] dB with enough samples"
        )
    slope, _ = np.polyfit(sel.astype(float), edc_db[sel], 1)
    if slope >= 0:
        raise InsufficientDecayError("energy decay curve is not decreasing")
    return float(-60.0 / slope / rir.sample_rate)


# ---------------------------------------------------------------------------
# Multi-source covariance route
# ---------------------------------------------------------------------------
def observation_covariance(X) -> np.ndarray:
    """Frame-aggregated covariance C = X X* of a per-bin observation matrix."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] < 1:
        raise ValidationError("need at least one frame")
    return X @ X.conj().T


@dataclass(frozen=True)
class KroneckerSystem:
    """Stacked per-group Kronecker blocks relating covariance to absorption.

    Block i maps the column-major vectorization of the group-i covariance
    sub-block to the vectorized observation covariance.
    """

    blocks: tuple[np.ndarray, ...]
    groups: tuple[tuple[int, ...], ...]
    n_mics: int

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack(self.blocks)

    def block_slices(self) -> list[slice]:
        out, at = [], 0
        for b in self.blocks:
            out.append(slice(at, at + b.shape[1]))
            at += b.shape[1]
        return out


def build_kronecker_system(O, groups) -> KroneckerSystem:
    """Per-group systems B(i) = conj(O[:, G_i]) kron O[:, G_i].

    With column-major vectorization, ``vec(O_i S O_i*) = B(i) vec(S)`` for
    any square block S on group i; overlapping groups would make the joint
    system ambiguous and are rejected.
    """
    O = np.asarray(O, dtype=complex)
    if O.ndim != 2:
        raise ValidationError("O must be a matrix")
    flat: list[int] = []
    for g in groups:
        flat.extend(int(i) for i in g)
    if any(i < 0 or i >= O.shape[1] for i in flat):
        raise ValidationError("group index outside the columns of O")
    if len(set(flat)) != len(flat):
        raise AmbiguityError("groups overlap; block supports must be disjoint")
    blocks = tuple(np.kron(O[:, list(g)].conj(), O[:, list(g)]) for g in groups)
    return KroneckerSystem(
        blocks=blocks,
        groups=tuple(tuple(int(i) for i in g) for g in groups),
        n_mics=O.shape[0],
    )


def _vec(mat: np.ndarray) -> np.ndarray:
    return mat.reshape(-1, order="F")


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape(n, n, order="F")


def _project_block(mat: np.ndarray) -> np.ndarray:
    """Nearest Hermitian matrix with entrywise nonnegative values.

    For this factorization the blocks are real, symmetric and nonnegative
    (outer products of nonnegative absorption vectors scaled by a source
    energy), so the projection symmetrizes the real part and clips below 0.
    """
    sym = 0.5 * (mat + mat.conj().T)
    return np.clip(sym.real, 0.0, None).astype(complex)


def block_sparse_covariance_recovery(
    C,
    system: KroneckerSystem,
    eps: float | None = None,
    max_iter: int = 10000,
    tol: float = 1e-9,
):
    """Group-sparse covariance blocks from the vectorized covariance.

    Minimizes the sum of block L2 norms subject to the data constraint
    ``||C_vec - B v|| <= eps`` with Hermitian, entrywise-nonnegative blocks
    (enforced by projection inside the primal step).  Returns
    ``(blocks, info)`` where ``blocks[i]`` is the recovered square block for
    group i and ``info`` reports iterations, convergence, and the incumbent
    (best objective so far) history, which is non-increasing by definition.
    """
    C = np.asarray(C, dtype=complex)
    M = system.n_mics
    if C.shape != (M, M):
        raise ValidationError(f"covariance must be {M}x{M}")
    if eps is not None and eps < 0:
        raise ValidationError("eps must be nonnegative")
    c_vec = _vec(C)
    if eps is None:
        eps = 1e-6 * float(np.linalg.norm(C, "fro"))
    B = system.matrix
    slices = system.block_slices()
    sizes = [len(g) for g in system.groups]

    if not np.any(np.abs(c_vec) > 0):
        zero = [np.zeros((n, n)) for n in sizes]
        return zero, {"iterations": 0, "converged": True, "objective": [0.0]}

    L = power_iteration_norm(lambda v: B @ v, lambda v: B.conj().T @ v, (B.shape[1],))
    tau = sigma = 0.95 / L

    def project(v: np.ndarray) -> np.ndarray:
        for sl, n in zip(slices, sizes):
            v[sl] = _vec(_project_block(_unvec(v[sl], n)))
        return v

    def objective(v: np.ndarray) -> float:
        return float(sum(np.linalg.norm(v[sl]) for sl in slices))

    v = project(np.zeros(B.shape[1], dtype=complex))
    vbar = v.copy()
    y = np.zeros_like(c_vec)
    feas_slack = eps + 1e-6 * float(np.linalg.norm(c_vec))
    history: list[float] = []
    converged = False
    iterations = 0
    v_check = v.copy()
    for iterations in range(1, max_iter + 1):
        y = l2_shrink(y + sigma * (B @ vbar - c_vec), sigma * eps)
        v_new = v - tau * (B.conj().T @ y)
        # prox of (block norm + cone indicator): project onto the cone first,
        # then shrink -- the cone projection is orthogonal (Moreau), so the
        # shrunk projected point stays optimal and inside the cone
        v_new = project(v_new)
        for sl in slices:
            v_new[sl] = l2_shrink(v_new[sl], tau)
        vbar = 2.0 * v_new - v
        v = v_new

        obj = objective(v)
        history.append(min(obj, history[-1]) if history else obj)
        if iterations % 10 == 0:
            feas = float(np.linalg.norm(B @ v - c_vec))
            step = float(np.linalg.norm(v - v_check))
            v_check = v.copy()
            if feas <= feas_slack and step <= tol * max(1.0, float(np.linalg.norm(v))):
                converged = True
                break

    blocks = [_unvec(v[sl], n).real for sl, n in zip(slices, sizes)]
    info = {
        "iterations": iterations,
        "converged": converged,
        "objective": history,
        "residual": float(np.linalg.norm(B @ v - c_vec)),
    }
    if not converged:
        info["warning"] = "iteration cap reached; best iterate returned"
    return blocks, info


def detect_active_count(blocks) -> int:
    """Number of active groups by the largest ratio gap in sorted block norms."""
    norms = np.sort([float(np.linalg.norm(b)) for b in blocks])[::-1]
    if norms.size == 0 or norms[0] == 0.0:
        return 0
    positive = norms[norms > 0]
    if positive.size == 1:
        return 1
    ratios = positive[:-1] / positive[1:]
    return int(np.argmax(ratios)) + 1


def extract_absorption(sigma_block, group, direct_index: int):
    """Source energy and absorption vector from one covariance block.

    The direct path is assigned absorption 1, so the block diagonal at
    ``direct_index`` is the source energy and the remaining diagonal entries
    are squared absorption factors times that energy.
    """
    block = np.asarray(sigma_block)
    n = block.shape[0]
    if block.shape != (n, n) or n != len(group):
        raise ValidationError("block shape must match the group size")
    if not 0 <= direct_index < n:
        raise ValidationError("direct_index outside the block")
    diag = np.clip(np.real(np.diagonal(block)), 0.0, None)
    energy = float(diag[direct_index])
    if energy <= 0.0:
        raise DegenerateBlockError("nonpositive direct-path energy in block")
    p = np.sqrt(diag / energy)
    return energy, p


@dataclass(frozen=True)
class AbsorptionProfile:
    """Per-surface absorption estimates with their supporting factorization.

    ``coefficients`` maps surface name to a scalar or per-bin array;
    ``source_energies`` and ``groups`` trace which covariance blocks the
    estimates came from.
    """

    coefficients: dict[str, np.ndarray]
    source_energies: tuple[float, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()
    bin_freqs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        for name, vals in self.coefficients.items():
            arr = np.atleast_1d(np.asarray(vals, dtype=float))
            if np.any((arr < 0) | (arr > 1)):
                raise DomainError(f"absorption for {name} outside [0, 1]")
        if any(e < 0 for e in self.source_energies):
            raise DomainError("source energies must be nonnegative")
