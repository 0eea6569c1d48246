"""Blind room-geometry estimation from multichannel recordings.

Pipeline: localize candidate sources on a grid that extends beyond the room
under a free-space propagation model (mirror images of the real sources show
up as virtual sources outside the walls), split the candidates into actual
sources and images by distance to the array, cluster the images to their
generating source by spectral similarity, and fit wall positions whose
predicted first- and second-order images best explain the clusters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .forward import MeasurementMatrix, free_space_matrix
from .recovery import StructureModel, iht, l1l2, omp
from .scene import MicArray, PlanarGrid, RoomSpec
from .stft import SpectroTemporalTensor

MAX_CLUSTER_MEMBERS = 21


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------
def extended_plane_grid(
    center, half_extent: float, spacing: float, height: float
) -> PlanarGrid:
    """Square planar lattice of side ``2 * half_extent`` around ``center``."""
    if half_extent <= 0 or spacing <= 0:
        raise ValidationError("half_extent and spacing must be positive")
    cx, cy = float(center[0]), float(center[1])
    offs = np.arange(-half_extent, half_extent + 1e-9, spacing)
    cells = np.array([(cx + dx, cy + dy, height) for dy in offs for dx in offs])
    return PlanarGrid(cell_centers=cells, spacing=spacing, height=height)


def strip_grid(
    through, half_extent: float, spacing: float, axes=(0, 1, 2)
) -> PlanarGrid:
    """Axis-aligned strips of candidate positions through one point.

    Restricting the search to lines orthogonal to the walls keeps every
    mirror image of ``through`` on the grid while the cell count grows
    linearly, not cubically, with the extent; it also makes images across
    the floor and ceiling observable without a volumetric grid.
    """
    if half_extent <= 0 or spacing <= 0:
        raise ValidationError("half_extent and spacing must be positive")
    p = np.asarray(through, dtype=float)
    offs = np.arange(-half_extent, half_extent + 1e-9, spacing)
    pts = [p]
    for axis in axes:
        for o in offs:
            if abs(o) < 1e-12:
                continue
            q = p.copy()
            q[axis] += o
            pts.append(q)
    return PlanarGrid(cell_centers=np.array(pts), spacing=spacing, height=p[2])


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------
def free_space_measurement(
    grid: PlanarGrid, array: MicArray, freqs_hz, c: float = 343.0
) -> MeasurementMatrix:
    """Direct-path measurement operator over the grid at the given bins."""
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    blocks = np.stack(
        [free_space_matrix(grid.cell_centers, array, f, c) for f in freqs]
    )
    return MeasurementMatrix(blocks=blocks, freq_bins=freqs, cells=grid.cell_centers)


@dataclass(frozen=True)
class Candidate:
    """One localized cell: where it is and what it sounded like."""

    position: np.ndarray
    spectrum: np.ndarray  # (n_bins, n_frames)
    energy: float
    cell_index: int


def localize_images(
    recordings: SpectroTemporalTensor,
    grid: PlanarGrid,
    array: MicArray,
    bins=None,
    solver: str = "l1l2",
    n_active: int | None = None,
    eps: float | None = None,
    structure: str = "block",
    energy_floor: float = 1e-3,
    room: RoomSpec | None = None,
    c: float = 343.0,
) -> list[Candidate]:
    """Virtual-source candidates by sparse recovery with a free-space model.

    ``bins`` selects frequency bins (defaults to every fourth bin between
    300 Hz and 2 kHz); recovery groups all selected bins of a cell together
    so a candidate needs consistent broadband support.  Candidates below
    ``energy_floor`` of the strongest one are dropped.

    The steering columns are normalized per (bin, cell) before recovery:
    raw free-space columns scale as 1/distance, which makes penalized
    solvers prefer cells near the array regardless of the data.  Rankings
    use the normalized-domain energies (each cell's contribution to the
    observations); the reported spectra are rescaled back to physical
    source amplitudes.
    """
    if recordings.data.shape[0] != len(array):
        raise ValidationError("channel count does not match the array")
    all_freqs = recordings.config.bin_frequencies()
    if bins is None:
        usable = np.flatnonzero((all_freqs >= 300.0) & (all_freqs <= 2000.0))
        bins = usable[:: max(1, usable.size // 24)]
    bins = np.asarray(bins, dtype=int)
    freqs = all_freqs[bins]
    if room is not None:
        span = grid.cell_centers.max(axis=0) - grid.cell_centers.min(axis=0)
        if np.any(span[:2] < np.asarray(room.dims[:2])):
            warnings.warn(
                "grid does not extend beyond the room; images will be missed",
                stacklevel=2,
            )
    phi = free_space_measurement(grid, array, freqs, c)
    norms = np.linalg.norm(phi.blocks, axis=1)  # (F, G)
    phi = MeasurementMatrix(
        blocks=phi.blocks / norms[:, None, :], freq_bins=freqs, cells=grid.cell_centers
    )
    F = freqs.size
    X = recordings.data[:, bins, :].reshape(len(array) * F, -1)
    structure = StructureModel.from_spec(structure, n_bins=F, bin_freqs=freqs)
    if solver == "l1l2":
        if eps is None:
            eps = 0.1 * float(np.linalg.norm(X))
        est = l1l2(phi, X, structure, eps=eps)
    elif solver in ("iht", "omp"):
        if n_active is None:
            raise ValidationError(f"{solver} needs n_active")
        run = iht if solver == "iht" else omp
        est = run(phi, X, structure, n_active)
    else:
        raise ValidationError(f"unknown solver {solver!r}")

    coeffs = est.coefficients.reshape(len(grid), F, -1) / norms.T[:, :, None]
    energies = est.cell_energies()
    peak = energies.max()
    if peak <= 0.0:
        return []
    keep = np.flatnonzero(energies >= energy_floor * peak)
    order = keep[np.argsort(-energies[keep], kind="stable")]
    return [
        Candidate(
            position=grid.cell_centers[g].copy(),
            spectrum=coeffs[g].copy(),
            energy=float(energies[g]),
            cell_index=int(g),
        )
        for g in order
    ]


def split_actual_sources(
    candidates: list[Candidate], array: MicArray, distance: float = 1.0
) -> tuple[list[int], list[int]]:
    """Indices of candidates within ``distance`` of the array center (actual
    sources) and the rest (images)."""
    center = array.centroid()
    actual, images = [], []
    for i, cand in enumerate(candidates):
        (actual if np.linalg.norm(cand.position - center) <= distance else images).append(i)
    return actual, images


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------
def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.abs(np.vdot(a, b)) / (na * nb))


def cluster_images(
    candidates: list[Candidate],
    actual_indices,
    max_per_cluster: int = MAX_CLUSTER_MEMBERS,
    n_refine: int = 10,
) -> tuple[list[list[int]], list[int]]:
    """Assign image candidates to actual sources by spectral similarity.

    Centroids start at the actual-source spectra; one assignment pass is
    followed by ``n_refine`` mean-recentering iterations.  Each cluster is
    truncated to its ``max_per_cluster`` most similar members.  Returns
    (clusters of candidate indices, dropped zero-spectrum indices); each
    cluster starts with its actual source.
    """
    actual_indices = list(actual_indices)
    if not actual_indices:
        raise ValidationError("need at least one actual source to cluster around")
    image_indices = [i for i in range(len(candidates)) if i not in actual_indices]
    dropped = [
        i for i in image_indices if np.linalg.norm(candidates[i].spectrum) == 0.0
    ]
    if dropped:
        warnings.warn(f"dropping {len(dropped)} zero-spectrum candidates", stacklevel=2)
    image_indices = [i for i in image_indices if i not in dropped]

    centroids = [candidates[i].spectrum.astype(complex) for i in actual_indices]
    assign = {}
    for _ in range(n_refine + 1):
        assign = {
            i: int(
                np.argmax([_cosine(candidates[i].spectrum, c) for c in centroids])
            )
            for i in image_indices
        }
        new_centroids = []
        for k, a_idx in enumerate(actual_indices):
            members = [candidates[i].spectrum for i in image_indices if assign[i] == k]
            stack = [candidates[a_idx].spectrum, *members]
            new_centroids.append(np.mean(np.stack(stack), axis=0))
        if all(
            np.allclose(cn, co) for cn, co in zip(new_centroids, centroids)
        ):
            break
        centroids = new_centroids

    clusters = []
    for k, a_idx in enumerate(actual_indices):
        members = [i for i in image_indices if assign.get(i) == k]
        members.sort(
            key=lambda i: -_cosine(candidates[i].spectrum, candidates[a_idx].spectrum)
        )
        clusters.append([a_idx, *members[: max_per_cluster - 1]])
    return clusters, dropped


# ---------------------------------------------------------------------------
# room fitting
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GeometryEstimate:
    """Fitted shoebox: per-axis lengths, wall offsets, and fit quality."""

    dims: tuple[float, float, float]
    offsets: tuple[float, float, float]
    fit_residual: float
    clusters: tuple[tuple[int, ...], ...] = ()
    unresolved: tuple[str, ...] = ()

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise ValidationError("fitted dims must be positive")
        if self.fit_residual < 0:
            raise ValidationError("fit residual must be nonnegative")


def _axis_predictions(source: float, offset: float, length: float) -> np.ndarray:
    """First- and second-order mirror positions of ``source`` along one axis."""
    low, high = offset, offset + length
    return np.array(
        [
            2.0 * low - source,
            2.0 * high - source,
            source - 2.0 * length,
            source + 2.0 * length,
        ]
    )


def _axis_residual(observed: np.ndarray, predicted: np.ndarray) -> float:
    """RMS of each observed value to its nearest prediction."""
    d = np.abs(observed[:, None] - predicted[None, :]).min(axis=1)
    return float(np.sqrt(np.mean(d**2)))


def fit_room(
    source_positions,
    cluster_positions,
    length_range: tuple[float, float],
    step: float = 0.25,
    must_contain=None,
    tie_tol: float = 1e-9,
) -> GeometryEstimate:
    """Exhaustive per-axis lattice search for the best-fitting shoebox.

    For every wall-offset/length pair on the ``step`` lattice, the first- and
    second-order mirror positions of each source are predicted and the RMS
    distance from each observed image coordinate to its nearest prediction is
    scored; the three axes decouple because axis-aligned walls only move one
    coordinate.  An axis whose best length is tied across several candidates
    (nothing constrains it) is reported in ``unresolved`` and assigned the
    smallest consistent length.
    """
    sources = np.atleast_2d(np.asarray(source_positions, dtype=float))
    if sources.shape[1] != 3 or sources.shape[0] == 0:
        raise ValidationError("source_positions must be N x 3")
    lo_len, hi_len = length_range
    if step <= 0 or hi_len < lo_len or lo_len <= 0:
        raise ValidationError("empty or invalid search range")
    clusters = [np.atleast_2d(np.asarray(c, dtype=float)) for c in cluster_positions]
    if len(clusters) != sources.shape[0]:
        raise ValidationError("one cluster per source required")

    pts = [sources]
    if must_contain is not None:
        pts.append(np.atleast_2d(np.asarray(must_contain, dtype=float)))
    bbox_lo = np.vstack(pts).min(axis=0)
    bbox_hi = np.vstack(pts).max(axis=0)

    lengths = np.arange(lo_len, hi_len + step / 2, step)
    dims, offsets, unresolved = [], [], []
    axis_mse, axis_counts = [], []
    for axis in range(3):
        obs, obs_src = [], []
        for s, cluster in zip(sources, clusters):
            for img in cluster:
                if abs(img[axis] - s[axis]) > step / 2:
                    others = np.delete(img, axis) - np.delete(s, axis)
                    if np.all(np.abs(others) <= step / 2):
                        obs.append(img[axis])
                        obs_src.append(s[axis])
        if not obs:
            span = float(bbox_hi[axis] - bbox_lo[axis])
            dims.append(max(span, step))
            offsets.append(float(bbox_lo[axis]))
            unresolved.append("xyz"[axis])
            axis_mse.append(0.0)
            axis_counts.append(0)
            continue
        obs = np.asarray(obs)
        obs_src = np.asarray(obs_src)
        best = None
        for length in lengths:
            if length < bbox_hi[axis] - bbox_lo[axis] - 1e-9:
                continue
            # low wall anywhere that keeps sources and mics inside the room
            off_lo = np.floor((bbox_hi[axis] - length) / step) * step
            for offset in np.arange(off_lo, bbox_lo[axis] + step / 2, step):
                if offset + length < bbox_hi[axis] - 1e-9:
                    continue
                d2 = []
                for s_ax in np.unique(obs_src):
                    pred = _axis_predictions(s_ax, offset, length)
                    sel = obs[obs_src == s_ax]
                    d2.extend(
                        np.abs(sel[:, None] - pred[None, :]).min(axis=1) ** 2
                    )
                mse = float(np.mean(d2))
                if best is None or mse < best[0] - tie_tol:
                    best = (mse, offset, length, {length})
                elif abs(mse - best[0]) <= tie_tol:
                    best[3].add(length)
        if best is None:
            raise ValidationError("search lattice admits no candidate walls")
        mse, offset, length, tied = best
        dims.append(float(length))
        offsets.append(float(offset))
        axis_mse.append(mse)
        axis_counts.append(obs.size)
        if len(tied) > 1:
            unresolved.append("xyz"[axis])

    total = sum(m * c for m, c in zip(axis_mse, axis_counts))
    count = sum(axis_counts)
    residual = float(np.sqrt(total / count)) if count else 0.0
    return GeometryEstimate(
        dims=tuple(dims),
        offsets=tuple(offsets),
        fit_residual=residual,
        unresolved=tuple(unresolved),
    )


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GeometryPipelineResult:
    """Room estimate plus the intermediates a report needs to show."""

    estimate: GeometryEstimate
    source_positions: np.ndarray  # (N, 3)
    image_positions: tuple[np.ndarray, ...]  # per-source (K, 3)
    candidates: list


def estimate_room_geometry(
    recordings: SpectroTemporalTensor,
    array: MicArray,
    n_sources: int,
    *,
    grid_spacing: float = 0.25,
    source_half_extent: float = 1.5,
    source_height_layers: int = 1,
    strip_half_extent: float = 6.0,
    bins=None,
    n_images_per_strip: int = 10,
    length_range: tuple[float, float] = (1.0, 12.0),
    source_distance: float = 1.0,
    solver: str = "omp",
    eps: float | None = None,
    structure: str = "block",
    c: float = 343.0,
) -> GeometryPipelineResult:
    """Blind room-geometry estimation from multichannel recordings.

    Pipeline: localize the actual sources on a plane grid around the array
    (they are the candidates within ``source_distance`` of it), localize
    mirror images on axis-aligned strips through each source, assign images
    to sources by spectral similarity, and brute-force fit the shoebox whose
    mirror predictions best match the assigned images.
    """
    if n_sources < 1:
        raise ValidationError("need at least one source")
    center = array.centroid()
    # near-field search volume: plane lattice replicated at a few heights,
    # since talkers need not sit exactly at the array height
    layers = []
    for dz in range(-source_height_layers, source_height_layers + 1):
        layers.append(
            extended_plane_grid(
                center[:2], half_extent=source_half_extent, spacing=grid_spacing,
                height=float(center[2]) + dz * grid_spacing,
            ).cell_centers
        )
    plane = PlanarGrid(
        cell_centers=np.vstack(layers), spacing=grid_spacing, height=float(center[2])
    )
    near = localize_images(
        recordings, plane, array, bins=bins, solver=solver,
        n_active=n_sources if solver in ("omp", "iht") else None,
        eps=eps, structure=structure, c=c,
    )
    sources = [cand for cand in near[:n_sources]]
    if not sources:
        raise ValidationError("no sources localized near the array")
    src_pos = np.array([cand.position for cand in sources])

    # per-frame energy of each source: used to pick the frames where one
    # talker dominates, so each strip solve sees a single source plus its
    # own mirror images (spectro-temporal disjointness of multiparty speech)
    frame_energy = np.stack(
        [np.sum(np.abs(cand.spectrum) ** 2, axis=0) for cand in sources]
    )
    total_energy = frame_energy.sum(axis=0)

    all_cands = list(sources)
    actual_idx = list(range(len(sources)))
    for k, cand in enumerate(sources):
        dominant = np.flatnonzero(
            (frame_energy[k] >= 0.7 * total_energy)
            & (frame_energy[k] >= 0.05 * frame_energy[k].max())
        )
        if dominant.size >= 4:
            view = SpectroTemporalTensor(
                data=recordings.data[:, :, dominant],
                config=recordings.config,
                n_samples=recordings.n_samples,
                padded=recordings.padded,
            )
        else:  # overlapped talkers: fall back to the full recording
            view = recordings
        strip = strip_grid(cand.position, half_extent=strip_half_extent, spacing=grid_spacing)
        found = localize_images(
            view, strip, array, bins=bins, solver=solver,
            n_active=n_images_per_strip if solver in ("omp", "iht") else None,
            eps=eps, structure=structure, c=c,
        )
        for img in found:
            # skip re-detections of the actual sources themselves
            if np.min(np.linalg.norm(src_pos - img.position, axis=1)) <= source_distance:
                continue
            if img.spectrum.shape[1] != recordings.n_frames:
                full = np.zeros(
                    (img.spectrum.shape[0], recordings.n_frames), dtype=complex
                )
                full[:, dominant] = img.spectrum
                img = Candidate(
                    position=img.position, spectrum=full,
                    energy=img.energy, cell_index=img.cell_index,
                )
            all_cands.append(img)

    clusters, _ = cluster_images(all_cands, actual_idx)
    image_positions = tuple(
        np.array([all_cands[i].position for i in cluster[1:]])
        if len(cluster) > 1 else np.zeros((0, 3))
        for cluster in clusters
    )
    estimate = fit_room(
        src_pos,
        [p if p.size else src_pos[:1] for p in image_positions],
        length_range=length_range,
        step=grid_spacing,
        must_contain=array.positions,
    )
    return GeometryPipelineResult(
        estimate=estimate,
        source_positions=src_pos,
        image_positions=image_positions,
        candidates=all_cands,
    )
