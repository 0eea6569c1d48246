"""Rooms, arrays, grids, and mirror-image enumeration for shoebox enclosures.

All types are immutable after construction and all operations are pure, so
everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AmbiguityError, DomainError, EmptyGridError, ValidationError

SOUND_SPEED = 343.0
"""Default speed of sound in dry air at 20 degrees C, m/s."""

#: Surface ordering used everywhere: the wall on the low side then the high
#: side of each axis.
SURFACE_NAMES = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class ReflectionProfile:
    """Reflection coefficient of one surface, scalar or tabulated over frequency.

    ``frequencies`` is None for a scalar profile.  Tabulated profiles are
    looked up by nearest neighbor, which is adequate at the few-Hz resolution
    the estimators produce.
    """

    values: tuple[float, ...]
    frequencies: tuple[float, ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValidationError("reflection profile needs at least one value")
        if np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValidationError("reflection coefficients must lie in [0, 1]")
        if self.frequencies is not None:
            freqs = np.asarray(self.frequencies, dtype=float)
            if freqs.size != vals.size:
                raise ValidationError("frequency/value length mismatch")
            if np.any(np.diff(freqs) <= 0.0):
                raise ValidationError("frequencies must be strictly increasing")

    @classmethod
    def scalar(cls, value: float) -> "ReflectionProfile":
        return cls(values=(float(value),))

    @classmethod
    def tabulated(cls, pairs: Sequence[tuple[float, float]]) -> "ReflectionProfile":
        freqs = tuple(float(f) for f, _ in pairs)
        vals = tuple(float(v) for _, v in pairs)
        return cls(values=vals, frequencies=freqs)

    @property
    def is_scalar(self) -> bool:
        return self.frequencies is None or len(self.values) == 1

    def at(self, frequency_hz: float | None = None) -> float:
        """Coefficient at the given frequency (nearest neighbor)."""
        if self.frequencies is None:
            return self.values[0]
        if frequency_hz is None:
            if len(self.values) == 1:
                return self.values[0]
            raise ValidationError(
                "frequency required to evaluate a tabulated reflection profile"
            )
        idx = int(np.argmin(np.abs(np.asarray(self.frequencies) - frequency_hz)))
        return self.values[idx]


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room: dimensions, six surface profiles, speed of sound.

    Surfaces follow :data:`SURFACE_NAMES` ordering; the room occupies
    ``[0, dims[a]]`` along each axis ``a``.
    """

    dims: tuple[float, float, float]
    surfaces: tuple[ReflectionProfile, ...]
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        dims = np.asarray(self.dims, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0.0):
            raise ValidationError("room dims must be three positive lengths")
        if self.sound_speed <= 0.0:
            raise ValidationError("sound_speed must be positive")
        if len(self.surfaces) != 6:
            raise ValidationError("a shoebox room has exactly 6 surfaces")
        object.__setattr__(self, "dims", tuple(float(d) for d in dims))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))

    @classmethod
    def uniform(cls, dims, coefficient: float, sound_speed: float = SOUND_SPEED) -> "RoomSpec":
        prof = ReflectionProfile.scalar(coefficient)
        return cls(dims=tuple(dims), surfaces=(prof,) * 6, sound_speed=sound_speed)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        dims = np.asarray(self.dims)
        return bool(np.all(p >= margin) and np.all(p <= dims - margin))

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dims
        return lx * ly * lz

    def surface_areas(self) -> np.ndarray:
        """Areas of the six surfaces in :data:`SURFACE_NAMES` order."""
        lx, ly, lz = self.dims
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])


@dataclass(frozen=True)
class MicArray:
    """Positions of the microphones, one 3-vector per element."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[0] < 2 or pos.shape[1] != 3:
            raise ValidationError("an array needs at least 2 microphones in 3-D")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def validate_inside(self, room: RoomSpec) -> None:
        for p in self.positions:
            if not room.contains(p) or np.any(p <= 0.0) or np.any(p >= room.dims):
                raise DomainError(f"microphone at {p} is not strictly inside the room")


@dataclass(frozen=True)
class PlanarGrid:
    """Candidate source positions, nominally a planar lattice.

    ``cell_centers`` may also be an arbitrary point cloud (the geometry
    estimator uses axis-aligned strips), in which case ``height`` records the
    nominal plane of the in-room cells.
    """

    cell_centers: np.ndarray
    spacing: float
    height: float

    def __post_init__(self):
        cells = np.atleast_2d(np.asarray(self.cell_centers, dtype=float))
        if cells.shape[0] == 0 or cells.shape[1] != 3:
            raise EmptyGridError("grid must contain at least one 3-D cell")
        if self.spacing <= 0.0:
            raise ValidationError("grid spacing must be positive")
        uniq = {tuple(np.round(c, 9)) for c in cells}
        if len(uniq) != cells.shape[0]:
            raise ValidationError("grid cells must be distinct")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cell_centers", cells)

    def __len__(self) -> int:
        return self.cell_centers.shape[0]


@dataclass(frozen=True)
class ImageSource:
    """One mirror image: position, total reflection order, cumulative gain."""

    position: tuple[float, float, float]
    order: int
    gain: float
    reflection_counts: tuple[int, int, int, int, int, int]


@dataclass(frozen=True)
class ImageSourceSet:
    """All images of one source up to a reflection order, sorted by order."""

    entries: tuple[ImageSource, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def positions(self) -> np.ndarray:
        return np.array([e.position for e in self.entries])

    def gains(self) -> np.ndarray:
        return np.array([e.gain for e in self.entries])

    def orders(self) -> np.ndarray:
        return np.array([e.order for e in self.entries])


def _axis_images(coord: float, length: float, max_order: int):
    """1-D mirror images: (position, low-wall count, high-wall count, order)."""
    out = []
    qmax = max_order // 2 + 1
    for q in range(-qmax, qmax + 1):
        for j in (0, 1):
            n_low = abs(q - j)
            n_high = abs(q)
            order = n_low + n_high
            if order > max_order:
                continue
            pos = (coord if j == 0 else -coord) + 2.0 * q * length
            out.append((pos, n_low, n_high, order))
    return out


def enumerate_images(
    room: RoomSpec,
    source,
    max_order: int,
    frequency_hz: float | None = None,
) -> ImageSourceSet:
    """Enumerate mirror images of ``source`` up to ``max_order`` reflections.

    The gain of each image is the product over surfaces of the reflection
    coefficient raised to that surface's bounce count, evaluated at
    ``frequency_hz`` when given.  Images closer than 1e-9 m are merged,
    keeping the lowest-order one.
    """
    if max_order < 0:
        raise ValidationError("max_order must be nonnegative")
    src = np.asarray(source, dtype=float)
    if not room.contains(src) or np.any(src <= 0.0) or np.any(src >= room.dims):
        raise DomainError(f"source at {src} is not strictly inside the room")

    coefs = [p.at(frequency_hz) for p in room.surfaces]
    per_axis = [_axis_images(src[a], room.dims[a], max_order) for a in range(3)]

    entries = []
    for px, nlx, nhx, ox in per_axis[0]:
        if ox > max_order:
            continue
        for py, nly, nhy, oy in per_axis[1]:
            if ox + oy > max_order:
                continue
            for pz, nlz, nhz, oz in per_axis[2]:
                order = ox + oy + oz
                if order > max_order:
                    continue
                counts = (nlx, nhx, nly, nhy, nlz, nhz)
                gain = 1.0
                for c, n in zip(coefs, counts):
                    if n:
                        gain *= c**n
                entries.append(ImageSource((px, py, pz), order, gain, counts))

    entries.sort(key=lambda e: (e.order, e.position))
    seen: dict[tuple, ImageSource] = {}
    kept = []
    for e in entries:
        key = tuple(np.round(np.asarray(e.position) / 1e-9).astype(np.int64))
        if key in seen:
            continue
        seen[key] = e
        kept.append(e)
    return ImageSourceSet(entries=tuple(kept))


def build_grid(room: RoomSpec, spacing: float, height: float, margin: float = 0.0) -> PlanarGrid:
    """Uniform planar lattice at ``height``, cells at least ``margin`` from walls.

    Cells are ordered row-major by (y, x): x varies fastest.
    """
    if spacing <= 0.0:
        raise ValidationError("spacing must be positive")
    if not (0.0 < height < room.dims[2]):
        raise ValidationError("height must lie strictly inside the room")
    xs = np.arange(margin, room.dims[0] - margin + 1e-12, spacing)
    ys = np.arange(margin, room.dims[1] - margin + 1e-12, spacing)
    if xs.size == 0 or ys.size == 0:
        raise EmptyGridError("spacing/margin leave no room for grid cells")
    cells = np.array([(x, y, height) for y in ys for x in xs])
    return PlanarGrid(cell_centers=cells, spacing=spacing, height=height)


@dataclass(frozen=True)
class ExpandedGrid:
    """Actual-virtual lattice: every grid cell plus all of its images.

    ``groups[i]`` indexes into ``points`` the cell ``i`` and its images;
    ``image_sets[i]`` carries the per-image orders and gains.  Within each
    group the first point is always the actual cell.
    """

    points: np.ndarray
    groups: tuple[np.ndarray, ...]
    image_sets: tuple[ImageSourceSet, ...]


def expand_grid_images(
    room: RoomSpec,
    grid: PlanarGrid,
    max_order: int,
    frequency_hz: float | None = None,
) -> ExpandedGrid:
    """Union of :func:`enumerate_images` over all grid cells, with group index sets."""
    points = []
    groups = []
    sets = []
    seen: dict[tuple, int] = {}
    for cell in grid.cell_centers:
        if not room.contains(cell):
            raise DomainError(f"grid cell {cell} lies outside the room")
        imgs = enumerate_images(room, cell, max_order, frequency_hz)
        idx = []
        for e in imgs.entries:
            key = tuple(np.round(np.asarray(e.position) / 1e-6).astype(np.int64))
            if key in seen:
                raise AmbiguityError(
                    f"image point {e.position} collides with another group"
                )
            seen[key] = len(points)
            idx.append(len(points))
            points.append(e.position)
        groups.append(np.asarray(idx, dtype=int))
        sets.append(imgs)
    return ExpandedGrid(
        points=np.asarray(points, dtype=float),
        groups=tuple(groups),
        image_sets=tuple(sets),
    )
