"""JSON scene files: schema, validation, and construction of scene objects.

A scene file describes one acoustic experiment: the room, the microphone
array, the sources, and the sampling setup.  Validation errors carry the
JSON path of the offending entry (e.g. ``sources[1].position``) so a user
can fix the file without reading tracebacks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .scene import SURFACE_NAMES, MicArray, ReflectionProfile, RoomSpec


class SceneFileError(ValidationError):
    """Scene schema violation; ``path`` locates the bad entry in the JSON."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class SourceSpec:
    """One source: a position and how to obtain its driving signal."""

    position: tuple[float, float, float]
    kind: str  # "noise" or "wav"
    duration_s: float | None = None
    wav_path: str | None = None
    start_s: float = 0.0  # leading silence, e.g. for turn-taking talkers


@dataclass(frozen=True)
class Scene:
    """Validated scene: everything a simulation or estimator run needs."""

    room: RoomSpec
    array: MicArray
    sources: tuple[SourceSpec, ...]
    sample_rate: float
    max_order: int
    noise_snr_db: float | None = None
    name: str = "scene"
    extras: dict = field(default_factory=dict)


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SceneFileError(f"{path}.{key}" if path else key, "missing required key")
    return obj[key]


def _vector3(value, path: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SceneFileError(path, "expected a 3-element number list")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise SceneFileError(path, "entries must be numbers") from None


def _positive_number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise SceneFileError(path, "expected a positive number")
    return float(value)


def _parse_room(obj, path: str) -> RoomSpec:
    if not isinstance(obj, dict):
        raise SceneFileError(path, "expected an object")
    dims = _vector3(_require(obj, "dims", path), f"{path}.dims")
    refl = _require(obj, "reflectivity", path)
    if isinstance(refl, (int, float)) and not isinstance(refl, bool):
        if not 0.0 <= refl <= 1.0:
            raise SceneFileError(f"{path}.reflectivity", "must lie in [0, 1]")
        surfaces = (ReflectionProfile.scalar(float(refl)),) * 6
    elif isinstance(refl, dict):
        missing = [n for n in SURFACE_NAMES if n not in refl]
        if missing:
            raise SceneFileError(
                f"{path}.reflectivity", f"missing surfaces: {', '.join(missing)}"
            )
        surfaces = []
        for name in SURFACE_NAMES:
            v = refl[name]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not 0 <= v <= 1:
                raise SceneFileError(f"{path}.reflectivity.{name}", "must lie in [0, 1]")
            surfaces.append(ReflectionProfile.scalar(float(v)))
        surfaces = tuple(surfaces)
    else:
        raise SceneFileError(f"{path}.reflectivity", "expected a number or per-surface object")
    c = obj.get("sound_speed", 343.0)
    try:
        return RoomSpec(dims=dims, surfaces=surfaces, sound_speed=_positive_number(c, f"{path}.sound_speed"))
    except SceneFileError:
        raise
    except ValidationError as exc:
        raise SceneFileError(path, str(exc)) from exc


def _parse_array(obj, room: RoomSpec, path: str) -> MicArray:
    if not isinstance(obj, dict):
        raise SceneFileError(path, "expected an object")
    kind = _require(obj, "kind", path)
    if kind == "circular":
        center = _vector3(_require(obj, "center", path), f"{path}.center")
        radius = _positive_number(_require(obj, "radius", path), f"{path}.radius")
        n = _require(obj, "n_mics", path)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise SceneFileError(f"{path}.n_mics", "expected a positive integer")
        ang = 2.0 * np.pi * np.arange(n) / n
        dz = obj.get("height_offset", 0.0)
        if not isinstance(dz, (int, float)) or isinstance(dz, bool):
            raise SceneFileError(f"{path}.height_offset", "expected a number")
        z = center[2] + float(dz) * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        pos = np.column_stack(
            [center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang), z]
        )
    elif kind == "positions":
        raw = _require(obj, "positions", path)
        if not isinstance(raw, list) or not raw:
            raise SceneFileError(f"{path}.positions", "expected a nonempty list")
        pos = np.array(
            [_vector3(p, f"{path}.positions[{i}]") for i, p in enumerate(raw)]
        )
    else:
        raise SceneFileError(f"{path}.kind", "expected 'circular' or 'positions'")
    arr = MicArray(positions=pos)
    for i, p in enumerate(arr.positions):
        if np.any(p <= 0.0) or np.any(p >= np.asarray(room.dims)):
            raise SceneFileError(f"{path}.positions[{i}]", "microphone outside the room")
    return arr


def _parse_source(obj, room: RoomSpec, path: str) -> SourceSpec:
    if not isinstance(obj, dict):
        raise SceneFileError(path, "expected an object")
    position = _vector3(_require(obj, "position", path), f"{path}.position")
    if np.any(np.asarray(position) <= 0.0) or np.any(
        np.asarray(position) >= np.asarray(room.dims)
    ):
        raise SceneFileError(f"{path}.position", "source outside the room")
    signal = _require(obj, "signal", path)
    if not isinstance(signal, dict):
        raise SceneFileError(f"{path}.signal", "expected an object")
    kind = _require(signal, "kind", f"{path}.signal")
    start = signal.get("start_s", 0.0)
    if isinstance(start, bool) or not isinstance(start, (int, float)) or start < 0:
        raise SceneFileError(f"{path}.signal.start_s", "expected a nonnegative number")
    if kind == "noise":
        dur = _positive_number(
            _require(signal, "duration_s", f"{path}.signal"), f"{path}.signal.duration_s"
        )
        return SourceSpec(position=position, kind="noise", duration_s=dur, start_s=float(start))
    if kind == "wav":
        wav = _require(signal, "path", f"{path}.signal")
        if not isinstance(wav, str) or not wav:
            raise SceneFileError(f"{path}.signal.path", "expected a file path string")
        return SourceSpec(position=position, kind="wav", wav_path=wav, start_s=float(start))
    raise SceneFileError(f"{path}.signal.kind", "expected 'noise' or 'wav'")


def parse_scene(obj: dict, name: str = "scene") -> Scene:
    """Validate a decoded scene dictionary and build the scene objects."""
    if not isinstance(obj, dict):
        raise SceneFileError("", "scene file must contain a JSON object")
    room = _parse_room(_require(obj, "room", ""), "room")
    array = _parse_array(_require(obj, "array", ""), room, "array")
    raw_sources = _require(obj, "sources", "")
    if not isinstance(raw_sources, list) or not raw_sources:
        raise SceneFileError("sources", "expected a nonempty list")
    sources = tuple(
        _parse_source(s, room, f"sources[{i}]") for i, s in enumerate(raw_sources)
    )
    fs = _positive_number(_require(obj, "sample_rate", ""), "sample_rate")
    max_order = _require(obj, "max_order", "")
    if not isinstance(max_order, int) or isinstance(max_order, bool) or max_order < 0:
        raise SceneFileError("max_order", "expected a nonnegative integer")
    snr = obj.get("noise_snr_db")
    if snr is not None and (isinstance(snr, bool) or not isinstance(snr, (int, float))):
        raise SceneFileError("noise_snr_db", "expected a number or null")
    known = {"room", "array", "sources", "sample_rate", "max_order", "noise_snr_db", "name"}
    extras = {k: v for k, v in obj.items() if k not in known}
    return Scene(
        room=room,
        array=array,
        sources=sources,
        sample_rate=fs,
        max_order=max_order,
        noise_snr_db=None if snr is None else float(snr),
        name=obj.get("name", name),
        extras=extras,
    )


def load_scene(path) -> Scene:
    """Parse and validate the scene JSON file at ``path``."""
    p = Path(path)
    try:
        obj = json.loads(p.read_text())
    except FileNotFoundError:
        raise SceneFileError("", f"scene file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise SceneFileError("", f"invalid JSON: {exc}") from exc
    return parse_scene(obj, name=p.stem)
