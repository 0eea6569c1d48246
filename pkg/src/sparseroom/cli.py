"""Command-line interface: simulation, estimation, separation, and reports.

Every command reads a JSON scene file (where applicable), writes JSON/CSV
reports plus rendered PNG figures into ``--out``, and is deterministic for
a fixed ``--seed``: re-running a command produces byte-identical reports.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import __version__
from .channels import (
    build_kronecker_system,
    extract_absorption,
    observation_covariance,
    rt60_sabine,
    block_sparse_covariance_recovery,
)
from .dereverb import inverse_filter
from .errors import NumericalError, ValidationError
from .forward import (
    MeasurementMatrix,
    coherence,
    free_space_matrix,
    rir_length_for,
    simulate_recordings,
    synthesize_rir,
)
from .geometry import estimate_room_geometry
from .metrics import sir
from .scene import SURFACE_NAMES, MicArray, RoomSpec, enumerate_images
from .scenefile import Scene, load_scene
from .stft import StftConfig, SpectroTemporalTensor, analyze, synthesize
from . import plots

_DEFAULT_FRAME = 4096


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(out: Path, command: str, args: argparse.Namespace, extra=None) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()
    obj = {
        "command": command,
        "config": {k: str(v) for k, v in cfg.items()},
        "config_sha256": digest,
        "seed": args.seed,
        "versions": {"sparseroom": __version__, "numpy": np.__version__},
    }
    if extra:
        obj.update(extra)
    _write_json(out / "manifest.json", obj)


def _source_signals(scene: Scene, seed: int) -> list[np.ndarray]:
    sigs = []
    for k, src in enumerate(scene.sources):
        if src.kind == "noise":
            rng = np.random.default_rng([seed, k])
            data = rng.standard_normal(int(src.duration_s * scene.sample_rate))
        else:
            rate, data = wavfile.read(src.wav_path)
            if rate != scene.sample_rate:
                raise ValidationError(
                    f"sources[{k}]: wav sample rate {rate} != scene rate {scene.sample_rate}"
                )
            data = np.asarray(data, dtype=float)
            if data.ndim > 1:
                data = data.mean(axis=1)
        lead = int(round(src.start_s * scene.sample_rate))
        if lead:
            data = np.concatenate([np.zeros(lead), data])
        sigs.append(data)
    return sigs


def _simulate_scene(scene: Scene, seed: int):
    sigs = _source_signals(scene, seed)
    positions = [np.asarray(s.position) for s in scene.sources]
    rng = np.random.default_rng([seed, 0xACDC]) if scene.noise_snr_db is not None else None
    mix = simulate_recordings(
        list(zip(sigs, positions)),
        scene.room,
        scene.array,
        max_order=scene.max_order,
        sample_rate=scene.sample_rate,
        noise_snr_db=scene.noise_snr_db,
        rng=rng,
    )
    return sigs, mix


def _stft_config(scene: Scene) -> StftConfig:
    return StftConfig(
        frame_len=_DEFAULT_FRAME,
        hop=_DEFAULT_FRAME // 4,
        fft_size=_DEFAULT_FRAME,
        window="hann",
        sample_rate=scene.sample_rate,
    )


def _parse_bins(spec: str | None, cfg: StftConfig):
    """--bins LO:HI:COUNT in Hz -> array of bin indices (default 1k-7.5k:48)."""
    if spec is None:
        lo, hi, count = 1000.0, min(7500.0, 0.95 * cfg.sample_rate / 2), 48
    else:
        try:
            lo_s, hi_s, n_s = spec.split(":")
            lo, hi, count = float(lo_s), float(hi_s), int(n_s)
        except ValueError:
            raise ValidationError("--bins must be LO_HZ:HI_HZ:COUNT") from None
    freqs = cfg.bin_frequencies()
    usable = np.flatnonzero((freqs >= lo) & (freqs <= hi))
    if usable.size == 0:
        raise ValidationError("--bins selects no frequency bins")
    return usable[:: max(1, usable.size // count)]


def _ground_truth(scene: Scene) -> dict:
    return {
        "room": {
            "dims": list(scene.room.dims),
            "reflectivity": {
                name: list(scene.room.surfaces[i].values)
                for i, name in enumerate(SURFACE_NAMES)
            },
        },
        "sources": [list(s.position) for s in scene.sources],
        "images": [
            [list(map(float, p)) for p in enumerate_images(
                scene.room, s.position, min(scene.max_order, 2)
            ).positions()]
            for s in scene.sources
        ],
        "sample_rate": scene.sample_rate,
        "max_order": scene.max_order,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _load_scene(args) -> Scene:
    scene = load_scene(args.scene)
    if getattr(args, "max_order", None) is not None:
        if args.max_order < 0:
            raise ValidationError("--max-order must be nonnegative")
        scene = dataclasses.replace(scene, max_order=args.max_order)
    return scene


def cmd_simulate(args) -> int:
    scene = _load_scene(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, mix = _simulate_scene(scene, args.seed)
    wavfile.write(out / "mix.wav", int(scene.sample_rate), mix.T.astype(np.float32))
    _write_json(out / "ground_truth.json", _ground_truth(scene))
    plots.save_waveforms(mix, scene.sample_rate, out / "waveforms.png")
    _manifest(out, "simulate", args, {"channels": mix.shape[0], "samples": mix.shape[1]})
    return 0


def cmd_estimate_geometry(args) -> int:
    scene = _load_scene(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, mix = _simulate_scene(scene, args.seed)
    cfg = _stft_config(scene)
    tensor = analyze(mix, cfg)
    bins = _parse_bins(args.bins, cfg)
    longest = max(scene.room.dims)
    res = estimate_room_geometry(
        tensor,
        scene.array,
        len(scene.sources),
        grid_spacing=args.grid_spacing,
        bins=bins,
        strip_half_extent=2.0 * longest,
        length_range=(args.grid_spacing, 2.0 * longest),
        solver=args.solver,
        eps=args.eps,
        structure=args.structure,
    )
    est = res.estimate
    _write_json(
        out / "geometry.json",
        {
            "dims": list(est.dims),
            "offsets": list(est.offsets),
            "fit_residual": est.fit_residual,
            "unresolved": list(est.unresolved),
            "sources": [list(map(float, p)) for p in res.source_positions],
        },
    )
    rows = []
    for k, imgs in enumerate(res.image_positions):
        for p in np.atleast_2d(imgs):
            if p.size:
                rows.append([f"{v:.6g}" for v in p] + [k])
    _write_csv(out / "images.csv", ["x", "y", "z", "cluster"], rows)
    plots.save_geometry_map(
        res.source_positions, res.image_positions, est.dims, est.offsets,
        scene.array.positions, out / "geometry.png",
    )
    _manifest(out, "estimate-geometry", args)
    return 0


def cmd_estimate_absorption(args) -> int:
    scene = _load_scene(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, mix = _simulate_scene(scene, args.seed)
    cfg = _stft_config(scene)
    tensor = analyze(mix, cfg)
    bins = _parse_bins(args.bins, cfg)[: args.n_bins]
    freqs = cfg.bin_frequencies()[bins]

    cells, groups, direct, surf_of = [], [], [], []
    for s in scene.sources:
        entries = enumerate_images(scene.room, s.position, 1).entries
        grp = []
        d_idx = 0
        for e in entries:
            if e.order == 0:
                d_idx = len(grp)
                surf_of.append(None)
            else:
                surf_of.append(SURFACE_NAMES[int(np.argmax(e.reflection_counts))])
            grp.append(len(cells))
            cells.append(np.asarray(e.position))
        groups.append(tuple(grp))
        direct.append(d_idx)
    cells = np.asarray(cells)

    per_surface: dict[str, list[float]] = {name: [] for name in SURFACE_NAMES}
    rows = []
    for b, f_hz in zip(bins, freqs):
        O = free_space_matrix(cells, scene.array, f_hz)
        system = build_kronecker_system(O, groups)
        C = observation_covariance(tensor.data[:, b, :])
        blocks, _ = block_sparse_covariance_recovery(C, system, max_iter=args.max_iter)
        for k, (block, grp) in enumerate(zip(blocks, groups)):
            try:
                _, p = extract_absorption(block, grp, direct[k])
            except NumericalError:
                continue
            for j, cell_idx in enumerate(grp):
                name = surf_of[cell_idx]
                if name is not None:
                    per_surface[name].append(float(p[j]))
                    rows.append([f"{f_hz:.1f}", k, name, f"{p[j]:.6g}"])
    coeffs = {
        name: float(np.clip(np.mean(vals), 0.0, 1.0)) if vals else 0.0
        for name, vals in per_surface.items()
    }
    est_room = RoomSpec(
        dims=scene.room.dims,
        surfaces=tuple(
            type(scene.room.surfaces[0]).scalar(min(coeffs[n], 0.999))
            for n in SURFACE_NAMES
        ),
        sound_speed=scene.room.sound_speed,
    )
    _write_json(
        out / "absorption.json",
        {
            "coefficients": coeffs,
            "rt60_sabine_s": rt60_sabine(est_room),
        },
    )
    _write_csv(out / "absorption.csv", ["freq_hz", "source", "surface", "coefficient"], rows)
    truth = {
        name: float(scene.room.surfaces[i].values[0])
        for i, name in enumerate(SURFACE_NAMES)
    }
    plots.save_absorption_bars(coeffs, out / "absorption.png", truth=truth)
    _manifest(out, "estimate-absorption", args)
    return 0


def cmd_separate(args) -> int:
    scene = _load_scene(args)
    if len(scene.sources) > len(scene.array):
        raise ValidationError("separation needs at least as many microphones as sources")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigs, mix = _simulate_scene(scene, args.seed)
    cfg = _stft_config(scene)
    tensor = analyze(mix, cfg)
    fs = scene.sample_rate

    H = np.zeros((cfg.n_bins, len(scene.array), len(scene.sources)), dtype=complex)
    for n, src in enumerate(scene.sources):
        for m, mic in enumerate(scene.array.positions):
            L = rir_length_for(scene.room, src.position, mic, fs, scene.max_order)
            taps = synthesize_rir(scene.room, src.position, mic, fs, scene.max_order, L).taps
            H[:, m, n] = np.fft.rfft(taps, n=cfg.fft_size)
    res = inverse_filter(H, tensor.data.transpose(1, 0, 2))

    rows = []
    sirs = []
    # source signals may differ in length (staggered starts); compare on a
    # common axis by padding them to the mixture length
    refs = [np.pad(s, (0, mix.shape[1] - s.size)) for s in sigs]
    for n in range(len(scene.sources)):
        est_tensor = SpectroTemporalTensor(
            data=res.estimates[:, n, :][None], config=cfg, n_samples=mix.shape[1]
        )
        est = synthesize(est_tensor)
        wavfile.write(out / f"source_{n}.wav", int(fs), est.astype(np.float32))
        others = [refs[k] for k in range(len(refs)) if k != n]
        value = sir(est, refs[n], others) if others else float("nan")
        sirs.append(value)
        rows.append([scene.name, f"sir_source_{n}_db", f"{value:.4f}"])
    _write_csv(out / "sir.csv", ["scene", "metric", "value"], rows)
    plots.save_sir_bars([f"src {n}" for n in range(len(sirs))], sirs, out / "sir.png")
    _manifest(out, "separate", args)
    return 0


def cmd_coherence(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spacing = args.grid_spacing
    span = np.arange(-1.0, 1.0 + 1e-9, spacing)
    cells = np.array([(x, y, 0.0) for x in span for y in span]) + np.array([0.0, 0.0, 1.0])
    freqs = np.linspace(500.0, 3500.0, 8)
    rows, uniform_mu, random_mu = [], [], []
    n_mics = 8
    for layout in range(args.n_layouts):
        rng = np.random.default_rng([args.seed, layout])
        ang = 2 * np.pi * np.arange(n_mics) / n_mics
        compact = MicArray(
            np.column_stack(
                [0.1 * np.cos(ang), 0.1 * np.sin(ang), np.full(n_mics, 1.0)]
            )
        )
        wide = MicArray(
            np.column_stack(
                [
                    rng.uniform(-1.2, 1.2, n_mics),
                    rng.uniform(-1.2, 1.2, n_mics),
                    1.0 + rng.uniform(-0.3, 0.3, n_mics),
                ]
            )
        )
        mus = []
        for arr in (compact, wide):
            blocks = np.stack([free_space_matrix(cells, arr, f) for f in freqs])
            phi = MeasurementMatrix(blocks=blocks, freq_bins=freqs, cells=cells)
            mu, _ = coherence(phi)
            mus.append(mu)
        uniform_mu.append(mus[0])
        random_mu.append(mus[1])
        rows.append([layout, f"{mus[0]:.6g}", f"{mus[1]:.6g}"])
    _write_csv(out / "coherence.csv", ["layout", "uniform_mu", "random_mu"], rows)
    plots.save_coherence_scatter(uniform_mu, random_mu, out / "coherence.png")
    _manifest(out, "coherence", args)
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = json.loads(Path(args.estimate).read_text())
    rows = []
    truth = None
    if args.truth and Path(args.truth).exists():
        truth = json.loads(Path(args.truth).read_text())
    else:
        print("warning: no ground truth available; emitting estimate-only metrics",
              file=sys.stderr)
    if "dims" in est:
        rows.append(["estimate", "fit_residual_m", f"{est.get('fit_residual', 0.0):.6g}"])
        if truth and "room" in truth:
            for axis, (d_est, d_true) in enumerate(zip(est["dims"], truth["room"]["dims"])):
                rows.append(
                    ["estimate", f"dims_error_{'xyz'[axis]}_m", f"{abs(d_est - d_true):.6g}"]
                )
    if "coefficients" in est and truth and "room" in truth:
        for name, value in est["coefficients"].items():
            true_v = truth["room"]["reflectivity"].get(name, [None])[0]
            if true_v is not None:
                rows.append(["estimate", f"absorption_error_{name}", f"{abs(value - true_v):.6g}"])
    if not rows:
        rows.append(["estimate", "no_supported_metrics", "0"])
    _write_csv(out / "metrics.csv", ["scene", "metric", "value"], rows)
    _manifest(out, "evaluate", args)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseroom",
        description="Room acoustics toolkit: simulation, geometry/absorption "
        "estimation, separation, and evaluation reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=True):
        if scene:
            p.add_argument("--scene", required=True, help="scene JSON file")
            p.add_argument(
                "--max-order", type=int, default=None,
                help="override the scene's image-source reflection order",
            )
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="global RNG seed")

    p = sub.add_parser("simulate", help="render a scene to a multichannel WAV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-geometry", help="blind room-geometry estimate")
    common(p)
    p.add_argument("--grid-spacing", type=float, default=0.25)
    p.add_argument("--bins", default=None, help="LO_HZ:HI_HZ:COUNT bin selection")
    p.add_argument("--solver", choices=["iht", "omp", "l1l2"], default="omp")
    p.add_argument(
        "--structure", default="block",
        help="sparsity grouping: plain, block[:B], or harmonic:F0[:N]",
    )
    p.add_argument(
        "--eps", type=float, default=None,
        help="residual tolerance for the l1l2 solver (default: 10%% of the data norm)",
    )
    p.set_defaults(func=cmd_estimate_geometry)

    p = sub.add_parser("estimate-absorption", help="surface absorption from covariances")
    common(p)
    p.add_argument("--bins", default=None, help="LO_HZ:HI_HZ:COUNT bin selection")
    p.add_argument("--n-bins", type=int, default=4, help="number of bins to analyze")
    p.add_argument("--max-iter", type=int, default=20000)
    p.set_defaults(func=cmd_estimate_absorption)

    p = sub.add_parser("separate", help="inverse-filter separation of a scene")
    common(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("coherence", help="uniform vs random array coherence sweep")
    common(p, scene=False)
    p.add_argument("--grid-spacing", type=float, default=0.25)
    p.add_argument("--n-layouts", type=int, default=20)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("evaluate", help="compare an estimate against ground truth")
    common(p, scene=False)
    p.add_argument("--estimate", required=True, help="estimate JSON (geometry/absorption)")
    p.add_argument("--truth", default=None, help="ground_truth.json from simulate")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
