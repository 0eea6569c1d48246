"""Small primal-dual building blocks shared by the convex solvers."""

from __future__ import annotations

import numpy as np


def l2_shrink(v: np.ndarray, threshold: float) -> np.ndarray:
    """Block soft threshold: shrink the whole vector's L2 norm by threshold."""
    nrm = np.linalg.norm(v)
    if nrm <= threshold:
        return np.zeros_like(v)
    return v * (1.0 - threshold / nrm)


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """Entrywise soft threshold (magnitude shrink, works for complex too)."""
    mag = np.abs(v)
    scale = np.maximum(mag - threshold, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mag > 0, v * (scale / np.where(mag > 0, mag, 1.0)), 0.0)
    return out


def ball_dual_prox(z: np.ndarray, sigma: float, center: np.ndarray | None, radius: float):
    """Prox of the conjugate of the indicator of an L2 ball around ``center``.

    Moreau decomposition of proj onto {u : ||u - center|| <= radius}.
    """
    if center is not None:
        z = z - sigma * center
    return l2_shrink(z, sigma * radius)


def power_iteration_norm(apply_fn, adjoint_fn, shape, n_iter: int = 50) -> float:
    """Largest singular value of a linear operator given by its action.

    Deterministic start (all-ones), 50 iterations by default.
    """
    v = np.ones(shape, dtype=complex)
    v /= np.linalg.norm(v)
    s = 1.0
    for _ in range(n_iter):
        w = adjoint_fn(apply_fn(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        s = np.sqrt(nw)
        v = w / nw
    return float(s)
