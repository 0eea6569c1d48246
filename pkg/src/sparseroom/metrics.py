"""Quality metrics: SIR, spectral orthogonality, and support recovery.

The SIR here uses instantaneous orthogonal projections (no allowed
distortion filters): the estimate is split into its component along the
target and its component in the span of the interferers; the ratio of the
two energies is reported in dB, capped at +/-80 dB.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

SIR_CAP_DB = 80.0


def _project(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the column span of ``basis``."""
    coeff, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return basis @ coeff


def sir(estimate, target, interferers) -> float:
    """Signal-to-interference ratio of ``estimate`` in dB.

    The target component is the projection of the estimate onto the target
    signal; the interference component is the projection of the remainder
    onto the interferer span.  The result is capped at +/-80 dB so exact
    matches and pure interference report finite sentinels.
    """
    e = np.asarray(estimate, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    ints = [np.asarray(i, dtype=float).ravel() for i in interferers]
    if any(v.size != e.size for v in [t, *ints]):
        raise ValidationError("all signals must share one length")
    if not np.any(t):
        raise ValidationError("target signal is zero")

    t_comp = _project(e, t[:, None])
    p_target = float(np.dot(t_comp, t_comp))
    if ints:
        basis = np.stack(ints, axis=1)
        i_comp = _project(e - t_comp, basis)
        p_interf = float(np.dot(i_comp, i_comp))
    else:
        p_interf = 0.0

    if p_interf <= 0.0:
        return SIR_CAP_DB
    if p_target <= 0.0:
        return -SIR_CAP_DB
    db = 10.0 * np.log10(p_target / p_interf)
    return float(np.clip(db, -SIR_CAP_DB, SIR_CAP_DB))


def orthogonality_ratio(X: np.ndarray) -> float:
    """Diagonal-to-Frobenius energy ratio of the row Gram matrix of ``X``.

    rho = ||diag(X X*)||_2 / ||X X*||_F, in (0, 1]; equals 1 exactly when
    the rows of X are mutually orthogonal.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D source matrix")
    gram = X @ X.conj().T
    fro = float(np.linalg.norm(gram))
    if fro == 0.0:
        raise ValidationError("orthogonality ratio is undefined for a zero matrix")
    return float(np.linalg.norm(np.diag(gram)) / fro)


def product_histogram(S1, S2, n_bins: int = 10):
    """Histogram of pointwise STFT product magnitudes |S1 . S2|.

    Returns ``(counts, edges, lowest_mass)`` where ``lowest_mass`` is the
    fraction of entries falling in the lowest-magnitude bin.  Sparse,
    disjointly supported spectra put all their mass there.
    """
    a = np.asarray(getattr(S1, "data", S1))
    b = np.asarray(getattr(S2, "data", S2))
    if a.shape != b.shape:
        raise ValidationError("tensors must share one shape")
    if n_bins < 1:
        raise ValidationError("need at least one histogram bin")
    mags = np.abs(a * b).ravel()
    hi = float(mags.max())
    edges = np.linspace(0.0, hi if hi > 0.0 else 1.0, n_bins + 1)
    counts, edges = np.histogram(mags, bins=edges)
    lowest_mass = float(counts[0] / mags.size)
    return counts, edges, lowest_mass


def support_metrics(estimated, truth, spacing: float):
    """Greedy hit rate and mean matched position error against ``truth``.

    Each true position greedily claims the nearest unused estimate; a
    match within one grid ``spacing`` counts as a hit.  Returns
    ``(hit_rate, mean_error)`` where the error averages over hits only
    (NaN when nothing matched).
    """
    truth = [np.asarray(t, dtype=float) for t in truth]
    if not truth:
        raise ValidationError("truth set must be nonempty")
    pool = [np.asarray(e, dtype=float) for e in estimated]
    hits = 0
    errors = []
    for t in truth:
        if not pool:
            break
        d = [float(np.linalg.norm(p - t)) for p in pool]
        j = int(np.argmin(d))
        if d[j] <= spacing + 1e-12:
            hits += 1
            errors.append(d[j])
            pool.pop(j)
    hit_rate = hits / len(truth)
    mean_error = float(np.mean(errors)) if errors else float("nan")
    return hit_rate, mean_error
