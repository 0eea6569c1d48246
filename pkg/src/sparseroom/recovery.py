"""Structured sparse solvers over the acoustic measurement operators.

Coefficient vectors are cell-major: index ``g * n_bins + f`` holds bin ``f``
of cell ``g``.  Observations are mic-major: index ``m * n_bins + f``.  A
trailing frame axis is allowed everywhere and group norms aggregate over it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._prox import l2_shrink, power_iteration_norm
from .errors import ValidationError
from .forward import MeasurementMatrix
from .scene import PlanarGrid


# ---------------------------------------------------------------------------
# Structures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class StructureModel:
    """Maps each coefficient index to its sparsity group.

    kinds:
      * ``plain``     -- every coefficient is its own group
      * ``block``     -- runs of ``block_size`` consecutive bins per cell
      * ``harmonic``  -- per cell, the bins nearest k*f0 (k = 1..n_harmonics)
        form one group; bins not covered by any harmonic stay singletons
    """

    kind: str
    n_bins: int = 1
    block_size: int | None = None
    f0_hz: float | None = None
    n_harmonics: int | None = None
    bin_freqs: tuple[float, ...] | None = None

    @classmethod
    def plain(cls, n_bins: int = 1) -> "StructureModel":
        return cls(kind="plain", n_bins=n_bins)

    @classmethod
    def block(cls, block_size: int, n_bins: int) -> "StructureModel":
        if block_size < 1:
            raise ValidationError("block size must be >= 1")
        return cls(kind="block", n_bins=n_bins, block_size=block_size)

    @classmethod
    def from_spec(cls, spec: str, n_bins: int, bin_freqs=None) -> "StructureModel":
        """Build a structure from a compact string spec.

        ``"plain"``; ``"block"`` (one group per cell) or ``"block:B"``;
        ``"harmonic:F0"`` or ``"harmonic:F0:N"`` (needs ``bin_freqs``).
        """
        parts = str(spec).split(":")
        kind = parts[0]
        if kind == "plain" and len(parts) == 1:
            return cls.plain(n_bins)
        if kind == "block" and len(parts) <= 2:
            try:
                size = int(parts[1]) if len(parts) == 2 else n_bins
            except ValueError:
                raise ValidationError(f"bad block size in structure spec {spec!r}") from None
            return cls.block(block_size=size, n_bins=n_bins)
        if kind == "harmonic" and 2 <= len(parts) <= 3:
            if bin_freqs is None:
                raise ValidationError("harmonic structure needs the bin frequencies")
            try:
                f0 = float(parts[1])
                n_harm = int(parts[2]) if len(parts) == 3 else 10
            except ValueError:
                raise ValidationError(f"bad harmonic parameters in {spec!r}") from None
            return cls.harmonic(f0, n_harm, bin_freqs)
        raise ValidationError(
            f"unknown structure spec {spec!r}; expected plain, block[:B], or harmonic:F0[:N]"
        )

    @classmethod
    def harmonic(cls, f0_hz: float, n_harmonics: int, bin_freqs) -> "StructureModel":
        freqs = tuple(float(f) for f in bin_freqs)
        return cls(
            kind="harmonic",
            n_bins=len(freqs),
            f0_hz=float(f0_hz),
            n_harmonics=int(n_harmonics),
            bin_freqs=freqs,
        )

    def _cell_groups(self) -> list[np.ndarray]:
        """Group layout within one cell, as bin-index arrays."""
        F = self.n_bins
        if self.kind == "plain":
            return [np.array([f]) for f in range(F)]
        if self.kind == "block":
            b = self.block_size
            return [np.arange(lo, min(lo + b, F)) for lo in range(0, F, b)]
        if self.kind == "harmonic":
            freqs = np.asarray(self.bin_freqs)
            chosen: list[int] = []
            for k in range(1, self.n_harmonics + 1):
                target = k * self.f0_hz
                if target > freqs.max() + (freqs[1] - freqs[0] if len(freqs) > 1 else 0):
                    break
                idx = int(np.argmin(np.abs(freqs - target)))
                if idx not in chosen:
                    chosen.append(idx)
            rest = [f for f in range(F) if f not in chosen]
            groups = [np.asarray(sorted(chosen), dtype=int)] if chosen else []
            groups.extend(np.array([f]) for f in rest)
            return groups
        raise ValidationError(f"unknown structure kind {self.kind!r}")

    def groups(self, n_cells: int) -> list[np.ndarray]:
        """Flat-index groups over an ``n_cells * n_bins`` coefficient vector."""
        per_cell = self._cell_groups()
        return [g * self.n_bins + idx for g in range(n_cells) for idx in per_cell]

    def group_ids(self, n_cells: int) -> np.ndarray:
        """Group label of every flat coefficient index."""
        ids = np.empty(n_cells * self.n_bins, dtype=int)
        for gid, idx in enumerate(self.groups(n_cells)):
            ids[idx] = gid
        return ids


def search_fundamental(
    spectrum, bin_freqs, n_harmonics: int, f0_grid=None
) -> float:
    """Fundamental frequency whose harmonic bins capture the most energy.

    The default grid spans 150-400 Hz in 1 Hz steps.
    """
    energy = np.abs(np.asarray(spectrum)) ** 2
    if energy.ndim > 1:
        energy = energy.sum(axis=tuple(range(1, energy.ndim)))
    freqs = np.asarray(bin_freqs, dtype=float)
    if f0_grid is None:
        f0_grid = np.arange(150.0, 400.0 + 0.5, 1.0)
    best_f0, best_e = float(f0_grid[0]), -1.0
    for f0 in f0_grid:
        idx = set()
        for k in range(1, n_harmonics + 1):
            if k * f0 > freqs.max():
                break
            idx.add(int(np.argmin(np.abs(freqs - k * f0))))
        e = energy[sorted(idx)].sum()
        if e > best_e:
            best_f0, best_e = float(f0), e
    return best_f0


# ---------------------------------------------------------------------------
# Operator adapter
# ---------------------------------------------------------------------------
class _Operator:
    """Uniform apply/adjoint view over a MeasurementMatrix or a dense matrix."""

    def __init__(self, phi, n_bins: int):
        if isinstance(phi, MeasurementMatrix):
            if phi.n_bins != n_bins:
                raise ValidationError("structure n_bins must match the operator")
            self.blocks = phi.blocks
            self.n_cells = phi.n_cells
            self.n_rows = phi.n_mics * phi.n_bins
            self._dense = None
        else:
            mat = np.asarray(phi)
            if mat.ndim != 2:
                raise ValidationError("operator must be a matrix")
            if mat.shape[1] % n_bins:
                raise ValidationError("column count must be a multiple of n_bins")
            self.blocks = None
            self._dense = mat
            self.n_cells = mat.shape[1] // n_bins
            self.n_rows = mat.shape[0]
        self.n_bins = n_bins
        self.n_cols = self.n_cells * n_bins

    def apply(self, s: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ s
        F = self.n_bins
        sg = s.reshape(self.n_cells, F, -1)
        x = np.einsum("fmg,gft->mft", self.blocks, sg)
        out = x.reshape(self.n_rows, -1)
        return out[:, 0] if s.ndim == 1 else out

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense.conj().T @ x
        F = self.n_bins
        xm = x.reshape(-1, F, x.shape[1] if x.ndim > 1 else 1)
        s = np.einsum("fmg,mft->gft", self.blocks.conj(), xm)
        out = s.reshape(self.n_cols, -1)
        return out[:, 0] if x.ndim == 1 else out

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        F, M, G = self.blocks.shape
        out = np.zeros((M * F, G * F), dtype=complex)
        for f in range(F):
            out[f::F, f::F] = self.blocks[f]
        return out

    def spectral_norm(self) -> float:
        return power_iteration_norm(self.apply, self.adjoint, (self.n_cols,))


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------
@dataclass
class SparseEstimate:
    """Recovered coefficients plus the structured support that carries them."""

    coefficients: np.ndarray
    support: tuple[int, ...]
    residual_norm: float
    iterations: int
    n_bins: int = 1
    converged: bool = True
    warning: str | None = None

    def cell_energies(self) -> np.ndarray:
        c = self.coefficients.reshape(-1, self.n_bins, *self.coefficients.shape[1:])
        return np.sum(np.abs(c) ** 2, axis=tuple(range(1, c.ndim)))


def _support_cells(coefficients: np.ndarray, n_bins: int) -> tuple[int, ...]:
    flat = np.abs(coefficients).reshape(coefficients.shape[0], -1).sum(axis=1)
    cells = np.flatnonzero(flat.reshape(-1, n_bins).sum(axis=1) > 0)
    return tuple(int(c) for c in cells)


# ---------------------------------------------------------------------------
# Model approximation + IHT
# ---------------------------------------------------------------------------
def _group_energies(v: np.ndarray, group_ids: np.ndarray, n_groups: int) -> np.ndarray:
    mag2 = np.abs(v) ** 2
    if mag2.ndim > 1:
        mag2 = mag2.reshape(mag2.shape[0], -1).sum(axis=1)
    return np.bincount(group_ids, weights=mag2, minlength=n_groups)


def model_approx(v, structure: StructureModel, n_active: int) -> np.ndarray:
    """Keep the ``n_active`` highest-energy structure groups, zero the rest.

    Ties break toward the lowest group index.  Idempotent and norm
    non-increasing by construction.
    """
    if n_active < 1:
        raise ValidationError("n_active must be >= 1")
    v = np.asarray(v)
    if v.shape[0] % structure.n_bins:
        raise ValidationError("vector length must be a multiple of n_bins")
    n_cells = v.shape[0] // structure.n_bins
    group_ids = structure.group_ids(n_cells)
    n_groups = group_ids.max() + 1
    energies = _group_energies(v, group_ids, n_groups)
    keep = np.argsort(-energies, kind="stable")[:n_active]
    mask = np.zeros(n_groups, dtype=bool)
    mask[keep] = True
    out = v.copy()
    dead = ~mask[group_ids]
    out[dead] = 0.0
    return out


def iht(
    phi,
    x,
    structure: StructureModel,
    n_active: int,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> SparseEstimate:
    """Iterative hard thresholding with the structured model projector.

    Step size is 1 / sigma_max(Phi)^2 (power iteration, 50 rounds), which
    keeps the residual non-increasing.
    """
    op = _Operator(phi, structure.n_bins)
    x = np.asarray(x, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise ValidationError("observation contains non-finite values")
    smax = op.spectral_norm()
    kappa = 1.0 / smax**2 if smax > 0 else 1.0

    shape = (op.n_cols,) if x.ndim == 1 else (op.n_cols, x.shape[1])
    s = np.zeros(shape, dtype=complex)
    prev = np.linalg.norm(x)
    iterations = 0
    converged = False
    resid = prev
    for iterations in range(1, max_iter + 1):
        r = x - op.apply(s)
        s = model_approx(s + kappa * op.adjoint(r), structure, n_active)
        resid = float(np.linalg.norm(x - op.apply(s)))
        if resid <= tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
        if abs(prev - resid) < tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
        prev = resid
    return SparseEstimate(
        coefficients=s,
        support=_support_cells(s, structure.n_bins),
        residual_norm=resid,
        iterations=iterations,
        n_bins=structure.n_bins,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# OMP
# ---------------------------------------------------------------------------
def omp(
    phi,
    x,
    structure: StructureModel,
    n_active: int,
    residual_tol: float = 0.0,
) -> SparseEstimate:
    """Greedy group selection by least-squares residual after augmentation."""
    op = _Operator(phi, structure.n_bins)
    A = op.dense()
    col_norms = np.linalg.norm(A, axis=0)
    if np.any(col_norms == 0.0):
        raise ValidationError("operator has a zero column")
    x = np.asarray(x, dtype=complex)
    X = x[:, None] if x.ndim == 1 else x

    groups = structure.groups(op.n_cells)
    selected: list[int] = []
    support_idx = np.array([], dtype=int)
    resid = float(np.linalg.norm(X))
    warning = None
    coeffs_on_support = np.zeros((0, X.shape[1]), dtype=complex)

    for _ in range(n_active):
        if resid <= residual_tol:
            break
        best = None
        for gid, gidx in enumerate(groups):
            if gid in selected:
                continue
            cand = np.concatenate([support_idx, gidx])
            sol, _, _, _ = np.linalg.lstsq(A[:, cand], X, rcond=None)
            rn = float(np.linalg.norm(X - A[:, cand] @ sol))
            if best is None or rn < best[0]:
                best = (rn, gid, cand, sol)
        if best is None:
            break
        resid, gid, support_idx, coeffs_on_support = best
        selected.append(gid)

    if support_idx.size:
        sub = A[:, support_idx]
        rank = np.linalg.matrix_rank(sub)
        if rank < support_idx.size:
            warning = "rank-deficient subdictionary; regularized solve"
            gram = sub.conj().T @ sub
            lam = 1e-10 * np.trace(gram).real
            coeffs_on_support = np.linalg.solve(
                gram + lam * np.eye(gram.shape[0]), sub.conj().T @ X
            )
            resid = float(np.linalg.norm(X - sub @ coeffs_on_support))

    coeffs = np.zeros((op.n_cols, X.shape[1]), dtype=complex)
    if support_idx.size:
        coeffs[support_idx] = coeffs_on_support
    if x.ndim == 1:
        coeffs = coeffs[:, 0]
    return SparseEstimate(
        coefficients=coeffs,
        support=_support_cells(coeffs, structure.n_bins),
        residual_norm=resid,
        iterations=len(selected),
        n_bins=structure.n_bins,
        converged=True,
        warning=warning,
    )


# ---------------------------------------------------------------------------
# Mixed-norm convex recovery
# ---------------------------------------------------------------------------
def l1l2(
    phi,
    X,
    structure: StructureModel,
    eps: float,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> SparseEstimate:
    """min sum of group L2 norms  s.t.  ||X - Phi S|| <= eps.

    Solved by a primal-dual proximal splitting iteration whose primal prox is
    group soft thresholding and whose dual prox projects the residual onto
    the eps-ball.  Convergence = relative objective change below ``tol`` with
    the constraint met to eps + 1e-6*||X||.
    """
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    op = _Operator(phi, structure.n_bins)
    X = np.asarray(X, dtype=complex)
    squeeze = X.ndim == 1
    Xm = X[:, None] if squeeze else X

    group_ids = structure.group_ids(op.n_cells)
    n_groups = group_ids.max() + 1
    L = op.spectral_norm()
    if L == 0.0:
        raise ValidationError("operator is zero")
    tau = sigma = 0.95 / L

    S = np.zeros((op.n_cols, Xm.shape[1]), dtype=complex)
    Sbar = S.copy()
    Y = np.zeros_like(Xm)
    xnorm = float(np.linalg.norm(Xm))
    feas_slack = eps + 1e-6 * xnorm

    obj_prev = np.inf
    converged = False
    iterations = 0
    feas = xnorm
    for iterations in range(1, max_iter + 1):
        W = Y + sigma * op.apply(Sbar) - sigma * Xm
        Y = l2_shrink(W, sigma * eps)
        S_new = S - tau * op.adjoint(Y)
        energies = _group_energies(S_new, group_ids, n_groups)
        norms = np.sqrt(energies)
        scale = np.where(norms > tau, 1.0 - tau / np.maximum(norms, tau), 0.0)
        S_new *= scale[group_ids][:, None]
        Sbar = 2.0 * S_new - S
        S = S_new

        if iterations % 10 == 0 or iterations == max_iter:
            obj = float(np.sqrt(_group_energies(S, group_ids, n_groups)).sum())
            feas = float(np.linalg.norm(Xm - op.apply(S)))
            if (
                abs(obj - obj_prev) < tol * max(obj, 1e-12)
                and feas <= feas_slack
            ):
                converged = True
                break
            obj_prev = obj

    coeffs = S[:, 0] if squeeze else S
    est = SparseEstimate(
        coefficients=coeffs,
        support=_support_cells(coeffs, structure.n_bins),
        residual_norm=feas,
        iterations=iterations,
        n_bins=structure.n_bins,
        converged=converged,
    )
    if not converged:
        est.warning = "iteration cap reached; best iterate returned"
    return est


def localize(estimate: SparseEstimate, grid: PlanarGrid, n_sources: int):
    """Top cells of the estimate by aggregate energy, descending.

    Returns a list of (cell index, position, energy); empty (with a warning)
    when the estimate is identically zero.
    """
    if n_sources < 1:
        raise ValidationError("n_sources must be >= 1")
    energies = estimate.cell_energies()
    if energies.shape[0] != len(grid):
        raise ValidationError("estimate does not match the grid size")
    if not np.any(energies > 0):
        warnings.warn("all-zero estimate; nothing to localize", stacklevel=2)
        return []
    order = np.argsort(-energies, kind="stable")[:n_sources]
    return [(int(g), grid.cell_centers[g].copy(), float(energies[g])) for g in order]
