"""Separation and dereverberation of characterized multichannel mixtures.

Frequency-domain inverse filtering recovers per-source spectra from a known
(or estimated) per-bin channel matrix; an optional coherence-based
post-filter suppresses the diffuse residual that a short channel model
leaves behind.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .stft import SpectroTemporalTensor

_RIDGE = 1e-10  # relative Tikhonov weight for rank-deficient bins


@dataclass(frozen=True)
class InverseFilterResult:
    """Per-bin least-squares source estimates with conditioning diagnostics.

    ``estimates[f]`` is the N x T source matrix at bin ``f``;
    ``condition_numbers[f]`` is cond(H[f]); ``degenerate[f]`` flags bins
    where rank(H) < N and a ridge-regularized solve was used instead.
    """

    estimates: np.ndarray  # (F, N, T) complex
    condition_numbers: np.ndarray  # (F,)
    degenerate: np.ndarray  # (F,) bool


def inverse_filter(H: np.ndarray, X: np.ndarray) -> InverseFilterResult:
    """Least-squares inversion ``S = (H*H)^-1 H* X`` independently per bin.

    ``H`` is (F, M, N) with N <= M, ``X`` is (F, M, T).  Bins where H is
    rank-deficient are solved with a small ridge (1e-10 * ||H||^2) and
    flagged rather than raising, so a few dead bins do not abort a
    broadband run.
    """
    H = np.asarray(H, dtype=complex)
    X = np.asarray(X, dtype=complex)
    if H.ndim != 3 or X.ndim != 3:
        raise ValidationError("H must be (F, M, N) and X (F, M, T)")
    F, M, N = H.shape
    if N > M:
        raise ValidationError("more sources than microphones (N > M)")
    if X.shape[0] != F or X.shape[1] != M:
        raise ValidationError("observation shape does not match the channel matrix")
    if not (np.all(np.isfinite(H.real)) and np.all(np.isfinite(H.imag))):
        raise ValidationError("channel matrix contains non-finite entries")

    T = X.shape[2]
    estimates = np.zeros((F, N, T), dtype=complex)
    conds = np.zeros(F)
    degenerate = np.zeros(F, dtype=bool)
    for f in range(F):
        sv = np.linalg.svd(H[f], compute_uv=False)
        tol = max(M, N) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
        rank = int(np.sum(sv > tol))
        conds[f] = np.inf if rank < N or sv[-1] == 0.0 else float(sv[0] / sv[-1])
        if rank < N:
            degenerate[f] = True
            gram = H[f].conj().T @ H[f]
            ridge = _RIDGE * float(np.linalg.norm(H[f]) ** 2)
            estimates[f] = np.linalg.solve(
                gram + ridge * np.eye(N), H[f].conj().T @ X[f]
            )
        else:
            estimates[f] = np.linalg.lstsq(H[f], X[f], rcond=None)[0]
    return InverseFilterResult(
        estimates=estimates, condition_numbers=conds, degenerate=degenerate
    )


def zelinski_postfilter(
    tensor: SpectroTemporalTensor, aligned: bool = True, forgetting: float = 0.8
) -> SpectroTemporalTensor:
    """Coherence-weighted Wiener post-filter collapsing channels to one.

    The per-(bin, frame) gain is the positive part of the mean pairwise
    real cross-spectrum over the mean auto-spectrum, both smoothed across
    frames with an exponential ``forgetting`` factor, clamped to [0, 1],
    and applied to the channel average.  Coherent (identical) channels pass
    through with unit gain; incoherent noise is attenuated.
    """
    if not 0.0 <= forgetting < 1.0:
        raise ValidationError("forgetting factor must be in [0, 1)")
    X = tensor.data
    C = tensor.n_channels
    if C < 2:
        warnings.warn("post-filter needs >= 2 channels; passing input through", stacklevel=2)
        return tensor
    if not aligned:
        warnings.warn("channels not time-aligned; gains will be pessimistic", stacklevel=2)

    # mean pairwise Re{X_i X_j*} via the channel-sum identity:
    # sum_{i<j} Re{X_i X_j*} = (|sum_i X_i|^2 - sum_i |X_i|^2) / 2
    total = X.sum(axis=0)
    auto = (np.abs(X) ** 2).mean(axis=0)  # (F, T)
    cross = (np.abs(total) ** 2 - (np.abs(X) ** 2).sum(axis=0)) / (C * (C - 1))

    smooth_cross = np.empty_like(cross)
    smooth_auto = np.empty_like(auto)
    acc_c = cross[:, 0]
    acc_a = auto[:, 0]
    smooth_cross[:, 0] = acc_c
    smooth_auto[:, 0] = acc_a
    for t in range(1, cross.shape[1]):
        acc_c = forgetting * acc_c + (1.0 - forgetting) * cross[:, t]
        acc_a = forgetting * acc_a + (1.0 - forgetting) * auto[:, t]
        smooth_cross[:, t] = acc_c
        smooth_auto[:, t] = acc_a

    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(
            smooth_auto > 0.0, np.maximum(smooth_cross, 0.0) / smooth_auto, 0.0
        )
    gain = np.clip(gain, 0.0, 1.0)
    out = gain[None] * X.mean(axis=0, keepdims=True)
    return SpectroTemporalTensor(
        data=out, config=tensor.config, n_samples=tensor.n_samples, padded=tensor.padded
    )
