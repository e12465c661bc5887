"""Recovery quality up to the shift-and-sign ambiguity.

Blind deconvolution can only identify the filter up to a circular shift
and a sign flip (a scale, once norms are fixed), so every metric here
minimizes over that 2n-element orbit.  All shifts are scored at once
through one FFT cross-correlation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circulant import Filter, conv_apply, real_part
from .errors import DimensionError
from .losses import check_unit


@dataclass(frozen=True)
class AlignmentReport:
    """Best shift/sign match of an estimate against a reference.

    distance is min over all (shift, sign) of ||g_ref -+ shifted g_hat||_2;
    best_shift and best_sign satisfy g_hat ~ best_sign * shift(g_ref) at
    that minimum.  peak_ratio is the matched inner product divided by the
    product of norms, so 1 means exact alignment up to scale.
    """

    distance: float
    best_shift: int
    best_sign: int
    peak_ratio: float


def _correlations(g_hat, g_ref):
    """c_j = <g_hat, shift_j(g_ref)> for every j, via one FFT product."""
    ref_hat = np.fft.fft(g_ref)
    est_hat = np.fft.fft(g_hat)
    return real_part(np.fft.ifft(np.conj(ref_hat) * est_hat))


def _vec(g):
    v = g.coeffs if isinstance(g, Filter) else np.asarray(g, dtype=np.float64).ravel()
    return np.asarray(v, dtype=np.float64)


def shift_sign_distance(g_hat, g_ref) -> AlignmentReport:
    """Distance over the shift/sign orbit, plus the aligning (shift, sign).

    Ties over shifts resolve to the smallest shift; a zero correlation
    at the winner reports sign +.
    """
    a = _vec(g_hat)
    b = _vec(g_ref)
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    corr = _correlations(a, b)
    j = int(np.argmax(np.abs(corr)))
    best = corr[j]
    sign = 1 if best >= 0.0 else -1
    sq = a @ a + b @ b - 2.0 * abs(best)
    distance = float(np.sqrt(max(sq, 0.0)))
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    peak = float(abs(best) / denom) if denom > 0.0 else 0.0
    return AlignmentReport(distance=distance, best_shift=j, best_sign=sign, peak_ratio=peak)


def success_indicator(g_inv_hat, g_true):
    """(flag, score) where score = ||v||_inf / ||v||_2 for v = C(g_true) g_inv_hat.

    A perfect equalizer makes v a signed coordinate vector (score 1);
    the run counts as a success when score > 0.99.  A zero v scores 0.
    """
    v = conv_apply(g_true, _vec(g_inv_hat))
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return False, 0.0
    score = float(np.max(np.abs(v)) / norm)
    return bool(score > 0.99), score


def normalized_error(h, R, g_true) -> float:
    """Scale-free distance of the equalized iterate to the nearest +-e_j.

    Computes u = C(g_true) R h, normalizes it, and returns
    min over (j, sign) of ||u -+ e_j||_2, which equals
    sqrt(2 - 2 * ||u||_inf) and lies in [0, sqrt(2)].  R=None means the
    identity.  A zero u returns the worst case sqrt(2).
    """
    hv = check_unit(h.h if hasattr(h, "h") else h)
    vec = R.apply(hv) if R is not None else hv
    u = conv_apply(g_true, vec)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return float(np.sqrt(2.0))
    peak = float(np.max(np.abs(u)) / norm)
    return float(np.sqrt(max(2.0 - 2.0 * peak, 0.0)))
