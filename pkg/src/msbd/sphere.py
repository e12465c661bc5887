"""Unit-sphere geometry: tangent projection, retraction, basins, charts.

Optimization runs on the unit sphere in R^n.  The Riemannian gradient
is the tangent projection of the Euclidean one, and a step retracts by
renormalizing.  Basins of the 2n signed-shift solutions are indexed by
the dominant coordinate: h belongs to the (i, +-) basin at margin xi
when h_i has the matching sign and h_i^2 >= (1 + xi) * max_{j != i} h_j^2.

Near the north pole the sphere is charted by the open unit ball via
h(w) = (w, sqrt(1 - ||w||^2)); the chart's Jacobian [I, -w/h_n] pushes
sphere gradients into ball coordinates, where the landscape analysis
lives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStep, DomainError, ParameterError
from .rng import STREAM_INIT, STREAM_SAMPLER, make_rng

UNIT_NORM_TOL = 1e-9
STEP_FLOOR = 1e-12


@dataclass(frozen=True)
class SphereVector:
    """Unit-norm point on the sphere in R^n."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64).ravel()
        if h.size < 2:
            raise ParameterError("sphere points need n >= 2")
        norm = np.linalg.norm(h)
        if not np.isfinite(norm) or abs(norm - 1.0) > UNIT_NORM_TOL:
            raise DomainError(f"not a unit vector: ||h|| = {norm!r}")
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class RegionLabel:
    """Which signed-shift basin a point occupies, at margin xi."""

    index: int
    sign: int
    xi: float


def as_unit(h) -> np.ndarray:
    """Flat ndarray view of a SphereVector or unit array (checked)."""
    vec = h.h if isinstance(h, SphereVector) else np.asarray(h, dtype=np.float64).ravel()
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DomainError(f"not a unit vector: ||h|| = {norm!r}")
    return vec


def riemannian_gradient(h, euclid_grad) -> np.ndarray:
    """Project a Euclidean gradient onto the tangent space at h."""
    hv = as_unit(h)
    g = np.asarray(euclid_grad, dtype=np.float64).ravel()
    if g.size != hv.size:
        raise DomainError(f"gradient length {g.size} vs point length {hv.size}")
    return g - (hv @ g) * hv


def retract_step(h, tangent, eta) -> SphereVector:
    """Move along -tangent and renormalize back onto the sphere."""
    if not (eta > 0.0):
        raise ParameterError(f"step size must be positive, got {eta}")
    hv = as_unit(h)
    step = hv - eta * np.asarray(tangent, dtype=np.float64).ravel()
    norm = np.linalg.norm(step)
    if norm <= STEP_FLOOR:
        raise DegenerateStep(f"retraction collapsed: ||h - eta*d|| = {norm!r}")
    return SphereVector(step / norm)


def random_sphere_point(n, seed) -> SphereVector:
    """Uniform point on the sphere (normalized Gaussian draw)."""
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    rng = make_rng(seed, STREAM_INIT)
    while True:
        v = rng.standard_normal(n)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return SphereVector(v / norm)


def region_membership(h, xi):
    """RegionLabel of the signed-shift basin containing h, or None.

    Membership needs a strictly dominant coordinate: h_i != 0 with
    h_i^2 >= (1 + xi) * (largest other squared coordinate).  A zero
    runner-up makes the ratio +inf, so +-e_i always belongs.  For
    xi = 0 an exact tie qualifies and the lowest index wins; for
    xi > 0 a tie fails the strict margin and no label is returned.
    """
    if xi < 0.0:
        raise ParameterError(f"xi must be >= 0, got {xi}")
    hv = as_unit(h)
    mags = np.abs(hv)
    i = int(np.argmax(mags))
    lead = mags[i]
    if lead == 0.0:
        return None
    rest = np.delete(mags, i)
    tail = float(np.max(rest)) if rest.size else 0.0
    if tail == 0.0:
        ratio = np.inf
    else:
        ratio = (lead / tail) ** 2
    if ratio < 1.0 + xi:
        return None
    sign = 1 if hv[i] > 0.0 else -1
    return RegionLabel(index=i, sign=sign, xi=float(xi))


def random_basin_point(n, xi, seed):
    """Rejection-sample a uniform sphere point that lies in some basin.

    Returns (SphereVector, RegionLabel).  About half of all uniform
    draws land in a basin at the standard margin, so this terminates
    quickly; a generous cap guards against pathological parameters.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    rng = make_rng(seed, STREAM_SAMPLER)
    for _ in range(100000):
        v = rng.standard_normal(n)
        norm = np.linalg.norm(v)
        if norm <= 1e-12:
            continue
        point = SphereVector(v / norm)
        label = region_membership(point, xi)
        if label is not None:
            return point, label
    raise ParameterError(f"could not hit a basin at xi={xi} after 100000 draws")


def reparam(w):
    """Chart the upper hemisphere: w in the open unit ball -> (h(w), J).

    h(w) = (w, sqrt(1 - ||w||^2)) and J = [I, -w/h_n] is the (n-1) x n
    Jacobian that maps Euclidean h-gradients to w-gradients.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size < 1:
        raise ParameterError("w must have length >= 1")
    sq = float(w @ w)
    if sq >= 1.0:
        raise DomainError(f"w must lie strictly inside the unit ball, ||w||^2 = {sq}")
    hn = np.sqrt(1.0 - sq)
    h = SphereVector(np.concatenate([w, [hn]]))
    J = np.concatenate([np.eye(w.size), (-w / hn)[:, None]], axis=1)
    return h, J


def w_of_h(h) -> np.ndarray:
    """Invert the chart; the last coordinate must be strictly positive."""
    hv = as_unit(h)
    if hv[-1] <= 0.0:
        raise DomainError(f"chart needs h_n > 0, got {hv[-1]!r}")
    return hv[:-1].copy()
