"""Empirical checks of the benign optimization landscape.

Inside a basin the sphere is charted by the open unit ball through
h(w) = (w, sqrt(1 - ||w||^2)), and the chain rule gives the chart
gradient grad_phi(w) = J grad_h f(h(w)) with J = [I, -w/h_n], plus the
chart Hessian

    hess_phi(w) = J H J^T - (g_n / h_n) * (I + w w^T / h_n^2),

where H = (1/p) sum_i M_i^T diag(psi''(M_i h)) M_i is the Euclidean
Hessian of the loss through the per-observation circulant operators
M_i and g_n is the last component of the Euclidean gradient.  The
second term is the curvature of the chart itself.

Two regions of the basin around the north pole are probed: an outer
annulus where the radial slope w . grad_phi / ||w|| should be strictly
positive (no flat spots, no spurious stationary points), and an inner
core where the Hessian should be positive definite (a unique, sharp
minimizer).  For a general filter the checks run in the ground-truth
equalized frame, which the verification harness can build because it
synthesized the filter; the solver itself never needs that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericalError, ParameterError
from .losses import ConvLossCore, build_preconditioner, effective_spectra
from .rng import STREAM_SAMPLER, make_rng
from .signals import observations_matrix, sample_bernoulli_gaussian, synthesize_filter, generate_observations
from .solver import SolverConfig, _descend
from .sphere import region_membership, reparam

REGION_ANNULUS = "Q1"
REGION_CORE = "Q2"


@dataclass(frozen=True)
class GeometryReport:
    """Sampled evidence for one region's landscape claim.

    min_directional_gradient applies to the annulus (nan for the core);
    min_hessian_eig applies to the core (nan for the annulus).
    violations counts samples breaking the claimed sign.
    """

    region: str
    samples: int
    min_directional_gradient: float
    min_hessian_eig: float
    violations: int
    xi0: float
    mu: float
    theta: float
    n: int
    p: int


def annulus_radii(n, xi0, mu):
    """Radial interval of the outer region: [mu/(4*sqrt(2)), sqrt((n-1)/(n+xi0))]."""
    lo = mu / (4.0 * math.sqrt(2.0))
    hi = math.sqrt((n - 1.0) / (n + xi0))
    if lo >= hi:
        raise ParameterError(f"empty annulus: mu/(4 sqrt 2) = {lo:.3g} >= {hi:.3g}")
    return lo, hi


def core_radius(mu) -> float:
    """Radius of the strongly convex core region around w = 0."""
    return mu / (4.0 * math.sqrt(2.0))


def _chart_gradient(core, w):
    h, J = reparam(w)
    egrad = core.euclid_grad(h.h)
    return J @ egrad, egrad, h


def directional_gradient_w(w, Y, R, cfg) -> float:
    """Radial slope w . grad_phi(w) / ||w|| of the chart loss at w != 0."""
    w = np.asarray(w, dtype=np.float64).ravel()
    norm = np.linalg.norm(w)
    if norm == 0.0 or norm >= 1.0:
        raise DomainError(f"need 0 < ||w|| < 1, got {norm}")
    core = ConvLossCore(effective_spectra(Y, R), cfg.mu)
    if core.n != w.size + 1:
        raise DimensionError(f"w has length {w.size}, observations have n={core.n}")
    grad, _, _ = _chart_gradient(core, w)
    return float(w @ grad / norm)


def _shift_index_table(n):
    k = np.arange(n)
    return (k[:, None] - k[None, :]) % n


def _dense_operators(core):
    """Materialize every per-observation circulant as a (p, n, n) stack."""
    signals = np.fft.ifftn(core.spectra, axes=core._axes)
    signals = np.ascontiguousarray(signals.real.reshape(core.p, core.n))
    return signals[:, _shift_index_table(core.n)]


def _chart_hessian(core, w, operators=None):
    h, J = reparam(w)
    if operators is None:
        operators = _dense_operators(core)
    z = operators @ h.h
    sech_sq = 1.0 - np.tanh(z / core.mu) ** 2
    H = np.einsum("pkm,pk,pkl->ml", operators, sech_sq, operators) / (core.mu * core.p)
    egrad = core.euclid_grad(h.h)
    hn = h.h[-1]
    JJt = np.eye(w.size) + np.outer(w, w) / hn**2
    raw = J @ H @ J.T - (egrad[-1] / hn) * JJt
    asym = float(np.max(np.abs(raw - raw.T)))
    if asym > 1e-9 * max(1.0, float(np.max(np.abs(raw)))):
        raise NumericalError(f"chart Hessian asymmetry {asym:.3e} beyond round-off")
    return 0.5 * (raw + raw.T)


def hessian_w(w, Y, R, cfg) -> np.ndarray:
    """Dense chart Hessian at w (symmetrized; asymmetry beyond 1e-9 trips a guard)."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if np.linalg.norm(w) >= 1.0:
        raise DomainError("w must lie strictly inside the unit ball")
    core = ConvLossCore(effective_spectra(Y, R), cfg.mu)
    if core.n != w.size + 1:
        raise DimensionError(f"w has length {w.size}, observations have n={core.n}")
    return _chart_hessian(core, w)


def ground_truth_core(n, p, theta, kappa, mu, seed):
    """Loss core in the frame where the planted solution is a coordinate axis.

    kappa = 1 builds the orthogonal case: identity filter, Y = X, no
    preconditioning.  kappa > 1 synthesizes a filter, preconditions the
    observations, and rotates by the filter's phase so the equalized
    frame is axis-aligned; this requires knowing the true filter and is
    meant for verification harnesses only.
    """
    if kappa < 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    X = sample_bernoulli_gaussian(n, p, theta, seed)
    if kappa == 1.0:
        spectra = np.fft.fft(X.X.T.copy(), axis=-1)
        return ConvLossCore(spectra, mu)
    g = synthesize_filter(n, kappa, seed)
    Y = generate_observations(g, X)
    R = build_preconditioner(Y, theta)
    ghat = np.fft.fft(g.coeffs)
    phase = ghat / np.abs(ghat)
    spectra = np.fft.fft(Y.Y.T.copy(), axis=-1) * R.fourier_eigs * np.conj(phase)
    return ConvLossCore(spectra, mu)


def _sample_region(rng, n, xi0, radii):
    """Uniform direction, uniform radius in the interval, inside the basin."""
    lo, hi = radii
    for _ in range(100000):
        u = rng.standard_normal(n - 1)
        u /= np.linalg.norm(u)
        w = (lo + (hi - lo) * rng.random()) * u
        h, _ = reparam(w)
        label = region_membership(h, xi0)
        if label is not None and label.index == n - 1 and label.sign == 1:
            return w
    raise ParameterError("region sampling failed; check xi0 against the radii")


def verify_geometry(n, p, theta, kappa, xi0, mu, samples, seed):
    """Sample both regions and report the observed landscape margins.

    Returns (annulus_report, core_report).  The annulus report carries
    the minimum radial slope over `samples` draws; the core report the
    minimum Hessian eigenvalue.  Violations are draws with the wrong
    sign.
    """
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    if xi0 < 0.0:
        raise ParameterError(f"xi0 must be >= 0, got {xi0}")
    core = ground_truth_core(n, p, theta, kappa, mu, seed)
    rng = make_rng(seed, STREAM_SAMPLER)
    operators = _dense_operators(core)

    lo_hi = annulus_radii(n, xi0, mu)
    slopes = np.empty(samples)
    for s in range(samples):
        w = _sample_region(rng, n, xi0, lo_hi)
        grad, _, _ = _chart_gradient(core, w)
        slopes[s] = float(w @ grad) / float(np.linalg.norm(w))
    annulus = GeometryReport(
        region=REGION_ANNULUS,
        samples=samples,
        min_directional_gradient=float(np.min(slopes)),
        min_hessian_eig=float("nan"),
        violations=int(np.sum(slopes <= 0.0)),
        xi0=float(xi0),
        mu=float(mu),
        theta=float(theta),
        n=int(n),
        p=int(p),
    )

    eigs = np.empty(samples)
    for s in range(samples):
        w = _sample_region(rng, n, xi0, (0.0, core_radius(mu)))
        H = _chart_hessian(core, w, operators=operators)
        eigs[s] = float(np.linalg.eigvalsh(H)[0])
    core_report = GeometryReport(
        region=REGION_CORE,
        samples=samples,
        min_directional_gradient=float("nan"),
        min_hessian_eig=float(np.min(eigs)),
        violations=int(np.sum(eigs <= 0.0)),
        xi0=float(xi0),
        mu=float(mu),
        theta=float(theta),
        n=int(n),
        p=int(p),
    )
    return annulus, core_report


def local_minimizer_w(Y, R, cfg, eta=0.1, max_iters=5000, tol=1e-9) -> np.ndarray:
    """Chart coordinates of the basin minimizer reached from the north pole.

    Descends on the sphere starting at e_n with a tight tolerance and
    returns w* = first n-1 coordinates of the final iterate.  Useful
    for tracking how the minimizer approaches the planted solution as
    p grows.
    """
    core = ConvLossCore(effective_spectra(Y, R), cfg.mu)
    return minimizer_from_core(core, eta=eta, max_iters=max_iters, tol=tol)


def minimizer_from_core(core, eta=0.1, max_iters=5000, tol=1e-9) -> np.ndarray:
    h0 = np.zeros(core.n)
    h0[-1] = 1.0
    cfg = SolverConfig(eta=eta, max_iters=max_iters, tol=tol, theta=0.3)
    h, _, _, _, _, _ = _descend(core, h0, cfg, eta)
    if h[-1] < 0.0:
        h = -h
    return h[:-1].copy()


def export_sphere_surface(Y, R, cfg, grid) -> np.ndarray:
    """Tabulate the loss over the 2-sphere for n = 3 instances.

    Rows are (azimuth, elevation, loss) in radians at cell-centered
    lattice points, azimuth-major: azimuth 2*pi*(i+0.5)/grid for
    i = 0..grid-1, elevation -pi/2 + pi*(j+0.5)/grid.  Intended for
    external surface plots of the landscape.
    """
    if grid < 2:
        raise ParameterError(f"grid must be >= 2, got {grid}")
    core = ConvLossCore(effective_spectra(Y, R), cfg.mu)
    if core.n != 3:
        raise ParameterError(f"surface export needs n = 3, got n = {core.n}")
    azimuths = 2.0 * np.pi * (np.arange(grid) + 0.5) / grid
    elevations = -0.5 * np.pi + np.pi * (np.arange(grid) + 0.5) / grid
    rows = np.empty((grid * grid, 3))
    r = 0
    for az in azimuths:
        for el in elevations:
            h = np.array(
                [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            )
            rows[r] = (az, el, core.value(h))
            r += 1
    return rows


def write_surface_csv(rows, path):
    """CSV with header azimuth,elevation,loss at full float precision."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise DimensionError(f"expected (m, 3) rows, got shape {rows.shape}")
    with open(path, "w", newline="\n") as fh:
        fh.write("azimuth,elevation,loss\n")
        for az, el, val in rows:
            fh.write(f"{az:.17g},{el:.17g},{val:.17g}\n")
