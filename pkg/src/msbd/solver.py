"""Manifold gradient descent for multichannel sparse blind deconvolution.

Each iteration projects the Euclidean gradient of the (optionally
preconditioned) surrogate loss onto the tangent space of the sphere,
steps against it, and renormalizes.  An Armijo backtracking line search
is on by default; with it the loss never increases along the
trajectory.  Random restarts cover the 2n signed-shift basins: with
ceil(3 * log n) uniform starts, at least one lands in a basin with
probability overwhelming in n, and the run with the lowest final loss
is returned.

The recovered equalizer is g_inv_hat = R h_final: the solve runs in the
preconditioned frame, so the preconditioner is unwound exactly once at
the end.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circulant import Filter, conv_apply_columns
from .errors import DegenerateStep, DimensionError, ParameterError
from .losses import (
    ConvLossCore,
    LOSS_KINDS,
    Preconditioner,
    build_preconditioner,
    default_mu,
    effective_spectra,
)
from .metrics import normalized_error
from .rng import STREAM_INIT, make_rng
from .signals import observations_matrix
from .sphere import SphereVector, as_unit


class DeadlineExceeded(Exception):
    """Internal signal: the per-trial wall-clock budget ran out."""


@dataclass
class SolverConfig:
    """Knobs of the manifold descent.

    mu=None picks the default smoothing min(10 n^-5/4, 0.05) from the
    data; restarts=None picks ceil(3 * log n).  theta feeds the
    preconditioner scale.  eta_rule="theoretical" replaces the fixed
    step with mu*xi0*theta / (n^2 * sqrt(log(n*p))), the conservative
    schedule the convergence analysis assumes (unit constant).
    """

    eta: float = 0.1
    max_iters: int = 200
    mu: Optional[float] = None
    theta: float = 0.3
    restarts: Optional[int] = None
    backtracking: bool = True
    backtrack_shrink: float = 0.5
    armijo_c: float = 1e-4
    tol: float = 1e-8
    loss_kind: str = "logcosh"
    use_preconditioner: bool = True
    seed: int = 0
    eta_rule: str = "fixed"
    xi0: Optional[float] = None
    step_floor: float = 1e-12
    record_tangency: bool = False

    def __post_init__(self):
        if not (self.eta > 0.0):
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.mu is not None and not (self.mu > 0.0):
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if not (0.0 < self.theta < 1.0):
            raise ParameterError(f"theta must lie in (0, 1), got {self.theta}")
        if self.restarts is not None and self.restarts < 1:
            raise ParameterError(f"restarts must be >= 1, got {self.restarts}")
        if not (0.0 < self.backtrack_shrink < 1.0):
            raise ParameterError("backtrack_shrink must lie in (0, 1)")
        if not (0.0 < self.armijo_c < 1.0):
            raise ParameterError("armijo_c must lie in (0, 1)")
        if self.tol < 0.0:
            raise ParameterError(f"tol must be >= 0, got {self.tol}")
        if self.loss_kind not in LOSS_KINDS:
            raise ParameterError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.eta_rule not in ("fixed", "theoretical"):
            raise ParameterError("eta_rule must be 'fixed' or 'theoretical'")

    def resolved_mu(self, n) -> float:
        return self.mu if self.mu is not None else default_mu(n)

    def resolved_restarts(self, n) -> int:
        if self.restarts is not None:
            return self.restarts
        return max(1, math.ceil(3.0 * math.log(n)))

    def resolved_eta(self, n, p) -> float:
        if self.eta_rule == "fixed":
            return self.eta
        xi0 = self.xi0 if self.xi0 is not None else 1.0 / (4.0 * math.log(n))
        return (
            self.resolved_mu(n) * xi0 * self.theta
            / (n**2 * math.sqrt(math.log(n * p)))
        )


@dataclass
class RecoveryResult:
    """Outcome of one solve (or the best restart of many).

    trajectory holds one (loss, error) pair per visited iterate,
    starting at the initial point; error entries are None unless ground
    truth was supplied.  g_inv_hat is the equalizer estimate R h_final.
    """

    g_inv_hat: np.ndarray
    h_final: SphereVector
    trajectory: list
    iterations_used: int
    restart_index: int
    converged: bool
    final_loss: float
    tangency: Optional[list] = field(default=None)


def _unwind(R, h):
    return R.apply(h) if R is not None else np.array(h, copy=True)


def _descend(core, h0, cfg, eta, error_fn=None, deadline=None):
    """Plain or backtracking manifold descent from h0 on a prepared core."""
    h = np.array(h0, dtype=np.float64, copy=True)
    val, z = core.value_state(h)
    egrad = core.grad_from_state(z)
    rgrad = egrad - (h @ egrad) * h
    trajectory = [(val, error_fn(h) if error_fn else None)]
    tangency = [] if cfg.record_tangency else None
    iterations = 0
    converged = False

    for _ in range(cfg.max_iters):
        if deadline is not None and time.monotonic() > deadline:
            raise DeadlineExceeded
        gnorm = float(np.linalg.norm(rgrad))
        if tangency is not None:
            denom = max(float(np.linalg.norm(egrad)), np.finfo(np.float64).tiny)
            tangency.append(abs(float(h @ rgrad)) / denom)
        if gnorm <= cfg.tol:
            converged = True
            break

        if cfg.backtracking:
            # Loss differences below this are round-off; a stalled search
            # there means the point is stationary at machine precision.
            resolution = 8.0 * np.finfo(np.float64).eps * max(1.0, abs(val))
            eta_k = eta
            stalled = False
            while True:
                step = h - eta_k * rgrad
                norm = np.linalg.norm(step)
                if norm <= cfg.step_floor:
                    raise DegenerateStep("retraction collapsed during line search")
                cand = step / norm
                cval, cz = core.value_state(cand)
                target = cfg.armijo_c * eta_k * gnorm * gnorm
                if cval <= val - target:
                    break
                if abs(cval - val) <= resolution and target <= resolution:
                    stalled = True
                    break
                eta_k *= cfg.backtrack_shrink
                if eta_k < cfg.step_floor:
                    raise DegenerateStep(
                        f"line search hit the {cfg.step_floor:g} floor without decrease"
                    )
            if stalled:
                converged = True
                break
        else:
            step = h - eta * rgrad
            norm = np.linalg.norm(step)
            if norm <= cfg.step_floor:
                raise DegenerateStep("retraction collapsed")
            cand = step / norm
            cval, cz = core.value_state(cand)

        h, val = cand, cval
        egrad = core.grad_from_state(cz)
        rgrad = egrad - (h @ egrad) * h
        trajectory.append((val, error_fn(h) if error_fn else None))
        iterations += 1
    else:
        # Loop exhausted max_iters; the gradient may still be large.
        converged = float(np.linalg.norm(rgrad)) <= cfg.tol

    return h, val, trajectory, iterations, converged, tangency


def _prepare(Y, cfg, R):
    mat = observations_matrix(Y)
    n, p = mat.shape
    if cfg.use_preconditioner and R is None:
        R = build_preconditioner(mat, cfg.theta)
    if not cfg.use_preconditioner:
        R = None
    core = ConvLossCore(effective_spectra(mat, R), cfg.resolved_mu(n), cfg.loss_kind)
    return mat, n, p, R, core


def _error_fn(R, g_true):
    if g_true is None:
        return None
    return lambda h: normalized_error(h, R, g_true)


def run_mgd(Y, h0, cfg, R=None, g_true=None, deadline=None) -> RecoveryResult:
    """One manifold descent from h0; see SolverConfig for the knobs.

    When g_true is given, each trajectory entry carries the normalized
    error of the equalized iterate alongside the loss.
    """
    mat, n, p, R, core = _prepare(Y, cfg, R)
    h0 = as_unit(h0)
    if h0.size != n:
        raise DimensionError(f"h0 has length {h0.size}, observations have n={n}")
    eta = cfg.resolved_eta(n, p)
    h, val, trajectory, iterations, converged, tangency = _descend(
        core, h0, cfg, eta, error_fn=_error_fn(R, g_true), deadline=deadline
    )
    return RecoveryResult(
        g_inv_hat=_unwind(R, h),
        h_final=SphereVector(h),
        trajectory=trajectory,
        iterations_used=iterations,
        restart_index=0,
        converged=converged,
        final_loss=val,
        tangency=tangency,
    )


def _restart_stream(index) -> int:
    """Stream tag for restart index; distinct tags give independent draws."""
    return STREAM_INIT + 1 + int(index)


def restarts_on_core(core, cfg, error_fn=None, inits=None, deadline=None):
    """Best-of-restarts descent on a prepared loss core.

    Returns the winning (h, final_loss, trajectory, iterations,
    restart_index, converged, tangency) tuple; the lowest final loss
    wins, first restart on exact ties.  Shared by the 1D solver entry
    point and the 2D imaging pipeline.
    """
    n = core.n
    n_restarts = len(inits) if inits is not None else cfg.resolved_restarts(n)
    eta = cfg.resolved_eta(n, core.p)
    best = None
    for r in range(n_restarts):
        if inits is not None:
            h0 = as_unit(inits[r])
        else:
            rng = make_rng(cfg.seed, _restart_stream(r))
            v = rng.standard_normal(n)
            h0 = v / np.linalg.norm(v)
        if h0.size != n:
            raise DimensionError(f"init {r} has length {h0.size}, expected {n}")
        outcome = _descend(core, h0, cfg, eta, error_fn=error_fn, deadline=deadline)
        if best is None or outcome[1] < best[1]:
            best = (*outcome[:4], r, *outcome[4:])
    return best


def run_with_restarts(Y, cfg, R=None, g_true=None, inits=None, deadline=None) -> RecoveryResult:
    """Best-of-restarts solve; the lowest final loss wins, first on ties.

    Initial points default to independent uniform draws seeded from
    cfg.seed; pass inits (a list of unit vectors) to pin them.
    """
    mat, n, p, R, core = _prepare(Y, cfg, R)
    h, val, trajectory, iterations, r, converged, tangency = restarts_on_core(
        core, cfg, error_fn=_error_fn(R, g_true), inits=inits, deadline=deadline
    )
    return RecoveryResult(
        g_inv_hat=_unwind(R, h),
        h_final=SphereVector(h),
        trajectory=trajectory,
        iterations_used=iterations,
        restart_index=r,
        converged=converged,
        final_loss=val,
        tangency=tangency,
    )


def recover_inputs(g_inv_hat, Y) -> np.ndarray:
    """Equalize all observations: column i is C(g_inv_hat) y_i."""
    mat = observations_matrix(Y)
    vec = g_inv_hat.coeffs if isinstance(g_inv_hat, Filter) else np.asarray(g_inv_hat)
    if vec.size != mat.shape[0]:
        raise DimensionError(f"equalizer length {vec.size} vs observations n={mat.shape[0]}")
    return conv_apply_columns(vec, mat)
