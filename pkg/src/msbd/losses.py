"""Smoothed sparsity surrogate, preconditioner, and loss/gradient kernels.

The recovery objective averages a smooth l1 surrogate over all entries
of the equalized observations:

    f(h) = (1/p) sum_i sum_k psi_mu([C(y_i) R h]_k),
    psi_mu(z) = mu * log cosh(z / mu),

with R either the identity or the inverse square root of the empirical
observation covariance.  R is circulant, and circulants commute, so
C(y_i) R = C(R y_i): folding R into the observations once turns every
loss or gradient evaluation into one forward and one adjoint FFT batch.
ConvLossCore below exploits that, and works unchanged on 2D lattices
(H x W images flattened to n = H*W) because only the FFT axes change.

A quartic baseline objective, -(1/4p) sum_i ||C(y_i) R h||_4^4, is
provided under the same interface for comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circulant import real_part
from .errors import (
    DimensionError,
    DomainError,
    NonInvertiblePreconditioner,
    ParameterError,
)
from .signals import observations_matrix

UNIT_NORM_TOL = 1e-9
LOSS_KINDS = ("logcosh", "l4")


def default_mu(n) -> float:
    """Smoothing width used throughout: min(10 * n^(-5/4), 0.05)."""
    return float(min(10.0 * float(n) ** -1.25, 0.05))


@dataclass(frozen=True)
class LossConfig:
    """Parameters of the surrogate loss.

    mu is the smoothing width (must be positive); theta is the assumed
    activation probability, needed only to scale the preconditioner.
    """

    mu: float
    theta: float = 0.3

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if not (0.0 < self.theta < 1.0):
            raise ParameterError(f"theta must lie in (0, 1), got {self.theta}")


def surrogate_eval(z, mu):
    """Value, first and second derivative of psi_mu at z (elementwise).

    psi_mu(z) = mu * log cosh(z/mu), psi' = tanh(z/mu), and
    psi'' = (1 - tanh^2(z/mu)) / mu.  The value uses the overflow-free
    form |t| + log1p(exp(-2|t|)) - log 2 with t = z/mu, so huge |z|
    saturates to |z| - mu*log 2 instead of overflowing.
    """
    if not (mu > 0.0):
        raise ParameterError(f"mu must be positive, got {mu}")
    t = np.asarray(z, dtype=np.float64) / mu
    at = np.abs(t)
    value = mu * (at + np.log1p(np.exp(-2.0 * at)) - np.log(2.0))
    first = np.tanh(t)
    second = (1.0 - first * first) / mu
    return value, first, second


@dataclass(frozen=True)
class Preconditioner:
    """Symmetric positive circulant operator stored by its Fourier eigenvalues.

    fourier_eigs holds one real positive eigenvalue per frequency bin and
    keeps the lattice shape: (n,) for signals, (H, W) for images.
    """

    fourier_eigs: np.ndarray

    def __post_init__(self):
        eigs = np.asarray(self.fourier_eigs, dtype=np.float64)
        if eigs.size < 2 or not np.all(np.isfinite(eigs)) or np.any(eigs <= 0.0):
            raise ParameterError("fourier_eigs must be finite and positive")
        object.__setattr__(self, "fourier_eigs", eigs)

    @property
    def n(self) -> int:
        return self.fourier_eigs.size

    @property
    def lattice(self):
        return self.fourier_eigs.shape

    @classmethod
    def identity(cls, n) -> "Preconditioner":
        return cls(np.ones(int(n)))

    def apply(self, v):
        """Apply to a flat vector or lattice-shaped array; shape is preserved."""
        v = np.asarray(v, dtype=np.float64)
        flat = v.ndim == 1
        if flat and v.size != self.n:
            raise DimensionError(f"operand length {v.size} vs lattice {self.lattice}")
        lat = v.reshape(self.lattice) if flat else v
        if lat.shape != self.lattice:
            raise DimensionError(f"operand shape {v.shape} vs lattice {self.lattice}")
        axes = tuple(range(lat.ndim))
        out = real_part(np.fft.ifftn(self.fourier_eigs * np.fft.fftn(lat, axes=axes), axes=axes))
        return out.ravel() if flat else out


def _precondition_eigs(spectra_sq_mean, theta, n, eps_inv):
    """Eigenvalues lambda^(-1/2) of R from mean squared observation spectra."""
    lam = spectra_sq_mean / (theta * n)
    lo, hi = float(np.min(lam)), float(np.max(lam))
    if lo <= eps_inv * hi:
        raise NonInvertiblePreconditioner(
            f"empirical covariance has a near-null frequency bin ({lo:.3e} vs {hi:.3e})"
        )
    return 1.0 / np.sqrt(lam)


def build_preconditioner(Y, theta, eps_inv=1e-10) -> Preconditioner:
    """Inverse square root of the scaled empirical covariance of Y.

    The covariance (1/(theta*n*p)) * sum_i C(y_i)^T C(y_i) is circulant
    with Fourier eigenvalues (1/(theta*n*p)) * sum_i |yhat_i[k]|^2, so R
    is diagonalized by the DFT and stored via its eigenvalues.
    """
    if not (0.0 < theta < 1.0):
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")
    mat = observations_matrix(Y)
    n = mat.shape[0]
    mean_sq = np.mean(np.abs(np.fft.fft(mat, axis=0)) ** 2, axis=1)
    return Preconditioner(_precondition_eigs(mean_sq, theta, n, eps_inv))


def effective_spectra(Y, R=None) -> np.ndarray:
    """Spectra of R y_i for all i, stacked as a (p, n) complex array.

    Since C(y_i) R = C(R y_i), these spectra fully describe the
    preconditioned forward operators.
    """
    mat = observations_matrix(Y)
    spectra = np.fft.fft(mat.T.copy(), axis=-1)
    if R is not None:
        if R.lattice != (mat.shape[0],):
            raise DimensionError(f"preconditioner lattice {R.lattice} vs n={mat.shape[0]}")
        spectra = spectra * R.fourier_eigs
    return spectra


class ConvLossCore:
    """Loss/gradient evaluations over a fixed stack of circulant operators.

    spectra has shape (p, *lattice): the DFT of each effective
    observation.  h is always the flat length-n vector; it is reshaped
    to the lattice for the transforms.  kind selects the objective:
    "logcosh" for the smooth sparsity surrogate, "l4" for the negated
    quartic baseline.
    """

    def __init__(self, spectra, mu, kind="logcosh"):
        spectra = np.asarray(spectra, dtype=np.complex128)
        if spectra.ndim < 2:
            raise DimensionError("spectra must have shape (p, *lattice)")
        if kind not in LOSS_KINDS:
            raise ParameterError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")
        if not (mu > 0.0):
            raise ParameterError(f"mu must be positive, got {mu}")
        self.spectra = spectra
        self.lattice = spectra.shape[1:]
        self.p = spectra.shape[0]
        self.n = int(np.prod(self.lattice))
        self.mu = float(mu)
        self.kind = kind
        self._axes = tuple(range(1, spectra.ndim))

    def equalize(self, h):
        """All equalized observations C(R y_i) h, shape (p, *lattice)."""
        hhat = np.fft.fftn(np.reshape(h, self.lattice))
        return real_part(np.fft.ifftn(self.spectra * hhat, axes=self._axes))

    def _adjoint_mean(self, t):
        """(1/p) sum_i C(R y_i)^T t_i as a flat length-n vector."""
        that = np.fft.fftn(t, axes=self._axes)
        acc = np.mean(np.conj(self.spectra) * that, axis=0)
        return real_part(np.fft.ifftn(acc)).ravel()

    def _value_of(self, z):
        if self.kind == "logcosh":
            t = np.abs(z) / self.mu
            return float(
                self.mu * np.sum(t + np.log1p(np.exp(-2.0 * t)) - np.log(2.0)) / self.p
            )
        return float(-0.25 * np.sum(z**4) / self.p)

    def value(self, h) -> float:
        return self._value_of(self.equalize(h))

    def value_state(self, h):
        """(value, equalized stack); the stack feeds grad_from_state."""
        z = self.equalize(h)
        return self._value_of(z), z

    def grad_from_state(self, z):
        if self.kind == "logcosh":
            return self._adjoint_mean(np.tanh(z / self.mu))
        return self._adjoint_mean(-(z**3))

    def euclid_grad(self, h):
        return self.grad_from_state(self.equalize(h))

    def value_and_grad(self, h):
        val, z = self.value_state(h)
        return val, self.grad_from_state(z)


def check_unit(h):
    """Coerce to a flat unit vector; DomainError if the norm is off by > 1e-9."""
    if hasattr(h, "h"):
        h = h.h
    h = np.asarray(h, dtype=np.float64).ravel()
    norm = np.linalg.norm(h)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DomainError(f"h must be unit norm, got ||h|| = {norm!r}")
    return h


def _core_1d(Y, R, cfg, kind="logcosh"):
    return ConvLossCore(effective_spectra(Y, R), cfg.mu, kind)


def loss_value(h, Y, R, cfg) -> float:
    """Surrogate loss at unit h for observations Y and preconditioner R (or None)."""
    h = check_unit(h)
    core = _core_1d(Y, R, cfg)
    if core.n != h.size:
        raise DimensionError(f"h has length {h.size}, observations have n={core.n}")
    return core.value(h)


def euclidean_gradient(h, Y, R, cfg) -> np.ndarray:
    """Unconstrained gradient (1/p) sum_i R C(y_i)^T tanh(C(y_i) R h / mu)."""
    h = check_unit(h)
    core = _core_1d(Y, R, cfg)
    if core.n != h.size:
        raise DimensionError(f"h has length {h.size}, observations have n={core.n}")
    return core.euclid_grad(h)


def l4_loss_gradient(h, Y, R, cfg):
    """Value and gradient of the negated quartic comparison objective."""
    h = check_unit(h)
    core = _core_1d(Y, R, cfg, kind="l4")
    if core.n != h.size:
        raise DimensionError(f"h has length {h.size}, observations have n={core.n}")
    return core.value_and_grad(h)
