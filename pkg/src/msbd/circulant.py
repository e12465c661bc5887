"""Circulant linear algebra backed by length-n FFTs.

A real filter g of length n acts on signals through the circulant
matrix C(g) whose j-th column is g circularly shifted down by j, so
C(g) x is the circular convolution g (*) x.  All operations here work
in the Fourier domain: applying C(g) multiplies spectra pointwise, the
adjoint conjugates the spectrum, and the inverse reciprocates it.  The
transform length is always exactly n (no padding), so arbitrary n >= 2
is supported.

Inverse FFTs of conjugate-symmetric products are real up to round-off;
the imaginary residue is checked against a relative tolerance before
being discarded, and a violation raises NumericalError rather than
silently corrupting downstream results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    NonInvertibleFilter,
    NumericalError,
    ParameterError,
)

# Imaginary residue above this fraction of the result norm means the
# operands were not really real / conjugate-symmetric.
IMAG_RESIDUE_TOL = 1e-9

# Relative floor on spectral magnitudes below which inversion refuses.
EPS_INV = 1e-10


def real_part(z):
    """Discard the imaginary residue of an inverse FFT, checking it is round-off."""
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.asarray(z, dtype=np.float64)
    scale = np.linalg.norm(z)
    residue = np.linalg.norm(z.imag)
    if residue > IMAG_RESIDUE_TOL * max(scale, np.finfo(np.float64).tiny):
        raise NumericalError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL:g} of result norm {scale:.3e}"
        )
    return np.ascontiguousarray(z.real)


def _as_vector(x, n=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1D signal, got shape {x.shape}")
    if n is not None and x.size != n:
        raise DimensionError(f"length mismatch: filter has n={n}, signal has {x.size}")
    return x


@dataclass(frozen=True)
class Filter:
    """Real length-n filter acting by circular convolution."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.ndim != 1 or coeffs.size < 2:
            raise ParameterError("a filter needs a 1D coefficient vector with n >= 2")
        if not np.all(np.isfinite(coeffs)):
            raise ParameterError("filter coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class Spectrum:
    """DFT coefficients of a real filter (conjugate-symmetric by construction)."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size


def _coeffs(g):
    return g.coeffs if isinstance(g, Filter) else _as_vector(g)


def spectrum(g) -> Spectrum:
    """DFT of the filter, length exactly n."""
    return Spectrum(np.fft.fft(_coeffs(g)))


def circular_shift(x, j):
    """Shift down by j: output[k] = x[(k - j) mod n]."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1D signal, got shape {x.shape}")
    return np.roll(x, int(j))


def conv_apply(g, x):
    """Circular convolution C(g) x via pointwise spectral product."""
    gc = _coeffs(g)
    x = _as_vector(x, gc.size)
    return real_part(np.fft.ifft(np.fft.fft(gc) * np.fft.fft(x)))


def conv_apply_adjoint(g, x):
    """Correlation C(g)^T x; the adjoint conjugates the spectrum."""
    gc = _coeffs(g)
    x = _as_vector(x, gc.size)
    return real_part(np.fft.ifft(np.conj(np.fft.fft(gc)) * np.fft.fft(x)))


def conv_apply_columns(g, X):
    """C(g) applied to every column of an (n, p) matrix in one FFT batch."""
    gc = _coeffs(g)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != gc.size:
        raise DimensionError(f"expected shape ({gc.size}, p), got {X.shape}")
    ghat = np.fft.fft(gc)
    return real_part(np.fft.ifft(ghat[:, None] * np.fft.fft(X, axis=0), axis=0))


def inverse_filter(g, eps_inv=EPS_INV) -> Filter:
    """Filter whose spectrum is the reciprocal, so C(g_inv) C(g) = I.

    The inverse exists only when every DFT coefficient is nonzero; bins
    smaller than eps_inv relative to the largest magnitude raise
    NonInvertibleFilter.  The result is returned unnormalized; callers
    wanting the unit-norm representative can use unit_norm().
    """
    gc = _coeffs(g)
    ghat = np.fft.fft(gc)
    mags = np.abs(ghat)
    if np.min(mags) <= eps_inv * np.max(mags):
        raise NonInvertibleFilter(
            f"smallest spectral magnitude {np.min(mags):.3e} is below "
            f"{eps_inv:g} of the largest {np.max(mags):.3e}"
        )
    return Filter(real_part(np.fft.ifft(1.0 / ghat)))


def condition_number(g, eps_inv=EPS_INV) -> float:
    """Ratio of extreme spectral magnitudes, max|g_hat| / min|g_hat|."""
    gc = _coeffs(g)
    mags = np.abs(np.fft.fft(gc))
    if np.min(mags) <= eps_inv * np.max(mags):
        raise NonInvertibleFilter("filter spectrum has a (near-)zero bin")
    return float(np.max(mags) / np.min(mags))


def unit_norm(g) -> Filter:
    """The unit-l2 representative of the filter's scale orbit."""
    gc = _coeffs(g)
    norm = np.linalg.norm(gc)
    if norm == 0.0:
        raise ParameterError("cannot normalize the zero filter")
    return Filter(gc / norm)


def dense_circulant(g) -> np.ndarray:
    """Materialize C(g) column by column from circular shifts (test oracle)."""
    gc = _coeffs(g)
    return np.column_stack([circular_shift(gc, j) for j in range(gc.size)])
