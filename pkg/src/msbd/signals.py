"""Synthetic data for the observation model y_i = g (*) x_i.

Sparse inputs follow the Bernoulli-Gaussian distribution: each entry is
nonzero with probability theta and then standard normal.  Filters are
synthesized directly in the Fourier domain with a prescribed spectral
condition number, which keeps every generated instance invertible by
construction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circulant import Filter, conv_apply_columns, real_part
from .errors import DimensionError, IoError, ParameterError
from .rng import STREAM_FILTER, STREAM_INPUTS, STREAM_NOISE, make_rng

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class SparseInputs:
    """Bernoulli-Gaussian input matrix, one signal per column."""

    X: np.ndarray
    theta: float
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Provenance:
    """How an ObservationSet was generated, kept for ground-truth metrics."""

    filter: Filter
    inputs: SparseInputs
    noise_sigma: float


@dataclass(frozen=True)
class ObservationSet:
    """Stack of p observed signals, one per column of Y."""

    Y: np.ndarray
    provenance: Optional[Provenance] = None

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[1]


def sample_bernoulli_gaussian(n, p, theta, seed) -> SparseInputs:
    """Draw an (n, p) matrix with i.i.d. Bernoulli(theta) x N(0, 1) entries.

    Entries are exactly zero where the Bernoulli mask is off.  The draw
    order (mask first, then Gaussians) is fixed so a seed pins the data.
    theta = 1 is the dense limit: every entry is Gaussian.
    """
    if not (0.0 < theta <= 1.0):
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    if n < 1 or p < 1:
        raise ParameterError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = make_rng(seed, STREAM_INPUTS)
    mask = rng.random((n, p)) < theta
    gauss = rng.standard_normal((n, p))
    X = np.where(mask, gauss, 0.0)
    return SparseInputs(X=X, theta=float(theta), seed=int(seed))


def synthesize_filter(n, kappa, seed) -> Filter:
    """Random real filter whose spectral condition number is at most kappa.

    The DFT is assembled bin by bin (0-based): bin k pairs with bin
    (n - k) mod n under conjugation, so bins 1..ceil(n/2)-1 are free,
    bin 0 (DC) is self-conjugate and kept real positive, and for even n
    bin n/2 (Nyquist) is self-conjugate and kept real with a random
    sign.  Magnitudes are i.i.d. Uniform[1, kappa]; free phases are
    i.i.d. Uniform[0, 2*pi).  The realized condition number is the
    ratio of the extreme drawn magnitudes.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if kappa < 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    rng = make_rng(seed, STREAM_FILTER)
    gains = rng.uniform(1.0, kappa, size=n)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)

    ghat = np.zeros(n, dtype=np.complex128)
    ghat[0] = gains[0]
    for k in range(1, n // 2 + 1):
        if 2 * k == n:
            ghat[k] = signs[k] * gains[k]
        else:
            ghat[k] = gains[k] * np.exp(1j * phases[k])
            ghat[n - k] = np.conj(ghat[k])
    return Filter(real_part(np.fft.ifft(ghat)))


def generate_observations(g, inputs, noise_sigma=0.0) -> ObservationSet:
    """Convolve every input column with g, optionally adding white noise.

    The noise stream is derived from the inputs' seed under a separate
    stream tag, so (g, inputs, noise_sigma) fully determines Y.
    """
    if not isinstance(g, Filter):
        g = Filter(np.asarray(g, dtype=np.float64))
    X = inputs.X
    if g.n != X.shape[0]:
        raise DimensionError(f"filter n={g.n} vs inputs n={X.shape[0]}")
    if noise_sigma < 0.0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    Y = conv_apply_columns(g, X)
    if noise_sigma > 0.0:
        rng = make_rng(inputs.seed, STREAM_NOISE)
        Y = Y + noise_sigma * rng.standard_normal(Y.shape)
    return ObservationSet(Y=Y, provenance=Provenance(g, inputs, float(noise_sigma)))


def observations_matrix(Y) -> np.ndarray:
    """Coerce an ObservationSet or array to a float (n, p) matrix."""
    mat = Y.Y if isinstance(Y, ObservationSet) else np.asarray(Y, dtype=np.float64)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError(f"observations must be an (n, p) matrix, got shape {mat.shape}")
    return mat


def save_observations(obs, path):
    """Write observations as CSV: a metadata header line, then Y row-major.

    Line 1 names the metadata columns (n, p, theta, seed, noise_sigma),
    line 2 holds their values (theta/seed are nan/-1 when provenance is
    absent), and the next n lines hold the rows of Y with p values each
    at full float precision.
    """
    Y = observations_matrix(obs)
    n, p = Y.shape
    theta, seed, sigma = float("nan"), -1, float("nan")
    if isinstance(obs, ObservationSet) and obs.provenance is not None:
        theta = obs.provenance.inputs.theta
        seed = obs.provenance.inputs.seed
        sigma = obs.provenance.noise_sigma
    buf = io.StringIO()
    buf.write("n,p,theta,seed,noise_sigma\n")
    buf.write(f"{n},{p},{FLOAT_FMT % theta},{seed},{FLOAT_FMT % sigma}\n")
    for row in Y:
        buf.write(",".join(FLOAT_FMT % v for v in row) + "\n")
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write observations to {path}: {exc}") from exc


def load_observations(path):
    """Read a file written by save_observations.

    Returns (ObservationSet, meta) where meta is a dict with the header
    fields; the filter itself is not stored, so provenance is None.
    """
    try:
        with open(path, "r") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read observations from {path}: {exc}") from exc
    if len(lines) < 3 or lines[0] != "n,p,theta,seed,noise_sigma":
        raise IoError(f"{path} is not an observations file")
    fields = lines[1].split(",")
    n, p = int(fields[0]), int(fields[1])
    meta = {
        "n": n,
        "p": p,
        "theta": float(fields[2]),
        "seed": int(fields[3]),
        "noise_sigma": float(fields[4]),
    }
    if len(lines) != 2 + n:
        raise IoError(f"{path}: expected {n} data rows, found {len(lines) - 2}")
    Y = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
    if Y.shape != (n, p):
        raise IoError(f"{path}: data shape {Y.shape} does not match header ({n}, {p})")
    return ObservationSet(Y=Y), meta
