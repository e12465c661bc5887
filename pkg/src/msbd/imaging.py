"""Image deblurring through the multichannel pipeline.

An observed image is the 2D circular convolution of an unknown sharp
image with a sparse kernel, and many observations of the same scene
share the image.  Flattening H x W to n = H*W reduces everything to
the 1D machinery: the loss core only needs the 2D spectra of the
(preconditioned) observations, and the solver is oblivious to the
lattice.  After solving, the sharp image is recovered by inverting the
spectrum of the equalizer, channels are aligned to a reference by 2D
circular cross-correlation, summed, and rescaled to the mean energy of
the observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .circulant import EPS_INV, real_part
from .errors import (
    DegenerateKernel,
    IoError,
    ParameterError,
    ReconstructionError,
    ShapeError,
)
from .losses import ConvLossCore, Preconditioner, _precondition_eigs
from .rng import STREAM_FILTER, STREAM_INPUTS, make_rng
from .solver import SolverConfig, restarts_on_core


@dataclass(frozen=True)
class ImagePlane:
    """One real-valued image channel."""

    pixels: np.ndarray
    channel: str = "mono"

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[0] < 2 or pixels.shape[1] < 2:
            raise ShapeError(f"an image plane must be at least 2x2, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ParameterError("image pixels must be finite")
        object.__setattr__(self, "pixels", pixels)

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class KernelStack:
    """p blur kernels on a common canvas; mode records their normalization.

    "bg" marks raw Bernoulli-Gaussian draws (signed, unnormalized);
    "normalized" marks nonnegative unit-sum kernels such as ingested
    motion-blur masks.
    """

    kernels: np.ndarray
    mode: str = "bg"

    def __post_init__(self):
        kernels = np.asarray(self.kernels, dtype=np.float64)
        if kernels.ndim != 3 or kernels.shape[0] < 1:
            raise ShapeError(f"kernels must be stacked (p, H, W), got {kernels.shape}")
        if self.mode not in ("bg", "normalized"):
            raise ParameterError(f"unknown kernel mode {self.mode!r}")
        object.__setattr__(self, "kernels", kernels)

    @property
    def p(self) -> int:
        return self.kernels.shape[0]

    @property
    def canvas(self):
        return self.kernels.shape[1:]


def _plane(x):
    return x.pixels if isinstance(x, ImagePlane) else np.asarray(x, dtype=np.float64)


def conv2d_apply(g, x):
    """2D circular convolution of equal-shape planes via FFT products."""
    gp, xp = _plane(g), _plane(x)
    if gp.ndim != 2 or gp.shape != xp.shape:
        raise ShapeError(f"shape mismatch: {gp.shape} vs {xp.shape}")
    out = real_part(np.fft.ifft2(np.fft.fft2(gp) * np.fft.fft2(xp)))
    if isinstance(g, ImagePlane):
        return ImagePlane(out, channel=g.channel)
    return out


def synthesize_image(height, width, kappa, seed, channel="mono") -> ImagePlane:
    """Random image with a prescribed 2D spectral condition number.

    The 2D DFT is assembled with magnitudes Uniform[1, kappa] and
    uniform phases under the conjugate symmetry of real images: bin
    (k, l) pairs with ((-k) mod H, (-l) mod W).  Self-paired bins are
    real (DC positive, the rest random sign).  Every generated image is
    invertible as a 2D filter, which the deblurring model requires.
    """
    if height < 2 or width < 2:
        raise ShapeError(f"need at least 2x2, got {height}x{width}")
    if kappa < 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    rng = make_rng(seed, STREAM_FILTER)
    gains = rng.uniform(1.0, kappa, (height, width))
    phases = rng.uniform(0.0, 2.0 * np.pi, (height, width))
    signs = np.where(rng.random((height, width)) < 0.5, 1.0, -1.0)

    kk, ll = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    pk, pl = (-kk) % height, (-ll) % width
    self_paired = (pk == kk) & (pl == ll)
    first_of_pair = ~self_paired & ((kk < pk) | ((kk == pk) & (ll < pl)))

    spec = np.zeros((height, width), dtype=np.complex128)
    spec[self_paired] = signs[self_paired] * gains[self_paired]
    spec[0, 0] = gains[0, 0]
    vals = gains[first_of_pair] * np.exp(1j * phases[first_of_pair])
    spec[kk[first_of_pair], ll[first_of_pair]] = vals
    spec[pk[first_of_pair], pl[first_of_pair]] = np.conj(vals)
    return ImagePlane(real_part(np.fft.ifft2(spec)), channel=channel)


def sample_bg_kernel_stack(height, width, p, theta, seed) -> KernelStack:
    """p sparse kernels with i.i.d. Bernoulli(theta) x N(0,1) pixels."""
    if not (0.0 < theta <= 1.0):
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    if p < 1:
        raise ParameterError(f"need p >= 1, got {p}")
    rng = make_rng(seed, STREAM_INPUTS)
    mask = rng.random((p, height, width)) < theta
    gauss = rng.standard_normal((p, height, width))
    return KernelStack(np.where(mask, gauss, 0.0), mode="bg")


def blur_stack(image, kernels) -> np.ndarray:
    """Observations y_i = image (*) kernel_i, stacked (p, H, W)."""
    img = _plane(image)
    if kernels.canvas != img.shape:
        raise ShapeError(f"kernel canvas {kernels.canvas} vs image {img.shape}")
    spec = np.fft.fft2(img)
    return real_part(np.fft.ifft2(spec * np.fft.fft2(kernels.kernels, axes=(1, 2)), axes=(1, 2)))


def kernel_ingest(path, canvas) -> ImagePlane:
    """Load a grayscale kernel image and center-embed it on the canvas.

    The kernel is placed with its center at the lattice origin using
    circular indexing (so blurring is centered) and normalized to unit
    sum.  An unreadable file raises IoError; a kernel with no mass
    raises DegenerateKernel; one larger than the canvas, ShapeError.
    """
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise IoError(f"cannot read kernel image {path}: {exc}") from exc
    H, W = canvas
    h, w = gray.shape
    if h > H or w > W:
        raise ShapeError(f"kernel {gray.shape} does not fit canvas {canvas}")
    total = gray.sum()
    if total <= 0.0:
        raise DegenerateKernel(f"kernel {path} has zero mass")
    cell = np.zeros((H, W))
    cell[:h, :w] = gray / total
    return ImagePlane(np.roll(cell, (-(h // 2), -(w // 2)), axis=(0, 1)), channel="kernel")


def build_preconditioner_2d(stack, theta, eps_inv=EPS_INV) -> Preconditioner:
    """Inverse square root of the empirical covariance on the 2D lattice."""
    if not (0.0 < theta < 1.0):
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")
    planes = np.asarray(stack, dtype=np.float64)
    if planes.ndim != 3:
        raise ShapeError(f"expected (p, H, W) observations, got {planes.shape}")
    n = planes.shape[1] * planes.shape[2]
    mean_sq = np.mean(np.abs(np.fft.fft2(planes, axes=(1, 2))) ** 2, axis=0)
    return Preconditioner(_precondition_eigs(mean_sq, theta, n, eps_inv))


@dataclass
class DeblurResult:
    """Recovered image plus per-channel diagnostics."""

    recovered: ImagePlane
    channels: Dict[str, ImagePlane]
    shifts: Dict[str, tuple]
    signs: Dict[str, int]
    final_losses: Dict[str, float]
    iterations: Dict[str, int]


def _align_to(ref, other):
    """(shift, sign) so that sign * roll(other, shift) best matches ref."""
    corr = real_part(np.fft.ifft2(np.conj(np.fft.fft2(other)) * np.fft.fft2(ref)))
    flat = int(np.argmax(np.abs(corr)))
    shift = np.unravel_index(flat, corr.shape)
    sign = 1 if corr[shift] >= 0.0 else -1
    return (int(shift[0]), int(shift[1])), sign


def _recover_channel(planes, cfg, deadline=None):
    """Solve one channel: precondition, descend, invert the equalizer."""
    H, W = planes.shape[1:]
    R = build_preconditioner_2d(planes, cfg.theta)
    spectra = np.fft.fft2(planes, axes=(1, 2))
    if cfg.use_preconditioner:
        spectra = spectra * R.fourier_eigs
    else:
        R = None
    core = ConvLossCore(spectra, cfg.resolved_mu(H * W), cfg.loss_kind)
    h, val, _, iters, _, _, _ = restarts_on_core(core, cfg, deadline=deadline)
    equalizer = R.apply(h.reshape(H, W)) if R is not None else h.reshape(H, W)
    eq_spec = np.fft.fft2(equalizer)
    mags = np.abs(eq_spec)
    if np.min(mags) <= EPS_INV * np.max(mags):
        raise ReconstructionError("recovered equalizer has a near-zero spectral bin")
    recovered = real_part(np.fft.ifft2(1.0 / eq_spec))
    return recovered, val, iters


def deblur_channels(observations, cfg, deadline=None) -> DeblurResult:
    """Recover a sharp image from per-channel observation stacks.

    observations maps channel name to a list of ImagePlane or a
    (p, H, W) stack; a bare list or stack means one mono channel.
    Channels are solved independently, aligned to the "R" channel when
    present (the first channel otherwise), summed, sign-fixed, and
    rescaled so the recovered mean pixel energy matches the
    observations' mean energy.
    """
    if isinstance(observations, np.ndarray) or isinstance(observations, (list, tuple)):
        observations = {"mono": observations}
    if not observations:
        raise ParameterError("no observation channels given")
    if not isinstance(cfg, SolverConfig):
        raise ParameterError("cfg must be a SolverConfig")

    stacks = {}
    shape = None
    for name, planes in observations.items():
        if len(planes) < 1:
            raise ParameterError(f"channel {name!r} has no observations")
        arrs = [_plane(pl) for pl in planes]
        for a in arrs:
            if a.ndim != 2:
                raise ShapeError(f"channel {name!r}: each plane must be 2D, got {a.shape}")
            if shape is None:
                shape = a.shape
            if a.shape != shape:
                raise ShapeError(f"channel {name!r}: plane shape {a.shape} vs {shape}")
        stacks[name] = np.stack(arrs)

    names = list(stacks)
    ref_name = "R" if "R" in stacks else names[0]

    recovered, losses, iters = {}, {}, {}
    for name in names:
        rec, val, its = _recover_channel(stacks[name], cfg, deadline=deadline)
        recovered[name] = rec
        losses[name] = float(val)
        iters[name] = int(its)

    shifts, signs, aligned = {}, {}, {}
    ref = recovered[ref_name]
    for name in names:
        if name == ref_name:
            shifts[name], signs[name] = (0, 0), 1
            aligned[name] = ref
        else:
            shift, sign = _align_to(ref, recovered[name])
            shifts[name], signs[name] = shift, sign
            aligned[name] = sign * np.roll(recovered[name], shift, axis=(0, 1))

    total = np.sum([aligned[name] for name in names], axis=0)
    if total.sum() < 0.0:
        total = -total
        signs = {name: -s for name, s in signs.items()}

    obs_energy = float(np.mean([np.mean(s**2) for s in stacks.values()]))
    rec_energy = float(np.mean(total**2))
    if rec_energy > 0.0:
        total = total * np.sqrt(obs_energy / rec_energy)

    return DeblurResult(
        recovered=ImagePlane(total, channel="+".join(names)),
        channels={name: ImagePlane(aligned[name], channel=name) for name in names},
        shifts=shifts,
        signs=signs,
        final_losses=losses,
        iterations=iters,
    )


def aligned_relative_error(estimate, reference) -> float:
    """Relative l2 error after the best circular shift, sign, and scale.

    min over shifts s and scalars a of ||ref - a * roll(est, s)|| / ||ref||;
    the optimal scalar folds the sign in.  Zero references raise
    ParameterError.
    """
    est, ref = _plane(estimate), _plane(reference)
    if est.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {est.shape} vs {ref.shape}")
    ref_norm_sq = float(np.sum(ref**2))
    if ref_norm_sq == 0.0:
        raise ParameterError("reference image is identically zero")
    corr = real_part(np.fft.ifft2(np.conj(np.fft.fft2(est)) * np.fft.fft2(ref)))
    best = float(np.max(np.abs(corr)))
    est_norm_sq = float(np.sum(est**2))
    if est_norm_sq == 0.0:
        return 1.0
    resid_sq = ref_norm_sq - best**2 / est_norm_sq
    return float(np.sqrt(max(resid_sq, 0.0) / ref_norm_sq))


def read_image(path) -> np.ndarray:
    """PNG (or any Pillow-readable) image as float64 in [0, 1].

    Grayscale comes back (H, W); color comes back (H, W, 3).
    """
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I", "I;16", "F"):
                return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def write_image(path, array):
    """Write a float array (values clipped to [0, 1]) as an 8-bit PNG."""
    from PIL import Image

    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ShapeError(f"expected (H, W) or (H, W, 3), got {arr.shape}")
    data = np.clip(arr, 0.0, 1.0)
    data = np.round(data * 255.0).astype(np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    try:
        Image.fromarray(data, mode=mode).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc
