"""Exception types shared across the package."""


class MsbdError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MsbdError):
    """Operands have incompatible lengths."""


class ShapeError(DimensionError):
    """Image planes or kernels have mismatched 2D shapes."""


class ParameterError(MsbdError):
    """A parameter lies outside its documented range."""


class DomainError(MsbdError):
    """An input lies outside the domain of the operation."""


class NumericalError(MsbdError):
    """A numerical guard tripped (e.g. imaginary residue beyond round-off)."""


class NonInvertibleFilter(MsbdError):
    """The filter spectrum has entries too close to zero to invert."""


class NonInvertiblePreconditioner(MsbdError):
    """The observations share a spectral null; the preconditioner cannot be formed."""


class DegenerateStep(MsbdError):
    """A retraction collapsed to zero length or the line search hit its floor."""


class DegenerateKernel(MsbdError):
    """An ingested blur kernel carries no mass."""


class ReconstructionError(MsbdError):
    """Spectral inversion of the recovered equalizer hit a near-zero bin."""


class IoError(MsbdError):
    """A file could not be read or written."""
