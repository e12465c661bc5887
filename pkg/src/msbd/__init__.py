"""Multichannel sparse blind deconvolution.

Recover an unknown invertible circulant filter from many observations,
each the circular convolution of the filter with an unknown sparse
signal.  The estimator minimizes a smooth sparsity surrogate of the
equalized observations over the unit sphere by manifold gradient
descent, optionally after spectral preconditioning, with random
restarts to cover the signed-shift basins.
"""

from .circulant import (
    Filter,
    Spectrum,
    condition_number,
    conv_apply,
    conv_apply_adjoint,
    circular_shift,
    dense_circulant,
    inverse_filter,
    spectrum,
    unit_norm,
)
from .errors import (
    DegenerateKernel,
    DegenerateStep,
    DimensionError,
    DomainError,
    IoError,
    MsbdError,
    NonInvertibleFilter,
    NonInvertiblePreconditioner,
    NumericalError,
    ParameterError,
    ReconstructionError,
    ShapeError,
)
from .harness import (
    CellResult,
    ExperimentGrid,
    SuccessRateTable,
    emit_results,
    read_results,
    run_phase_grid,
    run_trial,
)
from .imaging import (
    DeblurResult,
    ImagePlane,
    KernelStack,
    aligned_relative_error,
    blur_stack,
    build_preconditioner_2d,
    conv2d_apply,
    deblur_channels,
    kernel_ingest,
    read_image,
    sample_bg_kernel_stack,
    synthesize_image,
    write_image,
)
from .landscape import (
    GeometryReport,
    directional_gradient_w,
    export_sphere_surface,
    hessian_w,
    local_minimizer_w,
    verify_geometry,
    write_surface_csv,
)
from .losses import (
    ConvLossCore,
    LossConfig,
    Preconditioner,
    build_preconditioner,
    default_mu,
    effective_spectra,
    euclidean_gradient,
    l4_loss_gradient,
    loss_value,
    surrogate_eval,
)
from .metrics import (
    AlignmentReport,
    normalized_error,
    shift_sign_distance,
    success_indicator,
)
from .signals import (
    ObservationSet,
    Provenance,
    SparseInputs,
    generate_observations,
    load_observations,
    observations_matrix,
    sample_bernoulli_gaussian,
    save_observations,
    synthesize_filter,
)
from .solver import (
    RecoveryResult,
    SolverConfig,
    recover_inputs,
    run_mgd,
    run_with_restarts,
)
from .sphere import (
    RegionLabel,
    SphereVector,
    random_basin_point,
    random_sphere_point,
    region_membership,
    reparam,
    retract_step,
    riemannian_gradient,
    w_of_h,
)

__version__ = "0.1.0"
