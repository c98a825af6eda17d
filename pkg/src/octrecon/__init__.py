"""Fourier-domain OCT forward modelling and depth-profile reconstruction.

The package simulates k-linear spectral interferograms, reconstructs depth
profiles by direct IDFT, IDFT + Lucy-Richardson deconvolution, and by an
l1-regularised ADMM inversion on a user-chosen fine grid, and measures axial
resolution on a synthetic air-wedge phantom.
"""

from .errors import InvalidArgumentError, OctReconError, ResourceError, SpectraFormatError
from .grids import (
    SpatialGrid,
    SystemMatrix,
    WavenumberGrid,
    apply_system_matrix,
    apply_system_matrix_adjoint,
    build_system_matrix,
    system_operator,
    wavenumber_grid_from_wavelengths,
)
from .forward import (
    EmissionSpectrum,
    Interferogram,
    NoiseModel,
    ReflectivityProfile,
    gaussian_spectrum,
    simulate_interferogram,
    truncate_bandwidth,
)
from .idft import (
    DirichletResponse,
    PsfReport,
    ReconResult,
    dirichlet_kernel,
    dirichlet_response,
    idft_matrix,
    psf_report,
    reconstruct_idft,
    shift_variance_map,
)
from .deconv import lucy_richardson
from .admm import AdmmConfig, AdmmDiagnostics, admm_reconstruct, estimate_support, soft_threshold
from .wedge import (
    AirWedgeSpec,
    ResolutionReport,
    SeparationMeasurement,
    TwoGaussianFit,
    fit_two_gaussians,
    resolution_benchmark,
    synthesize_air_wedge,
)

__version__ = "0.1.0"
