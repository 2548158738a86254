"""Swept-beam photoacoustic fluence modeling, estimation, and correction."""

from .boundary import (
    BoundaryCondition,
    extrapolated_distance,
    fresnel_reflectance,
    reflection_moments,
)
from .errors import ConfigurationError, DataFormatError, FluenceLabError, NumericError
from .estimation import (
    EstimationResult,
    MeasurementTensor,
    SearchConfig,
    SupportSelection,
    debias,
    estimate_noise_bias,
    estimate_parameters,
    fit_parameters,
    fluence_correlation,
    normalize,
    predict_fluence,
    select_support,
    smooth_spectra,
    snr_db,
)
from .fluence import (
    FluenceParams,
    ImageSourcePair,
    axial_fluence_peak,
    fractional_model_error,
    image_sources,
    model1_fluence,
    model2_fluence,
)
from .geometry import (
    OpticalMedium,
    ProbeGeometry,
    WavelengthGrid,
    brain_scattering,
    default_probe,
    default_wavelength_grid,
    diffusion_coefficient,
    mu_eff,
    per_cm_to_per_mm,
    per_mm_to_per_cm,
    transport_mfp,
)
from .montecarlo import (
    AxialLine,
    FluenceField,
    McConfig,
    VoxelGrid,
    compare_to_model,
    simulate,
)
from .synthesis import (
    ChromophoreSpectrum,
    PixelGrid,
    Spectrum,
    Target,
    corrected_spectrum,
    estimation_fractional_error,
    mixture_absorption,
    spectrum_similarity,
    synthesize,
    uncorrected_spectrum,
)

__version__ = "0.1.0"
