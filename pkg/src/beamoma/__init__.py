"""Simulated ambient-vibration testing and output-only modal identification of beams."""
from .beam_model import (
    Boundary,
    BeamSpec,
    ModalSet,
    SystemMatrices,
    analytical_frequencies,
    assemble,
    preset_beam,
    rayleigh_coefficients,
    rayleigh_damping,
    solve_modal,
)
from .compare import MacMatrix, align, frequency_error_table, mac, mac_matrix, pair_modes, shape_deviation
from .errors import BandwidthUnresolved, InvalidArgument, NumericalFailure, OmaError, PairingConflict, ParseError
from .identify import (
    IdentifiedMode,
    IdentifiedModeSet,
    PeakConfig,
    fdd_identify,
    find_peaks,
    frf_identify,
    half_power_damping,
    pp_identify,
    sv_spectrum,
)
from .kernels import BACKEND
from .simulator import ExcitationSpec, TimeHistory, add_noise, generate_excitation, newmark_integrate
from .spectral import SpectralConfig, anpsd, frf_h1, welch_cross_psd

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BandwidthUnresolved",
    "BeamSpec",
    "Boundary",
    "ExcitationSpec",
    "IdentifiedMode",
    "IdentifiedModeSet",
    "InvalidArgument",
    "MacMatrix",
    "ModalSet",
    "NumericalFailure",
    "OmaError",
    "PairingConflict",
    "ParseError",
    "PeakConfig",
    "SpectralConfig",
    "SystemMatrices",
    "TimeHistory",
    "add_noise",
    "align",
    "analytical_frequencies",
    "anpsd",
    "assemble",
    "fdd_identify",
    "find_peaks",
    "frequency_error_table",
    "frf_h1",
    "frf_identify",
    "generate_excitation",
    "half_power_damping",
    "mac",
    "mac_matrix",
    "newmark_integrate",
    "pair_modes",
    "pp_identify",
    "preset_beam",
    "rayleigh_coefficients",
    "rayleigh_damping",
    "shape_deviation",
    "solve_modal",
    "sv_spectrum",
    "welch_cross_psd",
]
