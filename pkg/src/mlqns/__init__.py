"""Multi-level spin-locking noise spectroscopy with a transmon sensor."""

__version__ = "0.1.0"

from .errors import (ConfigError, FitError, IllConditionedWarning, NegativeEstimateWarning,
                     QnsError, TransmonRegimeWarning)
from .sensor import REFERENCE_DEVICE, LevelStructure, TransmonSpec, solve_levels
from .dressing import (DressedFrame, DriveSpec, RabiCurve, dress, effective_t1, leakage_rate,
                       pump_probe_spectrum, rabi_curve)
from .noise import (BoxCar, FluxCoupling, Lorentzian, NoiseEnsemble, NoiseSource,
                    PhotonCoupling, PhotonNoiseSpec, Tabulated, ZeroPsd, synthesize)
from .dynamics import DecayTrace, SequenceSpec, simulate_rabi, simulate_sequence
from .reconstruction import (PsdEstimate, RelaxationFit, correct_estimate, discriminate_sources,
                             extract_transverse_psd, fit_decay)

__all__ = [
    "__version__", "ConfigError", "FitError", "IllConditionedWarning", "NegativeEstimateWarning",
    "QnsError", "TransmonRegimeWarning", "REFERENCE_DEVICE", "LevelStructure", "TransmonSpec",
    "solve_levels", "DressedFrame", "DriveSpec", "RabiCurve", "dress", "effective_t1",
    "leakage_rate", "pump_probe_spectrum", "rabi_curve", "BoxCar", "FluxCoupling", "Lorentzian",
    "NoiseEnsemble", "NoiseSource", "PhotonCoupling", "PhotonNoiseSpec", "Tabulated", "ZeroPsd",
    "synthesize", "DecayTrace", "SequenceSpec", "simulate_rabi", "simulate_sequence",
    "PsdEstimate", "RelaxationFit", "correct_estimate", "discriminate_sources",
    "extract_transverse_psd", "fit_decay",
]
