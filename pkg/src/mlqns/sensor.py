"""Level structure of a flux-tunable transmon from its circuit parameters.

Energies are obtained in the charge basis,

    H = 4 E_c n^2 - E_J(Phi) cos(phi),

with the SQUID Josephson energy
E_J(Phi) = E_J,sum * sqrt(cos^2(pi Phi) + d^2 sin^2(pi Phi)).
The offset charge is fixed at zero. All returned frequencies are ordinary
frequencies in MHz.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import ConvergenceError, SingularityError, TransmonRegimeWarning

FLUX_STEP = 1e-6  # Phi_0
_GHZ = 1000.0


@dataclass(frozen=True)
class TransmonSpec:
    """Circuit parameters of the sensor.

    ``ej_sum`` and ``ec`` are in GHz, ``flux_bias`` in units of the flux
    quantum. ``charge_cutoff`` N makes the charge basis span -N..N.
    """

    ej_sum: float
    ec: float
    asymmetry: float = 0.0
    flux_bias: float = 0.0
    num_levels: int = 5
    charge_cutoff: int = 30

    def __post_init__(self):
        if not self.ej_sum > 0:
            raise ValueError("ej_sum must be positive")
        if not self.ec > 0:
            raise ValueError("ec must be positive")
        if not 0.0 <= self.asymmetry < 1.0:
            raise ValueError("asymmetry must lie in [0, 1)")
        if int(self.num_levels) != self.num_levels or self.num_levels < 2:
            raise ValueError("num_levels must be an integer >= 2")
        if self.charge_cutoff < 3 * self.num_levels:
            raise ValueError("charge_cutoff must be at least 3 * num_levels")
        half = abs((self.flux_bias - 0.5) - round(self.flux_bias - 0.5))
        if (self.asymmetry == 0.0 and half < 1e-9) or \
                josephson_energy(self.ej_sum, self.asymmetry, self.flux_bias) <= 0.0:
            raise SingularityError(
                "effective Josephson energy vanishes at flux_bias="
                f"{self.flux_bias} with zero asymmetry"
            )

    def ej(self, flux: float | None = None) -> float:
        """Effective Josephson energy in GHz at ``flux`` (default: the bias)."""
        flux = self.flux_bias if flux is None else flux
        return josephson_energy(self.ej_sum, self.asymmetry, flux)

    def replace(self, **changes) -> "TransmonSpec":
        data = asdict(self)
        data.update(changes)
        return TransmonSpec(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TransmonSpec":
        return cls(**data)


def josephson_energy(ej_sum, asymmetry, flux):
    c = math.cos(math.pi * flux)
    s = math.sin(math.pi * flux)
    return ej_sum * math.sqrt(c * c + asymmetry * asymmetry * s * s)


@dataclass(frozen=True)
class LevelStructure:
    """Undriven multi-level sensor.

    Attributes
    ----------
    level_freqs : ndarray
        omega_s^(j) / 2pi in MHz for j = 0..d-1, ground level at zero.
    drive_ratios : ndarray
        lambda^(j-1,j) for j = 1..d-1, with lambda^(0,1) = 1.
    flux_sens : ndarray
        d omega_s^(k) / d Phi_ext in MHz per Phi_0 for k = 0..d-1. Entry 0
        is identically zero because the ground level is the energy origin.
    dispersive_shifts : ndarray or None
        chi^(j-1,j) in MHz, supplied from configuration.
    """

    level_freqs: np.ndarray
    drive_ratios: np.ndarray
    flux_sens: np.ndarray
    dispersive_shifts: np.ndarray | None = None
    regime_warning: bool = False
    spec: TransmonSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("level_freqs", "drive_ratios", "flux_sens", "dispersive_shifts"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.drive_ratios) != self.num_levels - 1:
            raise ValueError("drive_ratios must have num_levels - 1 entries")
        if len(self.flux_sens) != self.num_levels:
            raise ValueError("flux_sens must have num_levels entries")

    @property
    def num_levels(self) -> int:
        return len(self.level_freqs)

    @property
    def transition_freqs(self) -> np.ndarray:
        """omega_s^(j-1,j) / 2pi in MHz for j = 1..d-1."""
        return np.diff(self.level_freqs)

    def transition(self, j: int) -> float:
        return float(self.level_freqs[j] - self.level_freqs[j - 1])

    @property
    def anharmonicity(self) -> float:
        return self.transition(2) - self.transition(1)

    def transition_sensitivity(self, j: int) -> float:
        """d omega^(j-1,j) / d Phi in MHz per Phi_0."""
        return float(self.flux_sens[j] - self.flux_sens[j - 1])

    @classmethod
    def from_arrays(cls, level_freqs, drive_ratios=None, flux_sens=None,
                    dispersive_shifts=None) -> "LevelStructure":
        """Build a structure directly, e.g. a textbook d-level model.

        Missing drive ratios default to the harmonic sqrt(j) scaling and
        missing sensitivities to zero.
        """
        level_freqs = np.asarray(level_freqs, dtype=float)
        d = len(level_freqs)
        if drive_ratios is None:
            drive_ratios = np.sqrt(np.arange(1, d))
        if flux_sens is None:
            flux_sens = np.zeros(d)
        return cls(level_freqs, drive_ratios, flux_sens, dispersive_shifts)

    def to_dict(self) -> dict:
        out = {
            "level_freqs_MHz": self.level_freqs.tolist(),
            "transition_freqs_MHz": self.transition_freqs.tolist(),
            "drive_ratios": self.drive_ratios.tolist(),
            "harmonic_drive_ratios": np.sqrt(np.arange(1, self.num_levels)).tolist(),
            "flux_sens_MHz_per_Phi0": self.flux_sens.tolist(),
            "dispersive_shifts_MHz": (None if self.dispersive_shifts is None
                                      else self.dispersive_shifts.tolist()),
            "regime_warning": self.regime_warning,
        }
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _charge_eigensystem(ej_mhz, ec_mhz, cutoff, num_levels):
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    diag = 4.0 * ec_mhz * n * n
    off = np.full(2 * cutoff, -0.5 * ej_mhz)
    try:
        w, v = eigh_tridiagonal(diag, off, select="i",
                                select_range=(0, num_levels - 1))
    except LinAlgError as exc:
        raise ConvergenceError(f"charge-basis eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise ConvergenceError("charge-basis eigensolver returned non-finite values")
    # gauge: largest-magnitude component real-positive
    idx = np.argmax(np.abs(v), axis=0)
    v = v * np.sign(v[idx, np.arange(v.shape[1])])
    return w, v, n


def level_energies(spec: TransmonSpec, flux: float | None = None) -> np.ndarray:
    """Lowest ``num_levels`` frequencies in MHz relative to the ground level."""
    ej = spec.ej(flux) * _GHZ
    w, _, _ = _charge_eigensystem(ej, spec.ec * _GHZ, spec.charge_cutoff, spec.num_levels)
    return w - w[0]


def _check_flux_stencil(spec: TransmonSpec, flux: float, step: float):
    if spec.asymmetry == 0.0:
        dist = abs((flux - 0.5) - round(flux - 0.5))
        if dist <= 2 * step:
            raise SingularityError(
                "flux derivative undefined at half flux quantum for a symmetric SQUID"
            )
    for f in (flux - step, flux + step):
        if spec.ej(f) <= 0.0:
            raise SingularityError("Josephson energy vanishes inside the difference stencil")


def flux_sensitivities(spec: TransmonSpec, step: float = FLUX_STEP) -> np.ndarray:
    """Central-difference d omega^(k)/d Phi for every level, MHz per Phi_0."""
    flux = spec.flux_bias
    _check_flux_stencil(spec, flux, step)
    plus = level_energies(spec, flux + step)
    minus = level_energies(spec, flux - step)
    return (plus - minus) / (2.0 * step)


def flux_sensitivity(spec: TransmonSpec, level: int, step: float = FLUX_STEP) -> float:
    """d omega_s^(level) / d Phi_ext in MHz per Phi_0 by central difference."""
    if not 1 <= level <= spec.num_levels - 1:
        raise ValueError(f"level must lie in 1..{spec.num_levels - 1}")
    return float(flux_sensitivities(spec, step)[level])


def solve_levels(spec: TransmonSpec, dispersive_shifts=None,
                 flux_step: float = FLUX_STEP) -> LevelStructure:
    """Diagonalize the charge-basis Hamiltonian and collect the level data."""
    ej = spec.ej() * _GHZ
    ec = spec.ec * _GHZ
    w, v, n = _charge_eigensystem(ej, ec, spec.charge_cutoff, spec.num_levels)
    freqs = w - w[0]
    if np.any(np.diff(freqs) <= 0):
        raise ConvergenceError("eigenfrequencies are not strictly increasing")

    nmat = v.T @ (n[:, None] * v)
    base = abs(nmat[1, 0])
    ratios = np.array([abs(nmat[j, j - 1]) / base for j in range(1, spec.num_levels)])

    regime = ej <= ec
    if regime:
        warnings.warn(
            f"E_J(Phi)={ej:.1f} MHz does not exceed E_c={ec:.1f} MHz; "
            "transmon approximations are not reliable",
            TransmonRegimeWarning, stacklevel=2,
        )
    if dispersive_shifts is not None:
        dispersive_shifts = np.asarray(dispersive_shifts, dtype=float)

    return LevelStructure(
        level_freqs=freqs,
        drive_ratios=ratios,
        flux_sens=flux_sensitivities(spec, flux_step),
        dispersive_shifts=dispersive_shifts,
        regime_warning=bool(regime),
        spec=spec,
    )


REFERENCE_DEVICE = TransmonSpec(ej_sum=11.16, ec=0.1815, asymmetry=0.0,
                            flux_bias=0.17, num_levels=5, charge_cutoff=30)
