"""Target noise spectra and their classical time-domain realizations.

PSD convention: S(omega) = int dtau exp(-i omega tau) C(tau), two-sided and
symmetric for classical noise. Spectra are evaluated at ordinary frequency
f in MHz (S(2 pi f)) and carry units of x^2 * us, where x is the noise
variable. With this convention int S df over (-inf, inf) is the variance.

Waveforms are built as a sum of cosines on a harmonic grid,
x(t) = sum_m a_m cos(2 pi f_m t + phi_m), a_m = 2 sqrt(S(f_m) df),
so that each harmonic carries the power of both the +f_m and -f_m bands.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .errors import CouplingError, SynthesisError

FUNDAMENTAL = 0.004  # MHz, 4 kHz harmonic spacing
DURATION = 100.0  # us
CUTOFF_SPAN = 50.0  # MHz on either side of the centre frequency


# ---------------------------------------------------------------- spectra

class NoisePsd:
    """Base class; subclasses are callable S(f) with f in MHz."""

    kind = "base"
    symmetric = True

    def __call__(self, f):
        raise NotImplementedError

    def default_cutoffs(self):
        raise NotImplementedError

    @property
    def peak_frequency(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def scaled(self, c: float) -> "NoisePsd":
        raise NotImplementedError

    def variance(self, f_lo=None, f_hi=None) -> float:
        """Power inside +-[f_lo, f_hi] (default: the synthesis band)."""
        lo, hi = self.default_cutoffs() if f_lo is None else (f_lo, f_hi)
        f = np.linspace(lo, hi, 20001)
        return 2.0 * float(np.trapezoid(self(f), f))


@dataclass(frozen=True)
class Lorentzian(NoisePsd):
    """Double-lobed Lorentzian at +-f0 with half width fc (both in MHz).

    S(omega) = P0 / (2 pi omega_c) [L(omega - omega_0) + L(omega + omega_0)]
    with L(x) = 1 / (1 + (x / omega_c)^2) and omega = 2 pi f. The total
    variance is P0 / 2 pi.
    """

    power: float
    center: float
    hwhm: float
    kind = "lorentzian"

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("Lorentzian power must be non-negative")
        if self.hwhm <= 0:
            raise ValueError("Lorentzian hwhm must be positive")
        if self.center < 0:
            raise ValueError("Lorentzian center must be non-negative")

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        wc = 2 * math.pi * self.hwhm
        pre = self.power / (2 * math.pi * wc)
        lo = 1.0 / (1.0 + ((f - self.center) / self.hwhm) ** 2)
        hi = 1.0 / (1.0 + ((f + self.center) / self.hwhm) ** 2)
        return pre * (lo + hi)

    def default_cutoffs(self):
        return max(0.0, self.center - CUTOFF_SPAN), self.center + CUTOFF_SPAN

    @property
    def peak_frequency(self) -> float:
        return self.center

    def scaled(self, c):
        return Lorentzian(self.power * c, self.center, self.hwhm)

    def to_dict(self):
        return {"kind": self.kind, "power": self.power, "center": self.center, "hwhm": self.hwhm}


@dataclass(frozen=True)
class BoxCar(NoisePsd):
    """Flat two-sided level S0 (x^2 us) for f_lo <= |f| <= f_hi."""

    level: float
    f_lo: float
    f_hi: float
    kind = "boxcar"

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("BoxCar level must be non-negative")
        if not 0 <= self.f_lo < self.f_hi:
            raise ValueError("BoxCar needs 0 <= f_lo < f_hi")

    def __call__(self, f):
        af = np.abs(np.asarray(f, dtype=float))
        return np.where((af >= self.f_lo) & (af <= self.f_hi), self.level, 0.0)

    def default_cutoffs(self):
        return self.f_lo, self.f_hi

    @property
    def peak_frequency(self) -> float:
        return 0.5 * (self.f_lo + self.f_hi)

    def scaled(self, c):
        return BoxCar(self.level * c, self.f_lo, self.f_hi)

    def to_dict(self):
        return {"kind": self.kind, "level": self.level, "f_lo": self.f_lo, "f_hi": self.f_hi}


@dataclass(frozen=True)
class Tabulated(NoisePsd):
    """Piecewise-linear spectrum through (f, S) points, zero outside."""

    freqs: tuple
    values: tuple
    kind = "tabulated"

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        s = np.asarray(self.values, dtype=float)
        if f.shape != s.shape or f.ndim != 1 or len(f) < 2:
            raise ValueError("Tabulated needs matching 1-d freqs/values with >= 2 points")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("Tabulated entries must be finite")
        if np.any(np.diff(f) <= 0):
            raise ValueError("Tabulated freqs must be strictly increasing")
        if np.any(s < 0) or f[0] < 0:
            raise ValueError("Tabulated values and freqs must be non-negative")
        object.__setattr__(self, "freqs", tuple(float(x) for x in f))
        object.__setattr__(self, "values", tuple(float(x) for x in s))

    def __call__(self, f):
        af = np.abs(np.asarray(f, dtype=float))
        return np.interp(af, self.freqs, self.values, left=0.0, right=0.0)

    def default_cutoffs(self):
        return self.freqs[0], self.freqs[-1]

    @property
    def peak_frequency(self) -> float:
        return self.freqs[int(np.argmax(self.values))]

    def scaled(self, c):
        return Tabulated(self.freqs, tuple(v * c for v in self.values))

    def to_dict(self):
        return {"kind": self.kind, "freqs": list(self.freqs), "values": list(self.values)}


@dataclass(frozen=True)
class ZeroPsd(NoisePsd):
    kind = "zero"

    def __call__(self, f):
        return np.zeros_like(np.asarray(f, dtype=float))

    def default_cutoffs(self):
        return 0.0, 0.0

    @property
    def peak_frequency(self) -> float:
        return 0.0

    def variance(self, f_lo=None, f_hi=None):
        return 0.0

    def scaled(self, c):
        return self

    def to_dict(self):
        return {"kind": self.kind}


_PSD_KINDS = {"lorentzian": Lorentzian, "boxcar": BoxCar, "tabulated": Tabulated, "zero": ZeroPsd}


def psd_from_dict(data: dict) -> NoisePsd:
    data = dict(data)
    kind = data.pop("kind").lower()
    if kind not in _PSD_KINDS:
        raise ValueError(f"unknown PSD kind {kind!r}")
    if kind == "tabulated":
        return Tabulated(tuple(data["freqs"]), tuple(data["values"]))
    return _PSD_KINDS[kind](**data)


def psd_to_csv(psd: NoisePsd, freqs) -> str:
    """Two-column CSV (f_MHz, S) of ``psd`` sampled at ``freqs``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["f_MHz", "S"])
    for f, s in zip(freqs, psd(np.asarray(freqs, dtype=float))):
        w.writerow([repr(float(f)), repr(float(s))])
    return buf.getvalue()


# ---------------------------------------------------------------- photon shot noise

@dataclass(frozen=True)
class PhotonNoiseSpec:
    """Readout-resonator photon fluctuations seen through dispersive shifts.

    ``chi`` lists chi^(j-1,j) in MHz, ``kappa`` is the resonator linewidth
    and ``detuning`` the drive-resonator detuning, both in MHz.
    ``calibration`` scales the absolute spectral weight.
    """

    chi: tuple
    nbar: float
    kappa: float
    detuning: float
    calibration: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.nbar < 0:
            raise ValueError("nbar must be non-negative")
        object.__setattr__(self, "chi", tuple(float(c) for c in self.chi))

    def to_dict(self):
        return {"chi": list(self.chi), "nbar": self.nbar, "kappa": self.kappa,
                "detuning": self.detuning, "calibration": self.calibration}


def photon_number_psd(spec: PhotonNoiseSpec) -> NoisePsd:
    """Spectrum of the photon-number fluctuation n(t) (photons^2 us)."""
    if spec.nbar == 0:
        return ZeroPsd()
    return Lorentzian(spec.calibration * spec.nbar, abs(spec.detuning), 0.5 * spec.kappa)


def photon_psd(spec: PhotonNoiseSpec, j: int) -> NoisePsd:
    """Spectrum of the transition-frequency noise 2 pi * 2 chi^(j-1,j) n(t).

    Units are rad^2/us. Ratios between transitions are exactly
    (chi^(j-1,j) / chi^(j'-1,j'))^2.
    """
    if not 1 <= j <= len(spec.chi):
        raise ValueError(f"transition {j} not covered by chi list")
    base = photon_number_psd(spec)
    return base.scaled((2 * math.pi * 2 * spec.chi[j - 1]) ** 2)


# ---------------------------------------------------------------- couplings

@dataclass(frozen=True)
class FluxCoupling:
    """B^(k)(t) = 2 pi (d omega^(k)/d Phi) dPhi(t); sensitivities in MHz/Phi_0."""

    flux_sens: tuple

    def __post_init__(self):
        object.__setattr__(self, "flux_sens", tuple(float(s) for s in self.flux_sens))

    def weights(self, num_levels: int) -> np.ndarray:
        s = np.asarray(self.flux_sens)
        if len(s) == num_levels - 1:
            s = np.concatenate([[0.0], s])
        if len(s) < num_levels:
            raise CouplingError(f"flux coupling covers {len(s)} levels, need {num_levels}")
        return 2 * math.pi * s[:num_levels]

    def to_dict(self):
        return {"kind": "flux", "flux_sens": list(self.flux_sens)}


@dataclass(frozen=True)
class PhotonCoupling:
    """B^(k)(t) = 2 pi * 2 n(t) * sum_{m<=k} chi^(m-1,m); chi in MHz."""

    chi: tuple

    def __post_init__(self):
        object.__setattr__(self, "chi", tuple(float(c) for c in self.chi))

    def weights(self, num_levels: int) -> np.ndarray:
        if len(self.chi) < num_levels - 1:
            raise CouplingError(
                f"photon coupling lists {len(self.chi)} dispersive shifts, need {num_levels - 1}"
            )
        shifts = np.concatenate([[0.0], np.cumsum(self.chi[: num_levels - 1])])
        return 2 * math.pi * 2 * shifts

    def to_dict(self):
        return {"kind": "photon", "chi": list(self.chi)}


def coupling_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "flux":
        return FluxCoupling(tuple(data["flux_sens"]))
    if kind == "photon":
        return PhotonCoupling(tuple(data["chi"]))
    raise ValueError(f"unknown coupling kind {kind!r}")


def level_noise_series(samples, coupling, num_levels: int) -> np.ndarray:
    """Per-level noise B^(k)(t) in rad/us, shape (num_levels, n)."""
    x = np.asarray(getattr(samples, "samples", samples), dtype=float)
    w = coupling.weights(num_levels)
    return w[:, None] * x[None, :]


# ---------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class NoiseWaveform:
    """Sampled realization x(t_offset + n / sample_rate), n = 0..len-1."""

    sample_rate: float
    duration: float
    samples: np.ndarray
    seed: object
    harm_freqs: np.ndarray
    harm_amps: np.ndarray
    harm_phases: np.ndarray
    t_offset: float = 0.0
    psd: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t_offset + np.arange(len(self.samples)) / self.sample_rate

    def harmonics(self):
        return list(zip(self.harm_freqs, self.harm_amps, self.harm_phases))

    def evaluate(self, t):
        """Exact value of the harmonic sum at arbitrary times (slow, for checks)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for chunk in range(0, len(self.harm_freqs), 4096):
            f = self.harm_freqs[chunk:chunk + 4096]
            a = self.harm_amps[chunk:chunk + 4096]
            p = self.harm_phases[chunk:chunk + 4096]
            out += (a[None, :] * np.cos(2 * np.pi * f[None, :] * t[:, None] + p[None, :])).sum(axis=1)
        return out

    def interpolate(self, t):
        """Linear interpolation of the stored samples."""
        return np.interp(t, self.times, self.samples)

    def metadata(self) -> dict:
        seed = self.seed
        if isinstance(seed, np.ndarray):
            seed = seed.tolist()
        return {"sample_rate": self.sample_rate, "duration": self.duration,
                "t_offset": self.t_offset, "seed": seed, "num_samples": len(self.samples),
                "num_harmonics": len(self.harm_freqs), "psd": self.psd, "dtype": "<f8"}


def _harmonic_band(fundamental, cutoffs):
    lo, hi = cutoffs
    m_lo = max(1, int(math.ceil(lo / fundamental - 1e-9)))
    m_hi = int(math.floor(hi / fundamental + 1e-9))
    return m_lo, m_hi


def default_sample_rate(f_max: float, fundamental: float = FUNDAMENTAL, oversample: float = 8.0):
    """Smallest rate >= oversample * f_max on the fundamental grid with a fast FFT length."""
    n = int(math.ceil(oversample * f_max / fundamental))
    n = sfft.next_fast_len(max(n, 2), real=True)
    return n * fundamental


def synthesize(psd: NoisePsd, duration: float = DURATION, fundamental: float = FUNDAMENTAL,
               cutoffs=None, seed=0, sample_rate: float | None = None,
               t_offset: float = 0.0, rayleigh: bool = False) -> NoiseWaveform:
    """Harmonic-sum realization of ``psd``.

    Harmonics m * fundamental inside ``cutoffs`` (default: the spectrum's own
    band) get amplitude 2 sqrt(S(f_m) fundamental) and i.i.d. uniform phases.
    ``sample_rate`` must be an integer multiple of ``fundamental``; the sum is
    then evaluated exactly on the sample grid by one inverse real FFT over
    a full period. The waveform repeats with period 1 / fundamental, so
    durations longer than that simply wrap.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if fundamental <= 0:
        raise ValueError("fundamental must be positive")
    if cutoffs is None:
        cutoffs = psd.default_cutoffs()
    cutoffs = (max(0.0, float(cutoffs[0])), float(cutoffs[1]))
    rng = np.random.default_rng(seed)
    if sample_rate is None:
        sample_rate = default_sample_rate(max(cutoffs[1], fundamental), fundamental)
    n_period = sample_rate / fundamental
    if abs(n_period - round(n_period)) > 1e-6 * n_period:
        raise ValueError("sample_rate must be an integer multiple of the fundamental")
    n_period = int(round(n_period))
    n_samples = int(round(duration * sample_rate))

    if isinstance(psd, ZeroPsd):
        m = np.zeros(0, dtype=int)
    else:
        m_lo, m_hi = _harmonic_band(fundamental, cutoffs)
        if m_hi < m_lo:
            raise SynthesisError(f"no harmonics of {fundamental} MHz inside cutoffs {cutoffs}")
        m = np.arange(m_lo, m_hi + 1)
        if m_hi >= n_period // 2:
            raise SynthesisError("sample_rate too low for the highest harmonic")
    freqs = m * fundamental
    amps = 2.0 * np.sqrt(psd(freqs) * fundamental) if len(m) else np.zeros(0)
    phases = rng.uniform(0.0, 2 * np.pi, size=len(m))
    if rayleigh and len(m):
        amps = amps * np.sqrt(-np.log(rng.uniform(size=len(m))))

    if len(m) == 0 or not np.any(amps):
        samples = np.zeros(n_samples)
    else:
        spec = np.zeros(n_period // 2 + 1, dtype=complex)
        spec[m] = 0.5 * n_period * amps * np.exp(1j * (phases + 2 * np.pi * freqs * t_offset))
        period = sfft.irfft(spec, n=n_period)
        reps = -(-n_samples // n_period)
        samples = np.tile(period, reps)[:n_samples] if reps > 1 else period[:n_samples].copy()

    return NoiseWaveform(float(sample_rate), float(duration), samples, seed, freqs, amps, phases,
                         float(t_offset), psd.to_dict())


def save_waveform(wf: NoiseWaveform, path) -> tuple[Path, Path]:
    """Write samples as raw little-endian f64 plus a JSON sidecar."""
    path = Path(path)
    bin_path = path.with_suffix(".f64")
    meta_path = path.with_suffix(".json")
    np.asarray(wf.samples, dtype="<f8").tofile(bin_path)
    meta_path.write_text(json.dumps(wf.metadata(), indent=2, sort_keys=True))
    return bin_path, meta_path


def load_samples(path):
    """Read back (samples, metadata) written by :func:`save_waveform`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    samples = np.fromfile(path.with_suffix(".f64"), dtype="<f8")
    return samples, meta


def ensemble_psd(waveforms, nperseg: int | None = None, method: str = "welch"):
    """Ensemble-averaged two-sided PSD estimate of equal-rate waveforms.

    Returns (f, S) for f >= 0 with S in the module's two-sided convention.
    """
    waves = [np.asarray(getattr(w, "samples", w), dtype=float) for w in waveforms]
    rates = {getattr(w, "sample_rate", None) for w in waveforms}
    if len(rates) != 1:
        raise ValueError("waveforms must share one sample rate")
    fs = rates.pop()
    acc = None
    for x in waves:
        if method == "welch":
            f, p = signal.welch(x, fs=fs, nperseg=nperseg or min(len(x), 4096),
                                return_onesided=False, detrend=False, scaling="density")
        else:
            f, p = signal.periodogram(x, fs=fs, return_onesided=False, detrend=False,
                                      scaling="density")
        acc = p if acc is None else acc + p
    keep = f >= 0
    f, s = f[keep], acc[keep] / len(waves)
    order = np.argsort(f)
    return f[order], s[order]


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class NoiseSource:
    """A spectrum together with the way it couples to the sensor levels."""

    psd: NoisePsd
    coupling: object
    name: str = ""
    cutoffs: tuple | None = None

    def weights(self, num_levels: int) -> np.ndarray:
        return self.coupling.weights(num_levels)

    def to_dict(self):
        return {"name": self.name, "psd": self.psd.to_dict(), "coupling": self.coupling.to_dict(),
                "cutoffs": None if self.cutoffs is None else list(self.cutoffs)}

    @property
    def f_max(self) -> float:
        lo, hi = self.cutoffs or self.psd.default_cutoffs()
        return hi


class NoiseEnsemble:
    """Deterministic supply of noise windows for a list of sources.

    Realization r of source s is a window of ``n_steps`` samples cut from
    waveform number r // windows_per_waveform of that source. Waveform w is
    seeded with (seed, s, w), so windows are reproducible and identical for
    any consumer that asks for the same (r, n_steps, sample_rate).
    """

    def __init__(self, sources, seed=0, duration: float = DURATION,
                 fundamental: float = FUNDAMENTAL, rayleigh: bool = False):
        self.sources = list(sources)
        self.seed = seed
        self.duration = duration
        self.fundamental = fundamental
        self.rayleigh = rayleigh
        self._cache = {}

    def __len__(self):
        return len(self.sources)

    @property
    def f_max(self) -> float:
        return max((s.f_max for s in self.sources), default=0.0)

    def weights(self, num_levels: int) -> np.ndarray:
        """(n_sources, num_levels) coupling matrix in rad/us per unit x."""
        if not self.sources:
            return np.zeros((0, num_levels))
        return np.stack([s.weights(num_levels) for s in self.sources])

    def _seed(self, s, w):
        base = self.seed if isinstance(self.seed, (list, tuple)) else [self.seed]
        return [*base, s, w]

    def waveform(self, s: int, w: int, sample_rate: float, n_min: int) -> NoiseWaveform:
        key = (s, w, sample_rate, n_min)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            src = self.sources[s]
            duration = max(self.duration, n_min / sample_rate)
            self._cache[key] = synthesize(src.psd, duration, self.fundamental, src.cutoffs,
                                          seed=self._seed(s, w), sample_rate=sample_rate,
                                          t_offset=0.5 / sample_rate, rayleigh=self.rayleigh)
        return self._cache[key]

    def windows_per_waveform(self, n_steps: int, sample_rate: float) -> int:
        n_wave = int(round(self.duration * sample_rate))
        return max(1, n_wave // n_steps)

    def realization(self, r: int, n_steps: int, sample_rate: float) -> np.ndarray:
        """(n_steps, n_sources) samples for realization ``r`` at step midpoints."""
        out = np.zeros((n_steps, len(self.sources)))
        per = self.windows_per_waveform(n_steps, sample_rate)
        w, k = divmod(r, per)
        for s in range(len(self.sources)):
            wf = self.waveform(s, w, sample_rate, n_steps)
            out[:, s] = wf.samples[k * n_steps:(k + 1) * n_steps]
        return out

    def batch(self, start: int, count: int, n_steps: int, sample_rate: float) -> np.ndarray:
        return np.stack([self.realization(r, n_steps, sample_rate)
                         for r in range(start, start + count)])

    def to_dict(self):
        return {"seed": self.seed, "duration": self.duration, "fundamental": self.fundamental,
                "rayleigh": self.rayleigh, "sources": [s.to_dict() for s in self.sources]}
