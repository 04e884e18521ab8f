"""Driven multi-level sensor in the rotating frame of the drive.

The RWA Hamiltonian is diagonalized into the spin-locking frame. Dressed
states are labeled by adiabatic continuation from zero drive, so
E^(j-1) and E^(j) always refer to the dressed pair grown out of the
resonantly driven bare pair.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import linear_sum_assignment

from .errors import LabelingError, NonMonotoneError
from .sensor import LevelStructure

DEGENERACY_TOL = 1e-6  # MHz
_MAX_STEP = 5.0  # MHz of drive amplitude between labeling steps
_MIN_OVERLAP = 0.8


@dataclass(frozen=True)
class DriveSpec:
    """Spin-locking drive.

    ``amplitude`` is A_drive in MHz (Rabi rate of the 0-1 transition in the
    two-level limit), ``frequency`` the drive frequency in MHz. A frequency
    of None means resonant with the target transition.
    """

    amplitude: float
    target: int = 1
    frequency: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError("drive amplitude must be non-negative")
        if self.target < 1:
            raise ValueError("target must be >= 1")

    def drive_frequency(self, levels: LevelStructure) -> float:
        if self.frequency is None:
            return levels.transition(self.target)
        return float(self.frequency)

    def with_amplitude(self, amplitude: float) -> "DriveSpec":
        return DriveSpec(amplitude, self.target, self.frequency, self.phase)


def _check_target(levels: LevelStructure, target: int):
    if not 1 <= target <= levels.num_levels - 1:
        raise ValueError(f"target must lie in 1..{levels.num_levels - 1}")


def build_rwa_hamiltonian(levels: LevelStructure, drive: DriveSpec) -> np.ndarray:
    """Real symmetric RWA Hamiltonian in MHz (ordinary frequency units).

    The drive phase is gauged away, so ``drive.phase`` does not enter.
    """
    _check_target(levels, drive.target)
    d = levels.num_levels
    wd = drive.drive_frequency(levels)
    h = np.diag(levels.level_freqs - np.arange(d) * wd)
    off = 0.5 * drive.amplitude * levels.drive_ratios
    idx = np.arange(d - 1)
    h[idx, idx + 1] = off
    h[idx + 1, idx] = off
    return h


def _fix_gauge(v):
    idx = np.argmax(np.abs(v), axis=0)
    sgn = np.sign(v[idx, np.arange(v.shape[1])])
    sgn[sgn == 0] = 1.0
    return v * sgn


def _zero_drive_frame(levels, drive):
    """Limit of the dressed basis as A -> 0+ for a resonant drive."""
    j = drive.target
    h = build_rwa_hamiltonian(levels, drive.with_amplitude(0.0))
    energies = np.diag(h).copy()
    v = np.eye(levels.num_levels)
    s = 1.0 / np.sqrt(2.0)
    v[j - 1, j - 1], v[j, j - 1] = s, -s  # |->
    v[j - 1, j], v[j, j] = s, s  # |+>
    return energies, v


def _assign(prev, v):
    ov = np.abs(prev.T @ v) ** 2
    rows, cols = linear_sum_assignment(-ov)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, ov[rows, cols].min()


def _continue(levels, drive, a_from, v_from, a_to):
    """Follow dressed states from amplitude a_from (basis v_from) to a_to."""
    a, v_prev = a_from, v_from
    step = min(_MAX_STEP, max(a_to - a_from, 0.0))
    w = None
    while a < a_to or w is None:
        a_next = min(a + step, a_to) if step > 0 else a_to
        w_new, v_new = np.linalg.eigh(build_rwa_hamiltonian(levels, drive.with_amplitude(a_next)))
        perm, worst = _assign(v_prev, v_new)
        if worst < _MIN_OVERLAP and step > 1e-6:
            step *= 0.5
            continue
        w, v_new = w_new[perm], v_new[:, perm]
        # keep column signs continuous so the sweep does not flip phases
        sgn = np.sign(np.sum(v_prev * v_new, axis=0))
        sgn[sgn == 0] = 1.0
        v_prev = v_new * sgn
        a = a_next
        if a >= a_to:
            break
        step = min(step * 2, _MAX_STEP)
    return w, v_prev


@dataclass(frozen=True)
class DressedFrame:
    """Eigensystem of the RWA Hamiltonian at one drive setting.

    ``basis_change`` has the dressed states as columns, expressed in the bare
    rotating basis. ``alpha`` and ``beta`` hold the participation ratios for
    k = 1..d-1 of the target pair.
    """

    energies: np.ndarray
    basis_change: np.ndarray
    target: int
    amplitude: float
    drive_frequency: float

    def __post_init__(self):
        for name in ("energies", "basis_change"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_levels(self) -> int:
        return len(self.energies)

    @property
    def rabi(self) -> float:
        j = self.target
        return float(self.energies[j] - self.energies[j - 1])

    def _pair_columns(self):
        j = self.target
        v = self.basis_change
        return v[:, j - 1], v[:, j]

    @property
    def alpha_full(self) -> np.ndarray:
        """alpha^(k) for every level k = 0..d-1 (they sum to zero)."""
        lo, hi = self._pair_columns()
        return np.real(np.conj(lo) * hi)

    @property
    def beta_full(self) -> np.ndarray:
        lo, hi = self._pair_columns()
        return np.abs(lo) ** 2 - np.abs(hi) ** 2

    @property
    def alpha(self) -> np.ndarray:
        return self.alpha_full[1:]

    @property
    def beta(self) -> np.ndarray:
        return self.beta_full[1:]

    def transverse_coefficient(self, weights) -> float:
        """sum_k alpha^(k) w_k for per-level weights w_k, k = 1..d-1 or 0..d-1."""
        w = np.asarray(weights, dtype=float)
        if len(w) == self.num_levels:
            return float(np.dot(self.alpha_full, w))
        return float(np.dot(self.alpha, w))

    def longitudinal_coefficient(self, weights) -> float:
        w = np.asarray(weights, dtype=float)
        if len(w) == self.num_levels:
            return float(np.dot(self.beta_full, w))
        return float(np.dot(self.beta, w))

    def pair_population(self, state) -> float:
        """Weight of a bare-basis state vector inside the locked pair."""
        lo, hi = self._pair_columns()
        state = np.asarray(state)
        return float(abs(np.vdot(lo, state)) ** 2 + abs(np.vdot(hi, state)) ** 2)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "A_drive_MHz": self.amplitude,
            "drive_frequency_MHz": self.drive_frequency,
            "energies_MHz": self.energies.tolist(),
            "Omega_MHz": self.rabi,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "alpha_0": float(self.alpha_full[0]),
            "beta_0": float(self.beta_full[0]),
            "basis_change": self.basis_change.tolist(),
        }


def _make_frame(levels, drive, w, v):
    j = drive.target
    v = _fix_gauge(v)
    if drive.amplitude > 0 and abs(w[j] - w[j - 1]) < DEGENERACY_TOL:
        raise LabelingError(
            f"target pair ({j - 1},{j}) is degenerate within {DEGENERACY_TOL} MHz "
            f"at A={drive.amplitude} MHz"
        )
    return DressedFrame(w, v, j, float(drive.amplitude), drive.drive_frequency(levels))


def _sweep(levels, drive, amplitudes):
    _check_target(levels, drive.target)
    amps = np.asarray(amplitudes, dtype=float)
    if np.any(amps < 0):
        raise ValueError("amplitudes must be non-negative")
    if np.any(np.diff(amps) < 0):
        raise ValueError("amplitudes must be sorted ascending")
    w0, v0 = _zero_drive_frame(levels, drive)
    j = drive.target
    if abs(w0[j] - w0[j - 1]) > DEGENERACY_TOL:
        # detuned drive: the pair is already split at zero drive
        v0 = np.eye(levels.num_levels)
    frames = []
    a_prev, v_prev = 0.0, v0
    for a in amps:
        if a == 0.0:
            w, v = w0, v0
        else:
            w, v = _continue(levels, drive, a_prev, v_prev, a)
            a_prev, v_prev = a, v
        frames.append(_make_frame(levels, drive.with_amplitude(a), w, v))
    return frames


def dress(levels: LevelStructure, drive: DriveSpec) -> DressedFrame:
    """Diagonalize the RWA Hamiltonian and label states adiabatically."""
    return _sweep(levels, drive, [drive.amplitude])[0]


@dataclass(frozen=True)
class RabiCurve:
    target: int
    amplitudes: np.ndarray
    omegas: np.ndarray
    frames: tuple

    def amplitude_for(self, omega):
        """Inverse map A(Omega) by monotone interpolation."""
        om = np.asarray(omega, dtype=float)
        lo, hi = self.omegas[0], self.omegas[-1]
        if np.any(om < lo - 1e-12) or np.any(om > hi + 1e-12):
            raise ValueError(f"Omega outside tabulated range [{lo}, {hi}] MHz")
        # drop round-off ties so the inverse abscissa is strictly increasing
        keep = np.concatenate([[True], np.diff(self.omegas) > 0])
        f = PchipInterpolator(self.omegas[keep], self.amplitudes[keep])
        out = f(om)
        return float(out) if np.ndim(out) == 0 else out

    def omega_for(self, amplitude):
        f = PchipInterpolator(self.amplitudes, self.omegas)
        out = f(np.asarray(amplitude, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def rows(self):
        for a, fr in zip(self.amplitudes, self.frames):
            yield [a, fr.rabi, *fr.alpha, *fr.beta, fr.alpha_full[0], fr.beta_full[0]]

    def header(self):
        d1 = len(self.frames[0].alpha)
        # ground-level participation goes last so alpha_1.. keep their usual positions
        return (["A_drive_MHz", "Omega_MHz"]
                + [f"alpha_{k}" for k in range(1, d1 + 1)]
                + [f"beta_{k}" for k in range(1, d1 + 1)] + ["alpha_0", "beta_0"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_json(self, **kwargs) -> str:
        return json.dumps({"target": self.target,
                           "frames": [f.to_dict() for f in self.frames]}, **kwargs)


def rabi_curve(levels: LevelStructure, target: int, amplitudes, check_monotone=True) -> RabiCurve:
    """Omega(A) over a sorted amplitude list, with the inverse map attached."""
    frames = _sweep(levels, DriveSpec(0.0, target), amplitudes)
    amps = np.array([f.amplitude for f in frames])
    om = np.array([f.rabi for f in frames])
    # eigensolver round-off on level energies ~1e4 MHz; amplitudes an ulp
    # apart may tie or swap at that scale
    tol = 1e-9 * max(1.0, float(np.max(np.abs(levels.level_freqs))))
    step, da = np.diff(om), np.diff(amps)
    tie = (da > 0) & (da < DEGENERACY_TOL) & (np.abs(step) <= tol)
    if check_monotone and len(om) > 1 and np.any((step <= 0) & ~tie):
        bad = int(np.argmin(np.where(tie, np.inf, step)))
        raise NonMonotoneError(
            f"Omega(A) not increasing between A={amps[bad]} and A={amps[bad + 1]} MHz"
        )
    return RabiCurve(target, amps, om, tuple(frames))


def effective_t1(frame: DressedFrame, gamma1) -> float:
    """T1-induced transition rate between the locked pair, 1/us.

    Zero-temperature form: only lowering operators |k-1><k| contribute, each
    weighted by its bare relaxation rate. The locked polarization decays at
    half of the returned value.
    """
    g = np.asarray(gamma1, dtype=float)
    d = frame.num_levels
    if len(g) != d - 1:
        raise ValueError(f"gamma1 needs {d - 1} entries, got {len(g)}")
    v = frame.basis_change
    j = frame.target
    lo, hi = v[:, j - 1], v[:, j]
    total = 0.0
    for k in range(1, d):
        # <a|V^dag |k-1><k| V|b> = conj(V[k-1,a]) V[k,b]
        m1 = np.conj(lo[k - 1]) * hi[k]
        m2 = np.conj(hi[k - 1]) * lo[k]
        total += g[k - 1] * (abs(m1) + abs(m2))
    return float(total)


def default_gamma1(gamma01: float, num_levels: int, measured=None):
    """Per-transition T1 rates with harmonic scaling k * Gamma_1^(0,1) as fallback."""
    g = gamma01 * np.arange(1, num_levels, dtype=float)
    if measured is not None:
        measured = list(measured)
        g[: len(measured)] = measured
    return g


def _psd_value(psd, f):
    if psd is None:
        return 0.0
    return float(psd(abs(f)))


def _weights(frame, coupling):
    d = frame.num_levels
    if coupling is None:
        c = np.ones(d)
        c[0] = 0.0
        return c
    c = np.asarray(coupling, dtype=float)
    if len(c) == d - 1:
        c = np.concatenate([[0.0], c])
    return c


def _leak_channels(frame, coupling):
    """(matrix element, gap in MHz) for each pair state's nearest outside state."""
    j = frame.target
    c = _weights(frame, coupling)
    v = frame.basis_change
    e = frame.energies
    outside = [k for k in range(frame.num_levels) if k not in (j - 1, j)]
    chans = []
    for s in (j - 1, j):
        if not outside:
            break
        o = min(outside, key=lambda k: abs(e[k] - e[s]))
        m = np.sum(np.conj(v[:, o]) * c * v[:, s])
        chans.append((float(abs(m)), float(e[o] - e[s])))
    return chans


def leakage_rate(frame: DressedFrame, psd, levels: LevelStructure | None = None,
                 coupling=None) -> float:
    """Golden-rule leakage out of the locked pair driven by dephasing noise.

    For each state of the pair the energetically nearest dressed state outside
    the pair is taken as the leakage channel. ``coupling`` gives the per-level
    weights c_k of the noise operator sum_k c_k B |k><k| (default: 1 for
    k >= 1). ``psd`` is called with an ordinary frequency in MHz and must
    describe B in rad^2/us. Returns the larger channel rate in 1/us.
    """
    chans = _leak_channels(frame, coupling)
    if not chans:
        return 0.0
    return float(max(m * m * _psd_value(psd, gap) for m, gap in chans))


def leakage_matrix_element(frame: DressedFrame, coupling=None) -> float:
    """Largest leakage matrix element over the two pair states."""
    chans = _leak_channels(frame, coupling)
    return max((m for m, _ in chans), default=0.0)


@dataclass(frozen=True)
class ProbeBranch:
    lower: int
    upper: int
    photons: int
    frequency: float
    strength: float


def pump_probe_spectrum(levels: LevelStructure, drive: DriveSpec, frame: DressedFrame | None = None,
                        min_strength: float = 1e-10):
    """Probe absorption lines of the dressed sensor.

    Dressed states repeat in every excitation manifold of the drive field.
    A probe photon connects state a of one manifold to state b of the next,
    at frequency omega_drive + E^(b) - E^(a); a two-photon line connects
    next-nearest manifolds at (2 omega_drive + E^(b) - E^(a)) / 2. The
    strength is the squared dressed matrix element of the raising part of
    the drive operator (or of its square). Lines weaker than
    ``min_strength`` are dropped.
    """
    frame = dress(levels, drive) if frame is None else frame
    wd = frame.drive_frequency
    d = levels.num_levels
    up = np.zeros((d, d))
    idx = np.arange(d - 1)
    up[idx + 1, idx] = levels.drive_ratios
    v = frame.basis_change
    e = frame.energies
    out = []
    for m, op in ((1, up), (2, up @ up)):
        md = v.T @ op @ v
        for a in range(d):
            for b in range(d):
                strength = float(md[b, a] ** 2)
                if strength < min_strength:
                    continue
                freq = (m * wd + e[b] - e[a]) / m
                out.append(ProbeBranch(a, b, m, float(freq), strength))
    return out


def pump_probe_sweep(levels: LevelStructure, amplitudes, target: int = 1, min_strength=1e-10):
    """Branch frequencies over an amplitude sweep, one row per (A, branch)."""
    frames = _sweep(levels, DriveSpec(0.0, target), amplitudes)
    rows = []
    for fr in frames:
        drive = DriveSpec(fr.amplitude, target)
        for br in pump_probe_spectrum(levels, drive, frame=fr, min_strength=min_strength):
            rows.append((fr.amplitude, br))
    return rows
