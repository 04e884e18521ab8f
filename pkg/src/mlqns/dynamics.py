"""Spin-locking sequence simulation in the rotating frame of the drive.

Units: frequencies in MHz, times in us; Hamiltonians are multiplied by 2 pi
before exponentiation so that propagators act over microseconds.

A trajectory starts right after the ideal preparation pulses, ramps the
drive up with a truncated Gaussian edge, holds it for the lock duration and
is read out through a noise-free ramp-down followed by the ideal closing
pi/2 pulse. One trajectory serves every lock duration: the state is copied
out at each checkpoint and the ramp-down/readout is applied afterwards.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import kernels
from .dressing import DriveSpec, build_rwa_hamiltonian
from .errors import IntegratorError, PositivityError
from .noise import FUNDAMENTAL, NoiseEnsemble
from .sensor import LevelStructure

TWO_PI = 2 * math.pi
TRACE_TOL = 1e-6
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class SequenceSpec:
    """One spin-locking experiment on transition (target-1, target).

    ``edge_sigma`` is the Gaussian edge width in ns; ``durations`` are lock
    times in us; ``t1_rates`` lists Gamma_1^(k-1,k) in 1/us for
    k = 1..d-1 (None: no relaxation). ``dt`` overrides the automatic step.
    """

    drive: DriveSpec
    durations: tuple
    ensemble: int = 200
    edge_sigma: float = 12.0
    t1_rates: tuple | None = None
    dt: float | None = None
    seed: int = 0
    method: str = "auto"

    def __post_init__(self):
        tau = tuple(float(t) for t in self.durations)
        if len(tau) == 0:
            raise ValueError("durations must not be empty")
        if any(t < 0 for t in tau) or any(b < a for a, b in zip(tau, tau[1:])):
            raise ValueError("durations must be non-negative and sorted ascending")
        object.__setattr__(self, "durations", tau)
        if self.ensemble < 1:
            raise ValueError("ensemble must be >= 1")
        if not self.edge_sigma > 0:
            raise ValueError("edge_sigma must be positive")
        if self.t1_rates is not None:
            rates = tuple(float(g) for g in self.t1_rates)
            if any(g < 0 for g in rates):
                raise ValueError("t1 rates must be non-negative")
            object.__setattr__(self, "t1_rates", rates)
        if self.method not in ("auto", "pure", "density"):
            raise ValueError("method must be auto, pure or density")

    @property
    def target(self) -> int:
        return self.drive.target

    def to_dict(self) -> dict:
        out = asdict(self)
        out["durations"] = list(self.durations)
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class DecayTrace:
    """Readout populations versus lock duration, ensemble averaged."""

    tau: np.ndarray
    pop_lower: np.ndarray
    pop_upper: np.ndarray
    pop_leak: np.ndarray
    polarization: np.ndarray
    stderr: np.ndarray
    target: int = 1
    populations: np.ndarray | None = None
    samples: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tau", "pop_lower", "pop_upper", "pop_leak", "polarization", "stderr"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau_us", "pop_lower", "pop_upper", "pop_leak", "polarization", "stderr"])
        for row in zip(self.tau, self.pop_lower, self.pop_upper, self.pop_leak,
                       self.polarization, self.stderr):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def metadata(self) -> dict:
        return dict(self.meta, target=self.target, num_points=len(self.tau))

    @classmethod
    def from_polarization(cls, tau, polarization, stderr, target=1):
        """Trace built from polarization alone (pair population fixed at one)."""
        p = np.asarray(polarization, dtype=float)
        lower = 0.5 * (1 + p)
        upper = 0.5 * (1 - p)
        return cls(np.asarray(tau, float), lower, upper, np.zeros_like(p), p,
                   np.asarray(stderr, float), target)


@dataclass
class RabiTrace:
    times: np.ndarray
    populations: np.ndarray
    frequency: float
    target: int


# ---------------------------------------------------------------- pulses and envelopes

def ry(d: int, a: int, b: int, theta: float) -> np.ndarray:
    """Rotation exp(-i theta sigma_y / 2) on levels (a, b); a plays |0>."""
    u = np.eye(d, dtype=complex)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    u[a, a], u[a, b] = c, -s
    u[b, a], u[b, b] = s, c
    return u


def prep_unitary(d: int, target: int) -> np.ndarray:
    """pi ladder up to |target-1> followed by a y pi/2 on the target pair."""
    u = np.eye(d, dtype=complex)
    for k in range(1, target):
        u = ry(d, k - 1, k, math.pi) @ u
    return ry(d, target - 1, target, math.pi / 2) @ u


def closing_unitary(d: int, target: int) -> np.ndarray:
    """Maps the locked state (|j-1> + |j>)/sqrt2 back onto |j-1>."""
    return ry(d, target - 1, target, -math.pi / 2)


def ramp_envelope(t, sigma: float):
    """Rising truncated Gaussian edge on [0, 3 sigma], rescaled to reach 1."""
    t = np.asarray(t, dtype=float)
    g0 = math.exp(-4.5)
    u = np.clip(t, 0.0, 3 * sigma) - 3 * sigma
    env = (np.exp(-u * u / (2 * sigma * sigma)) - g0) / (1 - g0)
    return np.where(t <= 0, 0.0, np.where(t >= 3 * sigma, 1.0, env))


def _expm_herm(h, t):
    """exp(-i h t) for Hermitian h."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def _ramp_steps(dt, sigma_us):
    # at least two steps so the first and last ramp half-steps have their own table rows
    n_ramp = max(2, int(math.ceil(3 * sigma_us / dt - 1e-9)))
    t0 = n_ramp * dt - 3 * sigma_us  # ramp starts this far into the first step
    mids = (np.arange(n_ramp) + 0.5) * dt - t0
    return n_ramp, ramp_envelope(mids, sigma_us)


def _edge_propagator(gen, env, t_a, t_b, h_sub, step_exp):
    """Time-ordered product of step_exp(gen(env(t)), dt) over [t_a, t_b] on a sub-grid."""
    n = max(1, int(math.ceil((t_b - t_a) / h_sub - 1e-9)))
    dt = (t_b - t_a) / n
    mids = t_a + (np.arange(n) + 0.5) * dt
    out = None
    for e in env(mids):
        u = step_exp(gen(float(e)), dt)
        out = u if out is None else u @ out
    return out


def _hamiltonians(levels, drive, envs):
    base = build_rwa_hamiltonian(levels, drive.with_amplitude(0.0))
    full = build_rwa_hamiltonian(levels, drive)
    off = full - base
    return [TWO_PI * (base + e * off) for e in envs], TWO_PI * full


def choose_dt(levels: LevelStructure, drive: DriveSpec, f_max: float = 0.0) -> float:
    """Default time step in us.

    The drive part of the Hamiltonian is exponentiated exactly, so the step
    only has to resolve the noise (8 samples per period of the highest
    harmonic) and the drive coupling (4 per period of the largest
    lambda * A). The rate sits on the 4 kHz harmonic grid so noise can be
    sampled at step midpoints without interpolation.
    """
    coupling = float(np.max(levels.drive_ratios)) * drive.amplitude
    fs = max(8.0 * f_max, 4.0 * coupling, 50.0)
    n = int(math.ceil(fs / FUNDAMENTAL))
    return 1.0 / (n * FUNDAMENTAL)


def _lindblad_super(h, gam_levels):
    """Row-major vec superoperator of -i[h, .] plus T1 dissipators."""
    d = h.shape[0]
    eye = np.eye(d)
    s = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for k in range(1, d):
        g = gam_levels[k]
        if g == 0:
            continue
        lop = np.zeros((d, d))
        lop[k - 1, k] = math.sqrt(g)
        ld = lop.T @ lop
        s += np.kron(lop, lop) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T)
    return s


def _level_rates(t1_rates, d):
    gam = np.zeros(d)
    if t1_rates is not None:
        r = np.asarray(t1_rates, dtype=float)
        if len(r) < d - 1:
            raise ValueError(f"t1_rates needs {d - 1} entries")
        gam[1:] = r[: d - 1]
    return gam


@dataclass
class _Tables:
    dt: float
    n_ramp: int
    ph: np.ndarray
    pm: np.ndarray
    u_out: np.ndarray
    sh: np.ndarray | None = None
    sm: np.ndarray | None = None


EDGE_SUBSTEPS = 50  # fine steps per edge sigma inside ramp propagators


def build_tables(levels, drive, dt, sigma_ns, gam=None, density=False) -> _Tables:
    """Half-step propagator tables for the kernels.

    Row i < n_ramp covers ramp step i. The drive varies inside a ramp step,
    so its halves are integrated on a sub-grid of sigma / EDGE_SUBSTEPS and
    the two halves differ. The kernels only ever use row 0 as a first half
    and row n_ramp - 1 as a second half (checkpoints start after the ramp),
    which is what the ``ph``/``sh`` rows hold; ``pm``/``sm`` merge the second
    half of step i with the first half of step i + 1.
    """
    sigma = sigma_ns * 1e-3
    d = levels.num_levels
    n_ramp, _ = _ramp_steps(dt, sigma)
    t0 = n_ramp * dt - 3 * sigma
    base = TWO_PI * build_rwa_hamiltonian(levels, drive.with_amplitude(0.0))
    off = TWO_PI * build_rwa_hamiltonian(levels, drive) - base
    h_sub = sigma / EDGE_SUBSTEPS

    def up(t):
        return ramp_envelope(t, sigma)

    def down(t):
        return ramp_envelope(3 * sigma - t, sigma)

    def tables(gen, step_exp):
        first, second = [], []
        for i in range(n_ramp):
            a = i * dt - t0
            first.append(_edge_propagator(gen, up, a, a + 0.5 * dt, h_sub, step_exp))
            second.append(_edge_propagator(gen, up, a + 0.5 * dt, a + dt, h_sub, step_exp))
        plat = step_exp(gen(1.0), 0.5 * dt)
        ph = [first[0]] + first[1:n_ramp - 1] + [second[n_ramp - 1], plat]
        nxt = first[1:] + [plat]
        pm = [nxt[i] @ second[i] for i in range(n_ramp)] + [plat @ plat]
        return np.array(ph), np.array(pm)

    def hamiltonian(e):
        return base + e * off

    ph, pm = tables(hamiltonian, _expm_herm)
    u_down = _edge_propagator(hamiltonian, down, 0.0, 3 * sigma, h_sub, _expm_herm)
    u_out = closing_unitary(d, drive.target) @ u_down
    tab = _Tables(dt, n_ramp, ph, pm, u_out)
    if density:
        gam = np.zeros(d) if gam is None else gam
        sh, sm = tables(lambda e: _lindblad_super(hamiltonian(e), gam), lambda g, t: expm(g * t))
        tab.sh, tab.sm = sh, sm
    return tab


# ---------------------------------------------------------------- main entry

def _normalize_noise(noise, d):
    """Return (ensemble-or-None, array-or-None, weights)."""
    if noise is None:
        return None, None, np.zeros((0, d))
    if isinstance(noise, NoiseEnsemble):
        if len(noise) == 0:
            return None, None, np.zeros((0, d))
        return noise, None, noise.weights(d)
    arr = np.asarray(noise, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != d:
        raise ValueError("per-level noise must have shape (n_real, d, n_steps)")
    return None, np.ascontiguousarray(arr.transpose(0, 2, 1)), np.eye(d)


def _summarize(pops, target, tau, meta, keep_samples):
    j = target
    mean = pops.mean(axis=0)
    lo, up = mean[:, j - 1], mean[:, j]
    tot = lo + up
    pol = (lo - up) / tot
    n = pops.shape[0]
    if n > 1:
        # delta-method linearization of the ratio estimator
        dl = 2 * up / tot ** 2
        du = -2 * lo / tot ** 2
        z = dl[None, :] * pops[:, :, j - 1] + du[None, :] * pops[:, :, j]
        se = z.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.zeros_like(pol)
    leak = np.clip(1.0 - tot, 0.0, None)
    samples = pops[:, :, [j - 1, j]].copy() if keep_samples else None
    return DecayTrace(tau, lo, up, leak, np.clip(pol, -1, 1), se, target, mean, samples, meta)


def simulate_sequence(levels: LevelStructure, seq: SequenceSpec, noise=None,
                      backend: str | None = None, keep_samples: bool = False,
                      chunk_bytes: float = 64e6) -> DecayTrace:
    """Ensemble-averaged spin-locking decay trace.

    ``noise`` may be None, a :class:`NoiseEnsemble`, or an array of per-level
    series B^(k) in rad/us with shape (n_real, d, n_steps) sampled at step
    midpoints (then ``seq.dt`` must be set).
    """
    d = levels.num_levels
    j = seq.target
    if not 1 <= j <= d - 1:
        raise ValueError(f"target must lie in 1..{d - 1}")
    ens, arr, w = _normalize_noise(noise, d)
    gam = _level_rates(seq.t1_rates, d)
    f_max = ens.f_max if ens is not None else 0.0
    if arr is not None and seq.dt is None:
        raise ValueError("explicit noise series need seq.dt")
    dt = seq.dt or choose_dt(levels, seq.drive, f_max)

    method = seq.method
    noisy = ens is not None or arr is not None
    if method == "auto":
        method = "pure" if noisy else "density"
    tab = build_tables(levels, seq.drive, dt, seq.edge_sigma, gam, density=(method == "density"))

    steps = np.rint(np.asarray(seq.durations) / dt).astype(np.int64)
    ckpt = tab.n_ramp - 1 + steps
    if np.any(np.diff(ckpt) <= 0):
        ckpt, keep = np.unique(ckpt, return_index=True)
    n_steps = int(ckpt[-1]) + 1
    tau = (ckpt - (tab.n_ramp - 1)) * dt
    n_src = w.shape[0]

    if arr is not None:
        n_real = arr.shape[0]
        if arr.shape[1] < n_steps:
            raise ValueError(f"noise series cover {arr.shape[1]} steps, need {n_steps}")
    else:
        # a noiseless density run is exact once; jump trajectories still need the ensemble
        stochastic = noisy or (method == "pure" and gam.any())
        n_real = seq.ensemble if stochastic else 1

    psi0 = prep_unitary(d, j)[:, 0]
    rng = np.random.default_rng([seq.seed, 7919])
    fs = 1.0 / dt
    per_real = max(1, n_steps * max(n_src, 1) * 8)
    chunk = int(max(1, min(n_real, chunk_bytes // per_real)))
    out_pops = np.empty((n_real, len(ckpt), d))

    # expected jumps bound the pre-drawn uniforms; overflow triggers a redraw
    max_jumps = int(8 + 4 * gam.sum() * n_steps * dt)
    for start in range(0, n_real, chunk):
        cnt = min(chunk, n_real - start)
        if arr is not None:
            x = arr[start:start + cnt, :n_steps, :]
        elif ens is not None:
            x = ens.batch(start, cnt, n_steps, fs)
        else:
            x = np.zeros((cnt, n_steps, 0))
        if method == "density":
            rho0 = np.outer(psi0, psi0.conj())
            rhos = kernels.propagate_density(rho0, tab.sh, tab.sm, tab.n_ramp, x, w, dt,
                                             ckpt, backend=backend)
            rhos = np.einsum("ab,rnbc,dc->rnad", tab.u_out, rhos, tab.u_out.conj())
            tr = np.einsum("rnaa->rn", rhos)
            if np.max(np.abs(tr - 1)) > TRACE_TOL:
                raise IntegratorError(f"trace deviates from 1 by {np.max(np.abs(tr - 1)):.2e}")
            herm = 0.5 * (rhos + np.conj(np.swapaxes(rhos, -1, -2)))
            lam_min = np.linalg.eigvalsh(herm).min()
            if lam_min < -POSITIVITY_TOL:
                raise PositivityError(f"density matrix eigenvalue {lam_min:.2e}")
            out_pops[start:start + cnt] = np.real(np.einsum("rnaa->rna", rhos)) / np.real(tr)[..., None]
        else:
            for _ in range(6):
                jr = rng.uniform(size=(cnt, max_jumps, 2))
                states, _, overflow = kernels.propagate_pure(
                    psi0, tab.ph, tab.pm, tab.n_ramp, x, w, dt, gam, ckpt, jr, backend=backend)
                if not overflow.any():
                    break
                max_jumps *= 4
            else:
                raise IntegratorError("quantum-jump buffer overflow")
            states = np.einsum("ab,rnb->rna", tab.u_out, states)
            p = np.abs(states) ** 2
            norm = p.sum(axis=-1, keepdims=True)
            if not np.all(np.isfinite(norm)) or np.any(norm <= 0):
                raise IntegratorError("state norm collapsed during propagation")
            out_pops[start:start + cnt] = p / norm

    meta = {"dt_us": dt, "n_ramp": tab.n_ramp, "ensemble": int(n_real), "method": method,
            "backend": backend or kernels.backend_name(), "seq_digest": seq.digest(),
            "sequence": seq.to_dict()}
    if ens is not None:
        meta["noise"] = ens.to_dict()
    return _summarize(out_pops, j, tau, meta, keep_samples)


# ---------------------------------------------------------------- Rabi oscillations

def dominant_frequency(t, y, pad: int = 8) -> float:
    """Peak of |FFT| of a uniformly sampled signal with parabolic refinement."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y = (y - y.mean()) * np.hanning(len(y))
    n = len(y) * pad
    spec = np.abs(np.fft.rfft(y, n=n))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    step = t[1] - t[0]
    return float((k + shift) / (n * step))


def simulate_rabi(levels: LevelStructure, drive: DriveSpec, duration: float,
                  n_points: int | None = None, edge_sigma: float = 12.0,
                  start_level: int | None = None) -> RabiTrace:
    """Populations after a Gaussian-edged pulse of variable plateau length.

    The sensor starts in |target-1> (ideal pi ladder). The plateau is
    propagated exactly; the edges are stepped finely. The returned
    ``frequency`` is the dominant oscillation of P(j-1) - P(j) in MHz.
    """
    d = levels.num_levels
    j = drive.target
    start = j - 1 if start_level is None else start_level
    sigma = edge_sigma * 1e-3
    dt_edge = sigma / 200
    n_ramp, envs = _ramp_steps(dt_edge, sigma)
    hs, h_plat = _hamiltonians(levels, drive, envs)
    u_up = np.eye(d, dtype=complex)
    for h in hs:
        u_up = _expm_herm(h, dt_edge) @ u_up
    u_down = np.eye(d, dtype=complex)
    for h in reversed(hs):
        u_down = _expm_herm(h, dt_edge) @ u_down
    w, v = np.linalg.eigh(h_plat)
    spread = (w[-1] - w[0]) / TWO_PI
    if n_points is None:
        n_points = int(math.ceil(2.5 * spread * duration)) + 1
    times = np.linspace(0.0, duration, n_points)
    psi = np.zeros(d, dtype=complex)
    psi[start] = 1.0
    c = v.conj().T @ (u_up @ psi)
    states = (v[None, :, :] * np.exp(-1j * np.outer(times, w))[:, None, :]) @ c
    states = states @ u_down.T
    pops = np.abs(states) ** 2
    freq = dominant_frequency(times, pops[:, j - 1] - pops[:, j])
    return RabiTrace(times, pops, freq, j)


# ---------------------------------------------------------------- reference integrator

def reference_populations(levels: LevelStructure, seq: SequenceSpec, noise_fn=None,
                          rtol: float = 1e-9, atol: float = 1e-11):
    """Adaptive-step solution of the same sequence for a single realization.

    ``noise_fn(t)`` returns the per-level B^(k)(t) in rad/us at time t from
    the start of the ramp. T1 rates in ``seq`` are honoured through the
    Lindblad equation. Returns (tau, populations) with the same ramp-down
    and readout as :func:`simulate_sequence`.
    """
    d = levels.num_levels
    j = seq.target
    sigma = seq.edge_sigma * 1e-3
    gam = _level_rates(seq.t1_rates, d)
    base = TWO_PI * build_rwa_hamiltonian(levels, seq.drive.with_amplitude(0.0))
    off = TWO_PI * build_rwa_hamiltonian(levels, seq.drive) - base
    dt = seq.dt or choose_dt(levels, seq.drive)
    n_ramp, _ = _ramp_steps(dt, sigma)
    t_ramp = n_ramp * dt
    t0 = t_ramp - 3 * sigma
    steps = np.rint(np.asarray(seq.durations) / dt)
    t_eval = t_ramp + steps * dt
    lops = []
    for k in range(1, d):
        if gam[k] > 0:
            lop = np.zeros((d, d))
            lop[k - 1, k] = math.sqrt(gam[k])
            lops.append(lop)
    ldl = sum((l.T @ l for l in lops), np.zeros((d, d)))

    def rhs(t, y):
        rho = (y[: d * d] + 1j * y[d * d:]).reshape(d, d)
        h = base + float(ramp_envelope(t - t0, sigma)) * off
        if noise_fn is not None:
            h = h + np.diag(noise_fn(t))
        dr = -1j * (h @ rho - rho @ h)
        for l in lops:
            dr += l @ rho @ l.T
        dr -= 0.5 * (ldl @ rho + rho @ ldl)
        dr = dr.reshape(-1)
        return np.concatenate([dr.real, dr.imag])

    psi0 = prep_unitary(d, j)[:, 0]
    rho0 = np.outer(psi0, psi0.conj()).reshape(-1)
    sol = solve_ivp(rhs, (0.0, float(t_eval[-1])), np.concatenate([rho0.real, rho0.imag]),
                    method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorError(sol.message)
    tab = build_tables(levels, seq.drive, dt, seq.edge_sigma)
    pops = []
    for y in sol.y.T:
        rho = (y[: d * d] + 1j * y[d * d:]).reshape(d, d)
        rho = tab.u_out @ rho @ tab.u_out.conj().T
        pops.append(np.real(np.diag(rho)))
    return steps * dt, np.array(pops)
