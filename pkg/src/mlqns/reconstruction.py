"""From decay traces to noise spectra.

Chain of operations for one spin-locking point:

1. ``fit_decay`` fits polarization(tau) = a exp(-Gamma tau) + sz_eq.
2. ``extract_transverse_psd`` differences the rates measured with and
   without engineered noise, S_perp(Omega) = (1 + sz_pres)/2 (G_pres - G_abs).
3. ``correct_estimate`` moves the abscissa from lambda A to the dressed
   splitting Omega and divides by the squared transduction coefficient
   (sum_k alpha^(k) w_k)^2, w_k being the per-level coupling in rad/us.
4. ``discriminate_sources`` splits two-transition spectra into flux-like
   (equal on both transitions) and photon-like (ratio r) components.

Rates are in 1/us, frequencies in MHz, transverse spectra in 1/us.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit

from .dressing import DressedFrame
from .errors import (FitError, IllConditionedError, IllConditionedWarning,
                     NegativeEstimateWarning)
from .noise import FluxCoupling
from .sensor import LevelStructure

MAX_ITER = 200
# 1 Phi_0^2 us expressed in micro-Phi_0^2 per Hz
UPHI0_SQ_PER_HZ = 1e6


# ---------------------------------------------------------------- decay fits

@dataclass(frozen=True)
class RelaxationFit:
    """Result of fitting a locked-polarization trace.

    Model: polarization = amplitude (1 - sz_eq) exp(-gamma_1rho tau) + sz_eq.
    ``offset`` is the additive constant of the fit and equals ``sz_eq``;
    ``amplitude`` absorbs preparation and readout imperfections.
    """

    gamma_1rho: float
    sz_eq: float
    amplitude: float
    offset: float
    stderr: dict
    chi2_reduced: float
    rate_unresolved: bool = False
    error_method: str = "covariance"
    n_points: int = 0
    residuals: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def gamma_err(self) -> float:
        return self.stderr["gamma_1rho"]

    @property
    def sz_err(self) -> float:
        return self.stderr["sz_eq"]

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("residuals")
        return out


def _model(t, a, g, c):
    return a * np.exp(-g * t) + c


def _jac(t, a, g, c):
    e = np.exp(-g * t)
    return np.column_stack([e, -a * t * e, np.ones_like(t)])


def _initial_guess(t, y):
    n = len(t)
    tail = max(2, n // 4)
    c0 = float(np.mean(y[-tail:]))
    half = max(2, n // 2)
    yy = y[:half] - c0
    ok = yy > 1e-12
    span = float(t[-1] - t[0]) or 1.0
    g0 = 1.0 / span
    if ok.sum() >= 2:
        slope = np.polyfit(t[:half][ok], np.log(yy[ok]), 1)[0]
        if np.isfinite(slope) and slope < 0:
            g0 = -slope
    a0 = float(y[0] - c0) * math.exp(g0 * t[0])
    if a0 == 0.0:
        a0 = 1.0
    return [a0, g0, c0]


def _weights(stderr):
    s = np.asarray(stderr, dtype=float)
    pos = s[s > 0]
    if pos.size == 0:
        return None
    floor = 1e-3 * float(np.median(pos))
    return np.where(s > 0, s, floor)


def _raw_fit(t, y, sigma):
    p0 = _initial_guess(t, y)
    kw = dict(p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
              bounds=([-np.inf, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
              method="trf", max_nfev=MAX_ITER * 4)
    try:
        # a decay much slower than the window makes amplitude and offset
        # nearly degenerate; retry with default tolerances, an analytic
        # Jacobian and a larger evaluation budget
        try:
            popt, pcov = curve_fit(_model, t, y, xtol=1e-15, ftol=1e-15, gtol=1e-15, **kw)
        except RuntimeError:
            kw["max_nfev"] = MAX_ITER * 25
            popt, pcov = curve_fit(_model, t, y, jac=_jac, **kw)
    except (RuntimeError, ValueError) as exc:
        resid = y - _model(t, *p0)
        raise FitError(f"exponential fit did not converge: {exc}", resid) from exc
    return popt, pcov


def _pack(t, y, sigma, popt, pcov, errs, method):
    a, g, c = (float(v) for v in popt)
    resid = y - _model(t, *popt)
    dof = max(1, len(t) - 3)
    z = resid / sigma if sigma is not None else resid
    chi2 = float(np.sum(z * z) / dof)
    one_minus = 1.0 - c
    amp = a / one_minus if abs(one_minus) > 1e-12 else float("inf")
    if errs is None:
        perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
        errs = {"amplitude": float(perr[0]), "gamma_1rho": float(perr[1]),
                "sz_eq": float(perr[2]), "offset": float(perr[2])}
    span = float(t[-1])
    unresolved = g < 1.0 / (10.0 * span) if span > 0 else True
    return RelaxationFit(g, c, amp, c, errs, chi2, bool(unresolved), method, len(t), resid)


def fit_decay(trace, errors: str = "auto", groups: int = 20) -> RelaxationFit:
    """Weighted least-squares exponential fit of a decay trace.

    ``trace`` is a :class:`~mlqns.dynamics.DecayTrace` or a tuple
    (tau, polarization, stderr). ``errors`` selects the parameter errors:
    "covariance" uses the covariance at the optimum, "jackknife" a
    delete-one-group jackknife over stored per-realization samples (this
    accounts for the correlation between lock durations that share a
    trajectory); "auto" picks the jackknife when samples are available.
    """
    if isinstance(trace, tuple):
        t, y, s = (np.asarray(v, dtype=float) for v in trace)
        samples = None
    else:
        t, y, s = trace.tau, trace.polarization, trace.stderr
        samples = trace.samples
    if len(t) < 6:
        raise ValueError("fit_decay needs at least 6 lock durations")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(s))):
        raise FitError("trace contains non-finite values", np.asarray(y))
    sigma = _weights(s)
    popt, pcov = _raw_fit(t, y, sigma)
    if not np.all(np.isfinite(popt)):
        raise FitError("fit returned non-finite parameters", y - _model(t, *_initial_guess(t, y)))

    use_jk = errors == "jackknife" or (errors == "auto" and samples is not None
                                       and samples.shape[0] >= groups)
    if errors == "jackknife" and samples is None:
        raise ValueError("jackknife errors need a trace simulated with keep_samples=True")
    if not use_jk:
        return _pack(t, y, sigma, popt, pcov, None, "covariance")

    n = samples.shape[0]
    g = min(groups, n)
    idx = np.array_split(np.arange(n), g)
    tot = samples.sum(axis=0)
    est = []
    for part in idx:
        sub = (tot - samples[part].sum(axis=0)) / (n - len(part))
        pol = (sub[:, 0] - sub[:, 1]) / (sub[:, 0] + sub[:, 1])
        p, _ = _raw_fit(t, pol, sigma)
        est.append(p)
    est = np.array(est)
    var = (g - 1) / g * np.sum((est - est.mean(axis=0)) ** 2, axis=0)
    perr = np.sqrt(var)
    errs = {"amplitude": float(perr[0]), "gamma_1rho": float(perr[1]),
            "sz_eq": float(perr[2]), "offset": float(perr[2])}
    return _pack(t, y, sigma, popt, pcov, errs, "jackknife")


# ---------------------------------------------------------------- rate <-> spectrum relations

def forward_rates(s_plus, s_minus, s_phi_plus=0.0, s_phi_minus=0.0, gamma1_eff=0.0):
    """Locked relaxation rate and equilibrium polarization from spectra.

    ``s_plus``/``s_minus`` are the engineered transverse spectra at +Omega
    and -Omega, ``s_phi_*`` a native dephasing background and
    ``gamma1_eff`` the T1 transition rate between the locked states.
    """
    tot = s_plus + s_minus + s_phi_plus + s_phi_minus
    gamma = tot + 0.5 * gamma1_eff
    sz = (s_plus - s_minus + s_phi_plus - s_phi_minus) / tot if tot > 0 else 0.0
    return gamma, sz


def spectra_from_rates(gamma, sz_eq):
    """Inverse of :func:`forward_rates` without background: (S(+Omega), S(-Omega))."""
    return 0.5 * gamma * (1.0 + sz_eq), 0.5 * gamma * (1.0 - sz_eq)


@dataclass(frozen=True)
class TransverseEstimate:
    value: float
    sigma: float
    negative: bool = False


def extract_transverse_psd(fit_pres: RelaxationFit, fit_abs: RelaxationFit) -> TransverseEstimate:
    """S_perp(Omega) from fits with and without engineered noise."""
    dg = fit_pres.gamma_1rho - fit_abs.gamma_1rho
    fac = 0.5 * (1.0 + fit_pres.sz_eq)
    val = fac * dg
    sd = math.hypot(fit_pres.gamma_err, fit_abs.gamma_err)
    sig = math.sqrt((fac * sd) ** 2 + (0.5 * dg * fit_pres.sz_err) ** 2)
    neg = dg < -2 * sd
    if neg:
        warnings.warn(f"rate with engineered noise is {-dg:.3g}/us below the background "
                      "(sensitivity floor reached)", NegativeEstimateWarning, stacklevel=2)
    return TransverseEstimate(float(val), float(sig), bool(neg))


def transverse_psd(frame: DressedFrame, psd, weights, omega=None) -> float:
    """Predicted S_perp at the locked splitting for one noise source.

    ``weights`` are the per-level couplings in rad/us per unit of the noise
    variable and ``psd`` its spectrum in (unit^2 us).
    """
    om = frame.rabi if omega is None else omega
    c = frame.transverse_coefficient(weights)
    return float(c * c * psd(abs(om)))


# ---------------------------------------------------------------- PSD estimates

@dataclass(frozen=True)
class PsdPoint:
    amplitude: float
    omega_naive: float
    s_transverse: float
    sigma: float
    omega_corrected: float = float("nan")
    s_lab: float = float("nan")
    sigma_lab: float = float("nan")
    s_lab_naive: float = float("nan")
    sigma_lab_naive: float = float("nan")
    coefficient: float = float("nan")
    flags: tuple = ()

    def with_flag(self, flag: str) -> "PsdPoint":
        if flag in self.flags:
            return self
        return replace(self, flags=self.flags + (flag,))


_CSV_COLUMNS = ["A_drive_MHz", "omega_naive_MHz", "omega_corrected_MHz", "S_transverse_per_us",
                "sigma_transverse_per_us", "S_lab", "sigma", "S_lab_naive", "sigma_naive",
                "transduction_rad_per_us", "flags"]


@dataclass(frozen=True)
class PsdEstimate:
    """Reconstructed spectrum points for one target transition.

    ``s_lab`` is in (noise unit)^2 us, e.g. Phi_0^2 us for flux noise;
    ``lab_units`` labels it. Both the naive (two-level) and corrected
    values are kept.
    """

    points: tuple
    target: int
    corrections_applied: dict = field(default_factory=lambda: {"freq_shift": False,
                                                                "amplitude": False})
    lab_units: str = ""

    @classmethod
    def from_measurements(cls, levels: LevelStructure, target: int, amplitudes, values, sigmas,
                          flags=None) -> "PsdEstimate":
        lam = float(levels.drive_ratios[target - 1])
        flags = flags or [()] * len(amplitudes)
        pts = tuple(PsdPoint(float(a), lam * float(a), float(v), float(s), flags=tuple(f))
                    for a, v, s, f in zip(amplitudes, values, sigmas, flags))
        return cls(pts, target)

    @property
    def fully_corrected(self) -> bool:
        return all(self.corrections_applied.values())

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    def to_csv(self, display: str = "native") -> str:
        scale = UPHI0_SQ_PER_HZ if display == "uphi0" else 1.0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_COLUMNS)
        for p in self.points:
            w.writerow([repr(float(p.amplitude)), repr(float(p.omega_naive)),
                        repr(float(p.omega_corrected)), repr(float(p.s_transverse)),
                        repr(float(p.sigma)), repr(float(p.s_lab * scale)),
                        repr(float(p.sigma_lab * scale)), repr(float(p.s_lab_naive * scale)),
                        repr(float(p.sigma_lab_naive * scale)), repr(float(p.coefficient)),
                        "|".join(p.flags)])
        return buf.getvalue()

    def to_dict(self, display: str = "native") -> dict:
        scale = UPHI0_SQ_PER_HZ if display == "uphi0" else 1.0
        pts = []
        for p in self.points:
            d = asdict(p)
            d["flags"] = list(p.flags)
            for k in ("s_lab", "sigma_lab", "s_lab_naive", "sigma_lab_naive"):
                d[k] = d[k] * scale
            pts.append(d)
        units = "uPhi0^2/Hz" if display == "uphi0" else self.lab_units
        return {"target": self.target, "corrections_applied": dict(self.corrections_applied),
                "lab_units": units, "points": pts}

    def to_json(self, display: str = "native", **kwargs) -> str:
        return json.dumps(self.to_dict(display), **kwargs)


def _small_drive_coefficient(levels, target, weights):
    # alpha -> (+1/2 on j-1, -1/2 on j) in the weak-drive limit
    w = np.asarray(weights, dtype=float)
    return 0.5 * (w[target - 1] - w[target])


def correct_estimate(estimate: PsdEstimate, frames, levels: LevelStructure, coupling=None,
                     lab_units: str = "Phi0^2 us", ill_conditioned: float = 1e-3) -> PsdEstimate:
    """Apply the frequency shift and the amplitude (transduction) correction.

    ``frames`` holds one :class:`DressedFrame` per point, in order.
    ``coupling`` defaults to flux noise through the level sensitivities.
    Already corrected estimates are returned unchanged.
    """
    if estimate.fully_corrected:
        return estimate
    frames = list(frames)
    if len(frames) != len(estimate.points):
        raise ValueError("need one dressed frame per estimate point")
    coupling = coupling or FluxCoupling(tuple(levels.flux_sens))
    d = levels.num_levels
    w = coupling.weights(d)
    c_naive = _small_drive_coefficient(levels, estimate.target, w)
    out = []
    for p, fr in zip(estimate.points, frames):
        if fr.target != estimate.target:
            raise ValueError("frame target does not match the estimate")
        c = fr.transverse_coefficient(w)
        q = p
        if abs(c) < ill_conditioned * abs(c_naive):
            warnings.warn(f"transduction coefficient {c:.3g} rad/us is ill-conditioned at "
                          f"A={p.amplitude} MHz", IllConditionedWarning, stacklevel=2)
            q = q.with_flag("ill_conditioned")
        s_lab = p.s_transverse / c ** 2 if c != 0 else float("inf")
        sig_lab = p.sigma / c ** 2 if c != 0 else float("inf")
        s_nv = p.s_transverse / c_naive ** 2 if c_naive != 0 else float("inf")
        sig_nv = p.sigma / c_naive ** 2 if c_naive != 0 else float("inf")
        out.append(replace(q, omega_corrected=fr.rabi, s_lab=s_lab, sigma_lab=sig_lab,
                           s_lab_naive=s_nv, sigma_lab_naive=sig_nv, coefficient=c))
    om = np.array([p.omega_corrected for p in out])
    amp = np.array([p.amplitude for p in out])
    order = np.argsort(amp)
    if len(om) > 1 and np.any(np.diff(om[order]) <= 0):
        warnings.warn("corrected frequencies are not monotone in drive amplitude",
                      IllConditionedWarning, stacklevel=2)
    return PsdEstimate(tuple(out), estimate.target, {"freq_shift": True, "amplitude": True},
                       lab_units)


def flag_floor(estimate: PsdEstimate, background_rates, ratio: float = 0.1) -> PsdEstimate:
    """Flag points whose noise-induced rate 2 S_perp is below ``ratio`` times
    the background (T1 and native) rate, or not significant at 2 sigma."""
    bg = np.broadcast_to(np.asarray(background_rates, dtype=float), (len(estimate.points),))
    out = []
    for p, b in zip(estimate.points, bg):
        q = p
        if 2 * p.s_transverse < ratio * b:
            q = q.with_flag("below_t1_floor")
        if p.s_transverse < 2 * p.sigma:
            q = q.with_flag("insignificant")
        out.append(q)
    return replace(estimate, points=tuple(out))


# ---------------------------------------------------------------- two-transition discrimination

@dataclass(frozen=True)
class SourceSeparation:
    omega: np.ndarray
    s_flux: np.ndarray
    s_photon: np.ndarray
    sigma_flux: np.ndarray
    sigma_photon: np.ndarray
    s01: np.ndarray
    s12: np.ndarray
    ratio: float
    flags: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega_MHz", "S01", "S12", "S_flux", "sigma_flux", "S_photon",
                    "sigma_photon", "flags"])
        for row in zip(self.omega, self.s01, self.s12, self.s_flux, self.sigma_flux,
                       self.s_photon, self.sigma_photon, self.flags):
            w.writerow([repr(float(v)) for v in row[:-1]] + ["|".join(row[-1])])
        return buf.getvalue()


def mix_sources(s_flux, s_photon, ratio):
    """Forward model: (S01, S12) for flux-like and photon-like components."""
    s_flux = np.asarray(s_flux, dtype=float)
    s_photon = np.asarray(s_photon, dtype=float)
    return s_flux + s_photon, s_flux + ratio * s_photon


def _grid(est, quantity):
    om_name = "omega_corrected" if est.corrections_applied.get("freq_shift") else "omega_naive"
    om = est.column(om_name)
    val = est.column(quantity)
    sig = est.column("sigma" if quantity == "s_transverse" else "sigma_lab")
    order = np.argsort(om)
    return om[order], val[order], sig[order]


def discriminate_sources(s01: PsdEstimate, s12: PsdEstimate, ratio: float,
                         quantity: str = "s_transverse", clip: bool = True) -> SourceSeparation:
    """Split two spectra into a common component and a component scaled by ``ratio``.

    Solves S01 = S_flux + S_photon and S12 = S_flux + ratio S_photon pointwise.
    The estimate with fewer points defines the grid; the other is linearly
    interpolated onto it (points outside its range are dropped).
    """
    if abs(ratio - 1.0) < 0.05:
        raise IllConditionedError(f"chi ratio {ratio:.3f} too close to 1; sources indistinguishable")
    a = _grid(s01, quantity)
    b = _grid(s12, quantity)
    swap = len(b[0]) < len(a[0])
    coarse, fine = (b, a) if swap else (a, b)
    om = coarse[0]
    keep = (om >= fine[0][0] - 1e-9) & (om <= fine[0][-1] + 1e-9)
    om = om[keep]
    c_val, c_sig = coarse[1][keep], coarse[2][keep]
    f_val = np.interp(om, fine[0], fine[1])
    f_sig = np.interp(om, fine[0], fine[2])
    if swap:
        v01, e01, v12, e12 = f_val, f_sig, c_val, c_sig
    else:
        v01, e01, v12, e12 = c_val, c_sig, f_val, f_sig
    r = float(ratio)
    sp = (v12 - v01) / (r - 1)
    sf = v01 - sp
    esp = np.sqrt(e12 ** 2 + e01 ** 2) / abs(r - 1)
    esf = np.sqrt((r / (r - 1)) ** 2 * e01 ** 2 + e12 ** 2 / (r - 1) ** 2)
    flags = []
    for i in range(len(om)):
        f = []
        for name, arr, err in (("flux", sf, esf), ("photon", sp, esp)):
            if arr[i] < 0:
                if arr[i] >= -2 * err[i]:
                    if clip:
                        arr[i] = 0.0
                    f.append(f"clipped_{name}")
                else:
                    f.append(f"negative_{name}")
        flags.append(tuple(f))
    return SourceSeparation(om, sf, sp, esf, esp, v01, v12, r, tuple(flags))
