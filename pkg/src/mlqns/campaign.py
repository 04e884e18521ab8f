"""Campaign runner: configuration in, spectra and a manifest out.

A campaign visits every (target transition, drive point) pair. For each
point it simulates the locked decay with engineered noise (presence) and
without it (absence), fits both, extracts S_perp and applies the multi-level
corrections. Results are written by the parent process only; workers return
plain data.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__, kernels
from .dressing import (DriveSpec, default_gamma1, dress, effective_t1, pump_probe_sweep,
                       rabi_curve)
from .dynamics import SequenceSpec, simulate_sequence
from .errors import ConfigError, QnsError
from .noise import (DURATION, FUNDAMENTAL, FluxCoupling, NoiseEnsemble, NoiseSource,
                    PhotonCoupling, PhotonNoiseSpec, photon_number_psd, psd_from_dict)
from .reconstruction import (PsdEstimate, correct_estimate, discriminate_sources,
                             extract_transverse_psd, fit_decay, flag_floor, transverse_psd)
from .sensor import LevelStructure, TransmonSpec, solve_levels

REFERENCE_CHI = (0.115, 0.146)  # MHz


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SourceConfig:
    """One engineered noise source: flux (a PSD of dPhi) or photon shot noise."""

    kind: str
    name: str = ""
    psd: object = None
    photon: PhotonNoiseSpec | None = None
    cutoffs: tuple | None = None

    @classmethod
    def from_dict(cls, data: dict, chi) -> "SourceConfig":
        kind = data.get("kind")
        cut = tuple(data["cutoffs"]) if data.get("cutoffs") is not None else None
        if kind == "flux":
            if "psd" not in data:
                raise ConfigError("flux source needs a 'psd' entry")
            return cls("flux", data.get("name", "flux"), psd_from_dict(data["psd"]), None, cut)
        if kind == "photon":
            p = dict(data.get("photon", data))
            p.pop("kind", None)
            p.pop("name", None)
            p.pop("cutoffs", None)
            p.setdefault("chi", chi)
            if p["chi"] is None:
                raise ConfigError("photon source needs dispersive shifts (chi)")
            spec = PhotonNoiseSpec(tuple(p["chi"]), float(p["nbar"]), float(p["kappa"]),
                                   float(p["detuning"]), float(p.get("calibration", 1.0)))
            return cls("photon", data.get("name", "photon"), photon_number_psd(spec), spec, cut)
        raise ConfigError(f"unknown noise source kind {kind!r}")

    def coupling(self, levels: LevelStructure):
        if self.kind == "flux":
            return FluxCoupling(tuple(levels.flux_sens))
        chi = list(self.photon.chi)
        d = levels.num_levels
        if len(chi) < d - 1:
            # unmeasured higher shifts: extend with the last value
            chi = chi + [chi[-1]] * (d - 1 - len(chi))
        return PhotonCoupling(tuple(chi))

    def noise_source(self, levels: LevelStructure) -> NoiseSource:
        return NoiseSource(self.psd, self.coupling(levels), self.name, self.cutoffs)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "name": self.name,
               "cutoffs": None if self.cutoffs is None else list(self.cutoffs)}
        if self.kind == "flux":
            out["psd"] = self.psd.to_dict()
        else:
            out["photon"] = self.photon.to_dict()
        return out


_KNOWN_KEYS = {
    "name", "sensor", "dispersive_shifts", "target_pairs", "amplitude_grid", "frequency_grid",
    "noise_sources", "ensemble", "durations", "absence_durations", "auto_durations", "seed",
    "t1_rates", "edge_sigma_ns", "dt_us", "noise", "reconstruct", "output_dir", "tabulate",
}


@dataclass(frozen=True)
class CampaignConfig:
    sensor: TransmonSpec
    target_pairs: tuple
    seed: int
    amplitude_grid: tuple | None = None
    frequency_grid: tuple | None = None
    sources: tuple = ()
    dispersive_shifts: tuple | None = None
    ensemble: int = 200
    durations: tuple | None = None
    absence_durations: tuple | None = None
    auto_points: int = 12
    auto_span: float = 3.0
    auto_max_us: float = 60.0
    auto_absence_max_us: float = 400.0
    t1_rates: tuple | None = None
    edge_sigma_ns: float = 12.0
    dt_us: float | None = None
    fundamental: float = FUNDAMENTAL
    waveform_duration: float = DURATION
    rayleigh: bool = True
    reconstruct: str = "flux"
    name: str = "campaign"
    output_dir: str | None = None
    tabulate: dict = field(default_factory=dict)

    # ---------------------------------------------------------------- parsing
    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            sensor = data.get("sensor", "reference")
            if sensor == "reference":
                from .sensor import REFERENCE_DEVICE
                sensor = REFERENCE_DEVICE
            else:
                sensor = TransmonSpec.from_dict(sensor)
            chi = data.get("dispersive_shifts")
            chi = tuple(float(c) for c in chi) if chi is not None else None
            targets = tuple(int(t) for t in data.get("target_pairs", [1]))
            for t in targets:
                if not 1 <= t <= sensor.num_levels - 1:
                    raise ConfigError(f"target pair {t} outside 1..{sensor.num_levels - 1}")
            amp = data.get("amplitude_grid")
            freq = data.get("frequency_grid")
            if (amp is None) == (freq is None):
                raise ConfigError("give exactly one of amplitude_grid or frequency_grid")
            grid = amp if amp is not None else freq
            if len(grid) == 0 or any(g < 0 for g in grid):
                raise ConfigError("grid must be a non-empty list of non-negative values")
            if "seed" not in data or not isinstance(data["seed"], int):
                raise ConfigError("an explicit integer 'seed' is required")
            sources = tuple(SourceConfig.from_dict(s, chi) for s in data.get("noise_sources", []))
            durations = data.get("durations")
            if durations is not None and len(durations) < 6:
                raise ConfigError("durations need at least 6 points for the decay fit")
            auto = dict(data.get("auto_durations", {}))
            noise = dict(data.get("noise", {}))
            t1 = data.get("t1_rates")
            if t1 is not None:
                t1 = tuple(float(g) for g in default_gamma1(float(t1[0]), sensor.num_levels, t1))
            cfg = cls(
                sensor=sensor, target_pairs=targets, seed=int(data["seed"]),
                amplitude_grid=tuple(float(a) for a in amp) if amp is not None else None,
                frequency_grid=tuple(float(f) for f in freq) if freq is not None else None,
                sources=sources, dispersive_shifts=chi,
                ensemble=int(data.get("ensemble", 200)),
                durations=tuple(float(t) for t in durations) if durations is not None else None,
                absence_durations=(tuple(float(t) for t in data["absence_durations"])
                                   if data.get("absence_durations") is not None else None),
                auto_points=int(auto.get("points", 12)),
                auto_span=float(auto.get("span", 3.0)),
                auto_max_us=float(auto.get("max_us", 60.0)),
                auto_absence_max_us=float(auto.get("absence_max_us", 400.0)),
                t1_rates=t1,
                edge_sigma_ns=float(data.get("edge_sigma_ns", 12.0)),
                dt_us=data.get("dt_us"),
                fundamental=float(noise.get("fundamental", FUNDAMENTAL)),
                waveform_duration=float(noise.get("duration", DURATION)),
                rayleigh=bool(noise.get("rayleigh", True)),
                reconstruct=str(data.get("reconstruct", "flux")),
                name=str(data.get("name", "campaign")),
                output_dir=data.get("output_dir"),
                tabulate=dict(data.get("tabulate", {})),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, QnsError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if cfg.ensemble < 1:
            raise ConfigError("ensemble must be >= 1")
        if cfg.reconstruct not in ("flux", "photon"):
            raise ConfigError("reconstruct must be 'flux' or 'photon'")
        return cfg

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "sensor": self.sensor.to_dict(),
            "target_pairs": list(self.target_pairs), "seed": self.seed,
            "amplitude_grid": None if self.amplitude_grid is None else list(self.amplitude_grid),
            "frequency_grid": None if self.frequency_grid is None else list(self.frequency_grid),
            "noise_sources": [s.to_dict() for s in self.sources],
            "dispersive_shifts": None if self.dispersive_shifts is None else list(self.dispersive_shifts),
            "ensemble": self.ensemble,
            "durations": None if self.durations is None else list(self.durations),
            "absence_durations": (None if self.absence_durations is None
                                  else list(self.absence_durations)),
            "auto_durations": {"points": self.auto_points, "span": self.auto_span,
                               "max_us": self.auto_max_us,
                               "absence_max_us": self.auto_absence_max_us},
            "t1_rates": None if self.t1_rates is None else list(self.t1_rates),
            "edge_sigma_ns": self.edge_sigma_ns, "dt_us": self.dt_us,
            "noise": {"fundamental": self.fundamental, "duration": self.waveform_duration,
                      "rayleigh": self.rayleigh},
            "reconstruct": self.reconstruct,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def levels(self) -> LevelStructure:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return solve_levels(self.sensor, self.dispersive_shifts)

    def chi_ratio(self) -> float | None:
        chi = self.dispersive_shifts
        if chi is None:
            for s in self.sources:
                if s.photon is not None:
                    chi = s.photon.chi
                    break
        if chi is None or len(chi) < 2:
            return None
        return (chi[1] / chi[0]) ** 2


# ---------------------------------------------------------------- planning

@dataclass(frozen=True)
class Point:
    target: int
    index: int
    amplitude: float
    presence_tau: tuple | None = None
    absence_tau: tuple | None = None


def _amplitude_range(levels, target, omega_max):
    lam = float(levels.drive_ratios[target - 1])
    a_max = 1.5 * omega_max / lam + 10.0
    return np.linspace(0.0, a_max, int(math.ceil(a_max / 2.0)) + 1)


def _polish(levels, target, curve, omega):
    # interpolated guess, then a bracketed root of Omega(A) - omega
    if omega == 0.0:
        return 0.0
    k = int(np.searchsorted(curve.omegas, omega))
    lo = curve.amplitudes[max(k - 1, 0)]
    hi = curve.amplitudes[min(k, len(curve.amplitudes) - 1)]
    f = lambda a: dress(levels, DriveSpec(a, target)).rabi - omega
    if lo == hi or f(lo) * f(hi) > 0:
        return float(curve.amplitude_for(omega))
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-13))


def plan_points(cfg: CampaignConfig, levels: LevelStructure) -> list:
    pts = []
    for t in cfg.target_pairs:
        if cfg.amplitude_grid is not None:
            amps = list(cfg.amplitude_grid)
        else:
            grid = np.asarray(cfg.frequency_grid)
            curve = rabi_curve(levels, t, _amplitude_range(levels, t, grid.max()))
            curve.amplitude_for(grid)  # range check
            amps = [_polish(levels, t, curve, float(om)) for om in grid]
        pts.extend(Point(t, i, float(a)) for i, a in enumerate(amps))
    return _share_durations(cfg, levels, pts)


def _share_durations(cfg, levels, pts):
    # every target at one grid index gets the same lock durations (sized for
    # the slowest predicted decay) so the noise windows, and hence the noise
    # realizations, coincide across targets
    by_index = {}
    for p in pts:
        frame = dress(levels, DriveSpec(p.amplitude, p.target))
        pres, absn = point_durations(cfg, levels, frame)
        cur = by_index.get(p.index)
        if cur is None:
            by_index[p.index] = (pres, absn)
        else:
            by_index[p.index] = (max(cur[0], pres, key=lambda g: g[-1]),
                                 max(cur[1], absn, key=lambda g: g[-1]))
    return [Point(p.target, p.index, p.amplitude, *by_index[p.index]) for p in pts]


def predicted_transverse(cfg: CampaignConfig, levels, frame) -> float:
    """Forward-model S_perp at the point, summed over independent sources."""
    total = 0.0
    for s in cfg.sources:
        w = s.coupling(levels).weights(levels.num_levels)
        total += transverse_psd(frame, s.psd, w)
    return total


def injected_lab(cfg: CampaignConfig, omega: float) -> float:
    kind = cfg.reconstruct
    return float(sum(s.psd(abs(omega)) for s in cfg.sources if s.kind == kind))


def _auto_grid(rate, span, points, cap):
    t_max = cap if rate <= 0 else min(cap, span / rate)
    return tuple(float(x) for x in np.linspace(0.0, t_max, points))


def point_durations(cfg: CampaignConfig, levels, frame):
    """(presence, absence) lock-duration grids for one point."""
    g1 = effective_t1(frame, cfg.t1_rates) if cfg.t1_rates is not None else 0.0
    s_pred = predicted_transverse(cfg, levels, frame)
    pres = cfg.durations or _auto_grid(2 * s_pred + 0.5 * g1, cfg.auto_span, cfg.auto_points,
                                       cfg.auto_max_us)
    if cfg.absence_durations is not None:
        absn = cfg.absence_durations
    elif cfg.t1_rates is not None and g1 > 0:
        absn = _auto_grid(0.5 * g1, cfg.auto_span, cfg.auto_points, cfg.auto_absence_max_us)
    else:
        absn = pres
    return pres, absn


# ---------------------------------------------------------------- one point

def _seq_seed(seed, index):
    # shared by presence/absence and by every target at one grid index
    return int(seed) * 100_003 + int(index)


def run_point(cfg: CampaignConfig, point: Point, seed_offset: int = 0, backend=None) -> dict:
    """Simulate, fit and extract one point; returns plain data."""
    levels = cfg.levels()
    seed = cfg.seed + seed_offset
    out = {"target": point.target, "index": point.index, "amplitude": point.amplitude,
           "status": "ok", "error": None}
    try:
        drive = DriveSpec(point.amplitude, point.target)
        frame = dress(levels, drive)
        if point.presence_tau is not None:
            pres_tau, abs_tau = point.presence_tau, point.absence_tau
        else:
            pres_tau, abs_tau = point_durations(cfg, levels, frame)
        # same noise seed for every target at a given grid index: common random numbers
        ens = NoiseEnsemble([s.noise_source(levels) for s in cfg.sources], seed=[seed, point.index],
                            duration=cfg.waveform_duration, fundamental=cfg.fundamental,
                            rayleigh=cfg.rayleigh)
        sseed = _seq_seed(seed, point.index)
        seq_p = SequenceSpec(drive, pres_tau, cfg.ensemble, cfg.edge_sigma_ns, cfg.t1_rates,
                             cfg.dt_us, sseed)
        seq_a = SequenceSpec(drive, abs_tau, cfg.ensemble, cfg.edge_sigma_ns, cfg.t1_rates,
                             cfg.dt_us, sseed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tr_p = simulate_sequence(levels, seq_p, ens, backend=backend, keep_samples=True)
            tr_a = simulate_sequence(levels, seq_a, None, backend=backend)
            fit_p = fit_decay(tr_p)
            fit_a = fit_decay(tr_a)
            est = extract_transverse_psd(fit_p, fit_a)
        out.update(
            omega=frame.rabi,
            s_transverse=est.value, sigma=est.sigma, negative=est.negative,
            s_predicted=predicted_transverse(cfg, levels, frame),
            gamma_pres=fit_p.gamma_1rho, gamma_pres_err=fit_p.gamma_err,
            gamma_abs=fit_a.gamma_1rho, gamma_abs_err=fit_a.gamma_err,
            sz_pres=fit_p.sz_eq, sz_pres_err=fit_p.sz_err,
            unresolved=bool(fit_p.rate_unresolved),
            fit_pres=fit_p.to_dict(), fit_abs=fit_a.to_dict(),
            trace_pres=tr_p.to_csv(), trace_abs=tr_a.to_csv(),
            meta_pres={k: v for k, v in tr_p.meta.items() if k != "noise"},
            noise=tr_p.meta.get("noise"),
            warnings=sorted({str(w.message) for w in caught}),
        )
    except QnsError as exc:
        out.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return out


# ---------------------------------------------------------------- results

_SUMMARY_COLUMNS = ["target", "index", "A_drive_MHz", "omega_naive_MHz", "omega_corrected_MHz",
                    "gamma_pres_per_us", "gamma_pres_err", "gamma_abs_per_us", "gamma_abs_err",
                    "sz_pres", "sz_pres_err", "S_transverse_per_us", "sigma_per_us",
                    "S_transverse_predicted", "S_lab", "sigma_lab", "S_lab_naive",
                    "S_lab_injected", "status", "flags"]


@dataclass
class CampaignResult:
    config: CampaignConfig
    points: list
    estimates: dict
    separation: object = None
    files: dict = field(default_factory=dict)
    out_dir: Path | None = None

    @property
    def failures(self) -> list:
        return [p for p in self.points if p["status"] != "ok"]

    def summary_rows(self):
        lam = {t: float(self.config.levels().drive_ratios[t - 1]) for t in self.config.target_pairs}
        by_key = {}
        for t, est in self.estimates.items():
            for p in est.points:
                by_key[(t, p.amplitude)] = p
        rows = []
        for r in self.points:
            t, a = r["target"], r["amplitude"]
            p = by_key.get((t, a))
            ok = r["status"] == "ok"
            nan = float("nan")
            om = r.get("omega", nan)
            rows.append([t, r["index"], a, lam[t] * a, om,
                         r.get("gamma_pres", nan), r.get("gamma_pres_err", nan),
                         r.get("gamma_abs", nan), r.get("gamma_abs_err", nan),
                         r.get("sz_pres", nan), r.get("sz_pres_err", nan),
                         r.get("s_transverse", nan), r.get("sigma", nan),
                         r.get("s_predicted", nan),
                         p.s_lab if p else nan, p.sigma_lab if p else nan,
                         p.s_lab_naive if p else nan,
                         injected_lab(self.config, om) if ok else nan,
                         r["status"], "|".join(p.flags) if p else (r.get("error") or "")])
        return rows

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_SUMMARY_COLUMNS)
        for row in self.summary_rows():
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def _assemble(cfg: CampaignConfig, levels, results) -> tuple:
    estimates = {}
    coupling = None
    units = "Phi0^2 us"
    if cfg.reconstruct == "photon":
        src = next((s for s in cfg.sources if s.kind == "photon"), None)
        if src is not None:
            coupling = src.coupling(levels)
        units = "photons^2 us"
    for t in cfg.target_pairs:
        rows = [r for r in results if r["target"] == t and r["status"] == "ok"]
        if not rows:
            continue
        flags = [tuple(f for f, on in (("negative", r["negative"]),
                                       ("rate_unresolved", r["unresolved"])) if on)
                 for r in rows]
        raw = PsdEstimate.from_measurements(levels, t, [r["amplitude"] for r in rows],
                                            [r["s_transverse"] for r in rows],
                                            [r["sigma"] for r in rows], flags)
        frames = [dress(levels, DriveSpec(r["amplitude"], t)) for r in rows]
        if cfg.reconstruct == "photon" and coupling is None:
            est = raw
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = correct_estimate(raw, frames, levels, coupling=coupling, lab_units=units)
        est = flag_floor(est, [r["gamma_abs"] for r in rows])
        estimates[t] = est
    separation = None
    ratio = cfg.chi_ratio()
    if 1 in estimates and 2 in estimates and ratio is not None and abs(ratio - 1) >= 0.05:
        separation = discriminate_sources(estimates[1], estimates[2], ratio)
    return estimates, separation


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_campaign(cfg: CampaignConfig, out_dir=None, workers: int = 1, seed_offset: int = 0,
                 backend=None, progress=None) -> CampaignResult:
    """Run every point of ``cfg``; write outputs if ``out_dir`` (or the config's) is set."""
    levels = cfg.levels()
    points = plan_points(cfg, levels)
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(run_point, cfg, p, seed_offset, backend) for p in points]
            results = []
            for f in futs:
                results.append(f.result())
                if progress:
                    progress(results[-1])
    else:
        results = []
        for p in points:
            results.append(run_point(cfg, p, seed_offset, backend))
            if progress:
                progress(results[-1])
    estimates, separation = _assemble(cfg, levels, results)
    res = CampaignResult(cfg, results, estimates, separation)
    out_dir = out_dir or cfg.output_dir
    if out_dir is not None:
        write_outputs(res, Path(out_dir), seed_offset, backend)
    return res


def _write(out: Path, rel: str, text: str, files: dict):
    path = out / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode()
    path.write_bytes(data)
    files[rel] = _sha256(data)


def write_outputs(res: CampaignResult, out: Path, seed_offset: int = 0, backend=None):
    """Single writer for every campaign artifact plus the manifest."""
    cfg = res.config
    files = {}
    out.mkdir(parents=True, exist_ok=True)
    levels = cfg.levels()
    _write(out, "levels.json", levels.to_json(indent=2, sort_keys=True) + "\n", files)
    for t, est in sorted(res.estimates.items()):
        _write(out, f"psd_target{t}.csv", est.to_csv(), files)
        if cfg.reconstruct == "flux":
            _write(out, f"psd_target{t}_uphi0.csv", est.to_csv(display="uphi0"), files)
        _write(out, f"psd_target{t}.json", est.to_json(indent=2, sort_keys=True) + "\n", files)
    for r in res.points:
        if r["status"] != "ok":
            continue
        stem = f"traces/target{r['target']}_point{r['index']:03d}"
        _write(out, stem + "_presence.csv", r["trace_pres"], files)
        _write(out, stem + "_absence.csv", r["trace_abs"], files)
    if res.separation is not None:
        _write(out, "separation.csv", res.separation.to_csv(), files)
    _write(out, "summary.csv", res.summary_csv(), files)

    points = []
    for r in res.points:
        keep = {k: v for k, v in r.items() if k not in ("trace_pres", "trace_abs")}
        keep["noise_seed"] = [cfg.seed + seed_offset, r["index"]]
        keep["sequence_seed"] = _seq_seed(cfg.seed + seed_offset, r["index"])
        points.append(keep)
    manifest = {
        "name": cfg.name,
        "package_version": __version__,
        "backend": backend or kernels.backend_name(),
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "seed_offset": seed_offset,
        "points": points,
        "failures": [{"target": r["target"], "index": r["index"], "error": r["error"]}
                     for r in res.failures],
        "files": dict(sorted(files.items())),
    }
    text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    (out / "manifest.json").write_text(text)
    res.files = files
    res.out_dir = out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- static tables

def _tab_amplitudes(cfg: CampaignConfig):
    amps = cfg.tabulate.get("amplitudes")
    if amps is None:
        amps = cfg.amplitude_grid
    if amps is None:
        hi = max(cfg.frequency_grid) * 1.5 + 10
        amps = np.linspace(0.0, hi, 61)
    return [float(a) for a in amps]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def tabulate(sub: str, cfg: CampaignConfig) -> dict:
    """Static curve tables keyed by file name: rabi, participation or pumpprobe."""
    levels = cfg.levels()
    amps = sorted(_tab_amplitudes(cfg))
    out = {}
    if sub == "rabi":
        rows = []
        for t in cfg.target_pairs:
            curve = rabi_curve(levels, t, amps, check_monotone=False)
            lam = float(levels.drive_ratios[t - 1])
            for a, om in zip(curve.amplitudes, curve.omegas):
                rows.append([t, float(a), float(om), lam * float(a), float(om - lam * a)])
        out["rabi.csv"] = _csv(["target", "A_drive_MHz", "Omega_MHz", "lambda_A_MHz",
                                "shift_MHz"], rows)
    elif sub == "participation":
        for t in cfg.target_pairs:
            curve = rabi_curve(levels, t, amps, check_monotone=False)
            out[f"participation_target{t}.csv"] = curve.to_csv()
    elif sub == "pumpprobe":
        rows = []
        for t in cfg.target_pairs:
            for a, b in pump_probe_sweep(levels, amps, target=t):
                rows.append([t, float(a), b.lower, b.upper, b.photons, float(b.frequency),
                             float(b.strength)])
        out["pumpprobe.csv"] = _csv(["target", "A_drive_MHz", "lower", "upper", "photons", "frequency_MHz",
                                     "strength"], rows)
    else:
        raise ConfigError(f"unknown table {sub!r}; choose rabi, participation or pumpprobe")
    return out
