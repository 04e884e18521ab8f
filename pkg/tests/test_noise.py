import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mlqns.errors import CouplingError, SynthesisError
from mlqns.noise import (BoxCar, FluxCoupling, Lorentzian, NoiseEnsemble, NoiseSource,
                         PhotonCoupling, PhotonNoiseSpec, Tabulated, ZeroPsd, default_sample_rate,
                         ensemble_psd, level_noise_series, load_samples, photon_number_psd,
                         photon_psd, psd_from_dict, psd_to_csv, save_waveform, synthesize)

CHI = (0.115, 0.146)


def _welch(psd, n, nperseg=4096, seed=0, rayleigh=False):
    waves = [synthesize(psd, seed=[seed, i], rayleigh=rayleigh) for i in range(n)]
    return ensemble_psd(waves, nperseg=nperseg)


# ---------------------------------------------------------------- spectra

def test_lorentzian_formula_literal():
    p0, f0, fc = 3.0, 6.0, 2.0
    s = Lorentzian(p0, f0, fc)
    w, w0, wc = 2 * math.pi * 7.5, 2 * math.pi * f0, 2 * math.pi * fc
    ref = p0 / (2 * math.pi * wc) * (1 / (1 + ((w - w0) / wc) ** 2) + 1 / (1 + ((w + w0) / wc) ** 2))
    assert s(7.5) == pytest.approx(ref, rel=1e-14)
    assert s(-7.5) == s(7.5)


def test_lorentzian_variance_is_p0_over_2pi():
    s = Lorentzian(2.0, 6.0, 2.0)
    var, _ = integrate.quad(lambda f: s(f), -np.inf, np.inf, limit=400)
    assert var == pytest.approx(2.0 / (2 * math.pi), rel=1e-8)


@pytest.mark.parametrize("bad", [dict(power=-1, center=1, hwhm=1), dict(power=1, center=1, hwhm=0)])
def test_lorentzian_validation(bad):
    with pytest.raises(ValueError):
        Lorentzian(**bad)


def test_tabulated_validation():
    with pytest.raises(ValueError):
        Tabulated((2.0, 1.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Tabulated((1.0, 2.0), (1.0, float("nan")))


def test_psd_dict_roundtrip():
    for p in (Lorentzian(1.0, 6.0, 2.0), BoxCar(0.5, 1.0, 20.0),
              Tabulated((0.0, 5.0, 10.0), (1.0, 2.0, 0.0)), ZeroPsd()):
        assert psd_from_dict(p.to_dict()) == p


def test_psd_csv():
    text = psd_to_csv(BoxCar(2.0, 1.0, 3.0), [0.5, 2.0])
    assert text.splitlines() == ["f_MHz,S", "0.5,0.0", "2.0,2.0"]


# ---------------------------------------------------------------- photon noise

def test_photon_psd_ratio_matches_chi_squared():
    spec = PhotonNoiseSpec(CHI, nbar=1.0, kappa=4.18, detuning=6.05)
    r = photon_psd(spec, 2)(6.05) / photon_psd(spec, 1)(6.05)
    assert r == pytest.approx((0.146 / 0.115) ** 2, rel=1e-12)
    assert r == pytest.approx(1.61, abs=0.01)


def test_photon_psd_shape():
    spec = PhotonNoiseSpec(CHI, nbar=2.0, kappa=4.18, detuning=6.05)
    s = photon_number_psd(spec)
    assert s.center == 6.05 and s.hwhm == pytest.approx(2.09)
    assert s.peak_frequency == 6.05
    assert isinstance(photon_number_psd(PhotonNoiseSpec(CHI, 0.0, 4.18, 6.05)), ZeroPsd)
    with pytest.raises(ValueError):
        PhotonNoiseSpec(CHI, 1.0, 0.0, 6.0)
    with pytest.raises(ValueError):
        PhotonNoiseSpec(CHI, -1.0, 1.0, 6.0)


# ---------------------------------------------------------------- level couplings

def test_level_series_flux(device_levels):
    x = np.random.default_rng(1).normal(size=100)
    b = level_noise_series(x, FluxCoupling(tuple(device_levels.flux_sens)), 5)
    np.testing.assert_allclose(b[2] / b[1], device_levels.flux_sens[2] / device_levels.flux_sens[1])
    np.testing.assert_allclose(b[1], 2 * math.pi * device_levels.flux_sens[1] * x)
    assert np.all(level_noise_series(np.zeros(10), FluxCoupling((0, 1, 2)), 3) == 0)


def test_level_series_photon():
    x = np.random.default_rng(2).uniform(0.1, 1.0, size=50)
    b = level_noise_series(x, PhotonCoupling(CHI + (0.16, 0.17)), 5)
    np.testing.assert_allclose((b[2] - b[1]) / (b[1] - b[0]), 0.146 / 0.115)
    assert 0.146 / 0.115 == pytest.approx(1.27, abs=0.005)
    np.testing.assert_allclose(b[1], 2 * math.pi * 2 * 0.115 * x)


def test_short_coupling_raises():
    with pytest.raises(CouplingError):
        PhotonCoupling(CHI).weights(5)
    with pytest.raises(CouplingError):
        FluxCoupling((0.0, 1.0)).weights(5)


# ---------------------------------------------------------------- synthesis

def test_zero_psd_gives_zero_waveform():
    wf = synthesize(ZeroPsd(), sample_rate=100.0)
    assert wf.samples.shape == (10000,)
    assert not np.any(wf.samples)


def test_empty_cutoff_window_raises():
    with pytest.raises(SynthesisError):
        synthesize(BoxCar(1.0, 1.0, 2.0), cutoffs=(1.0001, 1.0019))


def test_reference_defaults():
    wf = synthesize(Lorentzian(1.0, 6.0, 2.0), seed=3)
    assert wf.duration == 100.0
    assert wf.harm_freqs[0] == pytest.approx(0.004)
    assert wf.harm_freqs[-1] == pytest.approx(56.0)
    assert np.allclose(np.diff(wf.harm_freqs), 0.004)
    assert wf.sample_rate >= 8 * 56.0
    assert len(wf.samples) == round(wf.sample_rate * wf.duration)
    wf2 = synthesize(Lorentzian(1.0, 200.0, 2.0), seed=3)
    assert wf2.harm_freqs[0] == pytest.approx(150.0)
    assert wf2.harm_freqs[-1] == pytest.approx(250.0)


def test_harmonic_amplitudes():
    psd = Lorentzian(1.0, 6.0, 2.0)
    wf = synthesize(psd, seed=4)
    np.testing.assert_allclose(wf.harm_amps, 2 * np.sqrt(psd(wf.harm_freqs) * 0.004))


def test_fft_evaluation_matches_direct_sum():
    wf = synthesize(BoxCar(1.0, 1.0, 5.0), seed=5, sample_rate=40.0, t_offset=0.0125)
    t = wf.times[:200]
    np.testing.assert_allclose(wf.samples[:200], wf.evaluate(t), atol=1e-9 * np.abs(wf.samples).max())


def test_sample_rate_grid():
    r = default_sample_rate(56.0) / 0.004
    assert r == pytest.approx(round(r), abs=1e-6)
    with pytest.raises(ValueError):
        synthesize(BoxCar(1.0, 1.0, 5.0), sample_rate=40.001)


def test_save_load_roundtrip(tmp_path):
    wf = synthesize(Lorentzian(1.0, 6.0, 2.0), seed=[1, 2])
    b, m = save_waveform(wf, tmp_path / "wave")
    x, meta = load_samples(tmp_path / "wave")
    np.testing.assert_array_equal(x, wf.samples)
    assert meta["seed"] == [1, 2] and meta["sample_rate"] == wf.sample_rate
    assert b.stat().st_size == 8 * len(wf.samples)


@pytest.mark.slow
def test_lorentzian_ensemble_periodogram():
    psd = Lorentzian(1.0, 6.0, 2.0)
    f, s = _welch(psd, 1000)
    peak = (f > 5.8) & (f < 6.2)
    assert np.mean(s[peak]) == pytest.approx(np.mean(psd(f[peak])), rel=0.05)
    for lo, hi in ((2.0, 3.0), (9.0, 10.0), (12.0, 14.0)):
        band = (f > lo) & (f < hi)
        assert np.mean(s[band]) == pytest.approx(np.mean(psd(f[band])), rel=0.10)


def test_boxcar_flat_and_rejected():
    psd = BoxCar(1.0, 1.0, 20.0)
    f, s = _welch(psd, 500, nperseg=2048)
    inside = (f > 2.0) & (f < 19.0)
    rel = s[inside] / 1.0
    assert np.all(np.abs(rel - 1) < 0.10)
    outside = (f > 22.0) & (f < 60.0)
    assert 10 * np.log10(np.max(s[outside]) / 1.0) < -30


def test_rayleigh_variant_same_mean_power():
    psd = BoxCar(1.0, 1.0, 20.0)
    f, s = _welch(psd, 300, rayleigh=True)
    inside = (f > 2.0) & (f < 19.0)
    assert np.mean(s[inside]) == pytest.approx(1.0, rel=0.05)


def test_ensemble_windows_are_deterministic_and_midpoint_sampled():
    src = NoiseSource(BoxCar(1.0, 1.0, 5.0), FluxCoupling((0.0, 1.0)))
    fs = 40.0
    a = NoiseEnsemble([src], seed=[9, 1]).batch(0, 6, 1000, fs)
    b = NoiseEnsemble([src], seed=[9, 1]).batch(3, 3, 1000, fs)
    np.testing.assert_array_equal(a[3:], b)
    wf = synthesize(src.psd, seed=[9, 1, 0, 0], sample_rate=fs)
    t_mid = (np.arange(1000) + 0.5) / fs
    np.testing.assert_allclose(a[0, :, 0], wf.evaluate(t_mid), atol=1e-9)


# ---------------------------------------------------------------- properties

shapes = st.one_of(
    st.builds(Lorentzian, st.floats(0.1, 10.0), st.floats(0.0, 30.0), st.floats(0.5, 5.0)),
    st.builds(BoxCar, st.floats(0.1, 10.0), st.floats(0.0, 5.0), st.floats(6.0, 30.0)),
)


def _mean_spread(wf):
    # std of the window mean of sum a cos(2 pi f t + phi) with uniform phases
    x = np.pi * wf.harm_freqs * wf.duration
    return math.sqrt(np.sum(0.5 * wf.harm_amps ** 2 * np.sinc(x / np.pi) ** 2))


@settings(max_examples=25, deadline=None)
@given(shapes, st.integers(0, 2 ** 31))
def test_property_zero_mean(psd, seed):
    wf = synthesize(psd, seed=seed, sample_rate=default_sample_rate(psd.default_cutoffs()[1]))
    assert abs(wf.samples.mean()) < 5 * _mean_spread(wf) + 1e-12


@settings(max_examples=25, deadline=None)
@given(shapes, st.integers(0, 2 ** 31), st.floats(0.01, 100.0))
def test_property_scaling(psd, seed, c):
    a = synthesize(psd, seed=seed)
    b = synthesize(psd.scaled(c), seed=seed)
    np.testing.assert_allclose(b.samples, math.sqrt(c) * a.samples, rtol=1e-9,
                               atol=1e-12 * np.abs(b.samples).max())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 2 ** 31))
def test_property_independence(seed, delta):
    psd = BoxCar(1.0, 1.0, 20.0)
    a = synthesize(psd, seed=seed).samples
    b = synthesize(psd, seed=seed + delta).samples
    n = len(a)
    rho = np.dot(a - a.mean(), b - b.mean()) / (np.std(a) * np.std(b) * n)
    # effective sample count: the band-limited signal carries 2 * B * T independent values
    n_eff = 2 * 19.0 * 100.0
    # 25 draws per run: a per-draw 3 sigma bound would trip ~7% of runs
    assert abs(rho) < 4.5 / math.sqrt(n_eff)


def test_cross_correlation_spread_matches_independence():
    psd = BoxCar(1.0, 1.0, 20.0)
    rho = [np.corrcoef(synthesize(psd, seed=s).samples,
                       synthesize(psd, seed=10 ** 6 + s).samples)[0, 1] for s in range(120)]
    assert abs(np.mean(rho)) < 3 * 0.0162 / math.sqrt(120)
    assert np.std(rho) == pytest.approx(1 / math.sqrt(2 * 19.0 * 100.0), rel=0.2)


@settings(max_examples=15, deadline=None)
@given(shapes, st.integers(0, 2 ** 31))
def test_property_two_sided_symmetry(psd, seed):
    from scipy import signal
    wf = synthesize(psd, seed=seed)
    f, p = signal.periodogram(wf.samples, fs=wf.sample_rate, return_onesided=False)
    order = np.argsort(f)
    f, p = f[order], p[order]
    pos = f > 0
    fp = f[pos]
    neg = np.interp(-fp, f, p)
    np.testing.assert_allclose(neg[:-1], p[pos][:-1], rtol=1e-9, atol=1e-12 * p.max())
