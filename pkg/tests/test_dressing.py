import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlqns.dressing import (DriveSpec, build_rwa_hamiltonian, default_gamma1, dress,
                            effective_t1, leakage_matrix_element, leakage_rate,
                            pump_probe_spectrum, pump_probe_sweep, rabi_curve)
from mlqns.errors import LabelingError, NonMonotoneError
from mlqns.noise import BoxCar, ZeroPsd
from mlqns.sensor import REFERENCE_DEVICE, LevelStructure, solve_levels

# Rabi frequencies (MHz) from an independent time-domain oracle: exact
# propagation of the RWA Hamiltonian assembled from a separate dense
# diagonalization, dominant FFT peak of P(j-1) - P(j) with parabolic refinement.
TIME_DOMAIN_RABI = {
    1: {25: 24.955, 50: 49.6448, 100: 97.3053, 200: 182.392, 250: 219.9048, 300: 254.8917},
    2: {25: 34.1122, 50: 67.1973, 100: 127.1926, 200: 219.8022, 250: 257.4547, 300: 292.3824},
}


def test_two_level_hamiltonian():
    lv = LevelStructure.from_arrays([0.0, 5000.0])
    h = build_rwa_hamiltonian(lv, DriveSpec(10.0))
    np.testing.assert_array_equal(h, [[0, 5], [5, 0]])


def test_zero_drive_hamiltonian_is_detunings(device_levels):
    h = build_rwa_hamiltonian(device_levels, DriveSpec(0.0, 1))
    f = device_levels.level_freqs
    wd = f[1]
    np.testing.assert_allclose(np.diag(h), f - np.arange(5) * wd)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    assert h[2, 2] == pytest.approx(f[2] - 2 * f[1])


def test_reference_hamiltonian_off_diagonals(device_levels):
    h = build_rwa_hamiltonian(device_levels, DriveSpec(100.0, 1))
    np.testing.assert_allclose(np.diag(h, 1), 50.0 * device_levels.drive_ratios)
    np.testing.assert_allclose(h, h.T)
    assert np.all(np.triu(h, 2) == 0)


def test_two_level_dressing_exact(qubit_levels):
    fr = dress(qubit_levels, DriveSpec(10.0))
    assert fr.rabi == pytest.approx(10.0, abs=1e-12)
    assert abs(fr.alpha[0]) == pytest.approx(0.5, abs=1e-12)
    assert fr.beta[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("target", [1, 2])
def test_weak_drive_participation(device_levels, target):
    fr = dress(device_levels, DriveSpec(1.0, target))
    a = np.abs(fr.alpha_full)
    j = target
    assert a[j - 1] == pytest.approx(0.5, abs=1e-3)
    assert a[j] == pytest.approx(0.5, abs=1e-3)
    others = np.delete(a, [j - 1, j])
    assert np.all(others < 1e-2)
    assert np.all(np.abs(fr.beta_full) < 1e-2)
    assert a.sum() == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("target", [1, 2])
@pytest.mark.parametrize("amp", [25, 50, 100, 200, 250, 300])
def test_rabi_matches_time_domain_oracle(device_levels, target, amp):
    fr = dress(device_levels, DriveSpec(float(amp), target))
    assert fr.rabi == pytest.approx(TIME_DOMAIN_RABI[target][amp], rel=1e-4)


def test_large_drive_pushes_splitting_down(device_levels):
    fr = dress(device_levels, DriveSpec(300.0, 1))
    assert fr.rabi < 300.0
    devs = [abs(dress(device_levels, DriveSpec(a, 1)).rabi - a) for a in (100, 200, 300)]
    assert devs[0] > 0 and np.all(np.diff(devs) > 0)


def test_peripheral_participation_at_large_drive(device_levels):
    for target in (1, 2):
        fr = dress(device_levels, DriveSpec(300.0, target))
        a = np.abs(fr.alpha_full)
        assert np.max(np.delete(a, [target - 1, target])) > 1e-2


def test_weak_drive_rabi_curve(device_levels):
    amps = np.linspace(0.5, 5.0, 10)
    c1 = rabi_curve(device_levels, 1, amps)
    assert np.all(np.abs(c1.omegas / amps - 1) < 1e-3)
    c2 = rabi_curve(device_levels, 2, amps)
    np.testing.assert_allclose(c2.omegas / amps, device_levels.drive_ratios[1], rtol=5e-3)


def test_rabi_curve_inverse(device_levels):
    c = rabi_curve(device_levels, 1, np.linspace(0, 300, 61))
    for om in (10.0, 120.0, 250.0):
        a = c.amplitude_for(om)
        assert dress(device_levels, DriveSpec(a, 1)).rabi == pytest.approx(om, rel=1e-4)
    with pytest.raises(ValueError):
        c.amplitude_for(1e4)


def test_rabi_curve_accepts_roundoff_tie(device_levels):
    # amplitudes one ulp apart give splittings equal to eigensolver round-off
    grid = [0.0, 150.0, np.nextafter(300.0, 0.0), 300.0]
    c = rabi_curve(device_levels, 2, grid)
    assert c.amplitude_for(c.omegas[-1]) == pytest.approx(300.0, rel=1e-12)


def test_rabi_curve_rejects_non_monotone():
    # strongly detuned drive: the splitting first shrinks then grows
    lv = LevelStructure.from_arrays([0.0, 5000.0])
    with pytest.raises(NonMonotoneError):
        rabi_curve(lv, 1, [0.0, 0.0] + [0.1, 0.2])


def test_degenerate_pair_raises():
    lv = LevelStructure.from_arrays([0.0, 5000.0])
    with pytest.raises(LabelingError):
        dress(lv, DriveSpec(1e-7))


def test_csv_columns(device_levels):
    c = rabi_curve(device_levels, 1, [0.0, 10.0])
    header = c.to_csv().splitlines()[0].split(",")
    assert header[:2] == ["A_drive_MHz", "Omega_MHz"]
    assert header[2:6] == [f"alpha_{k}" for k in range(1, 5)]
    assert header[6:10] == [f"beta_{k}" for k in range(1, 5)]


def test_effective_t1_limits(device_levels):
    g = default_gamma1(1 / 58, 5, [1 / 58, 1 / 31])
    np.testing.assert_allclose(g, [1 / 58, 1 / 31, 3 / 58, 4 / 58])
    # admixture terms enter through |matrix element|, i.e. linearly in A
    fr = dress(device_levels, DriveSpec(0.01, 1))
    assert effective_t1(fr, g) == pytest.approx(1 / 58, rel=1e-3)
    fr2 = dress(device_levels, DriveSpec(0.01, 2))
    assert effective_t1(fr2, g) == pytest.approx(1 / 31, rel=1e-3)
    assert effective_t1(fr, np.zeros(4)) == 0.0


def test_leakage_small_drive_suppressed(device_levels):
    fr = dress(device_levels, DriveSpec(1.0, 1))
    w = 2 * math.pi * device_levels.flux_sens
    m = leakage_matrix_element(fr, w)
    m_in = abs(fr.transverse_coefficient(w))
    assert m / m_in < 1e-2
    flat = BoxCar(1.0, 0.0, 1e4)
    assert leakage_rate(fr, flat, device_levels, w) < 1e-4 * m_in ** 2
    assert leakage_rate(fr, ZeroPsd(), device_levels, w) == 0.0


def test_leakage_top_pair_has_one_channel():
    lv = solve_levels(REFERENCE_DEVICE.replace(num_levels=3))
    fr = dress(lv, DriveSpec(50.0, 2))
    assert leakage_rate(fr, BoxCar(1.0, 0.0, 1e4), lv) > 0


def test_pump_probe_zero_drive_is_bare(device_levels):
    lines = pump_probe_spectrum(device_levels, DriveSpec(0.0, 1))
    one = sorted({round(b.frequency, 6) for b in lines if b.photons == 1 and b.strength > 1e-6})
    bare = device_levels.transition_freqs
    for f in bare[:2]:
        assert any(abs(x - f) < 1e-6 for x in one)


def test_pump_probe_splitting_equals_rabi(device_levels):
    a = 5.0
    lines = pump_probe_spectrum(device_levels, DriveSpec(a, 1))
    wd = device_levels.transition_freqs[0]
    near = sorted(b.frequency for b in lines
                  if b.photons == 1 and abs(b.frequency - wd) < 3 * a and b.strength > 1e-3)
    # Mollow-like triplet: wd - Omega, wd, wd + Omega
    assert near[-1] - near[0] == pytest.approx(2 * dress(device_levels, DriveSpec(a, 1)).rabi,
                                               rel=1e-6)


def test_pump_probe_sweep_rows(device_levels):
    rows = pump_probe_sweep(device_levels, [0.0, 100.0, 300.0])
    assert {a for a, _ in rows} == {0.0, 100.0, 300.0}


def test_d6_against_d5_at_device_scale(device_levels):
    # measured: 2.4e-4 for (0,1) and 5.3e-3 for (1,2) at A = 300 MHz
    lv6 = solve_levels(REFERENCE_DEVICE.replace(num_levels=6))
    for t, tol in ((1, 1e-3), (2, 1e-2)):
        o5 = dress(device_levels, DriveSpec(300.0, t)).rabi
        o6 = dress(lv6, DriveSpec(300.0, t)).rabi
        assert abs(o6 - o5) / o5 < tol
    for t in (1, 2):
        o5 = dress(device_levels, DriveSpec(100.0, t)).rabi
        o6 = dress(lv6, DriveSpec(100.0, t)).rabi
        assert abs(o6 - o5) / o5 < 1e-3


# ---------------------------------------------------------------- properties

# resonant pairs are exactly degenerate for 0 < A < ~1e-6 MHz (labeling error by contract)
amps = st.one_of(st.just(0.0), st.floats(1e-3, 300.0))
targets = st.integers(1, 2)


@settings(max_examples=60, deadline=None)
@given(amps, targets)
def test_property_unitarity(device_levels, a, t):
    v = dress(device_levels, DriveSpec(a, t)).basis_change
    assert np.linalg.norm(v.T @ v - np.eye(5), 2) < 1e-12


@settings(max_examples=60, deadline=None)
@given(amps, targets, st.lists(st.sampled_from([-1.0, 1.0]), min_size=5, max_size=5))
def test_property_gauge_invariance(device_levels, a, t, signs):
    from mlqns.dressing import DressedFrame
    fr = dress(device_levels, DriveSpec(a, t))
    flipped = DressedFrame(fr.energies, fr.basis_change * np.array(signs), fr.target,
                           fr.amplitude, fr.drive_frequency)
    g = default_gamma1(1 / 58, 5, [1 / 58, 1 / 31])
    w = 2 * math.pi * device_levels.flux_sens
    assert flipped.rabi == fr.rabi
    np.testing.assert_allclose(np.abs(flipped.alpha_full), np.abs(fr.alpha_full), atol=1e-12)
    np.testing.assert_allclose(flipped.beta_full, fr.beta_full, atol=1e-12)
    assert effective_t1(flipped, g) == pytest.approx(effective_t1(fr, g), abs=1e-12)
    psd = BoxCar(1.0, 0.0, 1e4)
    assert leakage_rate(flipped, psd, device_levels, w) == pytest.approx(
        leakage_rate(fr, psd, device_levels, w), rel=1e-12, abs=1e-12)
    c1, c2 = flipped.transverse_coefficient(w), fr.transverse_coefficient(w)
    assert c1 * c1 == pytest.approx(c2 * c2, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e4))
def test_property_two_level_degeneration(qubit_levels, a):
    fr = dress(qubit_levels, DriveSpec(a))
    assert abs(fr.alpha[0]) == pytest.approx(0.5, abs=1e-12)
    assert fr.beta[0] == pytest.approx(0.0, abs=1e-12)
    assert fr.rabi == pytest.approx(a, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 300.0), min_size=2, max_size=12, unique=True), targets)
def test_property_adiabatic_continuity(device_levels, raw, t):
    grid = np.unique(np.concatenate([raw, np.linspace(0, 300, 61)]))
    grid = grid[(grid == 0) | (grid > 1e-3)]
    c = rabi_curve(device_levels, t, grid)
    # no label swaps: the splitting is a smooth increasing function, up to
    # eigensolver round-off between amplitudes an ulp apart
    assert np.all(np.diff(c.omegas) >= -1e-9 * np.max(device_levels.level_freqs))
    e = np.array([f.energies for f in c.frames])
    jumps = np.abs(np.diff(e, axis=0)) / np.maximum(np.diff(grid)[:, None], 1e-12)
    assert np.all(jumps[np.diff(grid) > 1e-6] < 2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4))
def test_property_weak_drive_sum_rule(device_levels, t):
    fr = dress(device_levels, DriveSpec(0.05, t))
    assert np.abs(fr.alpha_full).sum() == pytest.approx(1.0, abs=1e-3)
