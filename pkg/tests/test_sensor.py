import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlqns.errors import SingularityError, TransmonRegimeWarning
from mlqns.sensor import (REFERENCE_DEVICE, TransmonSpec, flux_sensitivity, level_energies,
                          solve_levels)

# Independent dense charge-basis diagonalization (N = 60, written without the
# package) of the reference device at 0.17 flux quanta.
ORACLE_FREQS = [0.0, 3542.969297208357, 6878.411663516683, 9982.49355061893, 12794.440953569489]
ORACLE_LAMBDA = [1.0, 1.371559936315, 1.618317521758, 1.78082707023]
ORACLE_SENS = [0.0, -3480.407900042337, -6994.249835770461, -10565.17158758652, -14560.260347934673]


def test_reference_transitions_within_half_percent(device_levels):
    f = device_levels.transition_freqs
    assert f[0] == pytest.approx(3543.5, rel=5e-3)
    assert f[1] == pytest.approx(3336.2, rel=5e-3)
    assert device_levels.anharmonicity == pytest.approx(-207.3, rel=0.02)


def test_matches_dense_oracle(device_levels):
    np.testing.assert_allclose(device_levels.level_freqs, ORACLE_FREQS, rtol=1e-10, atol=1e-8)
    np.testing.assert_allclose(device_levels.drive_ratios, ORACLE_LAMBDA, rtol=1e-9)
    np.testing.assert_allclose(device_levels.flux_sens, ORACLE_SENS, rtol=1e-6)


def test_ground_level_and_lambda01(device_levels):
    assert device_levels.level_freqs[0] == 0.0
    assert device_levels.drive_ratios[0] == 1.0
    assert 1.30 <= device_levels.drive_ratios[1] <= 1.50


@pytest.mark.xfail(strict=True, reason="the exact charge-basis anharmonicity of this device is "
                   "-207.5 MHz = -1.14 E_c, consistent with the -207.3 MHz acceptance value "
                   "but outside the [-E_c, -0.85 E_c] bracket")
def test_anharmonicity_bracket(device_levels):
    ec = REFERENCE_DEVICE.ec * 1000
    assert -ec <= device_levels.anharmonicity <= -0.85 * ec


def test_flux_sensitivities_of_two_transitions_agree(device_levels):
    s01 = device_levels.transition_sensitivity(1)
    s12 = device_levels.transition_sensitivity(2)
    assert abs(s12 / s01 - 1) < 0.02


def test_sensitivity_step_halving(device_levels):
    for k in range(1, REFERENCE_DEVICE.num_levels):
        a = flux_sensitivity(REFERENCE_DEVICE, k, step=1e-6)
        b = flux_sensitivity(REFERENCE_DEVICE, k, step=5e-7)
        assert abs(a - b) / abs(a) < 1e-4


def test_sweet_spot_sensitivity_vanishes():
    spec = REFERENCE_DEVICE.replace(flux_bias=0.0)
    for k in range(1, spec.num_levels):
        assert abs(flux_sensitivity(spec, k)) < 1e-3


def test_half_flux_singularity():
    with pytest.raises(SingularityError):
        TransmonSpec(11.16, 0.1815, 0.0, 0.5)
    spec = REFERENCE_DEVICE.replace(flux_bias=0.5 - 2e-7)
    with pytest.raises(SingularityError):
        flux_sensitivity(spec, 1)


def test_regime_warning():
    spec = TransmonSpec(0.1, 0.2, 0.0, 0.0, num_levels=3)
    with pytest.warns(TransmonRegimeWarning):
        lv = solve_levels(spec)
    assert lv.regime_warning


@pytest.mark.parametrize("bad", [dict(ej_sum=0.0), dict(ec=-1.0), dict(asymmetry=1.0),
                                 dict(num_levels=1), dict(charge_cutoff=5)])
def test_spec_validation(bad):
    args = dict(ej_sum=11.16, ec=0.1815, asymmetry=0.0, flux_bias=0.17, num_levels=5,
                charge_cutoff=30)
    args.update(bad)
    with pytest.raises(ValueError):
        TransmonSpec(**args)


def test_json_roundtrip(device_levels):
    import json
    data = json.loads(device_levels.to_json())
    assert data["level_freqs_MHz"][1] == pytest.approx(device_levels.level_freqs[1])
    assert TransmonSpec.from_dict(REFERENCE_DEVICE.to_dict()) == REFERENCE_DEVICE


specs = st.builds(
    TransmonSpec,
    ej_sum=st.floats(5.0, 40.0),
    ec=st.floats(0.1, 0.4),
    asymmetry=st.floats(0.0, 0.6),
    flux_bias=st.floats(-0.4, 0.4),
    num_levels=st.integers(3, 6),
    charge_cutoff=st.just(30),
)


def _solve(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_levels(spec)


@settings(max_examples=40, deadline=None)
@given(specs)
def test_property_ordering_and_lambda_growth(spec):
    lv = _solve(spec)
    assert np.all(np.diff(lv.level_freqs) > 0)
    # levels deep inside the cosine well behave like a weakly anharmonic ladder
    if spec.ej() / spec.ec > 20 and lv.level_freqs[-1] < 1000 * spec.ej():
        assert np.all(np.diff(lv.drive_ratios) > 0)
        assert lv.anharmonicity < 0


@settings(max_examples=25, deadline=None)
@given(specs)
def test_property_cutoff_stability(spec):
    a = level_energies(spec)
    b = level_energies(spec.replace(charge_cutoff=60))
    np.testing.assert_allclose(a[1:], b[1:], rtol=1e-6)


@settings(max_examples=25, deadline=None)
@given(specs, st.integers(-2, 2))
def test_property_flux_periodicity_and_symmetry(spec, shift):
    a = level_energies(spec)
    b = level_energies(spec.replace(flux_bias=spec.flux_bias + shift))
    c = level_energies(spec.replace(flux_bias=-spec.flux_bias))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-7)
    np.testing.assert_allclose(a, c, rtol=1e-9, atol=1e-7)
