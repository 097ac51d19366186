import numpy as np
import pytest

from shocklab.cancellation import (ConvolutionProblem, TransversalityError, cancellation_scan,
                                   check_initial_data, convolve_source, dipole_data,
                                   h_interaction_check, liu_bound, naive_bound, shifted_pair_data,
                                   two_oracle_agreement, wave_source_constants)


@pytest.mark.parametrize("source", ["K2", "Kx", "wave"])
@pytest.mark.parametrize("x", [3.0, 8.0, 20.0])
def test_two_quadrature_routes_agree(source, x):
    u1, u2, rel = two_oracle_agreement(ConvolutionProblem(source=source), x, 16.0)
    assert rel < 1e-6, (u1, u2)


def test_zero_source_gives_zero():
    assert convolve_source(ConvolutionProblem(source="zero"), 1.0, 4.0) == 0.0


def test_early_times_rejected():
    with pytest.raises(ValueError):
        convolve_source(ConvolutionProblem(), 0.0, 0.5)


def test_unknown_source_rejected():
    with pytest.raises(ValueError):
        ConvolutionProblem(source="cubic")


def test_equal_speeds_rejected():
    with pytest.raises(TransversalityError):
        cancellation_scan(ConvolutionProblem(a=1.0, b=1.0), [16, 64])


def test_cancellation_bound_is_sharper_between_characteristics():
    t = 64.0
    x = np.array([16.0, 32.0, 48.0])
    assert np.all(liu_bound(x, t) < naive_bound(x, t))
    # at the midpoint the interior ratio is exactly (sqrt(2) - 1) sqrt(t)
    from shocklab.cancellation import liu_interior, naive_interior
    r = naive_interior(32.0, t) / liu_interior(32.0, t)
    assert r == pytest.approx((np.sqrt(2) - 1) * np.sqrt(t), rel=1e-12)


def test_scan_report_shape():
    rep = cancellation_scan(ConvolutionProblem(source="K2"), [16, 64], resolution=41)
    assert [e.name for e in rep.entries] == ["liu t=16", "liu t=64"]
    assert rep.passed


def test_wave_source_constants_finite():
    c = wave_source_constants(ConvolutionProblem(source="wave", mass=0.5))
    assert all(np.isfinite(v) and v > 0 for v in c.values())


def test_initial_data_checks():
    y = np.linspace(-400, 400, 40001)
    for v0, _ in (dipole_data(), shifted_pair_data()):
        E0 = float(np.max(np.abs(v0(y)) * (1 + np.abs(y)) ** 1.5))
        check_initial_data(v0, y, E0)
    with pytest.raises(ValueError):
        check_initial_data(lambda yy: (1 + yy * yy) ** -1.5, y, 1.0)


def test_antiderivatives():
    y = np.linspace(-30, 30, 6001)
    for v0, V0 in (dipole_data(), shifted_pair_data()):
        h = 1e-5
        np.testing.assert_allclose((V0(y + h) - V0(y - h)) / (2 * h), v0(y), atol=1e-9)


@pytest.mark.parametrize("template", ["psi1", "psi2"])
def test_h_interaction_constant_stable(psystem_ends, template):
    minus, plus = psystem_ends
    rep = h_interaction_check(template, minus, plus, 0.0, 1.0, [16, 64])
    assert rep.passed, rep.checks
