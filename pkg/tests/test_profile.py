import numpy as np
import pytest

from shocklab.model import make_model
from shocklab.profile import (ConnectionFailure, RankineHugoniotError, algebraic_residual,
                              export_csv, fit_decay_rate, linearized_rates, ode_residual,
                              solve_profile)


def test_burgers_profile_is_tanh(burgers_profile):
    x = np.linspace(-20, 20, 801)
    err = np.max(np.abs(burgers_profile.evaluate(x)[:, 0] + np.tanh(x / 2)))
    assert err < 1e-11


def test_burgers_tail_rate(burgers_profile):
    a_minus, a_plus = fit_decay_rate(burgers_profile)
    assert a_minus == pytest.approx(1.0, rel=1e-9)
    assert a_plus == pytest.approx(1.0, rel=1e-9)


def test_burgers_derivative_matches_sech(burgers_profile):
    x = np.array([-7.5, -1.0, 0.0, 0.3, 12.0])
    expected = -0.5 / np.cosh(x / 2) ** 2
    np.testing.assert_allclose(burgers_profile.evaluate_x(x)[:, 0], expected, rtol=1e-10, atol=1e-16)


def test_shift_is_translation(burgers_profile):
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(burgers_profile.evaluate(x, shift=0.7), burgers_profile.evaluate(x + 0.7))


def test_far_tail_returns_endstates(burgers_profile):
    vals = burgers_profile.evaluate(np.array([-1e4, 1e4]))[:, 0]
    assert vals.tolist() == [1.0, -1.0]


def test_psystem_profile_quality(psystem, psystem_profile):
    assert ode_residual(psystem, psystem_profile) < 1e-6
    assert algebraic_residual(psystem, psystem_profile) < 1e-12
    fitted = fit_decay_rate(psystem_profile)
    np.testing.assert_allclose(fitted, linearized_rates(psystem_profile), rtol=1e-6)
    np.testing.assert_allclose(fitted, [0.6902651932, 0.4208893281], rtol=1e-8)


def test_psystem_profile_is_monotone(psystem_profile):
    v = psystem_profile.values[:, 0]
    assert np.all(np.diff(v) >= -1e-14)


def test_rankine_hugoniot_violation():
    with pytest.raises(RankineHugoniotError):
        solve_profile(make_model("burgers", u_minus=1.0, u_plus=-0.5))


def test_expansive_jump_has_no_connection():
    with pytest.raises(ConnectionFailure):
        solve_profile(make_model("burgers", u_minus=-1.0, u_plus=1.0))


def test_rest_point_gives_constant_profile():
    prof = solve_profile(make_model("burgers", u_minus=1.0, u_plus=1.0))
    assert prof.constant
    assert np.all(prof.ubar_x == 0)


def test_csv_export(tmp_path, burgers_profile):
    path = tmp_path / "p.csv"
    export_csv(burgers_profile, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (burgers_profile.x.size, 3)
    np.testing.assert_array_equal(data[:, 1], burgers_profile.values[:, 0])
