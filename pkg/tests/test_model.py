import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shocklab.model import (HypothesisError, check_hypotheses, compute_hyperbolic_modes,
                            eigendecompose_endstate, endstates, liu_majda_determinant, make_model)


def test_burgers_endstates_are_unit_speeds(burgers):
    minus, plus = endstates(burgers)
    assert minus.a.tolist() == [1.0] and plus.a.tolist() == [-1.0]
    assert minus.beta[0] == 1.0 and minus.gamma[0] == 1.0
    # Burgers is a compressive shock with no outgoing family
    assert minus.outgoing.size == 0 and plus.outgoing.size == 0


def test_psystem_speeds_frozen(psystem_ends):
    minus, plus = psystem_ends
    np.testing.assert_allclose(minus.a, [-2.28219383778, 0.299795059692], atol=1e-10)
    np.testing.assert_allclose(plus.a, [-1.74305774271, -0.239341035378], atol=1e-10)
    np.testing.assert_allclose(minus.beta, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(plus.gamma, [0.534177959847, -0.534177959847], atol=1e-10)
    assert minus.outgoing.tolist() == [0]
    assert plus.outgoing.tolist() == []


def test_psystem_standing_frame(psystem):
    np.testing.assert_allclose(psystem.u_plus, [1.5, -0.495599694522], atol=1e-10)
    np.testing.assert_allclose(psystem.flux(psystem.u_plus), psystem.flux(psystem.u_minus), atol=1e-14)


def test_liu_majda_values(burgers, psystem, psystem_ends):
    bm, bp = endstates(burgers)
    assert liu_majda_determinant(bm, bp, burgers.u_plus - burgers.u_minus) == pytest.approx(-2.0)
    m, p = psystem_ends
    assert liu_majda_determinant(m, p, psystem.u_plus - psystem.u_minus) == pytest.approx(
        -0.6987762995856202, rel=1e-9)


def test_hypotheses_pass_for_both_models(burgers, psystem):
    assert check_hypotheses(burgers).passed
    rep = check_hypotheses(psystem)
    assert rep.passed, rep.results


def test_unknown_model_rejected():
    with pytest.raises(HypothesisError):
        make_model("euler")


def test_complex_speeds_rejected():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(HypothesisError):
        eigendecompose_endstate(A, np.eye(2), np.zeros((2, 2, 2)))


def test_real_viscosity_hyperbolic_mode(psystem, psystem_profile):
    i = int(np.argmin(np.abs(psystem_profile.x)))
    hm = compute_hyperbolic_modes(psystem, psystem_profile.values[i], psystem_profile.ubar_x[i])
    assert hm.a_star.size == 1
    # in the standing frame the specific-volume equation is transported at -s
    assert hm.a_star[0] == pytest.approx(-psystem.params["lab_shock_speed"], rel=1e-12)
    assert np.real(hm.eta_star[0]) > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(1.1, 2.5), st.floats(0.3, 0.95), st.floats(1.05, 3.0))
def test_endstate_eigenvectors_are_biorthogonal(gamma, vm, ratio):
    model = make_model("p-system", v_minus=vm, v_plus=vm * ratio, gamma=gamma)
    for ed in endstates(model):
        np.testing.assert_allclose(ed.L @ ed.R, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(ed.A @ ed.R, ed.R * ed.a[None, :], atol=1e-10)
        assert np.all(np.diff(ed.a) > 0)
