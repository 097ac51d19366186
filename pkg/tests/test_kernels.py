import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shocklab.kernels import (completed_square_lhs, completed_square_split, errfn, excited_rows,
                              excited_term_e, heat_kernel, heat_kernel_t, heat_kernel_x,
                              kernel_suite, scattering_data, semigroup_error, shift_lemma_constant)
from shocklab.model import endstates


@pytest.fixture(scope="module")
def scat_p(psystem):
    minus, plus = endstates(psystem)
    return scattering_data(minus, plus, psystem.u_plus - psystem.u_minus)


@pytest.fixture(scope="module")
def scat_b(burgers):
    minus, plus = endstates(burgers)
    return scattering_data(minus, plus, burgers.u_plus - burgers.u_minus)


def test_heat_kernel_normalized():
    x = np.linspace(-200, 200, 80001)
    for t in (0.5, 4.0, 30.0):
        assert np.trapezoid(heat_kernel(x, t, 2.0), x) == pytest.approx(1.0, rel=1e-12)


def test_heat_kernel_solves_heat_equation():
    x = np.linspace(-5, 5, 21)
    t, beta, h = 1.3, 0.7, 1e-4
    gxx = (heat_kernel(x + h, t, beta) - 2 * heat_kernel(x, t, beta) + heat_kernel(x - h, t, beta)) / h ** 2
    np.testing.assert_allclose(heat_kernel_t(x, t, beta), beta * gxx, atol=1e-6)
    np.testing.assert_allclose(heat_kernel_x(x, t, beta),
                               (heat_kernel(x + h, t, beta) - heat_kernel(x - h, t, beta)) / (2 * h), atol=1e-9)


def test_errfn_limits():
    assert errfn(-np.inf) == pytest.approx(0.0)
    assert errfn(np.inf) == pytest.approx(1.0)
    assert errfn(0.0) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.floats(0.1, 20), st.floats(0.1, 20))
def test_semigroup_property(x, t, tp):
    assert semigroup_error(x, t, tp) < 1e-11


def test_shift_constant_is_time_independent():
    consts = [shift_lemma_constant(t) for t in (4.0, 64.0)]
    assert consts[0] == pytest.approx(consts[1], rel=1e-12)
    assert consts[0] == pytest.approx(np.exp(0.25), rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 50), st.floats(0.05, 0.95), st.floats(-20, 20), st.floats(-20, 20),
       st.floats(-3, 3), st.floats(-3, 3), st.floats(1, 10))
def test_completed_square(t, frac, x, y, aj, ak, M):
    s = frac * t
    c, q = completed_square_split(x, t, s, aj, ak, M, y=y)
    lhs = completed_square_lhs(x, y, t, s, aj, ak, M)
    assert c + q == pytest.approx(lhs, rel=1e-11, abs=1e-11)


def test_excited_term_vanishes_at_start(scat_b):
    assert excited_term_e(-2.0, 0.0, scat_b) == 0.0
    np.testing.assert_array_equal(excited_rows(np.array([-1.0, 1.0]), 0.0, scat_b), 0.0)


def test_excited_term_burgers_far_limit(scat_b):
    # incoming speeds are +1 on the left and -1 on the right; l = 1 / (u_+ - u_-) = -1/2
    assert excited_term_e(-3.0, 1e4, scat_b) == pytest.approx(-0.5, rel=1e-12)
    assert excited_term_e(4.0, 1e4, scat_b) == pytest.approx(-0.5, rel=1e-12)


def test_excited_rows_match_scalar_rows(scat_p):
    from shocklab.kernels import excited_row
    ys = np.array([-7.0, -0.3, 0.2, 5.0])
    for d in (None, "t", "y"):
        rows = excited_rows(ys, 3.0, scat_p, derivative=d)
        ref = np.array([excited_row(y, 3.0, scat_p, derivative=d) for y in ys])
        np.testing.assert_allclose(rows, ref, atol=1e-14)


@pytest.mark.parametrize("d,base,h_dir", [("t", None, "t"), ("y", None, "y"), ("yt", "y", "t")])
def test_excited_derivatives(scat_p, d, base, h_dir):
    ys = np.array([-9.0, -2.0, -0.4, 0.6, 3.0, 10.0])
    t, h = 5.0, 1e-5
    got = excited_rows(ys, t, scat_p, derivative=d)
    if h_dir == "t":
        fd = (excited_rows(ys, t + h, scat_p, derivative=base)
              - excited_rows(ys, t - h, scat_p, derivative=base)) / (2 * h)
    else:
        fd = (excited_rows(ys + h, t, scat_p, derivative=base)
              - excited_rows(ys - h, t, scat_p, derivative=base)) / (2 * h)
    np.testing.assert_allclose(got, fd, atol=1e-8)


def test_kernel_suite_passes():
    rep = kernel_suite()
    assert rep.passed, rep.checks
    assert rep.checks["derivative_ratio_x"]["fine"] == pytest.approx(np.sqrt(2) * np.exp(-0.5), rel=1e-12)
