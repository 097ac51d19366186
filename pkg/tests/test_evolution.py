import numpy as np
import pytest
from scipy.integrate import quad

from shocklab.ansatz import match_masses
from shocklab.evolution import (CFLError, FarField, MissingHistoryError, Perturbation, Stepper,
                                WaveHistory, cell_grid, characteristic_derivative, decompose,
                                extract_v, least_squares_delta, save_schedule, simulate, step)
from shocklab.kernels import scattering_data
from shocklab.model import endstates


def _profile_drift(model, h, t_end=1.0, X=30.0):
    x = cell_grid(X, h)
    u = -np.tanh(x / 2)[:, None]
    dt = 0.4 * h
    st = Stepper(model, x, dt)
    U = u.T.copy()
    for k in range(int(round(t_end / dt))):
        U = st.step(U, k * dt)
    return float(np.max(np.abs(U.T - u)))


def test_cell_grid():
    x = cell_grid(10.0, 0.5)
    assert x.size == 40
    assert x[0] == -9.75 and x[-1] == 9.75
    np.testing.assert_allclose(x, -x[::-1])


def test_save_schedule_reaches_final_time():
    ts = save_schedule(10.0)
    assert ts[0] == 0.0 and ts[-1] == 10.0
    assert np.all(np.diff(ts) > 0)


def test_exact_burgers_profile_is_nearly_steady(burgers):
    coarse, fine = _profile_drift(burgers, 0.1), _profile_drift(burgers, 0.05)
    assert fine < 3e-5
    assert coarse / fine > 3.0      # second order in h


def test_single_step_function(burgers):
    x = cell_grid(20.0, 0.1)
    u = -np.tanh(x / 2)[:, None]
    out = step(u, 0.04, burgers, x)
    assert out.shape == u.shape
    assert np.max(np.abs(out - u)) < 1e-5


def test_cfl_violation(burgers):
    x = cell_grid(10.0, 0.1)
    with pytest.raises(CFLError):
        Stepper(burgers, x, 0.05)
    Stepper(burgers, x, 0.04)       # exactly at the limit is allowed


def test_mass_conserved_with_fixed_boundaries(burgers, burgers_profile):
    # compactly supported to round-off, so nothing crosses the endstate ghosts
    x = cell_grid(60.0, 0.1)
    u0 = 1e-2 * np.exp(-x * x / 4)[:, None]
    hist = simulate(burgers, burgers_profile, x, u0, 5.0, 0.04, save_times=[0.0, 2.0, 5.0],
                    far_field=False)
    masses = hist.h * hist.pert.sum(axis=(1, 2))
    np.testing.assert_allclose(masses, masses[0], rtol=1e-12)


def test_perturbation_mass_formula():
    p = Perturbation(0.3, "bump", (1.0,), width=2.0)
    exact, _ = quad(lambda z: p.profile(np.array([z]))[0], -np.inf, np.inf, limit=200)
    assert p.mass()[0] == pytest.approx(exact, rel=1e-9)
    assert Perturbation(0.3, "dipole", (1.0, 1.0)).mass().tolist() == [0.0, 0.0]


def test_perturbation_weighted_bound():
    x = np.linspace(-1e3, 1e3, 20001)
    for kind in ("bump", "dipole"):
        u = Perturbation(1.0, kind, (1.0,))(x)[:, 0]
        assert np.all(np.abs(u) <= (1 + np.abs(x)) ** -1.5 * 2.0 ** 0.75 * (1 + 1e-12))


def test_bad_perturbation():
    with pytest.raises(ValueError):
        Perturbation(1.0, "square")
    with pytest.raises(ValueError):
        Perturbation(1.0, width=0.0)


def test_far_field_transport(psystem):
    pert = Perturbation(1e-2, "bump", (0.6, 0.8))
    ff = FarField(psystem, pert)
    x = np.array([-50.0, -3.0, 4.0, 70.0])
    np.testing.assert_allclose(ff(x, 0.0), pert(x), atol=1e-15)
    minus, _ = endstates(psystem)
    # left side: each characteristic component moves with its own speed
    t = 7.0
    expected = sum((pert(x[:1] - minus.a[k] * t) @ minus.L[k])[:, None] * minus.R[:, k][None, :]
                   for k in range(2))
    np.testing.assert_allclose(ff(x[:1], t), expected)


def test_far_field_exterior_norms(burgers):
    pert = Perturbation(1.0, "bump", (1.0,))
    sup, l1, l2 = FarField(burgers, pert).exterior_norms(100.0, 0.0)
    tail1, _ = quad(lambda z: (1 + z * z) ** -0.75, 100.0, np.inf, limit=400)
    tail2, _ = quad(lambda z: (1 + z * z) ** -1.5, 100.0, np.inf, limit=400)
    assert sup == pytest.approx((1 + 1e4) ** -0.75, rel=1e-12)
    assert l1 == pytest.approx(2 * tail1, rel=1e-5)
    assert l2 == pytest.approx(2 * tail2, rel=1e-5)


def test_history_round_trip(tmp_path, burgers, burgers_profile):
    x = cell_grid(20.0, 0.2)
    hist = simulate(burgers, burgers_profile, x, Perturbation(1e-3), 1.0, 0.08,
                    save_times=[0.0, 0.48, 1.0])
    hist.series = {"delta": np.array([0.0, 1.0, 2.0])}
    hist.save(tmp_path)
    back = WaveHistory.load(tmp_path)
    np.testing.assert_array_equal(back.pert, hist.pert)
    # save times snap to whole steps: 1.0 / 0.08 = 12.5 rounds to 12
    np.testing.assert_allclose(back.times, [0.0, 0.48, 0.96])
    assert back.series["delta"].tolist() == [0.0, 1.0, 2.0]
    with pytest.raises(MissingHistoryError):
        WaveHistory.load(tmp_path / "nothing")


def test_least_squares_recovers_a_shift(burgers_profile):
    x = np.linspace(-40, 40, 801)
    utilde = burgers_profile.evaluate(x, 0.123)
    d = least_squares_delta(x, utilde, burgers_profile, np.zeros_like(utilde), 0.1)
    assert d == pytest.approx(0.023, abs=1e-12)


def test_characteristic_derivative_of_a_travelling_field():
    x = np.linspace(-10, 10, 2001)
    times = np.linspace(0, 1, 201)
    a = 0.7
    F = np.array([np.sin(x - a * t)[:, None] for t in times])
    D = characteristic_derivative(times, F, x, a)
    assert np.max(np.abs(D[:, 2:-2])) < 1e-4
    D2 = characteristic_derivative(times, F, x, -a)
    np.testing.assert_allclose(D2[50, 5:-5, 0], (-2 * a * np.cos(x - a * times[50]))[5:-5], atol=1e-4)


def test_decompose_small_burgers_run(burgers, burgers_profile):
    x = cell_grid(60.0, 0.2)
    pert = Perturbation(1e-3)
    minus, plus = endstates(burgers)
    jump = burgers.u_plus - burgers.u_minus
    params = match_masses(pert.mass(), minus, plus, jump)
    scat = scattering_data(minus, plus, jump)
    hist = simulate(burgers, burgers_profile, x, pert, 4.0, 0.08, save_times=save_schedule(4.0, 0.2, 0.0))
    dec = decompose(hist, burgers, burgers_profile, params, scat, far_field=FarField(burgers, pert))
    assert dec.delta[0] == 0.0
    assert dec.char == {}
    # at the start v is the initial perturbation minus the shifted-profile offset
    v0 = burgers_profile.evaluate(x) + pert(x) - burgers_profile.evaluate(x, params.delta_star)
    np.testing.assert_allclose(dec.v[0], v0, atol=1e-15)
    assert params.delta_star == pytest.approx(-pert.mass()[0] / 2)
    # delta is measured from delta_*: the mass not yet absorbed keeps it positive
    assert dec.delta[-1] > 0 and dec.delta_lsq[-1] > 0
    with pytest.raises(ValueError):
        decompose(hist, burgers, burgers_profile, params, scat, tracker="kalman")


def test_nearby_profile_variant_is_second_order(burgers_profile):
    x = np.linspace(-30, 30, 1201)
    ub = burgers_profile.evaluate(x)
    zero = np.zeros_like(ub)
    v, vt = extract_v(x, ub, burgers_profile, zero, 0.0, 0.0)
    assert np.max(np.abs(v)) == 0.0 and np.max(np.abs(vt)) == 0.0
    d = 0.05
    v, vt = extract_v(x, ub, burgers_profile, zero, 0.0, d)
    # -tanh(x/2) has max |u_xx| = 1/(3 sqrt(3))
    bound = d * d / 2 / (3 * np.sqrt(3))
    assert np.max(np.abs(v - vt)) <= bound * (1 + 2 * d)


def test_zero_perturbation_gives_zero_phase(burgers, burgers_profile):
    x = cell_grid(40.0, 0.2)
    pert = Perturbation(0.0)
    minus, plus = endstates(burgers)
    jump = burgers.u_plus - burgers.u_minus
    params = match_masses(pert.mass(), minus, plus, jump)
    hist = simulate(burgers, burgers_profile, x, pert, 2.0, 0.08, save_times=save_schedule(2.0, 0.2, 0.0))
    for tracker in ("duhamel", "least-squares"):
        dec = decompose(hist, burgers, burgers_profile, params, scattering_data(minus, plus, jump),
                        tracker=tracker)
        assert np.max(np.abs(dec.delta)) == 0.0


def test_characteristic_derivative_of_time():
    x = np.linspace(0, 1, 11)
    times = np.array([0.0, 0.3, 0.5, 1.2])
    F = np.repeat(times[:, None, None], x.size, axis=1)
    np.testing.assert_allclose(characteristic_derivative(times, F, x, 0.4), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        characteristic_derivative(times[:1], F[:1], x, 0.4)
