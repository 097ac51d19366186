"""Acceptance suite: one test and one printed pass/fail line per criterion.

Long runs are shared through module-scoped fixtures:

* Burgers, X = 400, h = 0.1, t in [0, 200] at E0 = 1e-2 and 5e-3;
* Burgers tracker run at E0 = 1e-3 up to t = 50;
* p-system, X = 600, h = 0.1, same amplitudes and tracker run.
"""
import time

import numpy as np
import pytest

from conftest import record
from shocklab.ansatz import burgers_diffusion_wave, match_masses
from shocklab.cancellation import ConvolutionProblem, cancellation_scan, h_interaction_check
from shocklab.cli import RunConfig, _transport_constants, run_case, setup_model
from shocklab.kernels import kernel_suite
from shocklab.model import compute_hyperbolic_modes, endstates, make_model
from shocklab.profile import fit_decay_rate, solve_profile
from shocklab.verify import decay_report, theorem_check, tracker_agreement

FIT_WINDOW = (1.0, 200.0)
TRACKER_WINDOW = (1.0, 50.0)


def _config(model, X):
    return RunConfig.from_dict({"model": {"name": model}, "grid": {"X": X, "h": 0.1},
                                "time": {"t_final": 200.0}, "verify": {"duhamel_every": 4}})


class Runs:
    def __init__(self, model, X):
        self.cfg = _config(model, X)
        t0 = time.perf_counter()
        self.setup = setup_model(self.cfg)
        self.main = run_case(self.cfg, self.setup, E0=1e-2)
        self.main_seconds = time.perf_counter() - t0
        self.half = run_case(self.cfg, self.setup, E0=5e-3)
        self.tracker = run_case(self.cfg, self.setup, E0=1e-3, t_final=TRACKER_WINDOW[1])
        self.seconds = time.perf_counter() - t0
        s = self.setup
        self.decay = decay_report(self.main.dec, FIT_WINDOW)
        self.trackers = tracker_agreement(self.tracker.dec, TRACKER_WINDOW, rel=0.2, abs_tol=1e-6)
        self.bounds = theorem_check({1e-2: self.main.dec, 5e-3: self.half.dec}, s.minus, s.plus)


@pytest.fixture(scope="module")
def burgers_runs():
    return Runs("burgers", 400.0)


@pytest.fixture(scope="module")
def psystem_runs():
    return Runs("p-system", 600.0)


def _exp(rep, name):
    return rep.checks[f"rate_{name}"].get("exponent", float("nan"))


def _criterion6(rep):
    names = ("Linf", "L2", "L1")
    ok = all(rep.checks[f"rate_{n}"]["passed"] for n in names)
    return ok, " ".join(f"{n}={_exp(rep, n):+.3f}" for n in names)


def _criterion7(runs):
    rep = runs.decay
    ok_rates = rep.checks["rate_delta"]["passed"] and rep.checks["rate_delta_dot"]["passed"]
    trk = runs.trackers.checks["trackers_agree"]
    detail = (f"delta={_exp(rep, 'delta'):+.3f} delta_dot={_exp(rep, 'delta_dot'):+.3f} "
              f"trackers violations={trk['violations']}/{trk['samples']} (last at t={trk['last_bad_t']})")
    return ok_rates and trk["passed"], detail


def _criterion8(runs):
    z = runs.bounds.fits["zeta"]
    ok = runs.bounds.checks["zeta_finite"]["passed"] and runs.bounds.checks["zeta_linear"]["passed"]
    return ok, f"zeta(200)={z['zeta']:.4g} zeta_half={z['zeta_half']:.4g} ratio={runs.bounds.checks['zeta_linear']['ratio']:.4g}"


def test_criterion_01_burgers_profile():
    t0 = time.perf_counter()
    prof = solve_profile(make_model("burgers"))
    seconds = time.perf_counter() - t0
    x = np.linspace(-20, 20, 4001)
    err = float(np.max(np.abs(prof.evaluate(x)[:, 0] + np.tanh(x / 2))))
    alpha = fit_decay_rate(prof)
    ok = err < 1e-8 and all(abs(a - 1) <= 0.02 for a in alpha) and seconds < 1.0
    assert record(1, ok, f"max error {err:.2e}, alpha = {alpha[0]:.6f}/{alpha[1]:.6f}, {seconds:.2f} s")


def test_criterion_02_kernel_identities():
    t0 = time.perf_counter()
    rep = kernel_suite(seed=0)
    seconds = time.perf_counter() - t0
    c = rep.checks
    detail = (f"semigroup {c['semigroup']['max_error']:.1e}, ratios {c['derivative_ratio_x']['fine']:.4f}/"
              f"{c['derivative_ratio_t']['fine']:.4f}, shift spread {c['shift_lemma_shared']['spread']:.1e}, "
              f"square {c['completed_square']['max_error']:.1e}, {seconds:.1f} s")
    assert record(2, rep.passed and seconds < 30, detail)


def test_criterion_03_cancellation():
    t0 = time.perf_counter()
    reps = {s: cancellation_scan(ConvolutionProblem(source=s), [16, 64, 256]) for s in ("K2", "Kx")}
    seconds = time.perf_counter() - t0
    ok = all(r.checks["liu_ratio_stable"]["passed"] and r.checks["midpoint_advantage_sqrt_t"]["passed"]
             for r in reps.values()) and seconds < 600
    detail = ", ".join(f"{s}: spread {r.checks['liu_ratio_stable']['spread']:.3f}" for s, r in reps.items())
    assert record(3, ok, f"{detail}, {seconds:.1f} s")


def test_criterion_04_diffusion_waves():
    t0 = time.perf_counter()
    m, a, beta, gamma = 1.0, 0.5, 1.0, 0.5
    h, dt, t = 2e-3, 1e-4, 3.0
    x = np.arange(-20, 25, h)
    f = lambda tt: burgers_diffusion_wave(m, a, beta, gamma, x, tt)
    phi = f(t)
    phi_t = (f(t + dt) - f(t - dt)) / (2 * dt)
    cx = lambda g: (g[2:] - g[:-2]) / (2 * h)
    res = phi_t[1:-1] + a * cx(phi) - beta * (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h ** 2 + gamma * cx(phi * phi)
    residual = float(np.max(np.abs(res)))
    xx = np.linspace(-400, 400, 160001)
    mass_err = max(abs(np.trapezoid(burgers_diffusion_wave(m, a, beta, gamma, xx, s), xx) - m)
                   for s in (0.0, 10.0, 100.0))
    z = np.linspace(-6, 6, 241)
    shapes = [np.sqrt(s + 1) * burgers_diffusion_wave(m, a, beta, gamma, a * (s + 1) + z * np.sqrt(s + 1), s)
              for s in (1.0, 10.0, 100.0, 1000.0)]
    collapse = float(max(np.max(np.abs(sh - shapes[0])) for sh in shapes))
    seconds = time.perf_counter() - t0
    ok = residual < 1e-5 and mass_err < 1e-8 and collapse < 1e-6 and seconds < 10
    assert record(4, ok, f"residual {residual:.1e}, mass {mass_err:.1e}, collapse {collapse:.1e}, {seconds:.1f} s")


def test_criterion_05_mass_matching():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    p = make_model("p-system")
    minus, plus = endstates(p)
    jump = p.u_plus - p.u_minus
    worst = 0.0
    for _ in range(200):
        M = rng.normal(size=2) * 10.0 ** rng.uniform(-4, 1)
        prm = match_masses(M, minus, plus, jump)
        back = sum(md.mass * md.r for md in prm.modes) + jump * prm.delta_star
        worst = max(worst, float(np.max(np.abs(back - M)) / max(1.0, np.max(np.abs(M)))))
    b = make_model("burgers")
    bm, bp = endstates(b)
    d_err = max(abs(match_masses([M], bm, bp, b.u_plus - b.u_minus).delta_star + M / 2)
                for M in (1e-3, 0.25, -3.0))
    seconds = time.perf_counter() - t0
    ok = worst < 1e-10 and d_err < 1e-14 and seconds < 1
    assert record(5, ok, f"round-trip {worst:.1e}, Burgers delta_* + M/2 = {d_err:.1e}, {seconds:.2f} s")


def test_criterion_06_burgers_decay_rates(burgers_runs):
    ok, detail = _criterion6(burgers_runs.decay)
    ok = ok and burgers_runs.main_seconds < 600
    assert record(6, ok, f"{detail} ({burgers_runs.main_seconds:.0f} s)")


def test_criterion_07_phase_dynamics(burgers_runs):
    ok, detail = _criterion7(burgers_runs)
    assert record(7, ok, f"Burgers: {detail}")


def test_criterion_08_zeta(burgers_runs):
    ok, detail = _criterion8(burgers_runs)
    assert record(8, ok, f"Burgers: {detail}")


def test_criterion_09_characteristic_gain(burgers_runs, psystem_runs):
    checks = {}
    for name, runs in (("burgers", burgers_runs), ("p-system", psystem_runs)):
        for key, val in runs.bounds.checks.items():
            if key.startswith("char_gain"):
                checks[f"{name}:{key}"] = val
    ok = bool(checks) and all(v["passed"] for v in checks.values())
    detail = ", ".join(f"{k} rho_max={v['rho_max']:.3f}" for k, v in checks.items())
    assert record(9, ok, detail or "no outgoing characteristics")


def test_criterion_10_real_viscosity(psystem_runs):
    r = psystem_runs
    s = r.setup
    structure = s.hypotheses.passed and abs(s.checks["liu_majda"]) > 1e-10 and s.checks["profile_residual"] < 1e-6
    ok6, d6 = _criterion6(r.decay)
    ok7, d7 = _criterion7(r)
    ok8, d8 = _criterion8(r)
    ok = structure and ok6 and ok7 and ok8 and r.seconds < 1800
    detail = (f"structure {'ok' if structure else 'FAIL'} (det {s.checks['liu_majda']:.4f}, residual "
              f"{s.checks['profile_residual']:.1e}); 6[{'ok' if ok6 else 'FAIL'}] {d6}; "
              f"7[{'ok' if ok7 else 'FAIL'}] {d7}; 8[{'ok' if ok8 else 'FAIL'}] {d8}; {r.seconds:.0f} s")
    assert record(10, ok, detail)


def test_criterion_11_h_interaction():
    p = make_model("p-system")
    s = setup_model(RunConfig.from_dict({"model": {"name": "p-system"}}))
    abar, eta0 = _transport_constants(s, compute_hyperbolic_modes)
    reps = {tm: h_interaction_check(tm, s.minus, s.plus, abar, eta0, [16, 64, 256]) for tm in ("psi1", "psi2")}
    ok = all(r.passed for r in reps.values())
    detail = ", ".join(f"{tm}: spread {r.checks['constant_stable']['spread']:.3f}" for tm, r in reps.items())
    assert record(11, ok, f"{detail} (abar = {abar:.4f}, eta0 = {eta0:.4f}); model {p.name}")
