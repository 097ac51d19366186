"""Standing viscous shock profiles.

The profile ODE B(u) u' = F(u) - F(u_-) is reduced to the parabolic
coordinates u^II by solving the algebraic rows F^I(u) = F^I(u_-).  For the
shipped models the reduced system is scalar, so the connection is found by
pinning the midpoint value at x = 0 and integrating outward in both
directions; each endstate is then an attracting rest point of the
integration direction.  Each half-line is integrated in deviation variables
u - u_{+/-} so the exponentially small tails keep full relative precision.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import ModelSpec

log = logging.getLogger(__name__)


class _StackedDenseOutput:
    """Vectorized evaluation of a DOP853 ``OdeSolution``.

    scipy evaluates dense output segment by segment in a Python loop; here
    the per-segment coefficients are stacked so one call handles all points
    with the same nested Horner scheme.
    """

    def __init__(self, sol):
        self.sol = sol
        ints = sol.interpolants
        self.ok = all(hasattr(i, "F") for i in ints)
        if not self.ok:
            return
        t_old = np.array([i.t_old for i in ints])
        self.ascending = bool(sol.ascending)
        self.t_old = t_old
        self.h = np.array([i.h for i in ints])
        self.y_old = np.array([i.y_old for i in ints])          # (S, m)
        self.F = np.array([i.F for i in ints])                  # (S, K, m)
        self.ts_sorted = sol.ts_sorted

    def __call__(self, t):
        if not self.ok:
            return self.sol(t)
        t = np.asarray(t, dtype=float)
        nseg = self.t_old.size
        seg = np.clip(np.searchsorted(self.ts_sorted, t, side="left") - 1, 0, nseg - 1)
        if not self.ascending:
            seg = nseg - 1 - seg
        x = ((t - self.t_old[seg]) / self.h[seg])[:, None]
        F = self.F[seg]
        y = np.zeros((t.size, F.shape[2]))
        for i in range(F.shape[1]):
            y += F[:, F.shape[1] - 1 - i]
            y *= x if i % 2 == 0 else (1 - x)
        y += self.y_old[seg]
        return y.T


class ConnectionFailure(RuntimeError):
    pass


class RankineHugoniotError(ValueError):
    pass


def make_grid(X=100.0, h=0.05):
    n = int(round(2 * X / h)) + 1
    return np.linspace(-X, X, n)


@dataclass
class Profile:
    x: np.ndarray
    values: np.ndarray          # (N, n)
    ubar_x: np.ndarray          # (N, n), exact ODE right-hand side
    deviation: np.ndarray       # ubar - u_- for x < 0, ubar - u_+ for x >= 0
    u_minus: np.ndarray
    u_plus: np.ndarray
    alpha: dict | None = None
    constant: bool = False
    _solutions: dict = field(default_factory=dict, repr=False)
    _model: ModelSpec | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def X(self) -> float:
        return float(self.x[-1])

    @property
    def family_derivative(self) -> np.ndarray:
        """d ubar^delta / d delta at delta = 0 for the shift family, shape (N, n, 1)."""
        return family_derivative(self)

    def evaluate(self, x, shift=0.0):
        """ubar(x + shift) from the dense ODE solution (exact to solver tolerance)."""
        vals, _, _ = self._eval_all(np.asarray(x, dtype=float) + shift, order=0)
        return vals

    def evaluate_x(self, x, shift=0.0):
        _, dx, _ = self._eval_all(np.asarray(x, dtype=float) + shift, order=1)
        return dx

    def evaluate_xx(self, x, shift=0.0):
        _, _, dxx = self._eval_all(np.asarray(x, dtype=float) + shift)
        return dxx

    def _fast(self, side):
        key = "fast" + side
        if key not in self._solutions:
            self._solutions[key] = _StackedDenseOutput(self._solutions[side])
        return self._solutions[key]

    def _cutoffs(self, level=1e-20):
        """|x| beyond which |ubar - u_endstate| < level * |jump|, per side."""
        cut = self._solutions.get("cutoff")
        if cut is None:
            dev = np.max(np.abs(self.deviation), axis=1)
            thr = level * float(np.max(np.abs(self.u_plus - self.u_minus)))
            big = np.flatnonzero(dev > thr)
            cut = {"-": np.inf, "+": np.inf}
            if big.size and np.all(np.isfinite(dev)):
                lo, hi = self.x[big[0]], self.x[big[-1]]
                if big[0] > 0:
                    cut["-"] = abs(lo) + self.h
                if big[-1] < self.x.size - 1:
                    cut["+"] = abs(hi) + self.h
            self._solutions["cutoff"] = cut
        return cut

    def _eval_all(self, x, order=2):
        """Values and x-derivatives up to ``order``; higher ones are left at zero."""
        x = np.atleast_1d(x)
        n = self.u_minus.size
        vals = np.empty((x.size, n))
        dx = np.zeros((x.size, n))
        dxx = np.zeros((x.size, n))
        if self.constant:
            vals[:] = self.u_minus
            return vals, dx, dxx
        red = self._solutions["reduced"]
        cut = self._cutoffs()
        for side, mask in (("-", x < 0), ("+", x >= 0)):
            # beyond the cutoff the deviation is below double-precision resolution of the state
            flat = mask & (np.abs(x) > cut[side])
            if np.any(flat):
                vals[flat] = self.u_minus if side == "-" else self.u_plus
            mask = mask & ~flat
            if not np.any(mask):
                continue
            xs = x[mask]
            sol = self._solutions[side]
            far = np.abs(xs) > self.X
            d = np.empty(xs.size)
            inside = ~far
            if np.any(inside):
                d[inside] = self._fast(side)(xs[inside])[0]
            if np.any(far):
                # exponential continuation beyond the stored range
                lam = self._solutions["lam" + side]
                edge = np.sign(xs[far]) * self.X
                d[far] = sol(edge)[0] * np.exp(lam * (xs[far] - edge))
            vals[mask], dx[mask], dxx[mask] = red.state_derivs(side, d, order)
        return vals, dx, dxx


class _Reduced:
    """Scalar reduced profile ODE in deviation variables about either endstate."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self.n, self.r = model.n, model.r
        if self.r != 1:
            raise NotImplementedError("profile reduction implemented for parabolic rank r = 1")
        self.k = self.n - self.r

    def endstate(self, side):
        return self.model.u_minus if side == "-" else self.model.u_plus

    def full_deviation(self, side, d):
        """Deviation vector w = u - u_side with w^II = d and F^I(u) = F^I(u_side)."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        w = np.zeros((d.size, self.n))
        w[:, self.k] = d
        if self.k == 0:
            return w
        ue = self.endstate(side)
        J = self.model.jacobian(ue)
        # Newton on F^I(ue + w) - F^I(ue) = 0 for w^I
        wI = -np.linalg.solve(J[: self.k, : self.k], J[: self.k, self.k:])[:, 0][None, :] * d[:, None]
        for _ in range(30):
            w[:, : self.k] = wI
            res = self.model.flux_increment(ue[:, None], w.T)[: self.k].T
            if np.max(np.abs(res)) <= 1e-15 * max(1.0, np.max(np.abs(d))):
                break
            step = np.empty_like(wI)
            for i in range(d.size):
                Ji = self.model.jacobian(ue + w[i])
                step[i] = np.linalg.solve(Ji[: self.k, : self.k], res[i])
            wI = wI - step
        w[:, : self.k] = wI
        return w

    def rhs(self, side, d):
        """x-derivative of the reduced coordinate, plus full deviation and du/dy."""
        ue = self.endstate(side)
        w = self.full_deviation(side, d)
        u = ue[None, :] + w
        inc = self.model.flux_increment(ue[:, None], w.T).T   # F(u) - F(u_side) = F(u) - F(u_-)
        dy = np.empty(w.shape[0])
        dudy = np.empty_like(w)
        for i in range(w.shape[0]):
            J = self.model.jacobian(u[i])
            t = np.zeros(self.n)
            t[self.k] = 1.0
            if self.k:
                t[: self.k] = -np.linalg.solve(J[: self.k, : self.k], J[: self.k, self.k:])[:, 0]
            B = self.model.viscosity(u[i])
            dy[i] = inc[i, self.k] / (B[self.k] @ t)
            dudy[i] = t
        return dy, w, dudy

    def state_derivs(self, side, d, order=2):
        ue = self.endstate(side)
        if order == 0:
            w = self.full_deviation(side, d)
            return ue[None, :] + w, np.zeros_like(w), np.zeros_like(w)
        dy, w, dudy = self.rhs(side, d)
        vals = ue[None, :] + w
        ux = dudy * dy[:, None]
        if order == 1:
            return vals, ux, np.zeros_like(ux)
        eps = 1e-7 * np.maximum(np.abs(d), 1e-300)
        dyp, _, dudyp = self.rhs(side, d + eps)
        dym, _, dudym = self.rhs(side, d - eps)
        # second derivative: d/dx (dudy * dy) = d/dy(dudy * dy) * dy
        uxx = ((dudyp * dyp[:, None] - dudym * dym[:, None]) / (2 * eps)[:, None]) * dy[:, None]
        return vals, ux, uxx

    def linear_rate(self, side):
        ue = self.endstate(side)
        scale = max(1.0, np.max(np.abs(ue)))
        eps = 1e-9 * scale
        dy, _, _ = self.rhs(side, np.array([eps]))
        return float(dy[0] / eps)


def rankine_hugoniot_residual(model: ModelSpec) -> float:
    return float(np.max(np.abs(model.flux(model.u_plus) - model.flux(model.u_minus))))


def solve_profile(model: ModelSpec, grid=None, rtol=1e-13) -> Profile:
    """Standing profile on ``grid`` (default X = 100, h = 0.05)."""
    x = make_grid() if grid is None else np.asarray(grid, dtype=float)
    scale = max(1.0, float(np.max(np.abs(model.flux(model.u_minus)))))
    if rankine_hugoniot_residual(model) > 1e-10 * scale:
        raise RankineHugoniotError(
            f"F(u_+) != F(u_-) (residual {rankine_hugoniot_residual(model):.3g}); "
            "endstates are not a standing shock")
    n = model.n
    if np.allclose(model.u_plus, model.u_minus, rtol=0, atol=1e-14):
        vals = np.tile(model.u_minus, (x.size, 1))
        return Profile(x=x, values=vals, ubar_x=np.zeros_like(vals), deviation=np.zeros_like(vals),
                       u_minus=model.u_minus, u_plus=model.u_plus, alpha=None, constant=True,
                       _model=model)
    red = _Reduced(model)
    k = red.k
    jump = model.u_plus - model.u_minus
    mid = 0.5 * (model.u_minus[0] + model.u_plus[0])

    def first_component(d):
        return (model.u_minus[0] + red.full_deviation("-", d)[0, 0]) - mid

    dI = model.u_plus[k] - model.u_minus[k]
    d0_minus = brentq(first_component, 0.0, dI, xtol=1e-15 * max(1.0, abs(dI)), rtol=1e-15) \
        if n > 1 else mid - model.u_minus[0]
    # the same midpoint state seen from the right endstate
    d0_plus = d0_minus - dI

    sols = {"reduced": red}
    X = float(np.max(np.abs(x)))
    for side, d0, xend in (("-", d0_minus, -X), ("+", d0_plus, X)):
        # direction check: integrating toward xend must approach the endstate
        dy0 = red.rhs(side, np.array([d0]))[0][0]
        if np.sign(dy0) * np.sign(xend) != -np.sign(d0):
            raise ConnectionFailure(f"midpoint flow does not approach u{side}: no admissible connection")

        def f(_, y, side=side):
            return red.rhs(side, y)[0]

        sol = solve_ivp(f, (0.0, xend), [d0], method="DOP853", rtol=rtol, atol=0.0,
                        dense_output=True)
        if not sol.success:
            raise ConnectionFailure(f"integration toward u{side} failed: {sol.message}")
        dend = sol.y[0, -1]
        if not abs(dend) < abs(d0) * 1e-6:
            raise ConnectionFailure(f"profile does not reach u{side} within |x| <= {X}")
        sols[side] = sol.sol
        sols["lam" + side] = red.linear_rate(side)

    prof = Profile(x=x, values=np.empty((x.size, n)), ubar_x=np.empty((x.size, n)),
                   deviation=np.empty((x.size, n)), u_minus=model.u_minus, u_plus=model.u_plus,
                   _solutions=sols, _model=model)
    sols["cutoff"] = {"-": np.inf, "+": np.inf}    # no cutoff until the deviation is known
    vals, dx, _ = prof._eval_all(x)
    prof.values[:] = vals
    prof.ubar_x[:] = dx
    prof.deviation[:] = np.where((x < 0)[:, None], vals - model.u_minus, vals - model.u_plus)
    # recompute deviations directly from the reduced coordinate to keep tail precision
    for side, mask in (("-", x < 0), ("+", x >= 0)):
        d = sols[side](x[mask])[0]
        prof.deviation[mask] = red.full_deviation(side, d)
    del sols["cutoff"]
    prof.alpha = {side: rate for side, rate in zip(("-", "+"), fit_decay_rate(prof))}
    return prof


def ode_residual(model: ModelSpec, profile: Profile, order=4) -> float:
    """max |B(u) u' - F(u) + F(u_-)| over the interior, u' by central differences."""
    u = profile.values
    h = profile.h
    if order == 4:
        du = (-u[4:] + 8 * u[3:-1] - 8 * u[1:-3] + u[:-4]) / (12 * h)
        core = slice(2, -2)
    else:
        du = (u[2:] - u[:-2]) / (2 * h)
        core = slice(1, -1)
    uc = u[core]
    res = np.empty_like(uc)
    Fm = model.flux(model.u_minus)
    for i in range(uc.shape[0]):
        res[i] = model.viscosity(uc[i]) @ du[i] - (model.flux(uc[i]) - Fm)
    return float(np.max(np.abs(res)))


def algebraic_residual(model: ModelSpec, profile: Profile) -> float:
    k = model.n - model.r
    if k == 0:
        return 0.0
    inc = model.flux_increment(profile.u_minus[:, None], (profile.values - profile.u_minus).T)
    return float(np.max(np.abs(inc[:k])))


def fit_decay_rate(profile: Profile, fraction=0.25, floor=1e-250):
    """Least-squares tail decay rates (alpha_-, alpha_+) of |ubar - u_{+/-}|.

    Fitted on the outer ``fraction`` of the grid, i.e. |x| >= (1 - 2 fraction) X.
    """
    if profile.constant:
        raise ValueError("constant profile has no decay rate")
    x = profile.x
    X = profile.X
    lo = (1.0 - 2.0 * fraction) * X
    rates = []
    for mask in (x <= -lo, x >= lo):
        dev = np.linalg.norm(profile.deviation[mask], axis=1)
        xs = np.abs(x[mask])
        good = dev > floor
        if good.sum() < mask.sum():
            warnings.warn("profile tail below noise floor; fit window truncated", RuntimeWarning)
        if good.sum() < 3:
            raise ValueError("too few tail samples above noise floor to fit a decay rate")
        slope = np.polyfit(xs[good], np.log(dev[good]), 1)[0]
        rates.append(float(-slope))
    return tuple(rates)


def linearized_rates(profile: Profile):
    sols = profile._solutions
    return abs(sols["lam-"]), abs(sols["lam+"])


def family_derivative(profile: Profile) -> np.ndarray:
    """Shift family ubar(x + delta): the delta-derivative is ubar_x."""
    return profile.ubar_x[:, :, None]


def coefficient_decay_rate(model: ModelSpec, profile: Profile, window=(10.0, 25.0)):
    """Fitted exponential rate of |A(x) - A_{+/-}| on ``window`` (both tails, minimum)."""
    x = profile.x
    rates = []
    for side, ue, sign in (("-", profile.u_minus, -1), ("+", profile.u_plus, 1)):
        mask = (sign * x >= window[0]) & (sign * x <= window[1])
        Ae = model.jacobian(ue)
        diff = np.array([np.max(np.abs(model.jacobian(u) - Ae)) for u in profile.values[mask]])
        good = diff > 0
        slope = np.polyfit(np.abs(x[mask][good]), np.log(diff[good]), 1)[0]
        rates.append(-slope)
    return min(rates)


def export_csv(profile: Profile, path):
    n = profile.values.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"u{i}" for i in range(n)] + [f"u{i}_x" for i in range(n)])
        for xi, u, ux in zip(profile.x, profile.values, profile.ubar_x):
            w.writerow([repr(float(xi))] + [repr(float(v)) for v in u] + [repr(float(v)) for v in ux])
