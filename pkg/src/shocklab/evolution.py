"""Time evolution of perturbed shocks and the decomposition of the solution.

The scheme is a conservative finite-volume method on cell centres:
Rusanov fluxes with unlimited linear reconstruction for F(u)_x (explicit)
and the viscous term B u_xx (implicit), combined by the ARS(2,2,2) IMEX
Runge-Kutta method.  Ghost cells hold the endstates u_- and u_+.

A sampled profile is not an exact steady state of the discrete scheme, so
every perturbed run is paired with a reference run started from the
unperturbed sample.  Their difference is the perturbation; truncation
errors of the profile cancel between the two.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import splu
from scipy.special import gamma as gamma_fn

from .ansatz import AnsatzParams, phi_derivatives
from .kernels import ScatteringData, excited_rows
from .model import ModelSpec, endstates
from .profile import Profile

ARS_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)
ARS_DELTA = 1.0 - 1.0 / (2.0 * ARS_GAMMA)


class CFLError(ValueError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, message, last_time):
        super().__init__(f"{message} (last valid time {last_time:.6g})")
        self.last_time = last_time


class MissingHistoryError(ValueError):
    pass


def cell_grid(X, h):
    """Cell centres covering [-X, X] with spacing h."""
    N = int(round(2 * X / h))
    return -X + h * (np.arange(N) + 0.5)


def max_speed(model: ModelSpec, states) -> float:
    return max(float(np.max(np.abs(np.linalg.eigvals(model.jacobian(u))))) for u in states)


# -- perturbations --------------------------------------------------------

def taper(x, fraction=0.1):
    """1 in the interior, smooth cosine ramp to 0 over the outer ``fraction`` of the domain."""
    X = np.max(np.abs(x))
    edge = (1 - fraction) * X
    r = np.clip((np.abs(x) - edge) / (X - edge), 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * r))


@dataclass
class Perturbation:
    """Initial perturbation with |u0|, |u0'|, |u0''| <= C E0 (1+|x|)^{-3/2}.

    ``bump``: E0 (1 + z^2)^{-3/4} d, the slowest admissible tail;
    ``dipole``: E0 z (1 + z^2)^{-5/4} d, zero mass.  z = (x - center)/width.
    """

    E0: float
    kind: str = "bump"
    direction: tuple = (1.0,)
    width: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bump", "dipole"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.width <= 0:
            raise ValueError("perturbation width must be positive")
        self.direction = tuple(float(d) for d in np.atleast_1d(self.direction))

    @property
    def n(self):
        return len(self.direction)

    def profile(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        if self.kind == "bump":
            return self.E0 * (1 + z * z) ** -0.75
        return self.E0 * z * (1 + z * z) ** -1.25

    def __call__(self, x):
        return self.profile(x)[:, None] * np.asarray(self.direction)[None, :]

    def mass(self):
        """Whole-line mass, tails included."""
        if self.kind == "dipole":
            return np.zeros(self.n)
        # int (1 + z^2)^{-3/4} dz = sqrt(pi) Gamma(1/4) / Gamma(3/4)
        total = self.E0 * self.width * np.sqrt(np.pi) * gamma_fn(0.25) / gamma_fn(0.75)
        return total * np.asarray(self.direction)


def perturbation(x, E0, kind="bump", direction=None, n=1, width=1.0, center=0.0, tapered=False):
    """Sampled perturbation, shape (N, n); ``tapered`` ramps it to zero at the domain edge."""
    d = tuple(np.ones(n)) if direction is None else direction
    u0 = Perturbation(E0, kind, d, width, center)(x)
    return u0 * taper(x)[:, None] if tapered else u0


def weighted_sup(x, u0):
    return float(np.max(np.max(np.abs(u0), axis=1) * (1 + np.abs(x)) ** 1.5))


class FarField:
    """Linear transport of an initial perturbation about the endstates.

    Far from the shock the perturbation is tiny and the coefficients are
    constant, so each characteristic component l_k u0 just moves with speed
    a_k.  Diffusion changes this smooth inverse-power tail only by a
    relative O(t / x^2), and nonlinear terms by O(E0).  The field supplies
    inflow ghost values and the part of the solution outside the grid.
    """

    def __init__(self, model: ModelSpec, pert):
        self.pert = pert
        self.minus, self.plus = endstates(model)
        self.n = model.n

    def __call__(self, x, t):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.n))
        for ed, mask in ((self.minus, x < 0), (self.plus, x >= 0)):
            if not np.any(mask):
                continue
            for k in range(self.n):
                amp = self.pert(x[mask] - ed.a[k] * t) @ ed.L[k]
                out[mask] += amp[:, None] * ed.R[:, k][None, :]
        return out

    def exterior_norms(self, X, t, points=6000, reach=1e8):
        """(sup, L^1, L^2 squared) of the field over |x| > X.

        Trapezoid rule on a geometric offset grid.  Beyond ``reach`` the
        field is an inverse power of |x|; its exponent is read off the last
        two samples and the remaining tail is added in closed form.
        """
        w = np.concatenate([[0.0], np.geomspace(1e-4, reach, points)])
        sup, l1, l2 = 0.0, 0.0, 0.0
        for sgn in (-1.0, 1.0):
            vals = self(sgn * (X + w), t)
            sup = max(sup, float(np.max(np.abs(vals))))
            f1 = np.sum(np.abs(vals), axis=1)
            f2 = np.sum(vals * vals, axis=1)
            l1 += float(np.trapezoid(f1, w)) + _power_tail(X + w[-2:], f1[-2:])
            l2 += float(np.trapezoid(f2, w)) + _power_tail(X + w[-2:], f2[-2:])
        return sup, l1, l2


def _power_tail(r, f):
    """int_{r1}^inf f1 (x/r1)^{-p} dx with p fitted through (r0, f0), (r1, f1)."""
    if f[1] <= 0 or f[0] <= 0:
        return 0.0
    p = -np.log(f[1] / f[0]) / np.log(r[1] / r[0])
    return float(f[1] * r[1] / (p - 1)) if p > 1 else np.inf


# -- stepping ------------------------------------------------------------------

class Stepper:
    """ARS(2,2,2) IMEX stepper for one model, grid and time step.

    ``ghosts(t)`` returns the (n, 2) ghost values on the left (outer, inner)
    and on the right (inner, outer); the default holds the endstates.
    """

    def __init__(self, model: ModelSpec, x, dt, speed=None, cfl=0.4, ghosts=None):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        self.h = float(self.x[1] - self.x[0])
        self.N = self.x.size
        self.n = model.n
        self.dt = float(dt)
        self.um = np.asarray(model.u_minus, dtype=float)
        self.up = np.asarray(model.u_plus, dtype=float)
        amax = max_speed(model, [self.um, self.up])
        # Rusanov dissipation speed, slightly above max|a| to cover the perturbed states
        self.speed = speed if speed is not None else 1.05 * amax
        limit = cfl * self.h / amax
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt={self.dt:g} exceeds {cfl} h / max|a| = {limit:g}")
        B = np.asarray(model.viscosity(self.um), dtype=float)
        if not np.allclose(B, model.viscosity(self.up)):
            raise ValueError("implicit solver assumes a constant viscosity matrix")
        self.B = B
        self.ghosts = ghosts
        self._steady = (np.repeat(self.um[:, None], 2, axis=1), np.repeat(self.up[:, None], 2, axis=1))
        D2 = sp.diags([np.ones(self.N - 1), -2 * np.ones(self.N), np.ones(self.N - 1)], [-1, 0, 1]) / self.h ** 2
        self.L = sp.kron(sp.csr_matrix(B), D2, format="csc")
        I = sp.identity(self.n * self.N, format="csc")
        self.solver = splu((I - ARS_GAMMA * self.dt * self.L).tocsc())

    def ghost(self, t):
        return self._steady if self.ghosts is None else self.ghosts(t)

    def bc(self, t):
        left, right = self.ghost(t)
        out = np.zeros((self.n, self.N))
        out[:, 0] = left[:, 1] / self.h ** 2
        out[:, -1] = right[:, 0] / self.h ** 2
        return self.B @ out

    # U has layout (n, N)
    def implicit(self, U, t):
        return (self.L @ U.ravel()).reshape(self.n, self.N) + self.bc(t)

    def explicit(self, U, t):
        left, right = self.ghost(t)
        G = np.concatenate([left, U, right], axis=1)
        slope = 0.5 * (G[:, 2:] - G[:, :-2])          # cells 1 .. N+2 of the padded array
        core = G[:, 1:-1]
        UL = core[:, :-1] + 0.5 * slope[:, :-1]
        UR = core[:, 1:] - 0.5 * slope[:, 1:]
        F = self.model.flux
        flux = 0.5 * (F(UL) + F(UR)) - 0.5 * self.speed * (UR - UL)
        return -(flux[:, 1:] - flux[:, :-1]) / self.h

    def _solve(self, rhs):
        return self.solver.solve(rhs.ravel()).reshape(self.n, self.N)

    def step(self, U, t=0.0):
        dt, g, d = self.dt, ARS_GAMMA, ARS_DELTA
        t1, t2 = t + g * dt, t + dt
        E0 = self.explicit(U, t)
        U1 = self._solve(U + dt * g * E0 + dt * g * self.bc(t1))
        I1 = self.implicit(U1, t1)
        E1 = self.explicit(U1, t1)
        rhs = U + dt * (d * E0 + (1 - d) * E1) + dt * (1 - g) * I1 + dt * g * self.bc(t2)
        return self._solve(rhs)


def step(state, dt, model: ModelSpec, x, t=0.0):
    """One IMEX step of the conservative scheme; ``state`` has shape (N, n)."""
    st = Stepper(model, x, dt)
    return st.step(np.asarray(state, dtype=float).T, t).T


def save_schedule(t_final, base=0.05, growth=0.02):
    """Snapshot times with spacing base + growth t."""
    ts = [0.0]
    while ts[-1] < t_final:
        ts.append(min(ts[-1] + base + growth * ts[-1], t_final))
    return np.array(ts)


# -- runs ------------------------------------------------------------------------

@dataclass
class WaveHistory:
    x: np.ndarray
    times: np.ndarray
    pert: np.ndarray              # (T, N, n): perturbed run minus reference run
    model_name: str
    model_params: dict
    E0: float
    dt: float
    meta: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)   # delta, delta_dot, norms ...

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    def save(self, directory, every=1):
        os.makedirs(directory, exist_ok=True)
        files = []
        n = self.pert.shape[2]
        for i in range(0, self.times.size, every):
            name = f"snapshot_{i:05d}.csv"
            with open(os.path.join(directory, name), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x"] + [f"u{k}" for k in range(n)])
                for xi, row in zip(self.x, self.pert[i]):
                    w.writerow([f"{xi:.10g}"] + [f"{r:.17g}" for r in row])
            files.append({"file": name, "t": float(self.times[i])})
        manifest = {"schema": 1, "model": self.model_name, "params": self.model_params,
                    "E0": self.E0, "dt": self.dt,
                    "grid": {"N": int(self.x.size), "h": self.h, "x0": float(self.x[0])},
                    "snapshots": files, "meta": self.meta,
                    "series": {k: np.asarray(v).tolist() for k, v in self.series.items()}}
        path = os.path.join(directory, "manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=1)
        return path

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, "manifest.json")
        if not os.path.exists(path):
            raise MissingHistoryError(f"no manifest in {directory}")
        with open(path) as fh:
            man = json.load(fh)
        times, pert, x = [], [], None
        for entry in man["snapshots"]:
            data = np.loadtxt(os.path.join(directory, entry["file"]), delimiter=",", skiprows=1, ndmin=2)
            x = data[:, 0]
            pert.append(data[:, 1:])
            times.append(entry["t"])
        return cls(x, np.array(times), np.array(pert), man["model"], man["params"], man["E0"],
                   man["dt"], man.get("meta", {}),
                   {k: np.asarray(v) for k, v in man.get("series", {}).items()})


def simulate(model: ModelSpec, profile: Profile, x, pert, t_final, dt, save_times=None,
             far_field=True, progress=None) -> WaveHistory:
    """Evolve ubar + u0 and ubar side by side; store their difference at ``save_times``.

    ``pert`` is a ``Perturbation`` (or an (N, n) array, which implies fixed
    endstate ghosts).  With ``far_field`` the ghost cells of the perturbed
    run follow the transported initial tail, so the grid behaves as a window
    onto the whole line.  Save times are rounded to multiples of dt.
    """
    if isinstance(pert, Perturbation):
        u0 = pert(x)
        ff = FarField(model, pert) if far_field else None
    else:
        u0 = np.asarray(pert, dtype=float)
        ff = None
    ubar = profile.evaluate(x)
    h = float(x[1] - x[0])
    ghosts = None
    if ff is not None:
        xl = x[0] - h * np.array([2.0, 1.0])
        xr = x[-1] + h * np.array([1.0, 2.0])

        def ghosts(t):
            return ((model.u_minus[None, :] + ff(xl, t)).T, (model.u_plus[None, :] + ff(xr, t)).T)
    st = Stepper(model, x, dt, ghosts=ghosts)
    ref = Stepper(model, x, dt)
    if save_times is None:
        save_times = save_schedule(t_final)
    steps = np.unique(np.round(np.asarray(save_times) / dt).astype(int))
    U = (ubar + u0).T.copy()
    R = ubar.T.copy()
    times, stored = [], []
    k = 0
    for target in steps:
        while k < target:
            U = st.step(U, k * dt)
            R = ref.step(R, k * dt)
            k += 1
            if not np.all(np.isfinite(U)):
                raise BlowUpError("non-finite values in the solution", (k - 1) * dt)
        times.append(k * dt)
        stored.append((U - R).T.copy())
        if progress:
            progress(k * dt)
    meta = {"speed": st.speed, "scheme": "ARS(2,2,2) IMEX, Rusanov flux", "far_field": ff is not None}
    if isinstance(pert, Perturbation):
        meta["perturbation"] = {"kind": pert.kind, "E0": pert.E0, "direction": list(pert.direction),
                                "width": pert.width, "center": pert.center}
    return WaveHistory(np.asarray(x), np.array(times), np.array(stored), model.name,
                       dict(model.params), float(pert.E0) if isinstance(pert, Perturbation)
                       else weighted_sup(x, u0), dt, meta=meta)


# -- nonlinear residual and wave forcing ---------------------------------------

def _hess_apply(H, a, b):
    """sum_jk H[i,j,k] a_j b_k for stacks of vectors, H shape (N, n, n, n)."""
    return np.einsum("nijk,nj,nk->ni", H, a, b)


def nonlinear_residual(v, phi, delta_term, model: ModelSpec, ubar):
    """F(phi, v, delta term) for constant viscosity, shape (N, n).

    With u = v + phi + delta_term the perturbation of the shifted profile,
    F = -[F(ubar+u) - F(ubar) - dF(ubar) u] + 1/2 d^2F(ubar)(phi, phi):
    everything nonlinear except the diffusion-wave self interaction, which
    belongs to the wave forcing.
    """
    v, phi, delta_term, ubar = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (v, phi, delta_term, ubar))
    u = v + phi + delta_term
    inc = model.flux_increment(ubar.T, u.T).T
    A = np.array([model.jacobian(w) for w in ubar])
    lin = np.einsum("nij,nj->ni", A, u)
    H = np.array([model.hessian(w) for w in ubar])
    return -(inc - lin) + 0.5 * _hess_apply(H, phi, phi)


def phi_forcing(params: AnsatzParams, model: ModelSpec, profile: Profile, x, t, shift=0.0):
    """Phi = -phi_t - (A(x) phi)_x + B phi_xx - (1/2 d^2F(ubar)(phi, phi))_x, evaluated analytically."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = model.n
    if not params.modes or all(m.mass == 0 for m in params.modes):
        return np.zeros((x.size, n))
    phi, phx, phxx, pht = phi_derivatives(params, x, t, n)
    ub, ubx, _ = profile._eval_all(x + shift, order=1)
    A = np.array([model.jacobian(w) for w in ub])
    H = np.array([model.hessian(w) for w in ub])
    T3 = np.array([model.third(w) for w in ub])
    B = np.asarray(model.viscosity(ub[0]), dtype=float)
    Ax_phi = _hess_apply(H, ubx, phi)                       # (dA/dx) phi
    Aphi_x = Ax_phi + np.einsum("nij,nj->ni", A, phx)
    quad_x = 0.5 * np.einsum("nijkl,nj,nk,nl->ni", T3, ubx, phi, phi) + _hess_apply(H, phi, phx)
    return -pht - Aphi_x + phxx @ B.T - quad_x


# -- decomposition ---------------------------------------------------------------

def characteristic_derivative(times, fields, x, a):
    """(d_t + a d_x) on a stack of snapshots (T, N, n).

    Second order: three-point nonuniform differences in time (one sided at
    the ends) and upwind three-point differences in space.
    """
    times = np.asarray(times, dtype=float)
    F = np.asarray(fields, dtype=float)
    if times.size < 2:
        raise ValueError("characteristic derivative needs at least two snapshots")
    h = float(x[1] - x[0])
    Ft = np.empty_like(F)
    if times.size == 2:
        Ft[:] = (F[1] - F[0]) / (times[1] - times[0])
    else:
        for i in range(times.size):
            j = min(max(i, 1), times.size - 2)
            t0, t1, t2 = times[j - 1], times[j], times[j + 1]
            t = times[i]
            # derivative of the quadratic interpolant through three levels
            w0 = (2 * t - t1 - t2) / ((t0 - t1) * (t0 - t2))
            w1 = (2 * t - t0 - t2) / ((t1 - t0) * (t1 - t2))
            w2 = (2 * t - t0 - t1) / ((t2 - t0) * (t2 - t1))
            Ft[i] = w0 * F[j - 1] + w1 * F[j] + w2 * F[j + 1]
    Fx = np.empty_like(F)
    if a >= 0:
        Fx[:, 2:] = (3 * F[:, 2:] - 4 * F[:, 1:-1] + F[:, :-2]) / (2 * h)
        Fx[:, :2] = (F[:, 1:3] - F[:, 0:2]) / h
    else:
        Fx[:, :-2] = (-3 * F[:, :-2] + 4 * F[:, 1:-1] - F[:, 2:]) / (2 * h)
        Fx[:, -2:] = (F[:, -2:] - F[:, -3:-1]) / h
    return Ft + a * Fx


def least_squares_delta(x, utilde, profile: Profile, phi, delta_star, window=40.0, guess=0.0,
                        tol=1e-13, max_iter=30):
    """delta minimizing sum |utilde - ubar(. + delta_star + delta) - phi|^2 near the shock.

    Gauss-Newton with the exact profile derivative; the residual is small,
    so a handful of iterations reach round-off.
    """
    sel = np.abs(x) <= window
    xs, target = x[sel], (utilde - phi)[sel]
    d = float(guess)
    for _ in range(max_iter):
        vals, dx, _ = profile._eval_all(xs + delta_star + d, order=1)
        step = float(np.sum((target - vals) * dx) / np.sum(dx * dx))
        d += step
        if abs(step) < tol * max(1.0, abs(d)):
            return d
    raise RuntimeError("least-squares phase fit did not converge")


@dataclass
class Decomposition:
    x: np.ndarray
    times: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    v_x: np.ndarray
    char: dict                 # (side, k) -> (T, N, n)
    delta: np.ndarray          # used in v
    delta_dot: np.ndarray
    delta_lsq: np.ndarray
    delta_duhamel: np.ndarray | None
    delta_dot_duhamel: np.ndarray | None
    residual: np.ndarray       # F at each snapshot
    forcing: np.ndarray        # Phi at each snapshot
    norms: dict


def delta_duhamel(times, x, v0, Fres, Phi, scat: ScatteringData, eval_idx=None):
    """delta(t) and its derivative from the Duhamel representation.

    delta(t) = int e(y,t) v0 dy + int_0^t int [-d_y e(y,t-s) F(y,s) + e(y,t-s) Phi(y,s)] dy ds,

    with e acting as the row vector sum_k [..] l_k l_k^T.  The time
    integral uses the trapezoid rule over the stored snapshots; the last
    interval of the derivative integral uses the exact primitive of d_t e.
    """
    if Fres is None or Phi is None:
        raise MissingHistoryError("Duhamel tracking needs the stored residual and forcing")
    times = np.asarray(times, dtype=float)
    h = float(x[1] - x[0])
    idx = range(times.size) if eval_idx is None else eval_idx
    d_out = np.full(times.size, np.nan)
    dd_out = np.full(times.size, np.nan)
    for i in idx:
        t = times[i]
        if t == 0:
            d_out[i] = 0.0
            dd_out[i] = np.nan
            continue
        val = h * np.sum(excited_rows(x, t, scat) * v0)
        dval = h * np.sum(excited_rows(x, t, scat, derivative="t") * v0)
        integ = np.zeros(i + 1)
        dinteg = np.zeros(i + 1)
        for m in range(i + 1):
            tau = t - times[m]
            if tau <= 0:
                continue
            ey = excited_rows(x, tau, scat, derivative="y")
            e = excited_rows(x, tau, scat)
            integ[m] = h * (np.sum(-ey * Fres[m]) + np.sum(e * Phi[m]))
            et = excited_rows(x, tau, scat, derivative="t")
            eyt = excited_rows(x, tau, scat, derivative="yt")
            dinteg[m] = h * (np.sum(-eyt * Fres[m]) + np.sum(et * Phi[m]))
        ts = times[: i + 1]
        val += float(np.trapezoid(integ, ts))
        # derivative: d/dt int_0^t K(t-s) S(s) ds = K(0+) S(t) + int_0^t K_t(t-s) S(s) ds;
        # the last interval [t_{i-1}, t] is done with the primitive of K_t, K(0)=0
        if i >= 1:
            dval += float(np.trapezoid(dinteg[:i], ts[:i]))
            tau = t - times[i - 1]
            ey = excited_rows(x, tau, scat, derivative="y")
            e = excited_rows(x, tau, scat)
            Sm = 0.5 * (Fres[i] + Fres[i - 1])
            Pm = 0.5 * (Phi[i] + Phi[i - 1])
            dval += h * (np.sum(-ey * Sm) + np.sum(e * Pm))
        d_out[i] = val
        dd_out[i] = dval
    return d_out, dd_out


def extract_v(x, utilde, profile: Profile, phi, delta_star, delta, shifted=None):
    """v = utilde - ubar^{delta*} - phi - ubar_x(.+delta*) delta and the
    nearby-profile variant utilde - ubar^{delta*+delta} - phi.

    ``shifted`` may carry precomputed (ubar, ubar_x) at x + delta_star.
    """
    if shifted is None:
        shifted = profile._eval_all(x + delta_star, order=1)[:2]
    ub, ubx = shifted
    v = utilde - ub - phi - ubx * delta
    vt = utilde - profile.evaluate(x, delta_star + delta) - phi
    return v, vt


def decompose(history: WaveHistory, model: ModelSpec, profile: Profile, params: AnsatzParams,
              scat: ScatteringData, tracker="duhamel", duhamel_every=1, lsq_window=40.0,
              far_field: FarField | None = None) -> Decomposition:
    """Split the stored run into profile shift, diffusion waves, phase and v.

    With ``far_field`` the L^p norms include the part of v outside the grid.
    """
    x = history.x
    n = model.n
    ds = params.delta_star
    ub0 = profile.evaluate(x)
    ubs, ubx, _ = profile._eval_all(x + ds, order=1)
    T = history.times.size
    phis = np.array([phi_derivatives(params, x, t, n)[0] for t in history.times])
    Fres = np.empty_like(history.pert)
    Phi = np.empty_like(history.pert)
    lsq = np.empty(T)
    for i, t in enumerate(history.times):
        utilde = ub0 + history.pert[i]
        u = utilde - ubs
        Fres[i] = nonlinear_residual(u - phis[i], phis[i], np.zeros_like(u), model, ubs)
        Phi[i] = phi_forcing(params, model, profile, x, t, ds)
        lsq[i] = least_squares_delta(x, utilde, profile, phis[i], ds, window=lsq_window,
                                     guess=lsq[i - 1] if i else 0.0)
    v0 = ub0 + history.pert[0] - ubs - phis[0]
    d_duh = dd_duh = None
    if tracker == "duhamel":
        idx = list(range(0, T, duhamel_every))
        if idx[-1] != T - 1:
            idx.append(T - 1)
        d_duh, dd_duh = delta_duhamel(history.times, x, v0, Fres, Phi, scat, eval_idx=idx)
        ok = np.isfinite(d_duh)
        d_use = np.interp(history.times, history.times[ok], d_duh[ok])
        ok = np.isfinite(dd_duh)
        dd_use = np.interp(history.times, history.times[ok], dd_duh[ok])
    elif tracker == "least-squares":
        d_use = lsq.copy()
        dd_use = np.gradient(d_use, history.times)
    else:
        raise ValueError(f"unknown tracker {tracker!r}")
    v = np.empty_like(history.pert)
    vt = np.empty_like(history.pert)
    for i in range(T):
        utilde = ub0 + history.pert[i]
        v[i], vt[i] = extract_v(x, utilde, profile, phis[i], ds, d_use[i], (ubs, ubx))
    h = history.h
    v_x = np.gradient(v, h, axis=1)
    minus, plus = endstates(model)
    char = {}
    for ed in (minus, plus):
        for k in ed.outgoing:
            char[(ed.side, int(k))] = characteristic_derivative(history.times, v, x, float(ed.a[k]))
    sup = np.max(np.abs(v), axis=(1, 2))
    l1 = h * np.sum(np.abs(v), axis=(1, 2))
    l2 = h * np.sum(v * v, axis=(1, 2))
    if far_field is not None:
        X = float(x[-1] + 0.5 * h)
        for i, t in enumerate(history.times):
            es, e1, e2 = far_field.exterior_norms(X, t)
            sup[i] = max(sup[i], es)
            l1[i] += e1
            l2[i] += e2
    norms = {"Linf": sup, "L2": np.sqrt(l2), "L1": l1}
    return Decomposition(x, history.times, v, vt, v_x, char, d_use, dd_use, lsq,
                         d_duh, dd_duh, Fres, Phi, norms)


def delta_track(history: WaveHistory, model, profile, params, scat, mode="duhamel", **kw):
    """(delta, delta_dot) series by the requested tracker."""
    dec = decompose(history, model, profile, params, scat, tracker=mode, **kw)
    return dec.delta, dec.delta_dot
