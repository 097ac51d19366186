"""Explicit pieces of the linearized Green distribution and their envelopes.

Everything here is written for the y <= 0 half line.  The y > 0 half is
obtained by mirroring: x -> -x, y -> -y, the roles of the two endstates
swap and all characteristic speeds change sign.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import erfc

from .ansatz import DiiError, basis_matrix
from .model import EndstateData

SQRT_PI = np.sqrt(np.pi)


# -- heat kernel -----------------------------------------------------------

def _positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    return t


def heat_kernel(x, t, beta=1.0):
    t = _positive_time(t)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (4.0 * beta * t)) / np.sqrt(4.0 * np.pi * beta * t)


def heat_kernel_x(x, t, beta=1.0):
    x = np.asarray(x, dtype=float)
    return -x / (2.0 * beta * t) * heat_kernel(x, t, beta)


def heat_kernel_t(x, t, beta=1.0):
    x = np.asarray(x, dtype=float)
    return heat_kernel(x, t, beta) * (x * x / (4.0 * beta * t * t) - 0.5 / t)


def errfn(z):
    """Normalized Gaussian distribution function (1/sqrt(pi)) int_{-inf}^z e^{-s^2} ds."""
    return 0.5 * erfc(-np.asarray(z, dtype=float))


def errfn_prime(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-z * z) / SQRT_PI


# -- scattering and excited coefficients -----------------------------------

@dataclass
class ScatteringData:
    """Expansion of each incoming r_k in the basis {outgoing r_j, int d ubar/d delta}.

    ``l[side]`` has shape (ell, n) and ``c[side]`` maps (j_side, j, k) to the
    coefficient of outgoing r_j; only incoming k columns are meaningful.
    """
    minus: EndstateData
    plus: EndstateData
    l: dict
    c: dict
    unit_c: bool = True

    def coefficient(self, out_side, j, in_side, k):
        if self.unit_c:
            return 1.0
        return self.c[in_side].get((out_side, j, k), 0.0)


def scattering_data(minus: EndstateData, plus: EndstateData, family_integral, unit_c=True):
    fam = np.atleast_1d(np.asarray(family_integral, dtype=float))
    M = basis_matrix(minus, plus, fam)
    if M.shape[0] != M.shape[1] or np.linalg.cond(M) > 1e12:
        raise DiiError("outgoing eigenvectors and profile-family integral are not a basis")
    labels = [("-", int(j)) for j in minus.outgoing] + [("+", int(j)) for j in plus.outgoing]
    ell = fam.size // minus.R.shape[0] if fam.ndim > 1 else 1
    n = minus.R.shape[0]
    l, c = {}, {}
    for ed in (minus, plus):
        lk = np.zeros((ell, n))
        ck = {}
        for k in ed.incoming:
            coef = np.linalg.solve(M, ed.R[:, k])
            lk[:, k] = coef[len(labels):]
            for (side, j), val in zip(labels, coef[:len(labels)]):
                ck[(side, j, int(k))] = float(val)
        l[ed.side] = lk
        c[ed.side] = ck
    return ScatteringData(minus, plus, l, c, unit_c=unit_c)


def _mirror(y, minus, plus):
    """Return (sign, near side data, far side data) for the half line containing y."""
    if y <= 0:
        return 1.0, minus, plus
    return -1.0, plus, minus


# -- excited term e_j -------------------------------------------------------

def excited_term_e(y, t, scat: ScatteringData, j=0, derivative=None):
    """e_j(y, t); ``derivative`` in {None, 't', 'y'} returns the analytic derivative.

    Time t = 0 gives exactly zero for y != 0.
    """
    y = float(y)
    t = float(t)
    if t < 0:
        raise ValueError("excited term needs t >= 0")
    sgn, near, _ = _mirror(y, scat.minus, scat.plus)
    yy = sgn * y
    lrow = scat.l[near.side][j]
    total = 0.0
    for k in near.incoming:
        a = sgn * near.a[k]          # incoming on the mirrored left: a > 0
        beta = near.beta[k]
        if t == 0.0:
            continue
        w = np.sqrt(4.0 * beta * t)
        z1, z2 = (yy + a * t) / w, (yy - a * t) / w
        if derivative is None:
            val = errfn(z1) - errfn(z2)
        elif derivative == "t":
            val = errfn_prime(z1) * (a * t - yy) / (2.0 * t * w) - errfn_prime(z2) * (-a * t - yy) / (2.0 * t * w)
        elif derivative == "y":
            val = sgn * (errfn_prime(z1) - errfn_prime(z2)) / w
        else:
            raise ValueError(f"unknown derivative {derivative!r}")
        total += float(val) * lrow[k]
    return total


def excited_row(y, t, scat: ScatteringData, j=0, derivative=None):
    """Row vector sum_k [errfn(..) - errfn(..)] l_jk l_k^T acting on perturbations.

    This is e_j with each incoming weight l_jk carried along the left
    eigenvector l_k, so that int e_j v0 dy sees the incoming component of
    v0.  For n = 1 it coincides with ``excited_term_e``.
    """
    y = float(y)
    sgn, near, _ = _mirror(y, scat.minus, scat.plus)
    out = np.zeros(near.L.shape[1])
    for k in near.incoming:
        single = ScatteringData(scat.minus, scat.plus,
                                {near.side: _only_column(scat.l[near.side], k)}, scat.c, scat.unit_c)
        out += excited_term_e(y, t, single, j, derivative) * near.L[k]
    return out


def excited_rows(y, t, scat: ScatteringData, j=0, derivative=None):
    """Vectorized ``excited_row`` over an array of y, shape (N, n).

    ``derivative`` may be None, 't', 'y' or 'yt'.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = scat.minus.L.shape[1]
    out = np.zeros((y.size, n))
    if t <= 0:
        return out
    for sgn, near, mask in ((1.0, scat.minus, y <= 0), (-1.0, scat.plus, y > 0)):
        if not np.any(mask):
            continue
        yy = sgn * y[mask]
        for k in near.incoming:
            a = sgn * near.a[k]
            w = np.sqrt(4.0 * near.beta[k] * t)
            z1, z2 = (yy + a * t) / w, (yy - a * t) / w
            if derivative is None:
                val = errfn(z1) - errfn(z2)
            elif derivative == "t":
                val = (errfn_prime(z1) * (a * t - yy) + errfn_prime(z2) * (a * t + yy)) / (2.0 * t * w)
            elif derivative == "y":
                val = sgn * (errfn_prime(z1) - errfn_prime(z2)) / w
            elif derivative == "yt":
                # d_t of errfn'(z)/w with errfn'' = -2 z errfn'
                d1 = errfn_prime(z1) * (-2.0 * z1 * (a / w - z1 / (2.0 * t)) - 1.0 / (2.0 * t)) / w
                d2 = errfn_prime(z2) * (-2.0 * z2 * (-a / w - z2 / (2.0 * t)) - 1.0 / (2.0 * t)) / w
                val = sgn * (d1 - d2)
            else:
                raise ValueError(f"unknown derivative {derivative!r}")
            out[mask] += (scat.l[near.side][j, k] * val)[:, None] * near.L[k][None, :]
    return out


def _only_column(l, k):
    m = np.zeros_like(l)
    m[:, k] = l[:, k]
    return m


def excited_envelope(y, t, scat: ScatteringData, M, order=0):
    """sum_k t^{-order/2} e^{-|y + a_k t|^2 / (M t)} on the side of y."""
    sgn, near, _ = _mirror(y, scat.minus, scat.plus)
    yy = sgn * y
    out = 0.0
    for k in near.incoming:
        a = sgn * near.a[k]
        out += t ** (-0.5 * order) * np.exp(-(yy + a * t) ** 2 / (M * t))
    return out


# -- scattering kernel S ----------------------------------------------------

def _weights(x):
    x = np.asarray(x, dtype=float)
    # e^{-x}/(e^x+e^{-x}) = 1/(1+e^{2x}), stable for both signs
    wm = 1.0 / (1.0 + np.exp(np.clip(2.0 * x, -700, 700)))
    return wm, 1.0 - wm


def path_center(a_j, a_k, y, t):
    """z_jk(y, t) = a_j (t - |y|/|a_k|)."""
    return a_j * (t - abs(y) / abs(a_k))


def averaged_beta(x, t, y, a_j, beta_j, a_k, beta_k, outgoing_side, floor=1e-3):
    """Averaged diffusion along the scattered path; ``floor`` keeps the width positive."""
    x = np.asarray(x, dtype=float)
    xpart = np.maximum(x, 0.0) if outgoing_side == "+" else np.minimum(x, 0.0)
    val = xpart / (a_j * t) * beta_j + abs(y) / abs(a_k * t) * (a_j / a_k) ** 2 * beta_k
    return np.maximum(val, floor * min(beta_j, beta_k))


def scattering_kernel_S(x, t, y, scat: ScatteringData, beta_floor=1e-3):
    """n x n matrix S(x, t; y); vectorized over ``x`` giving shape (N, n, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = scat.minus.R.shape[0]
    out = np.zeros((x.size, n, n))
    if t < 1.0:
        return out
    sgn, near, far = _mirror(y, scat.minus, scat.plus)
    xx, yy = sgn * x, sgn * y
    Lnear = near.L
    w_same, w_other = _weights(xx)
    for k in range(n):
        a_k = sgn * near.a[k]
        b_k = near.beta[k]
        lk = Lnear[k]
        g = np.exp(-(xx - yy - a_k * t) ** 2 / (4 * b_k * t)) / np.sqrt(4 * np.pi * b_k * t)
        rl = np.outer(near.R[:, k], lk)
        if a_k < 0:
            out += g[:, None, None] * rl
            continue
        out += (g * w_same)[:, None, None] * rl
        # reflected back into outgoing modes on the near side
        for j in near.outgoing:
            a_j = sgn * near.a[j]
            bb = averaged_beta(xx, t, yy, a_j, near.beta[j], a_k, b_k, "-", beta_floor)
            z = path_center(a_j, a_k, yy, t)
            gj = np.exp(-(xx - z) ** 2 / (4 * bb * t)) / np.sqrt(4 * np.pi * bb * t)
            c = scat.coefficient(near.side, int(j), near.side, k)
            out += (c * gj * w_same)[:, None, None] * np.outer(near.R[:, j], lk)
        # transmitted into outgoing modes on the far side
        for j in far.outgoing:
            a_j = sgn * far.a[j]
            bb = averaged_beta(xx, t, yy, a_j, far.beta[j], a_k, b_k, "+", beta_floor)
            z = path_center(a_j, a_k, yy, t)
            gj = np.exp(-(xx - z) ** 2 / (4 * bb * t)) / np.sqrt(4 * np.pi * bb * t)
            c = scat.coefficient(far.side, int(j), near.side, k)
            out += (c * gj * w_other)[:, None, None] * np.outer(far.R[:, j], lk)
    return out


# -- hyperbolic transport part H -------------------------------------------

@dataclass
class TransportMode:
    """One scalar hyperbolic mode: speed a*(x), damping eta*(x), and the
    extended eigenvectors calR*(x), calL*(x) as callables returning (N, n)."""
    speed: Callable
    eta: Callable
    calR: Callable
    calL: Callable


def constant_mode(a, eta, calR, calL) -> TransportMode:
    calR = np.asarray(calR, dtype=float)
    calL = np.asarray(calL, dtype=float)
    return TransportMode(
        speed=lambda z: np.full(np.shape(z), float(a)),
        eta=lambda z: np.full(np.shape(z), float(eta)),
        calR=lambda z: np.broadcast_to(calR, (np.size(z), calR.size)),
        calL=lambda z: np.broadcast_to(calL, (np.size(z), calL.size)),
    )


def transport_modes_from_profile(model, profile) -> list:
    """Interpolated hyperbolic modes along a computed profile (empty if r = n)."""
    from .model import compute_hyperbolic_modes
    data = [compute_hyperbolic_modes(model, u, ux) for u, ux in zip(profile.values, profile.ubar_x)]
    if data[0].empty:
        return []
    x = profile.x
    modes = []
    for j in range(data[0].a_star.size):
        a = np.array([d.a_star[j] for d in data])
        e = np.array([d.eta_star[j] for d in data])
        R = np.array([d.calR[:, j] for d in data])
        L = np.array([d.calL[:, j] for d in data])

        def interp(arr):
            if arr.ndim == 1:
                return lambda z, arr=arr: np.interp(z, x, arr)
            return lambda z, arr=arr: np.column_stack([np.interp(np.atleast_1d(z), x, arr[:, i])
                                                        for i in range(arr.shape[1])])
        modes.append(TransportMode(interp(a), interp(e), interp(R), interp(L)))
    return modes


def backward_characteristic(mode: TransportMode, x, t):
    """Foot z*(0) of dz/ds = a*(z), z(t) = x, and zeta = exp(-int_0^t eta*(z(s)) ds)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return x.copy(), np.ones_like(x)
    N = x.size

    def rhs(sig, w):
        z = w[:N]
        return np.concatenate([-mode.speed(z), mode.eta(z)])

    sol = solve_ivp(rhs, (0.0, t), np.concatenate([x, np.zeros(N)]), rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"characteristic integration failed: {sol.message}")
    return sol.y[:N, -1], np.exp(-sol.y[N:, -1])


def hyperbolic_part_H(f, x, t, modes, n=1):
    """int H(x, t; y) f(y) dy for a callable test function f(y) -> (N, n).

    Without hyperbolic modes (strictly parabolic viscosity) this is zero.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((x.size, n))
    for mode in modes:
        foot, zeta = backward_characteristic(mode, x, t)
        fy = np.atleast_2d(f(foot))
        if fy.shape[0] != x.size:
            fy = fy.T
        proj = np.einsum("ni,ni->n", mode.calL(foot), fy)
        scale = mode.speed(foot) / mode.speed(x) * zeta * proj
        out = out + scale[:, None] * mode.calR(x)
    return out


# -- remainder envelopes ----------------------------------------------------

@dataclass
class EnvelopeConstants:
    M: float
    eta: float
    far_field_ratio: float

    @classmethod
    def defaults(cls, minus: EndstateData, plus: EndstateData, alpha, M=None, eta=None, far=None):
        beta_max = max(np.max(minus.beta), np.max(plus.beta))
        speed_max = max(np.max(np.abs(minus.a)), np.max(np.abs(plus.a)))
        return cls(M=8.0 * beta_max if M is None else M,
                   eta=0.5 * alpha if eta is None else eta,
                   far_field_ratio=2.0 * speed_max + 1.0 if far is None else far)


def _prefactors(deriv, t, x, y, eta):
    ex_plus = np.exp(-eta * np.maximum(x, 0.0))
    ex_abs = np.exp(-eta * np.abs(x))
    if deriv == "none":
        gauss = ((t + 1) ** -0.5 * ex_plus + ex_abs) * t ** -0.5
        path = (t + 1) ** -0.5 * t ** -0.5
    elif deriv == "d_y":
        gauss = ((t + 1) ** -0.5 * ex_plus + ex_abs + np.exp(-eta * abs(y))) / t
        path = (t + 1) ** -0.5 / t
    elif deriv == "d_x":
        gauss = ((t + 1) ** -1.0 * ex_plus + ex_abs) / t * (t + 1) ** 0.5
        path = (t + 1) ** -0.5 / t
    else:
        raise ValueError(f"unknown derivative {deriv!r}")
    return gauss, path


def remainder_terms(x, t, y, deriv, minus, plus, const: EnvelopeConstants) -> dict:
    """Envelope families of the remainder bound, each with unit constant."""
    if t <= 0:
        raise ValueError("envelope needs t > 0")
    x = np.asarray(x, dtype=float)
    sgn, near, far = _mirror(y, minus, plus)
    xx, yy = sgn * x, sgn * y
    M, eta = const.M, const.eta
    gpre, ppre = _prefactors(deriv, t, xx, yy, eta)
    corner = np.exp(-eta * (np.abs(xx - yy) + t))
    gauss = sum(np.exp(-(xx - yy - sgn * a * t) ** 2 / (M * t)) for a in near.a) * gpre
    refl = np.zeros_like(xx)
    trans = np.zeros_like(xx)
    for k in near.incoming:
        a_k = sgn * near.a[k]
        if abs(a_k * t) < abs(yy):
            continue
        for j in near.outgoing:
            refl = refl + np.exp(-(xx - path_center(sgn * near.a[j], a_k, yy, t)) ** 2 / (M * t))
        for j in far.outgoing:
            trans = trans + np.exp(-(xx - path_center(sgn * far.a[j], a_k, yy, t)) ** 2 / (M * t))
    refl = refl * ppre * np.exp(-eta * np.maximum(xx, 0.0))
    trans = trans * ppre * np.exp(-eta * np.maximum(-xx, 0.0))
    return {"corner": corner, "gaussian": gauss, "reflected": refl, "transmitted": trans}


def remainder_envelope(x, t, y, deriv, minus, plus, const: EnvelopeConstants):
    """Nonnegative envelope of R (or R_y, R_x); far from the source the
    parabolic bound e^{-eta t} e^{-(x-y)^2/Mt} is used when smaller."""
    terms = remainder_terms(x, t, y, deriv, minus, plus, const)
    total = sum(terms.values())
    x = np.asarray(x, dtype=float)
    far = np.exp(-const.eta * t - (x - y) ** 2 / (const.M * t))
    return np.where(np.abs(x - y) / t >= const.far_field_ratio, np.minimum(total, far), total)


# -- completed square -------------------------------------------------------

def completed_square_center(x, t, s, a_j, a_k):
    return (x * s + (a_k - a_j) * s * (t - s)) / t


def completed_square_split(x, t, s, a_j, a_k, M, y=None):
    """Exponents of e^{-(x-y-a_j(t-s))^2/M(t-s)} e^{-(y-a_k s)^2/Ms} after completing the square.

    Returns (center_exponent, y_quadratic); y_quadratic is a callable of y
    unless ``y`` is supplied, in which case it is evaluated there.
    """
    if not (0.0 < s < t):
        raise ValueError("completed square needs 0 < s < t")
    center = -(x - a_j * (t - s) - a_k * s) ** 2 / (M * t)
    c = completed_square_center(x, t, s, a_j, a_k)
    k = t / (M * s * (t - s))

    def quad(yv):
        return -k * (np.asarray(yv, dtype=float) - c) ** 2

    return center, (quad if y is None else quad(y))


def completed_square_lhs(x, y, t, s, a_j, a_k, M):
    return -(x - y - a_j * (t - s)) ** 2 / (M * (t - s)) - (y - a_k * s) ** 2 / (M * s)


# -- scans ------------------------------------------------------------------

def semigroup_error(x, t, tp, beta=1.0):
    from scipy.integrate import quad
    f = lambda y: heat_kernel(x - y, t, beta) * heat_kernel(y, tp, beta)
    w = 12.0 * np.sqrt(beta * (t + tp))
    val, _ = quad(f, -w + x / 2, w + x / 2, epsabs=1e-14, epsrel=1e-13, limit=200)
    return abs(val - heat_kernel(x, t + tp, beta))


def derivative_ratio_sup(kind, h, t_values=(0.5, 1.0, 4.0, 16.0), span=12.0, beta=1.0):
    """sup |g_x| t^{1/2} / g(x,2t) (kind='x') or |g_t| t / g(x,2t) (kind='t') on a grid of spacing h * sqrt(t)."""
    best = 0.0
    for t in t_values:
        x = np.arange(-span, span + 1e-12, h) * np.sqrt(t)
        g2 = heat_kernel(x, 2 * t, beta)
        if kind == "x":
            r = np.abs(heat_kernel_x(x, t, beta)) * np.sqrt(t) / g2
        else:
            r = np.abs(heat_kernel_t(x, t, beta)) * t / g2
        best = max(best, float(np.max(r)))
    return best


def shift_lemma_constant(t, nx=4001, ns=201, span=40.0):
    """sup over 0 <= s <= sqrt(t) and x of e^{-(x +- s)^2/4t} / e^{-x^2/8t}."""
    x = np.linspace(-span, span, nx) * np.sqrt(t)
    s = np.linspace(0.0, np.sqrt(t), ns)
    X, S = np.meshgrid(x, s)
    best = 0.0
    for sign in (1.0, -1.0):
        r = np.exp(-(X + sign * S) ** 2 / (4 * t) + X * X / (8 * t))
        best = max(best, float(r.max()))
    return best


def template_kernel_constant(a, L, t_values, span=30.0, nx=4001):
    """sup of (1+t)^{-3/4} e^{-(x-at)^2/Lt} / (1+|x-at|+t^{1/2})^{-3/2}."""
    best = 0.0
    for t in t_values:
        xi = np.linspace(-span, span, nx) * np.sqrt(t)
        lhs = (1 + t) ** -0.75 * np.exp(-xi * xi / (L * t))
        rhs = (1 + np.abs(xi) + np.sqrt(t)) ** -1.5
        best = max(best, float(np.max(lhs / rhs)))
    return best


def export_table(path, x, t, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "value"])
        for xi, vi in zip(np.atleast_1d(x), np.atleast_1d(values)):
            w.writerow([f"{xi:.10g}", f"{t:.10g}", f"{vi:.17g}"])


def kernel_suite(seed=0, h=0.02, t_shift=(4.0, 16.0, 64.0, 256.0), n_random=100):
    """Heat-kernel identities used throughout the pointwise analysis.

    semigroup identity, the g_x / g_t ratio suprema under grid refinement
    (h and h/2), the shift-lemma constant across t and the completed-square
    identity at random points.  Returns a ``BoundReport``.
    """
    from .verify import BoundReport

    rep = BoundReport("kernel identities", meta={"seed": seed, "h": h})
    pts = [(0.0, 1.0, 1.0), (1.5, 0.7, 2.3), (-3.0, 4.0, 0.5), (10.0, 16.0, 9.0)]
    sg = max(semigroup_error(x, t, tp) for x, t, tp in pts)
    rep.check("semigroup", sg <= 1e-9, max_error=sg)
    for kind in ("x", "t"):
        coarse, fine = derivative_ratio_sup(kind, h), derivative_ratio_sup(kind, h / 2)
        rep.check(f"derivative_ratio_{kind}", np.isfinite(fine) and abs(fine / coarse - 1) <= 0.1,
                  coarse=coarse, fine=fine)
    consts = [shift_lemma_constant(t) for t in t_shift]
    spread = max(consts) / min(consts) - 1
    rep.check("shift_lemma_shared", spread <= 0.05, constants=consts, spread=spread)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_random):
        t = rng.uniform(0.5, 50.0)
        s = rng.uniform(0.05, 0.95) * t
        x, y = rng.uniform(-20, 20, 2)
        aj, ak = rng.uniform(-3, 3, 2)
        M = rng.uniform(1.0, 10.0)
        center, quadv = completed_square_split(x, t, s, aj, ak, M, y=y)
        lhs = completed_square_lhs(x, y, t, s, aj, ak, M)
        worst = max(worst, abs(center + quadv - lhs) / max(1.0, abs(lhs)))
    rep.check("completed_square", worst <= 1e-12, max_error=worst)
    return rep
