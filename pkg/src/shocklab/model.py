"""Conservation-law models and endstate characteristic data.

Two models ship: viscous Burgers (strictly parabolic, n = r = 1) and the
isentropic p-system in Lagrangian coordinates with viscosity acting on the
velocity only (n = 2, r = 1).  Both are written in the frame moving with the
shock, so the profile is standing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class HypothesisError(ValueError):
    """Raised when a structural hypothesis on the model fails."""


@dataclass
class ModelSpec:
    """A 1D system u_t + F(u)_x = (B(u) u_x)_x in the shock frame.

    ``hessian(u)`` returns the tensor H[i, j, k] = d^2 F_i / du_j du_k and
    ``third(u)`` the analogous fourth-order tensor.  ``flux_increment(u, w)``
    returns F(u + w) - F(u) without cancellation error for tiny ``w``.
    """

    name: str
    n: int
    r: int
    flux: Callable
    jacobian: Callable
    hessian: Callable
    third: Callable
    viscosity: Callable
    flux_increment: Callable
    u_minus: np.ndarray
    u_plus: np.ndarray
    shock_speed: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u_minus = np.atleast_1d(np.asarray(self.u_minus, dtype=float))
        self.u_plus = np.atleast_1d(np.asarray(self.u_plus, dtype=float))

    @property
    def constant_viscosity(self) -> bool:
        return bool(self.params.get("constant_viscosity", True))


def burgers(u_minus=1.0, u_plus=-1.0, viscosity=1.0) -> ModelSpec:
    """Viscous Burgers u_t + (u^2/2)_x = b u_xx.

    A standing shock needs u_plus = -u_minus (Rankine-Hugoniot with s = 0).
    """
    b = float(viscosity)
    return ModelSpec(
        name="burgers",
        n=1,
        r=1,
        flux=lambda u: 0.5 * np.asarray(u) ** 2,
        jacobian=lambda u: np.array([[float(u[0])]]),
        hessian=lambda u: np.ones((1, 1, 1)),
        third=lambda u: np.zeros((1, 1, 1, 1)),
        viscosity=lambda u: np.array([[b]]),
        flux_increment=lambda u, w: np.asarray(u) * w + 0.5 * np.asarray(w) ** 2,
        u_minus=[u_minus],
        u_plus=[u_plus],
        shock_speed=0.0,
        params={"viscosity": b, "u_minus": float(u_minus), "u_plus": float(u_plus)},
    )


def _pressure_increment(v, dv, gamma):
    # p(v + dv) - p(v) for p(v) = v^-gamma, accurate when dv << v
    return v ** (-gamma) * np.expm1(-gamma * np.log1p(dv / v))


def p_system(v_minus=1.0, v_plus=1.5, u_minus=0.0, gamma=5.0 / 3.0, mu=1.0) -> ModelSpec:
    """Isentropic gas dynamics in Lagrangian form, moved into the shock frame.

    Lab-frame equations: v_t - u_x = 0, u_t + p(v)_x = mu u_xx with
    p(v) = v^-gamma.  The shock speed s follows from Rankine-Hugoniot,
    s^2 = -[p]/[v]; choosing v_minus < v_plus gives a Lax 2-shock (s > 0).
    In the moving frame F(v, u) = (-u - s v, p(v) - s u) and B = diag(0, mu).
    """
    g = float(gamma)
    mu = float(mu)
    if v_minus <= 0 or v_plus <= 0:
        raise HypothesisError("specific volume must be positive")
    if v_plus == v_minus:
        s = float(np.sqrt(g * v_minus ** (-g - 1.0)))
    else:
        s2 = -(v_plus ** -g - v_minus ** -g) / (v_plus - v_minus)
        s = float(np.sqrt(s2))
    u_plus = u_minus - s * (v_plus - v_minus)

    def p(v):
        return v ** -g

    def dp(v):
        return -g * v ** (-g - 1.0)

    def d2p(v):
        return g * (g + 1.0) * v ** (-g - 2.0)

    def d3p(v):
        return -g * (g + 1.0) * (g + 2.0) * v ** (-g - 3.0)

    def flux(w):
        w = np.asarray(w, dtype=float)
        return np.stack([-w[1] - s * w[0], p(w[0]) - s * w[1]])

    def jacobian(w):
        return np.array([[-s, -1.0], [dp(w[0]), -s]])

    def hessian(w):
        h = np.zeros((2, 2, 2))
        h[1, 0, 0] = d2p(w[0])
        return h

    def third(w):
        h = np.zeros((2, 2, 2, 2))
        h[1, 0, 0, 0] = d3p(w[0])
        return h

    def increment(w, dw):
        w = np.asarray(w, dtype=float)
        dw = np.asarray(dw, dtype=float)
        return np.stack([-dw[1] - s * dw[0], _pressure_increment(w[0], dw[0], g) - s * dw[1]])

    return ModelSpec(
        name="p-system",
        n=2,
        r=1,
        flux=flux,
        jacobian=jacobian,
        hessian=hessian,
        third=third,
        viscosity=lambda w: np.array([[0.0, 0.0], [0.0, mu]]),
        flux_increment=increment,
        u_minus=[v_minus, u_minus],
        u_plus=[v_plus, u_plus],
        shock_speed=s,
        params={"gamma": g, "mu": mu, "v_minus": float(v_minus), "v_plus": float(v_plus),
                "u_minus": float(u_minus), "lab_shock_speed": s},
    )


MODELS = {"burgers": burgers, "p-system": p_system}


def make_model(name: str, **params) -> ModelSpec:
    try:
        factory = MODELS[name]
    except KeyError:
        raise HypothesisError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# endstate data


@dataclass
class EndstateData:
    side: str
    a: np.ndarray          # sorted characteristic speeds
    L: np.ndarray          # rows are left eigenvectors l_j
    R: np.ndarray          # columns are right eigenvectors r_j
    beta: np.ndarray
    gamma: np.ndarray
    b_coeffs: np.ndarray   # b[i, j]: B r_j = sum_i b[i, j] r_i
    Gamma_coeffs: np.ndarray  # G[i, j, k]: d2F(r_j, r_k) = sum_i G[i, j, k] r_i
    A: np.ndarray
    B: np.ndarray

    @property
    def outgoing(self) -> np.ndarray:
        """Indices of modes leaving the shock on this side."""
        if self.side == "-":
            return np.flatnonzero(self.a < 0)
        return np.flatnonzero(self.a > 0)

    @property
    def incoming(self) -> np.ndarray:
        if self.side == "-":
            return np.flatnonzero(self.a > 0)
        return np.flatnonzero(self.a < 0)


def _normalize_columns(R):
    R = R / np.linalg.norm(R, axis=0)
    for j in range(R.shape[1]):
        col = R[:, j]
        first = col[np.flatnonzero(np.abs(col) > 1e-14)[0]]
        if first < 0:
            R[:, j] = -col
    return R


def eigendecompose_endstate(A, B, hessian, side="-") -> EndstateData:
    """Characteristic speeds, biorthogonal eigenvectors, and the scalar
    diffusion/coupling coefficients at one endstate.

    ``hessian`` is the tensor d^2F at the endstate, shape (n, n, n).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    H = np.asarray(hessian, dtype=float).reshape((A.shape[0],) * 3)
    n = A.shape[0]
    scale = max(np.linalg.norm(A, np.inf), 1.0)
    lam, vecs = np.linalg.eig(A)
    if np.any(np.abs(lam.imag) > 1e-10 * scale):
        raise HypothesisError(f"strict hyperbolicity fails at u{side}: complex speeds {lam}")
    lam = lam.real
    vecs = vecs.real
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vecs = vecs[:, order]
    if n > 1 and np.min(np.diff(lam)) < 1e-8 * scale:
        raise HypothesisError(f"strict hyperbolicity fails at u{side}: repeated speeds {lam}")
    if np.any(np.abs(lam) < 1e-8 * scale):
        raise HypothesisError(f"noncharacteristic shock fails at u{side}: zero speed in {lam}")
    R = _normalize_columns(vecs)
    L = np.linalg.inv(R)
    b = L @ B @ R
    G = np.einsum("il,ljk,ja,kb->iab", L, H, R, R)
    return EndstateData(
        side=side,
        a=lam,
        L=L,
        R=R,
        beta=np.diag(b).copy(),
        gamma=np.array([G[j, j, j] for j in range(n)]),
        b_coeffs=b,
        Gamma_coeffs=G,
        A=A,
        B=B,
    )


def endstates(model: ModelSpec) -> tuple[EndstateData, EndstateData]:
    out = []
    for side, u in (("-", model.u_minus), ("+", model.u_plus)):
        out.append(eigendecompose_endstate(model.jacobian(u), model.viscosity(u),
                                           model.hessian(u), side=side))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# hypotheses


@dataclass
class HypothesisReport:
    results: dict = field(default_factory=dict)

    def add(self, name, passed, detail=""):
        self.results[name] = {"passed": bool(passed), "detail": detail}

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.results.values())

    def __getitem__(self, name):
        return self.results[name]["passed"]


def check_block_structure(B, r, tol=1e-12):
    n = B.shape[0]
    top_zero = np.all(np.abs(B[: n - r]) <= tol)
    b2 = B[n - r:, n - r:]
    theta = np.min(np.linalg.eigvals(b2).real) if r else 0.0
    return bool(top_zero), float(theta)


def check_hypotheses(model: ModelSpec, states=None) -> HypothesisReport:
    """Structural checks on a model.

    * ``hyperbolic_block``: the reduced hyperbolic speeds a* keep one sign
      and never vanish, at the endstates and at the extra ``states`` (e.g.
      profile samples); constant multiplicity is only checked there;
    * ``strict±``: distinct, real, nonzero characteristic speeds at u±;
    * ``block±``: B has a zero upper block and a positive-definite lower one;
    * ``dissipative±``: B r_j != 0 for every eigenvector (genuine coupling).
    """
    rep = HypothesisReport()
    for side, u in (("-", model.u_minus), ("+", model.u_plus)):
        A = model.jacobian(u)
        B = model.viscosity(u)
        try:
            ed = eigendecompose_endstate(A, B, model.hessian(u), side=side)
            rep.add(f"strict{side}", True, f"speeds {ed.a.tolist()}")
        except HypothesisError as exc:
            rep.add(f"strict{side}", False, str(exc))
            ed = None
        top_zero, theta = check_block_structure(B, model.r)
        rep.add(f"block{side}", top_zero and theta > 0, f"min Re sigma(b2) = {theta:.3g}")
        lam, vecs = np.linalg.eig(A)
        if ed is not None:
            vecs = ed.R
        bnorm = max(np.linalg.norm(B), 1.0)
        worst = np.min(np.linalg.norm(B @ np.real(vecs), axis=0) / np.linalg.norm(np.real(vecs), axis=0))
        rep.add(f"dissipative{side}", worst > 1e-10 * bnorm, f"min |B r| = {worst:.3g}")
    if model.r < model.n:
        pts = [model.u_minus, model.u_plus] + list(states if states is not None else [])
        signs = set()
        ok = True
        detail = ""
        for u in pts:
            try:
                hm = compute_hyperbolic_modes(model, u)
            except HypothesisError as exc:
                ok, detail = False, str(exc)
                break
            if np.any(np.abs(hm.a_star) < 1e-10):
                ok, detail = False, f"zero hyperbolic speed at u={np.asarray(u).tolist()}"
                break
            signs.update(np.sign(hm.a_star).tolist())
        if ok and len(signs) > 1:
            ok, detail = False, "hyperbolic speeds change sign"
        rep.add("hyperbolic_block", ok, detail or f"signs {sorted(signs)}")
    else:
        rep.add("hyperbolic_block", True, "strictly parabolic: no hyperbolic block")
    return rep


def liu_majda_determinant(minus: EndstateData, plus: EndstateData, jump) -> float:
    """det[{r_j^- : a_j^- < 0}, {r_j^+ : a_j^+ > 0}, u_+ - u_-]."""
    jump = np.atleast_1d(np.asarray(jump, dtype=float))
    cols = [minus.R[:, j] for j in minus.outgoing] + [plus.R[:, j] for j in plus.outgoing]
    cols.append(jump)
    M = np.column_stack(cols)
    if M.shape[0] != M.shape[1]:
        raise TypeError(f"Lax count mismatch: {M.shape[1]} columns for n = {M.shape[0]}")
    return float(np.linalg.det(M))


# ---------------------------------------------------------------------------
# hyperbolic (real viscosity) modes


@dataclass
class HyperbolicModeData:
    a_star: np.ndarray
    L_star: np.ndarray      # (n-r, J) columns l_j*
    R_star: np.ndarray      # (n-r, J) columns r_j*
    calL: np.ndarray        # (n, J)
    calR: np.ndarray        # (n, J)
    eta_star: np.ndarray
    d_star: np.ndarray

    @property
    def empty(self) -> bool:
        return self.a_star.size == 0


def compute_hyperbolic_modes(model: ModelSpec, u, u_x=None, eps=1e-6) -> HyperbolicModeData:
    """Reduced hyperbolic speeds a_j*, extended eigenblocks and dissipation
    coefficients eta_j* at state ``u``.  ``u_x`` feeds the d/dx(B22^-1 B21)
    term of the effective dissipation; omitted means zero."""
    n, r = model.n, model.r
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if r == n:
        z = np.zeros((0,))
        return HyperbolicModeData(z, np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((n, 0)),
                                  np.zeros((n, 0)), z, np.zeros((0, 0)))
    k = n - r
    A = model.jacobian(u)
    B = model.viscosity(u)
    A11, A12, A21, A22 = A[:k, :k], A[:k, k:], A[k:, :k], A[k:, k:]
    B21, B22 = B[k:, :k], B[k:, k:]
    if abs(np.linalg.det(B22)) < 1e-14:
        raise HypothesisError("B22 is singular")
    B22i = np.linalg.inv(B22)
    Astar = A11 - A12 @ B22i @ B21
    lam, vecs = np.linalg.eig(Astar)
    lam = lam.real
    order = np.argsort(lam)
    lam = lam[order]
    Rs = _normalize_columns(vecs.real[:, order])
    Ls = np.linalg.inv(Rs).T
    calL = np.vstack([Ls, np.zeros((r, k))])
    calR = np.vstack([Rs, -B22i @ B21 @ Rs])
    dterm = np.zeros((r, k))
    if u_x is not None:
        u_x = np.asarray(u_x, dtype=float)

        def m(w):
            Bw = model.viscosity(w)
            return np.linalg.inv(Bw[k:, k:]) @ Bw[k:, :k]

        dterm = B22 @ (m(u + eps * u_x) - m(u - eps * u_x)) / (2 * eps)
    Dstar = A12 @ B22i @ (A21 - A22 @ B22i @ B21 + B22i @ B21 @ Astar + dterm)
    # sign chosen so eta > 0 means damping (p-system: eta = -p'(v)/mu)
    eta = np.einsum("ij,ik,kj->j", Ls, Dstar, Rs)
    return HyperbolicModeData(lam, Ls, Rs, calL, calR, eta, Dstar)
