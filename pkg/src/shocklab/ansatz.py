"""Outgoing diffusion waves and mass matching.

A diffusion wave solves the viscous Burgers equation

    phi_t + a phi_x - beta phi_xx = -gamma (phi^2)_x,   phi(x, -1) = m delta_0

and is evaluated in closed form through the Cole-Hopf transform.  Time is
measured from the point source at t = -1, so t = 0 waves are already smooth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcx

from .model import EndstateData


class DiiError(ValueError):
    """The outgoing eigenvectors and the profile-family integrals are not a basis."""


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= -1.0):
        raise ValueError("diffusion waves are defined for t > -1 only")
    return t


def burgers_diffusion_wave(m, a, beta, gamma, x, t, derivatives=False):
    """Cole-Hopf diffusion wave of mass ``m``.

    With tau = t + 1, xi = x - a tau and z = xi / sqrt(4 beta tau),

        phi = sqrt(beta / tau) expm1(R) e^{-z^2} / (2 gamma sqrt(pi) theta),
        theta = 1 + expm1(R) erfc(z) / 2,   R = gamma m / beta,

    which reduces to the Gaussian m (4 pi beta tau)^{-1/2} e^{-z^2} as gamma -> 0.
    With ``derivatives`` the tuple (phi, phi_x, phi_xx, phi_t) is returned.
    """
    if beta <= 0:
        raise ValueError("diffusion wave needs beta > 0")
    tau = _check_time(t) + 1.0
    x = np.asarray(x, dtype=float)
    xi = x - a * tau
    z = xi / np.sqrt(4.0 * beta * tau)
    R = gamma * m / beta
    E = np.expm1(R)
    ratio = 1.0 if R == 0.0 else E / R      # expm1(R)/R, smooth through gamma = 0
    # e^{-z^2} / theta, written with erfcx so large |z| neither overflows nor divides 0/0
    with np.errstate(over="ignore"):
        g = np.where(
            z > 0,
            1.0 / (np.exp(z * z) + 0.5 * E * erfcx(np.maximum(z, 0.0))),
            np.exp(-z * z) / (1.0 + 0.5 * E * erfc(np.minimum(z, 0.0))),
        )
    phi = m * ratio / np.sqrt(4.0 * np.pi * beta * tau) * g
    if not derivatives:
        return phi
    # closed forms from the Cole-Hopf representation
    phi_x = phi * (-xi / (2.0 * beta * tau) + gamma * phi / beta)
    phi_xx = phi_x * (-xi / (2.0 * beta * tau) + 2.0 * gamma * phi / beta) - phi / (2.0 * beta * tau)
    phi_t = -a * phi_x + beta * phi_xx - 2.0 * gamma * phi * phi_x
    return phi, phi_x, phi_xx, phi_t


@dataclass
class WaveMode:
    side: str
    index: int
    a: float
    beta: float
    gamma: float       # coupling used in the Burgers equation of this wave
    r: np.ndarray
    mass: float = 0.0


@dataclass
class AnsatzParams:
    modes: list = field(default_factory=list)
    delta_star: float = 0.0
    family_integral: np.ndarray | None = None

    @property
    def masses(self) -> dict:
        return {(m.side, m.index): m.mass for m in self.modes}


def outgoing_modes(minus: EndstateData, plus: EndstateData, coupling=0.5):
    """Outgoing wave modes; ``coupling`` scales gamma_j into the wave equation.

    The Taylor expansion of F carries d^2F/2, so the wave that actually
    matches the nonlinear dynamics uses gamma_j / 2 (coupling = 0.5).
    """
    out = []
    for ed in (minus, plus):
        for j in ed.outgoing:
            out.append(WaveMode(ed.side, int(j), float(ed.a[j]), float(ed.beta[j]),
                                coupling * float(ed.gamma[j]), ed.R[:, j].copy()))
    return out


def wave_fields(params: AnsatzParams, x, t, derivatives=False):
    """Scalar wave amplitudes per mode, shape (modes, N) or tuple of such."""
    x = np.asarray(x, dtype=float)
    res = [burgers_diffusion_wave(m.mass, m.a, m.beta, m.gamma, x, t, derivatives=derivatives)
           for m in params.modes]
    if not derivatives:
        return np.array(res).reshape(len(params.modes), x.size)
    return tuple(np.array([r[i] for r in res]).reshape(len(params.modes), x.size) for i in range(4))


def build_phi(params: AnsatzParams, x, t, n=None):
    """phi(x, t) = sum_j phi_j(x, t) r_j, shape (N, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is None:
        n = params.modes[0].r.size if params.modes else 1
    out = np.zeros((x.size, n))
    for m in params.modes:
        if m.mass == 0.0:
            continue
        out += burgers_diffusion_wave(m.mass, m.a, m.beta, m.gamma, x, t)[:, None] * m.r[None, :]
    return out


def phi_derivatives(params: AnsatzParams, x, t, n):
    """(phi, phi_x, phi_xx, phi_t) as (N, n) arrays."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    acc = [np.zeros((x.size, n)) for _ in range(4)]
    for m in params.modes:
        if m.mass == 0.0:
            continue
        parts = burgers_diffusion_wave(m.mass, m.a, m.beta, m.gamma, x, t, derivatives=True)
        for k in range(4):
            acc[k] += parts[k][:, None] * m.r[None, :]
    return tuple(acc)


def basis_matrix(minus: EndstateData, plus: EndstateData, family_integral):
    cols = [minus.R[:, j] for j in minus.outgoing] + [plus.R[:, j] for j in plus.outgoing]
    cols.append(np.atleast_1d(family_integral))
    return np.column_stack(cols)


def match_masses(excess_mass, minus: EndstateData, plus: EndstateData, family_integral,
                 coupling=0.5, cond_limit=1e12) -> AnsatzParams:
    """Solve sum_j m_j r_j + (int d ubar/d delta dx) delta_* = excess mass."""
    excess_mass = np.atleast_1d(np.asarray(excess_mass, dtype=float))
    fam = np.atleast_1d(np.asarray(family_integral, dtype=float))
    M = basis_matrix(minus, plus, fam)
    if M.shape[0] != M.shape[1]:
        raise DiiError(f"basis has {M.shape[1]} vectors in dimension {M.shape[0]}")
    if not np.isfinite(np.linalg.cond(M)) or np.linalg.cond(M) > cond_limit:
        raise DiiError("outgoing eigenvectors and profile-family integral are not a basis")
    coef = np.linalg.solve(M, excess_mass)
    modes = outgoing_modes(minus, plus, coupling=coupling)
    for mode, c in zip(modes, coef[:-1]):
        mode.mass = float(c)
    return AnsatzParams(modes=modes, delta_star=float(coef[-1]), family_integral=fam)


def reconstructed_mass(params: AnsatzParams, x, n):
    """int phi(., 0) dx + (int d ubar/d delta) delta_*, by trapezoid quadrature."""
    phi = build_phi(params, x, 0.0, n=n)
    return np.trapezoid(phi, x, axis=0) + params.family_integral * params.delta_star
