"""Template functions, the zeta functional, decay fits and bound reports."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import EndstateData


def _mode_speeds(minus: EndstateData, plus: EndstateData, incoming=False):
    """Speeds entering the psi_1 sum: outgoing a_k^- < 0 and a_k^+ > 0.

    ``incoming`` adds the incoming speeds too; without outgoing modes
    (scalar Lax shocks) the literal sum is empty and this is the only way
    to get a nontrivial envelope.
    """
    speeds = [("-", int(k), float(minus.a[k])) for k in minus.outgoing]
    speeds += [("+", int(k), float(plus.a[k])) for k in plus.outgoing]
    if incoming:
        speeds += [("-", int(k), float(minus.a[k])) for k in minus.incoming]
        speeds += [("+", int(k), float(plus.a[k])) for k in plus.incoming]
    # overlapping speeds merge into one term
    merged, seen = [], set()
    for s in speeds:
        key = round(s[2], 12)
        if key not in seen:
            seen.add(key)
            merged.append(s)
    return merged


@dataclass
class TemplateEval:
    x: np.ndarray
    t: float
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: np.ndarray
    psi4: np.ndarray
    psi1_j: dict          # (side, k) -> psi_1^{k,side}
    psi1_bar: dict
    chi: np.ndarray
    speeds: list


def cone_bounds(minus: EndstateData, plus: EndstateData):
    return float(minus.a[0]), float(plus.a[-1])


def templates(x, t, minus: EndstateData, plus: EndstateData, incoming=False) -> TemplateEval:
    if t < 0:
        raise ValueError("templates need t >= 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    speeds = _mode_speeds(minus, plus, incoming)
    st = np.sqrt(t)
    psi1_j = {(side, k): (1.0 + np.abs(x - a * t) + st) ** -1.5 for side, k, a in speeds}
    psi1 = sum(psi1_j.values()) if psi1_j else np.zeros_like(x)
    psi1_bar = {key: psi1 - val for key, val in psi1_j.items()}
    lo, hi = cone_bounds(minus, plus)
    chi = ((x >= lo * t) & (x <= hi * t)).astype(float)
    ax = np.abs(x)
    psi2 = (1 + ax) ** -0.5 * (1 + ax + t) ** -0.5 * (1 + ax + st) ** -0.5 * chi
    psi3 = (1 + ax + t) ** -1.0 * (1 + ax) ** -1.0 * chi
    psi4 = (1 + ax + t) ** -1.75 * chi
    return TemplateEval(x, float(t), psi1, psi2, psi3, psi4, psi1_j, psi1_bar, chi,
                        [(s, k, a) for s, k, a in speeds])


# -- decay fits -------------------------------------------------------------

@dataclass
class DecayFit:
    exponent: float
    constant: float
    stderr: float
    residual: float
    n: int


def fit_decay(t, values, window=None) -> DecayFit:
    """Least-squares slope of log(value) against log(1 + t)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < 8:
        raise ValueError(f"decay fit needs at least 8 samples, got {t.size}")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("decay fit needs positive finite values")
    X = np.log1p(t)
    Y = np.log(v)
    A = np.column_stack([X, np.ones_like(X)])
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    r = Y - A @ coef
    dof = max(t.size - 2, 1)
    s2 = float(r @ r) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return DecayFit(float(coef[0]), float(np.exp(coef[1])), float(np.sqrt(cov[0, 0])),
                    float(np.sqrt(np.mean(r * r))), int(t.size))


# -- zeta --------------------------------------------------------------------

@dataclass
class ZetaSeries:
    t: np.ndarray
    zeta: np.ndarray
    parts: dict
    s_min: float


def _safe_ratio(num, den):
    num = np.abs(num)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return r


def zeta_terms(x, t, v, v_x, char, delta, delta_dot, minus, plus, incoming=False):
    """The five instantaneous suprema at one snapshot.

    ``char`` maps (side, k) -> (d_t + a_k d_x) v for each outgoing mode.
    """
    T = templates(x, t, minus, plus, incoming=incoming)
    base = T.psi1 + T.psi2
    tail = T.psi3 + T.psi4
    out = {
        "v": float(np.max(_safe_ratio(v, base))) if np.size(v) else 0.0,
        "v_x": float(np.max(_safe_ratio(v_x, t ** -0.5 * base + tail))) if np.size(v_x) else 0.0,
    }
    cs = 0.0
    for key, field_ in (char or {}).items():
        if key not in T.psi1_j:
            continue
        den = t ** -1.0 * (1 + t) ** 0.25 * T.psi1_j[key] + t ** -0.5 * (T.psi1_bar[key] + T.psi2) + tail
        cs += float(np.max(_safe_ratio(field_, den)))
    out["char"] = cs
    out["delta"] = float(np.max(np.abs(delta))) * (1 + t) ** 0.5
    out["delta_dot"] = float(np.max(np.abs(delta_dot))) * (1 + t)
    return out


def zeta(times, snapshots, minus, plus, s_min=1.0, incoming=False) -> ZetaSeries:
    """zeta(t) from snapshot dicts with keys x, v, v_x, char, delta, delta_dot.

    Suprema run over stored snapshots with s >= s_min, so the series is
    nondecreasing by construction.
    """
    times = np.asarray(times, dtype=float)
    keys = ("v", "v_x", "char", "delta", "delta_dot")
    running = {k: 0.0 for k in keys}
    parts = {k: [] for k in keys}
    zs = []
    for t, snap in zip(times, snapshots):
        if t >= s_min:
            cur = zeta_terms(snap["x"], t, snap["v"], snap["v_x"], snap.get("char"),
                             snap["delta"], snap["delta_dot"], minus, plus, incoming)
            for k in keys:
                running[k] = max(running[k], cur[k])
        for k in keys:
            parts[k].append(running[k])
        zs.append(sum(running.values()))
    return ZetaSeries(times, np.array(zs), {k: np.array(v) for k, v in parts.items()}, s_min)


# -- reports -----------------------------------------------------------------

@dataclass
class RatioEntry:
    name: str
    sup_ratio: float
    argmax_x: float
    argmax_t: float
    constant: float | None = None


@dataclass
class BoundReport:
    title: str
    entries: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v["passed"]) for v in self.checks.values())

    def check(self, name, passed, **detail):
        self.checks[name] = {"passed": bool(passed), **detail}
        return bool(passed)

    def to_json(self, path=None):
        def conv(o):
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, DecayFit):
                return asdict(o)
            raise TypeError(type(o))
        payload = {"title": self.title, "passed": self.passed,
                   "entries": [asdict(e) for e in self.entries],
                   "fits": {k: (asdict(v) if isinstance(v, DecayFit) else v) for k, v in self.fits.items()},
                   "checks": self.checks, "meta": self.meta}
        text = json.dumps(payload, indent=2, default=conv)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "sup_ratio", "argmax_x", "argmax_t", "constant"])
            for e in self.entries:
                w.writerow([e.name, f"{e.sup_ratio:.10g}", f"{e.argmax_x:.6g}", f"{e.argmax_t:.6g}",
                            "" if e.constant is None else f"{e.constant:.10g}"])


def sup_ratio(name, x, t, num, den) -> RatioEntry:
    r = _safe_ratio(num, den)
    i = int(np.argmax(r))
    return RatioEntry(name, float(r[i]), float(np.atleast_1d(x)[i]), float(t))


# -- theorem check ---------------------------------------------------------------

def snapshots(dec):
    """Adapt a ``Decomposition`` to the snapshot dicts consumed by ``zeta``."""
    out = []
    for i in range(dec.times.size):
        out.append({"x": dec.x, "v": np.max(np.abs(dec.v[i]), axis=1),
                    "v_x": np.max(np.abs(dec.v_x[i]), axis=1),
                    "char": {k: np.max(np.abs(f[i]), axis=1) for k, f in dec.char.items()},
                    "delta": dec.delta[i], "delta_dot": dec.delta_dot[i]})
    return out


def characteristic_gain(dec, minus, plus, t_min=4.0, width=3.0):
    """Extra decay of (d_t + a_j d_x) v over v_x near each outgoing wave.

    In the neighbourhood |x - a_j (t+1)| <= width sqrt(4 beta_j (t+1)) of
    the j-wave both derivatives are measured against the generic
    derivative weight s^{-1/2}(psi_1 + psi_2) + psi_3 + psi_4; the ratio of
    the two suprema is rho_j(t).  Away from the j-wave the characteristic
    bound coincides with the generic one, so no gain is claimed there.
    Returns {(side, k): (times, rho)}.
    """
    table = {}
    for ed in (minus, plus):
        for k in ed.outgoing:
            key = (ed.side, int(k))
            if key not in dec.char:
                continue
            a, b = float(ed.a[k]), float(ed.beta[k])
            ts, rho = [], []
            for i, t in enumerate(dec.times):
                if t < t_min:
                    continue
                T = templates(dec.x, t, minus, plus)
                W = t ** -0.5 * (T.psi1 + T.psi2) + T.psi3 + T.psi4
                near = np.abs(dec.x - a * (t + 1)) <= width * np.sqrt(4 * b * (t + 1))
                c = np.max(np.abs(dec.char[key][i]), axis=1)[near] / W[near]
                g = np.max(np.abs(dec.v_x[i]), axis=1)[near] / W[near]
                ts.append(float(t))
                rho.append(float(np.max(c) / np.max(g)))
            table[key] = (np.array(ts), np.array(rho))
    return table


def _family_ratios(dec, minus, plus, s_min, incoming, t_max=None):
    """Sup ratio of each bound family over s_min <= t <= t_max, with argmax."""
    fams = {}

    def upd(name, r, x, t):
        i = int(np.argmax(r))
        if name not in fams or r[i] > fams[name].sup_ratio:
            fams[name] = RatioEntry(name, float(r[i]), float(x[i]), float(t))

    for i, t in enumerate(dec.times):
        if t < s_min or (t_max is not None and t > t_max):
            continue
        T = templates(dec.x, t, minus, plus, incoming=incoming)
        base = T.psi1 + T.psi2
        tail = T.psi3 + T.psi4
        upd("v", _safe_ratio(np.max(np.abs(dec.v[i]), axis=1), base), dec.x, t)
        upd("v_tilde", _safe_ratio(np.max(np.abs(dec.v_tilde[i]), axis=1), base), dec.x, t)
        upd("v_x", _safe_ratio(np.max(np.abs(dec.v_x[i]), axis=1), t ** -0.5 * base + tail), dec.x, t)
        for key, f in dec.char.items():
            if key not in T.psi1_j:
                continue
            den = t ** -1.0 * (1 + t) ** 0.25 * T.psi1_j[key] + t ** -0.5 * (T.psi1_bar[key] + T.psi2) + tail
            upd(f"char{key[0]}{key[1]}", _safe_ratio(np.max(np.abs(f[i]), axis=1), den), dec.x, t)
        upd("delta", np.array([abs(dec.delta[i]) * (1 + t) ** 0.5]), [0.0], t)
        upd("delta_dot", np.array([abs(dec.delta_dot[i]) * (1 + t)]), [0.0], t)
    return fams


def theorem_check(runs, minus, plus, s_min=1.0, incoming=False, band=0.3, window_band=2.0,
                  gain_t_min=4.0) -> BoundReport:
    """Bound report for the pointwise estimates from runs at several amplitudes.

    ``runs`` maps E0 -> Decomposition and must hold at least two amplitudes
    (the largest and half of it are compared).  For each bound family the
    fitted constant is C = sup ratio / E0.  Checks:

    * linearity: C at E0/2 within ``band`` of C at E0;
    * window: C over the full horizon at most ``window_band`` times C over
      its first half;
    * zeta finite at the final time, and zeta halving with E0 (within band);
    * characteristic gain: rho_j(t) < 1 for t >= ``gain_t_min``.
    """
    amps = sorted(runs)
    if len(amps) < 2:
        raise ValueError("theorem_check needs runs at two amplitudes")
    E_hi = amps[-1]
    E_lo = min(amps, key=lambda e: abs(e - E_hi / 2))
    rep = BoundReport("pointwise bounds", meta={"s_min": s_min, "incoming_templates": incoming,
                                                 "amplitudes": [E_lo, E_hi]})
    hi, lo = runs[E_hi], runs[E_lo]
    T_end = float(hi.times[-1])
    f_hi = _family_ratios(hi, minus, plus, s_min, incoming)
    f_lo = _family_ratios(lo, minus, plus, s_min, incoming)
    f_half = _family_ratios(hi, minus, plus, s_min, incoming, t_max=T_end / 2)
    for name, e in f_hi.items():
        e.constant = e.sup_ratio / E_hi
        rep.entries.append(e)
        c_lo = f_lo[name].sup_ratio / E_lo
        rel = c_lo / e.constant if e.constant > 0 and np.isfinite(e.constant) else np.inf
        rep.check(f"linear_{name}", np.isfinite(rel) and abs(rel - 1) <= band,
                  C=e.constant, C_half=c_lo, ratio=rel)
        c_half = f_half[name].sup_ratio / E_hi
        grow = e.constant / c_half if c_half > 0 else np.inf
        rep.check(f"window_{name}", np.isfinite(grow) and grow <= window_band,
                  C=e.constant, C_first_half=c_half, growth=grow)
    z_hi = zeta(hi.times, snapshots(hi), minus, plus, s_min, incoming)
    z_lo = zeta(lo.times, snapshots(lo), minus, plus, s_min, incoming)
    zf, zl = float(z_hi.zeta[-1]), float(z_lo.zeta[-1])
    rep.fits["zeta"] = {"t": T_end, "zeta": zf, "zeta_half": zl,
                        "parts": {k: float(v[-1]) for k, v in z_hi.parts.items()}}
    rep.check("zeta_finite", np.isfinite(zf), zeta=zf)
    expect = E_lo / E_hi
    zr = zl / zf if np.isfinite(zf) and zf > 0 else np.inf
    rep.check("zeta_linear", np.isfinite(zr) and abs(zr / expect - 1) <= band, ratio=zr, expected=expect)
    gain = characteristic_gain(hi, minus, plus, t_min=gain_t_min)
    for key, (ts, rho) in gain.items():
        rep.check(f"char_gain{key[0]}{key[1]}", rho.size > 0 and bool(np.all(rho < 1)),
                  rho_max=float(np.max(rho)) if rho.size else None,
                  t_at_max=float(ts[np.argmax(rho)]) if rho.size else None)
    if not gain:
        rep.meta["char_gain"] = "no outgoing characteristics"
    return rep


# -- rate and tracker checks ------------------------------------------------------

RATE_BANDS = {
    "Linf": (-0.9, -0.6),
    "L2": (-0.65, -0.35),
    "L1": (-0.4, -0.1),
    "delta": (-0.65, -0.35),
    "delta_dot": (-1.2, -0.8),
}


def decay_report(dec, window=(1.0, 200.0), bands=None) -> BoundReport:
    """Fitted decay exponents of the L^p norms of v, |delta| and |delta_dot|."""
    bands = RATE_BANDS if bands is None else bands
    rep = BoundReport("decay rates", meta={"window": list(window)})
    series = dict(dec.norms)
    series["delta"] = np.abs(dec.delta)
    series["delta_dot"] = np.abs(dec.delta_dot)
    for name, (lo, hi) in bands.items():
        try:
            fit = fit_decay(dec.times, series[name], window)
        except ValueError as exc:
            rep.check(f"rate_{name}", False, error=str(exc), band=[lo, hi])
            continue
        rep.fits[name] = fit
        rep.check(f"rate_{name}", lo <= fit.exponent <= hi, exponent=fit.exponent, band=[lo, hi],
                  stderr=fit.stderr, residual=fit.residual)
    return rep


def tracker_agreement(dec, window=(1.0, 50.0), rel=0.2, abs_tol=1e-6) -> BoundReport:
    """|delta_duhamel - delta_lsq| <= rel |delta_lsq| + abs_tol on the window."""
    if dec.delta_duhamel is None:
        raise ValueError("decomposition carries no Duhamel series")
    t = dec.times
    ok = np.isfinite(dec.delta_duhamel)
    sel = ok & (t >= window[0]) & (t <= window[1])
    if not np.any(sel):
        raise ValueError("no Duhamel samples inside the comparison window")
    d, l = dec.delta_duhamel[sel], dec.delta_lsq[sel]
    gap = np.abs(d - l)
    allowed = rel * np.abs(l) + abs_tol
    bad = gap > allowed
    worst = int(np.argmax(gap / allowed))
    rep = BoundReport("phase trackers", meta={"window": list(window), "rel": rel, "abs": abs_tol})
    rep.check("trackers_agree", not np.any(bad), violations=int(bad.sum()), samples=int(sel.sum()),
              worst_t=float(t[sel][worst]), worst_gap=float(gap[worst]),
              worst_allowed=float(allowed[worst]),
              last_bad_t=float(t[sel][bad][-1]) if np.any(bad) else None)
    return rep
