"""Command line driver: model -> profile -> ansatz -> evolution -> verification.

Subcommands ``profile``, ``simulate``, ``verify``, ``cancellation``,
``kernels`` and ``report``.  Every run writes into one directory under the
output root (``--out``, else ``$SHOCKLAB_OUTPUT_ROOT``, else ``./runs``)::

    <root>/<name>/manifest.json   configuration and stage results
    <root>/<name>/snapshots/      perturbation history (CSV + manifest)
    <root>/<name>/reports/        BoundReport JSON and CSV tables
    <root>/<name>/figures/        PNG figures written by ``report``

Exit status: 0 all checks passed, 1 an acceptance check failed, 2 invalid
input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .ansatz import DiiError, match_masses
from .cancellation import (ConvolutionProblem, QuadratureError, TransversalityError,
                           cancellation_scan, h_interaction_check)
from .evolution import (BlowUpError, CFLError, FarField, Perturbation, cell_grid, decompose,
                        max_speed, save_schedule, simulate)
from .kernels import kernel_suite, scattering_data
from .model import (HypothesisError, check_hypotheses, endstates, liu_majda_determinant,
                    make_model)
from .profile import (ConnectionFailure, RankineHugoniotError, export_csv, ode_residual,
                      solve_profile)
from .verify import BoundReport, decay_report, theorem_check, tracker_agreement

log = logging.getLogger("shocklab")

SCHEMA_VERSION = 1
ENV_ROOT = "SHOCKLAB_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------

@dataclass
class ModelCfg:
    name: str = "burgers"
    params: dict = field(default_factory=dict)


@dataclass
class GridCfg:
    X: float = 400.0
    h: float = 0.1
    cfl: float = 0.4


@dataclass
class TimeCfg:
    t_final: float = 200.0
    save_base: float = 0.05
    save_growth: float = 0.02


@dataclass
class PerturbationCfg:
    kind: str = "bump"
    E0: float = 1e-2
    direction: list | None = None
    width: float = 1.0
    center: float = 0.0


@dataclass
class VerifyCfg:
    s_min: float = 1.0
    incoming_templates: bool = False
    fit_window: list = field(default_factory=lambda: [1.0, 200.0])
    duhamel_every: int = 4
    lsq_window: float = 40.0
    halve: bool = True
    tracker_E0: float = 1e-3
    tracker_window: list = field(default_factory=lambda: [1.0, 50.0])
    gain_t_min: float = 4.0
    linear_band: float = 0.3


@dataclass
class EnvelopeCfg:
    M: float | None = None
    eta: float | None = None


@dataclass
class CancellationCfg:
    sources: list = field(default_factory=lambda: ["K2", "Kx"])
    t_list: list = field(default_factory=lambda: [16.0, 64.0, 256.0])
    resolution: int = 161
    a: float = 0.0
    b: float = 1.0
    h_templates: list = field(default_factory=lambda: ["psi1", "psi2"])


@dataclass
class OutputCfg:
    root: str | None = None
    name: str | None = None
    snapshot_every: int = 10


@dataclass
class RunConfig:
    schema: int = SCHEMA_VERSION
    model: ModelCfg = field(default_factory=ModelCfg)
    grid: GridCfg = field(default_factory=GridCfg)
    time: TimeCfg = field(default_factory=TimeCfg)
    perturbation: PerturbationCfg = field(default_factory=PerturbationCfg)
    far_field: bool = True
    verify: VerifyCfg = field(default_factory=VerifyCfg)
    envelope: EnvelopeCfg = field(default_factory=EnvelopeCfg)
    cancellation: CancellationCfg = field(default_factory=CancellationCfg)
    output: OutputCfg = field(default_factory=OutputCfg)
    seed: int = 0

    _SECTIONS = {"model": ModelCfg, "grid": GridCfg, "time": TimeCfg, "perturbation": PerturbationCfg,
                 "verify": VerifyCfg, "envelope": EnvelopeCfg, "cancellation": CancellationCfg,
                 "output": OutputCfg}

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = copy.deepcopy(data)
        schema = data.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema} (expected {SCHEMA_VERSION})")
        top = {f.name for f in fields(cls)}
        unknown = set(data) - top
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, val in data.items():
            sec = cls._SECTIONS.get(key)
            if sec is None:
                kw[key] = val
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            names = {f.name for f in fields(sec)}
            bad = set(val) - names
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kw[key] = sec(**val)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(str(exc)) from None

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def validate(self):
        positive = {"grid.X": self.grid.X, "grid.h": self.grid.h, "grid.cfl": self.grid.cfl,
                    "time.t_final": self.time.t_final, "time.save_base": self.time.save_base,
                    "perturbation.width": self.perturbation.width,
                    "verify.s_min": self.verify.s_min}
        for name, val in positive.items():
            if not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(f"{name} must be positive, got {val!r}")
        if self.perturbation.E0 < 0:
            raise ConfigError("perturbation.E0 must be nonnegative")
        if self.perturbation.kind not in ("bump", "dipole"):
            raise ConfigError(f"unknown perturbation kind {self.perturbation.kind!r}")
        if self.grid.cfl > 0.4:
            raise ConfigError("grid.cfl above 0.4 violates the step restriction")
        if self.grid.X <= 10 * self.grid.h:
            raise ConfigError("grid.X too small for the chosen spacing")
        if self.output.snapshot_every < 1 or self.verify.duhamel_every < 1:
            raise ConfigError("cadences must be at least 1")
        return self


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: RunConfig, assignments) -> RunConfig:
    """Apply ``section.key=value`` overrides (values parsed as JSON when possible)."""
    data = cfg.to_dict()
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.split(".")
        node = data
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ConfigError(f"unknown config key {path!r}")
            node = node[k]
        if keys[-1] not in node and keys[0] != "model":
            raise ConfigError(f"unknown config key {path!r}")
        node[keys[-1]] = _parse_value(raw)
    return RunConfig.from_dict(data)


def output_dir(cfg: RunConfig, root=None):
    root = root or cfg.output.root or os.environ.get(ENV_ROOT) or "runs"
    name = cfg.output.name or f"{cfg.model.name}_E0_{cfg.perturbation.E0:g}"
    path = os.path.join(root, name)
    os.makedirs(path, exist_ok=True)
    return path


# -- pipeline ---------------------------------------------------------------------

@dataclass
class Setup:
    model: object
    profile: object
    minus: object
    plus: object
    scat: object
    hypotheses: object
    checks: dict


def setup_model(cfg: RunConfig) -> Setup:
    """Model, profile, endstate data and the structural checks."""
    try:
        model = make_model(cfg.model.name, **cfg.model.params)
    except TypeError as exc:
        raise ConfigError(f"bad model parameters: {exc}") from None
    if np.allclose(model.u_plus, model.u_minus):
        raise ConfigError("u_+ = u_- is a rest point: there is no shock to perturb")
    profile = solve_profile(model)
    hyp = check_hypotheses(model, states=list(profile.values[:: max(1, profile.x.size // 50)]))
    minus, plus = endstates(model)
    jump = model.u_plus - model.u_minus
    checks = {"hypotheses": bool(hyp.passed), "profile_residual": float(ode_residual(model, profile))}
    try:
        checks["liu_majda"] = liu_majda_determinant(minus, plus, jump)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    scat = scattering_data(minus, plus, jump)
    return Setup(model, profile, minus, plus, scat, hyp, checks)


@dataclass
class Case:
    E0: float
    pert: Perturbation
    params: object
    history: object
    dec: object


def run_case(cfg: RunConfig, setup: Setup, E0=None, t_final=None, progress=None) -> Case:
    """One perturbed run and its decomposition."""
    p = cfg.perturbation
    E0 = p.E0 if E0 is None else E0
    n = setup.model.n
    direction = p.direction if p.direction is not None else list(np.ones(n) / np.sqrt(n))
    if len(direction) != n:
        raise ConfigError(f"perturbation.direction needs {n} entries")
    pert = Perturbation(E0, p.kind, direction, p.width, p.center)
    model = setup.model
    jump = model.u_plus - model.u_minus
    params = match_masses(pert.mass(), setup.minus, setup.plus, jump)
    x = cell_grid(cfg.grid.X, cfg.grid.h)
    dt = cfg.grid.cfl * cfg.grid.h / max_speed(model, [model.u_minus, model.u_plus])
    tf = cfg.time.t_final if t_final is None else t_final
    hist = simulate(model, setup.profile, x, pert, tf, dt,
                    save_schedule(tf, cfg.time.save_base, cfg.time.save_growth),
                    far_field=cfg.far_field, progress=progress)
    ff = FarField(model, pert) if cfg.far_field else None
    dec = decompose(hist, model, setup.profile, params, setup.scat, tracker="duhamel",
                    duhamel_every=cfg.verify.duhamel_every, lsq_window=cfg.verify.lsq_window,
                    far_field=ff)
    hist.series = {"delta": dec.delta, "delta_dot": dec.delta_dot, "delta_lsq": dec.delta_lsq,
                   **{f"norm_{k}": v for k, v in dec.norms.items()}}
    return Case(E0, pert, params, hist, dec)


def write_series(path, case: Case, zeta_series=None):
    dec = case.dec
    cols = ["t", "Linf", "L2", "L1", "delta", "delta_lsq", "delta_dot"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + (["zeta"] if zeta_series is not None else []))
        for i, t in enumerate(dec.times):
            row = [t, dec.norms["Linf"][i], dec.norms["L2"][i], dec.norms["L1"][i], dec.delta[i],
                   dec.delta_lsq[i], dec.delta_dot[i]]
            if zeta_series is not None:
                row.append(zeta_series[i])
            w.writerow([f"{v:.12g}" for v in row])


def structural_report(setup: Setup) -> BoundReport:
    rep = BoundReport("structure")
    rep.check("hypotheses", setup.checks["hypotheses"],
              detail={k: v for k, v in setup.hypotheses.results.items()})
    rep.check("liu_majda_nonzero", abs(setup.checks["liu_majda"]) > 1e-10,
              determinant=setup.checks["liu_majda"])
    rep.check("profile_residual", setup.checks["profile_residual"] < 1e-6,
              residual=setup.checks["profile_residual"])
    return rep


def run_pipeline(cfg: RunConfig, root=None, progress=None):
    """Full chain; returns (overall pass flag, {report name: BoundReport}, output directory)."""
    out = output_dir(cfg, root)
    rdir = os.path.join(out, "reports")
    os.makedirs(rdir, exist_ok=True)
    cfg.dump(os.path.join(out, "config.json"))
    setup = setup_model(cfg)
    reports = {"structure": structural_report(setup)}
    main = run_case(cfg, setup, progress=progress)
    main.history.save(os.path.join(out, "snapshots"), every=cfg.output.snapshot_every)
    reports["decay"] = decay_report(main.dec, tuple(cfg.verify.fit_window))
    zeta_vals = None
    if cfg.verify.halve:
        half = run_case(cfg, setup, E0=main.E0 / 2)
        tc = theorem_check({main.E0: main.dec, half.E0: half.dec}, setup.minus, setup.plus,
                           s_min=cfg.verify.s_min, incoming=cfg.verify.incoming_templates,
                           band=cfg.verify.linear_band, gain_t_min=cfg.verify.gain_t_min)
        reports["bounds"] = tc
    from .verify import snapshots, zeta
    zs = zeta(main.dec.times, snapshots(main.dec), setup.minus, setup.plus,
              cfg.verify.s_min, cfg.verify.incoming_templates)
    zeta_vals = zs.zeta
    if cfg.verify.tracker_E0:
        tw = cfg.verify.tracker_window
        trk = run_case(cfg, setup, E0=cfg.verify.tracker_E0, t_final=tw[1])
        reports["trackers"] = tracker_agreement(trk.dec, tuple(tw))
    write_series(os.path.join(rdir, "series.csv"), main, zeta_vals)
    for name, rep in reports.items():
        rep.to_json(os.path.join(rdir, f"{name}.json"))
        if rep.entries:
            rep.to_csv(os.path.join(rdir, f"{name}.csv"))
    passed = all(r.passed for r in reports.values())
    manifest = {"schema": SCHEMA_VERSION, "version": __version__, "passed": passed,
                "reports": {k: {"passed": v.passed, "file": f"reports/{k}.json"} for k, v in reports.items()},
                "config": cfg.to_dict()}
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return passed, reports, out


def run_cancellation(cfg: RunConfig, root=None):
    c = cfg.cancellation
    reports = {}
    if len(c.t_list) < 2:
        log.warning("a single scan time gives no stability check; only the table is reported")
    for src in c.sources:
        prob = ConvolutionProblem(source=src, a=c.a, b=c.b)
        if len(c.t_list) < 2:
            rep = BoundReport(f"cancellation ({src})", meta={"skipped": "stability check needs two times"})
        else:
            rep = cancellation_scan(prob, c.t_list, resolution=c.resolution)
        reports[f"cancellation_{src}"] = rep
    setup = setup_model(cfg)
    out_modes = len(setup.minus.outgoing) + len(setup.plus.outgoing)
    if out_modes and len(c.t_list) >= 2:
        from .model import compute_hyperbolic_modes
        abar, eta0 = _transport_constants(setup, compute_hyperbolic_modes)
        for tmpl in c.h_templates:
            reports[f"h_{tmpl}"] = h_interaction_check(tmpl, setup.minus, setup.plus, abar, eta0, c.t_list)
    out = output_dir(cfg, root)
    rdir = os.path.join(out, "reports")
    os.makedirs(rdir, exist_ok=True)
    for name, rep in reports.items():
        rep.to_json(os.path.join(rdir, f"{name}.json"))
        if rep.entries:
            rep.to_csv(os.path.join(rdir, f"{name}.csv"))
    return all(r.passed for r in reports.values()), reports, out


def _transport_constants(setup: Setup, compute_modes):
    """Hyperbolic speed and damping rate at the profile midpoint (fall back to 0, 1)."""
    model = setup.model
    if model.r == model.n:
        return 0.0, 1.0
    i = int(np.argmin(np.abs(setup.profile.x)))
    hm = compute_modes(model, setup.profile.values[i], setup.profile.ubar_x[i])
    return float(hm.a_star[0]), float(abs(np.real(hm.eta_star[0])))


# -- figures ------------------------------------------------------------------------

def render_report(run_dir):
    """Render PNG figures from ``reports/series.csv`` (and any ratio tables)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = os.path.join(run_dir, "reports", "series.csv")
    if not os.path.exists(series):
        raise ConfigError(f"missing {series}; run 'verify' first")
    data = np.genfromtxt(series, delimiter=",", names=True)
    fdir = os.path.join(run_dir, "figures")
    os.makedirs(fdir, exist_ok=True)
    t = data["t"]
    sel = t >= 1
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, slope in (("Linf", -0.75), ("L2", -0.5), ("L1", -0.25)):
        ax.loglog(1 + t[sel], data[name][sel], label=f"|v|_{name[1:]}")
        ref = data[name][sel][0] * ((1 + t[sel]) / (1 + t[sel][0])) ** slope
        ax.loglog(1 + t[sel], ref, ":", color="gray")
    ax.set_xlabel("1 + t")
    ax.set_ylabel("norm of v")
    ax.legend()
    ax.set_title("decay of v (dotted: template rates)")
    fig.tight_layout()
    written.append(os.path.join(fdir, "norms.png"))
    fig.savefig(written[-1], dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(1 + t[sel], np.abs(data["delta"][sel]), label="|delta| (Duhamel)")
    ax.loglog(1 + t[sel], np.abs(data["delta_lsq"][sel]), "--", label="|delta| (least squares)")
    ax.loglog(1 + t[sel], np.abs(data["delta_dot"][sel]), label="|delta'|")
    ax.set_xlabel("1 + t")
    ax.legend()
    ax.set_title("phase")
    fig.tight_layout()
    written.append(os.path.join(fdir, "phase.png"))
    fig.savefig(written[-1], dpi=120)
    plt.close(fig)

    if "zeta" in data.dtype.names:
        fig, ax = plt.subplots(figsize=(6, 4))
        z = data["zeta"]
        ok = np.isfinite(z)
        ax.semilogx(1 + t[ok], z[ok])
        ax.set_xlabel("1 + t")
        ax.set_ylabel("zeta")
        ax.set_title("zeta(t)" + ("" if ok.all() else " (infinite values omitted)"))
        fig.tight_layout()
        written.append(os.path.join(fdir, "zeta.png"))
        fig.savefig(written[-1], dpi=120)
        plt.close(fig)

    bounds = os.path.join(run_dir, "reports", "bounds.csv")
    if os.path.exists(bounds):
        rows = list(csv.DictReader(open(bounds)))
        fig, ax = plt.subplots(figsize=(6, 4))
        names = [r["name"] for r in rows]
        consts = [float(r["constant"]) if r["constant"] else np.nan for r in rows]
        ax.bar(names, consts)
        ax.set_yscale("log")
        ax.set_ylabel("C = sup ratio / E0")
        ax.set_title("fitted constants")
        fig.tight_layout()
        written.append(os.path.join(fdir, "constants.png"))
        fig.savefig(written[-1], dpi=120)
        plt.close(fig)
    return written


# -- entry point ----------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="shocklab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set grid.h=0.05")
        p.add_argument("--model", help="burgers or p-system")
        p.add_argument("--E0", type=float, help="perturbation amplitude")
        p.add_argument("--t-final", type=float, dest="t_final")
        p.add_argument("--out", help="output root (default $%s or ./runs)" % ENV_ROOT)
        p.add_argument("--name", help="run directory name")

    for name, help_ in (("profile", "solve and check the standing profile"),
                        ("simulate", "evolve a perturbed shock and store the history"),
                        ("verify", "full pipeline with all bound and rate checks"),
                        ("cancellation", "cancellation and H-interaction quadrature suites"),
                        ("kernels", "heat-kernel identity suite")):
        common(sub.add_parser(name, help=help_))
    rp = sub.add_parser("report", help="render figures for a finished run directory")
    rp.add_argument("run_dir")
    rp.add_argument("--print-config", action="store_true", help="also echo the stored config")
    return ap


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    sets = list(args.set)
    if args.model:
        sets.append(f"model.name={json.dumps(args.model)}")
        if args.model == "p-system" and not args.config:
            sets.append("grid.X=600")
    if args.E0 is not None:
        sets.append(f"perturbation.E0={args.E0}")
    if args.t_final is not None:
        sets.append(f"time.t_final={args.t_final}")
    if args.name:
        sets.append(f"output.name={json.dumps(args.name)}")
    return apply_overrides(cfg, sets)


def _print_reports(reports):
    for name, rep in reports.items():
        for check, res in rep.checks.items():
            status = "PASS" if res["passed"] else "FAIL"
            info = {k: v for k, v in res.items() if k != "passed" and not isinstance(v, (list, dict))}
            print(f"[{status}] {name}.{check} {json.dumps(info, default=float)}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            for path in render_report(args.run_dir):
                print(path)
            if args.print_config:
                print(open(os.path.join(args.run_dir, "config.json")).read())
            return 0
        cfg = config_from_args(args)
        root = args.out
        if args.command == "kernels":
            rep = kernel_suite(seed=cfg.seed)
            reports = {"kernels": rep}
            out = output_dir(cfg, root)
            os.makedirs(os.path.join(out, "reports"), exist_ok=True)
            rep.to_json(os.path.join(out, "reports", "kernels.json"))
        elif args.command == "profile":
            setup = setup_model(cfg)
            out = output_dir(cfg, root)
            export_csv(setup.profile, os.path.join(out, "profile.csv"))
            reports = {"structure": structural_report(setup)}
            print(f"alpha = {setup.profile.alpha}")
        elif args.command == "simulate":
            setup = setup_model(cfg)
            case = run_case(cfg, setup)
            out = output_dir(cfg, root)
            cfg.dump(os.path.join(out, "config.json"))
            case.history.save(os.path.join(out, "snapshots"), every=cfg.output.snapshot_every)
            os.makedirs(os.path.join(out, "reports"), exist_ok=True)
            write_series(os.path.join(out, "reports", "series.csv"), case)
            print(os.path.join(out, "snapshots", "manifest.json"))
            return 0
        elif args.command == "cancellation":
            _, reports, out = run_cancellation(cfg, root)
        else:
            _, reports, out = run_pipeline(cfg, root)
        _print_reports(reports)
        print(f"output: {out}")
        return 0 if all(r.passed for r in reports.values()) else 1
    except (ConfigError, HypothesisError, RankineHugoniotError, DiiError, TransversalityError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (BlowUpError, CFLError, ConnectionFailure, QuadratureError, FloatingPointError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
