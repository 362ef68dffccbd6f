"""Command-line experiment runner.

Subcommands ``classify``, ``integrate``, ``lyapunov``, ``nodal`` and
``reproduce``. Configs are JSON with a ``schema_version``; a bundled preset
can be named instead of a path. Flags beat ``BOHMTRAJ_*`` environment
variables, which beat the config file.

Exit codes: 0 integrals found / success, 1 configuration error,
2 no integral of this form, 3 fixed points, 4 node proximity before 10%
of the span.
"""

import argparse
import ast
from dataclasses import dataclass, field, fields, asdict
from importlib import resources
import json
import math
import operator
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from ._accel import backend
from .chaos import confinement_statistic, find_nodal_points, lyapunov, vortex_circulation
from .dynamics import NodeSingularityError, TrajectorySpec, conserved_series, integrate
from .integrability import FIXED, NONE, ConservedQuantity, classify
from .wavefunction import Superposition

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NO_INTEGRAL, EXIT_FIXED, EXIT_NODE = 0, 1, 2, 3, 4
FIGURES = {
    "fig1": ("fig1-blue", "fig1-red"),
    "fig2": ("fig2-ordered", "fig2-chaotic"),
    "fig3": ("fig3-a", "fig3-b"),
}


class ConfigError(ValueError):
    pass


# -- numeric expressions ---------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt}
_NAMES = {"pi": math.pi}


def parse_number(value):
    """Float from a number or a small arithmetic string like ``1/sqrt(3)``."""
    if isinstance(value, bool):
        raise ConfigError(f"not a number: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"not a number: {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        raise ConfigError(f"unsupported expression {value!r}")

    try:
        out = ev(ast.parse(value.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, ValueError) as exc:
        raise ConfigError(f"bad number {value!r}: {exc}") from None
    if not math.isfinite(out):
        raise ConfigError(f"non-finite number {value!r}")
    return out


# -- configuration ---------------------------------------------------------

@dataclass
class ExperimentConfig:
    """One experiment: the superposition, one orbit and diagnostics to run."""

    frequencies: tuple
    terms: tuple
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION
    x0: tuple = None
    t0: float = 0.0
    t_end: float = 100.0
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    sample_interval: float = 0.01
    min_density_guard: float = None
    conserve: bool = True
    lyapunov: bool = False
    nodal: bool = False
    lyapunov_t_end: float = None
    d0: float = 1e-8
    renorm_interval: float = 0.5
    nodal_t: float = None
    nodal_seeds: tuple = None
    nodal_surface: bool = False
    nodal_level: float = None
    extra_quantities: tuple = ()
    expect_verdict: str = None
    caption_constant: float = None
    caption_sign: float = 1.0
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        self.frequencies = tuple(parse_number(w) for w in self.frequencies)
        terms = []
        for t in self.terms:
            if isinstance(t, dict):
                c, q = t.get("coefficient", 1.0), t["quanta"]
            else:
                c, q = t
            terms.append((parse_number(c), tuple(int(n) for n in q)))
        self.terms = tuple(terms)
        if self.x0 is not None:
            self.x0 = tuple(parse_number(v) for v in self.x0)
        for name in ("t0", "t_end", "rel_tol", "abs_tol", "sample_interval", "d0",
                     "renorm_interval", "caption_sign"):
            setattr(self, name, parse_number(getattr(self, name)))
        for name in ("min_density_guard", "lyapunov_t_end", "nodal_t", "nodal_level",
                     "caption_constant"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, parse_number(v))
        if self.nodal_seeds is not None:
            self.nodal_seeds = tuple(tuple(parse_number(v) for v in s) for s in self.nodal_seeds)
        self.extra_quantities = tuple(self.extra_quantities)
        self.seed = int(self.seed)

    # -- building blocks ---------------------------------------------------

    def superposition(self):
        try:
            return Superposition(self.frequencies, self.terms)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def trajectory_spec(self, psi=None, t_end=None):
        if self.x0 is None:
            raise ConfigError("config has no initial condition x0")
        try:
            return TrajectorySpec(psi or self.superposition(), self.x0, self.t0,
                                  self.t_end if t_end is None else t_end,
                                  self.rel_tol, self.abs_tol, self.sample_interval,
                                  self.min_density_guard)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def quantities(self):
        return [ConservedQuantity.from_dict(d) for d in self.extra_quantities]

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d["frequencies"] = list(self.frequencies)
        d["terms"] = [{"coefficient": c, "quanta": list(q)} for c, q in self.terms]
        for name in ("x0",):
            if d[name] is not None:
                d[name] = list(d[name])
        if self.nodal_seeds is not None:
            d["nodal_seeds"] = [list(s) for s in self.nodal_seeds]
        d["extra_quantities"] = list(self.extra_quantities)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("frequencies", "terms"):
            if key not in d:
                raise ConfigError(f"config missing {key!r}")
        try:
            return cls(**d)
        except (TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def preset_names():
    root = resources.files("bohmtraj") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(source):
    """Config from a file path or bundled preset name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        res = resources.files("bohmtraj") / "presets" / f"{source}.json"
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {source!r}")
        text = res.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {source}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def _env(name, args_value):
    if args_value is not None:
        return args_value
    return os.environ.get(f"BOHMTRAJ_{name}")


def apply_overrides(config, args):
    tol = _env("TOL", args.tol)
    if tol is not None:
        config.rel_tol = config.abs_tol = parse_number(tol)
    seed = _env("SEED", args.seed)
    if seed is not None:
        config.seed = int(seed)
    out = _env("OUT", args.out)
    if out is not None:
        config.out = str(out)
    return config


# -- output ----------------------------------------------------------------

def write_csv(path, header, columns):
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


# -- runners ---------------------------------------------------------------

def run_classify(config, out):
    psi = config.superposition()
    report = classify(psi, seed=config.seed + 12345)
    doc = report.to_dict()
    doc["name"] = config.name
    write_json(out / "classification.json", doc)
    if report.verdict == NONE:
        code = EXIT_NO_INTEGRAL
    elif report.verdict == FIXED:
        code = EXIT_FIXED
    else:
        code = EXIT_OK
    return report, code


def run_integrate(config, out, report=None):
    psi = config.superposition()
    if report is None:
        report = classify(psi, seed=config.seed + 12345)
    if config.expect_verdict and report.verdict != config.expect_verdict:
        raise ConfigError(f"{config.name} classified as {report.verdict}, "
                          f"expected {config.expect_verdict}")
    spec = config.trajectory_spec(psi)
    try:
        traj = integrate(spec)
    except NodeSingularityError as exc:
        raise ConfigError(str(exc)) from None
    quantities = []
    if config.conserve:
        quantities = list(report.integrals) + config.quantities()
    series = [conserved_series(traj, q) for q in quantities]
    n = psi.dim
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"C{k + 1}" for k in range(len(series))]
    cols = [traj.t] + [traj.x[:, i] for i in range(n)] + [s.value for s in series]
    write_csv(out / "trajectory.csv", header, cols)
    side = {
        "name": config.name,
        "backend": backend(),
        "verdict": report.verdict,
        "diagnostics": traj.diagnostics(),
        "conserved": [{"column": f"C{k + 1}", "label": q.label, "formula": q.formula(),
                       "initial": _finite(s.value[0]), "max_drift": _finite(s.max_drift),
                       "singular_samples": int(s.singular.sum())}
                      for k, (q, s) in enumerate(zip(quantities, series))],
    }
    if config.caption_constant is not None and series:
        side["caption_constant"] = config.caption_constant
        side["caption_form_value"] = _finite(config.caption_sign * series[0].value[0])
    if not quantities:
        conf = confinement_statistic(traj)
        side["surface_fit_residual"] = list(conf.fit_residual)
        side["fit_spans"] = list(conf.spans)
    write_json(out / "trajectory.json", side)
    span = abs(spec.t_end - spec.t0)
    code = EXIT_OK
    if traj.reason == "node-proximity" and abs(traj.t_reached - spec.t0) < 0.1 * span:
        code = EXIT_NODE
    return traj, series, side, code


def run_lyapunov(config, out):
    psi = config.superposition()
    t_end = config.lyapunov_t_end if config.lyapunov_t_end is not None else config.t_end
    spec = config.trajectory_spec(psi, t_end=t_end)
    try:
        s = lyapunov(spec, d0=config.d0, renorm_interval=config.renorm_interval)
    except NodeSingularityError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_csv(out / "lyapunov.csv", ["t", "chi"], [s.t, s.chi])
    side = {"name": config.name, "final_chi": _finite(s.final),
            "envelope": _finite(s.envelope()[-1]) if s.t.size else None,
            "label": s.label(), "termination": s.reason,
            "d0": s.initial_separation, "renorm_interval": s.renorm_interval}
    write_json(out / "lyapunov.json", side)
    return s, side


def run_nodal(config, out, report=None):
    psi = config.superposition()
    t = config.nodal_t if config.nodal_t is not None else config.t0
    surface = level = None
    if config.nodal_surface:
        if report is None:
            report = classify(psi, seed=config.seed + 12345)
        candidates = [q for q in report.integrals if len(q.active_axes) > 1]
        if not candidates:
            raise ConfigError("surface-constrained search needs an integral")
        surface = candidates[0]
        if config.nodal_level is not None:
            level = config.nodal_level
        elif config.x0 is not None:
            level = surface.evaluate(np.array(config.x0))
        else:
            raise ConfigError("surface level needs nodal_level or x0")
    search = find_nodal_points(psi, t, seeds=config.nodal_seeds, surface=surface,
                               level=level, seed=config.seed)
    n = psi.dim
    rows = search.points
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["residual"]
    cols = ([[p.t for p in rows]] + [[p.x[i] for p in rows] for i in range(n)]
            + [[p.residual for p in rows]])
    if rows:
        write_csv(out / "nodal.csv", header, cols)
    else:
        (out / "nodal.csv").write_text(",".join(header) + "\n")
    side = {"name": config.name, "t": t, "scale": search.scale, "found": len(rows),
            "failed_seeds": len(search.failures), "level": level,
            "surface": surface.formula() if surface is not None else None,
            "points": [{"x": p.x.tolist(), "residual": p.residual,
                        "surface_residual": p.surface_residual,
                        "circulation_x1x2": vortex_circulation(psi, p.x, t)} for p in rows]}
    write_json(out / "nodal.json", side)
    return search, side


def run_reproduce(figure, out, overrides=None):
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    out.mkdir(parents=True, exist_ok=True)
    long_rows = []
    lines = [f"reproduction bundle for {figure}", ""]
    for name in FIGURES[figure]:
        config = load_config(name)
        if overrides is not None:
            apply_overrides(config, overrides)
        sub = out / name
        sub.mkdir(exist_ok=True)
        report, _ = run_classify(config, sub)
        lines.append(f"[{name}] verdict {report.verdict}, cases {', '.join(report.case_ids)}")
        traj, series, side, _ = run_integrate(config, sub, report)
        lines.append(f"  trajectory: {side['diagnostics']['termination']} at "
                     f"t={side['diagnostics']['t_reached']:.6g}, "
                     f"{side['diagnostics']['accepted_steps']} steps")
        for i in range(traj.x.shape[1]):
            long_rows.append((name, f"x{i + 1}", traj.t, traj.x[:, i]))
        for k, s in enumerate(series):
            long_rows.append((name, f"C{k + 1}", s.t, s.value))
            c = side["conserved"][k]
            lines.append(f"  C{k + 1} = {c['formula']}")
            lines.append(f"    initial value {c['initial']!r}, max relative drift {c['max_drift']:.3g}")
        if config.caption_constant is not None and series:
            measured = side["caption_form_value"]
            diff = abs(measured - config.caption_constant)
            flag = "DISCREPANCY" if diff > 1e-5 * max(1.0, abs(config.caption_constant)) else "agrees"
            lines.append(f"  caption constant {config.caption_constant!r}, measured "
                         f"(caption form) {measured!r}: {flag} (|diff| = {diff:.6g})")
        if "surface_fit_residual" in side:
            fits = ", ".join(f"{r:.3g}@{s:.4g}" for r, s in
                             zip(side["surface_fit_residual"], side["fit_spans"]))
            lines.append(f"  surface-fit residual by span: {fits}")
        if config.lyapunov:
            lyap, lside = run_lyapunov(config, sub)
            long_rows.append((name, "chi", lyap.t, lyap.chi))
            lines.append(f"  chi({lyap.t[-1]:.6g}) = {lyap.final:.6g}, "
                         f"advisory label {lside['label']}")
        if config.nodal:
            search, nside = run_nodal(config, sub, report)
            lines.append(f"  nodal points found: {nside['found']} at t={nside['t']!r}")
            for p in nside["points"]:
                lines.append(f"    x={p['x']} |psi|={p['residual']:.3g} "
                             f"circulation={p['circulation_x1x2']:.6g}")
        lines.append("")
    with open(out / "long.csv", "w") as fh:
        fh.write("run,variable,t,value\n")
        for name, var, t, v in long_rows:
            for ti, vi in zip(t, v):
                fh.write(f"{name},{var},{ti:.17g},{vi:.17g}\n")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines


# -- argument parsing ------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="bohmtraj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config path or preset name (env BOHMTRAJ_CONFIG)")
    common.add_argument("--out", help="output directory (env BOHMTRAJ_OUT)")
    common.add_argument("--tol", help="rel and abs tolerance (env BOHMTRAJ_TOL)")
    common.add_argument("--seed", type=int, help="random seed (env BOHMTRAJ_SEED)")
    for name, text in (("classify", "classify a superposition and build its integrals"),
                       ("integrate", "integrate one trajectory with conserved columns"),
                       ("lyapunov", "finite-time Lyapunov series"),
                       ("nodal", "locate nodal points")):
        sub.add_parser(name, parents=[common], help=text)
    rep = sub.add_parser("reproduce", parents=[common], help="run a figure's presets")
    rep.add_argument("figure", help=f"one of {', '.join(sorted(FIGURES))}")
    sub.add_parser("presets", help="list bundled presets")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        if args.command == "reproduce":
            out = Path(_env("OUT", args.out) or f"out/{args.figure}")
            lines = run_reproduce(args.figure, out, args)
            print("\n".join(lines))
            return EXIT_OK
        source = _env("CONFIG", args.config)
        if source is None:
            raise ConfigError("--config is required")
        config = apply_overrides(load_config(source), args)
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "classify":
            report, code = run_classify(config, out)
            print(f"{report.verdict}: {report.integral_count} integral(s)")
            for q in report.integrals:
                print(f"  {q.formula()}")
            return code
        if args.command == "integrate":
            traj, _, side, code = run_integrate(config, out)
            print(f"{traj.reason} at t={traj.t_reached:.6g}; {traj.t.size} samples")
            for c in side["conserved"]:
                print(f"  {c['column']}: max drift {c['max_drift']}")
            return code
        if args.command == "lyapunov":
            s, side = run_lyapunov(config, out)
            print(f"chi={side['final_chi']} ({side['label']}, {side['termination']})")
            return EXIT_OK
        if args.command == "nodal":
            _, side = run_nodal(config, out)
            print(f"{side['found']} nodal point(s), {side['failed_seeds']} seed(s) failed")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
