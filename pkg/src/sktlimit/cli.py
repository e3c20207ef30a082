"""Batch command-line front end.

Every command reads an optional INI file with a ``[model]`` section (or
``preset = strong | weak``) and command sections; ``--set section.key=value``
and the dedicated flags override file values.  Output is CSV (17 significant
digits) and JSON.  Exit codes: 0 success, 2 configuration or regime error,
3 numerical failure.  ``SKT_LIMIT_QUIET`` silences progress messages.
"""

from __future__ import annotations

import configparser
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import branch as br
from .bvp import residual_check, write_profile_csv
from .errors import (ConfigError, DiscriminantError, DomainError, NumericalFailure, RegimeError,
                     StateError)
from .model import (WEAK_EXAMPLE, STRONG_EXAMPLE, ModelParams, classify_regime, constant_state, discriminant_D,
                    h_value, tau_bar, zeros_of_h)
from .sktfd import (SktParams, compare_with_limit, guess_from_profile, solve_skt,
                    write_solution_csv)
from .spectral import bifurcation_point
from .timemap import DEFAULT_ORDER, TimeMap

PRESETS = {"strong": STRONG_EXAMPLE, "weak": WEAK_EXAMPLE}

# section -> key -> (parser, default); None default means required or derived
SCHEMA = {
    "model": {k: (float, None) for k in ("a1", "a2", "b1", "b2", "c1", "c2")}
    | {"gamma": (float, None), "delta": (float, None), "preset": (str, None)},
    "run": {"output_dir": (str, "."), "order": (int, DEFAULT_ORDER), "n_nodes": (int, 257),
            "J": (int, 4), "jobs": (int, 1), "int_tol": (float, br.INT_TOL)},
    "hprofile": {"tau": (str, None), "n_points": (int, 400)},
    "timemap": {"tau": (float, None), "d": (float, None), "n_points": (int, 200)},
    "solve": {"j": (int, 1), "d": (float, None), "orientation": (str, "+")},
    "branch": {"j": (str, "1"), "orientations": (str, "+,-"), "d_min_factor": (float, br.D_MIN_FACTOR),
               "n_geometric": (int, br.N_GEOMETRIC)},
    "validate": {"j": (int, 1), "d": (float, None), "betas": (str, "100,400,1600"),
                 "N": (int, 400)},
}


def _quiet() -> bool:
    return os.environ.get("SKT_LIMIT_QUIET", "") not in ("", "0")


def progress(msg: str):
    if not _quiet():
        click.echo(msg, err=True)


# ---------------------------------------------------------------------------
# configuration

class RunConfig:
    """Parsed configuration: typed values for every known key, defaults filled."""

    def __init__(self, values: dict):
        self.values = values

    def get(self, section, key):
        return self.values[section][key]

    @property
    def model(self) -> ModelParams:
        m = self.values["model"]
        base = PRESETS[m["preset"]].as_dict() if m["preset"] is not None else {}
        base.update({k: v for k, v in m.items() if k != "preset" and v is not None})
        base.setdefault("gamma", 1.0)
        base.setdefault("delta", 1.0)
        missing = [k for k in ("a1", "a2", "b1", "b2", "c1", "c2") if k not in base]
        if missing:
            raise ConfigError(f"[model] is missing {', '.join(missing)} (or give a preset)")
        try:
            return ModelParams(**base)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def outdir(self) -> Path:
        out = Path(self.values["run"]["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        return out

    def echo(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}


def _parse_value(section, key, raw):
    parser = SCHEMA[section][key][0]
    try:
        val = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    if section == "model" and key == "preset" and val not in PRESETS:
        raise ConfigError(f"unknown preset {val!r}; choose from {sorted(PRESETS)}")
    if parser in (int, float):
        if not val > 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {val!r}")
    return val


def load_config(path=None, overrides=()) -> RunConfig:
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    entries = []
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            for key, raw in cp.items(section):
                entries.append((section, key, raw))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        entries.append((section.strip(), key.strip(), raw.strip()))
    for section, key, raw in entries:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        values[section][key] = _parse_value(section, key, raw)
    return RunConfig(values)


def _require(cfg: RunConfig, section, key):
    val = cfg.get(section, key)
    if val is None:
        raise ConfigError(f"[{section}] {key} is required")
    return val


def _floats(text) -> list:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _fmt(v) -> str:
    return f"{v:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _rational(x: float) -> str:
    fr = Fraction(x).limit_denominator(10 ** 6)
    if abs(float(fr) - x) <= 1e-12 * max(1.0, abs(x)) and fr.denominator != 1:
        return f"{_fmt(x)} (= {fr.numerator}/{fr.denominator})"
    return _fmt(x)


# ---------------------------------------------------------------------------
# commands (plain functions, wrapped by click below)

def cmd_regime(cfg: RunConfig) -> str:
    p = cfg.model
    reg = classify_regime(p)
    if not reg.is_competitive:
        raise RegimeError(f"degenerate parameters: {reg.reason}")
    cs = constant_state(p)
    D = discriminant_D(p)
    lines = [
        f"regime = {reg.tag.value}",
        f"A = {_fmt(p.A)}, B = {_fmt(p.B)}, C = {_fmt(p.C)}",
        f"u* = {_rational(cs.u_star)}",
        f"v* = {_rational(cs.v_star)}",
        f"tau* = {_rational(cs.tau_star)}",
        f"D = {_rational(D)}",
        f"tau_bar = {_rational(tau_bar(p))}",
    ]
    if D > 0:
        for j in range(1, cfg.get("run", "J") + 1):
            lines.append(f"d^({j}) = {_fmt(bifurcation_point(p, j))}")
    else:
        lines.append("D <= 0: no bifurcation points")
    return "\n".join(lines)


def cmd_hprofile(cfg: RunConfig, taus) -> list:
    p = cfg.model
    n = cfg.get("hprofile", "n_points")
    out = cfg.outdir
    files, meta = [], []
    for tau in taus:
        if not tau > 0:
            raise ConfigError(f"tau must be positive, got {tau!r}")
        z = zeros_of_h(tau, p)
        top = 1.5 * max(p.a1 / p.b1, max(z.zeros) if z.zeros else 0.0)
        bottom = 1e-3 * min([p.c2 * tau / p.a2] + list(z.zeros))
        u = np.geomspace(bottom, top, n)
        rows = [(ui, hi) for ui, hi in zip(u, h_value(u, tau, p))]
        rows += [(zk, float(h_value(zk, tau, p))) for zk in z.zeros]
        path = out / f"hprofile_tau_{tau:.10g}.csv"
        _write_csv(path, ["u", "h"], rows)
        files.append(path)
        meta.append({"tau": tau, "file": path.name, "zeros": list(z.zeros), "complete": z.complete,
                     "zero_rows": len(z.zeros)})
    _write_json(out / "hprofile_manifest.json", {"config": cfg.echo(), "profiles": meta})
    return files


def cmd_timemap(cfg: RunConfig, tau: float, d: float) -> Path:
    p = cfg.model
    tm = TimeMap(tau, p, order=cfg.get("run", "order"))
    grid = tm.scan_grid(n=cfg.get("timemap", "n_points"))
    rows = []
    for m in grid:
        try:
            rows.append((float(m), tm.X(float(m), d)))
        except NumericalFailure:
            continue
    rows.append((tm.z2, tm.limit(d)))
    path = cfg.outdir / f"timemap_tau_{tau:.10g}_d_{d:.10g}.csv"
    _write_csv(path, ["m", "X"], rows)
    _write_json(cfg.outdir / "timemap_manifest.json", {
        "config": cfg.echo(), "file": path.name, "case": tm.case.tag.value,
        "m_lower": tm.m_lower, "z": [tm.z1, tm.z2, tm.z3], "limit_row": "last"})
    return path


def _point_at(p, j, d, n_nodes, orientation="+"):
    """Branch point at a given d, reached by continuation from the onset."""
    dj = bifurcation_point(p, j)
    if not 0 < d < dj:
        raise DomainError(f"d={d!r} must lie in (0, d^({j}) = {dj!r})")
    grid = br.default_d_grid(p, j, d_min=d)
    grid = grid[grid > d]
    grid = np.concatenate([grid, [d]])
    branch = br.trace_branch(j, orientation, p, grid, n_nodes=None, classify_endpoint=False)
    if not branch.points or branch.points[-1].d != d:
        raise NumericalFailure(f"continuation did not reach d={d!r}: {list(branch.diagnostics)}")
    return br.attach_profile(branch.points[-1], p, n_nodes)


def cmd_solve(cfg: RunConfig, j: int, d: float, orientation: str) -> dict:
    p = cfg.model
    n_nodes = cfg.get("run", "n_nodes")
    orients = ["+", "-"] if orientation == "both" else [orientation]
    report = {"config": cfg.echo(), "solutions": []}
    pt = _point_at(p, j, d, n_nodes, "+")
    for o in orients:
        prof = pt.profile if o == "+" else pt.profile.shifted()
        path = cfg.outdir / f"profile_j{j}_{'plus' if o == '+' else 'minus'}_d_{d:.10g}.csv"
        write_profile_csv(prof, path)
        ode, bc = residual_check(prof, p)
        report["solutions"].append({
            "file": path.name, "j": j, "orientation": o, "d": d, "tau": pt.tau, "m": pt.m,
            "M": pt.M, "int_f": pt.int_f, "int_g": pt.int_g, "ode_residual": ode,
            "bc_residual": bc, "max_abs_h": float(np.max(np.abs(h_value(prof.u, pt.tau, p)))),
            "constraint_ok": abs(pt.int_f) < cfg.get("run", "int_tol"),
        })
    _write_json(cfg.outdir / f"solve_j{j}_d_{d:.10g}.json", report)
    return report


def _trace_job(args):
    p, j, d_min_factor, n_geometric = args
    grid = br.default_d_grid(p, j, d_min=d_min_factor * bifurcation_point(p, j),
                             n_geometric=n_geometric)
    return br.trace_branch(j, "+", p, grid, n_nodes=None)


def cmd_branch(cfg: RunConfig, js, orientations, jobs: int) -> dict:
    p = cfg.model
    dmf = cfg.get("branch", "d_min_factor")
    ng = cfg.get("branch", "n_geometric")
    tasks = [(p, j, dmf, ng) for j in js]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traced = list(pool.map(_trace_job, tasks))
    else:
        traced = [_trace_job(t) for t in tasks]
    branches, files = [], []
    for b in traced:
        progress(f"j={b.j}: {len(b.points)} points, onset {b.onset_d:.10g}")
        for o in orientations:
            bo = b if o == "+" else br.shift_branch(b)
            path = cfg.outdir / f"branch_j{b.j}_{'plus' if o == '+' else 'minus'}.csv"
            br.write_branch_csv(bo, path)
            branches.append(bo)
            files.append(path.name)
    manifest = br.branch_manifest(branches, files)
    manifest["config"] = cfg.echo()
    manifest["bifurcation_points"] = {str(j): bifurcation_point(p, j) for j in js}
    _write_json(cfg.outdir / "branch_manifest.json", manifest)
    return manifest


def cmd_validate(cfg: RunConfig, j: int, d: float | None, betas) -> dict:
    p = cfg.model
    dj = bifurcation_point(p, j)
    d = 0.5 * dj if d is None else d
    N = cfg.get("validate", "N")
    pt = _point_at(p, j, d, max(cfg.get("run", "n_nodes"), 1025))
    rows = []
    prev = None
    for beta in sorted(betas, reverse=True):
        sp = SktParams.from_limit(p, d, beta, N)
        guess = guess_from_profile(sp, pt.profile) if prev is None else (prev.u, prev.v)
        sol = solve_skt(sp, guess)
        prev = sol
        rep = compare_with_limit(sol, pt, p)
        rep["beta"] = beta
        rep["alpha"] = sp.alpha
        path = cfg.outdir / f"skt_j{j}_d_{d:.10g}_beta_{beta:.10g}.csv"
        write_solution_csv(sol, p, path, sp)
        rep["file"] = path.name
        rows.append(rep)
        progress(f"beta={beta:g}: sup|uv - tau| = {rep['sup_uv_minus_tau']:.3e}")
    rows.sort(key=lambda r: r["beta"])
    uv = [r["sup_uv_minus_tau"] for r in rows]
    du = [r["sup_u_distance"] for r in rows]
    report = {
        "config": cfg.echo(), "j": j, "d": d, "tau": pt.tau, "sweep": rows,
        "uv_decreasing": all(b < a for a, b in zip(uv, uv[1:])),
        "u_distance_decreasing": all(b < a for a, b in zip(du, du[1:])),
    }
    _write_json(cfg.outdir / f"validate_j{j}_d_{d:.10g}.json", report)
    return report


# ---------------------------------------------------------------------------
# click wiring

def _run(fn):
    """Map package errors onto exit codes."""
    try:
        return fn()
    except (ConfigError, RegimeError, DiscriminantError, DomainError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except (NumericalFailure, StateError) as exc:
        click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)


def _cfg(ctx, extra=()):
    o = ctx.obj
    overrides = list(o["set"]) + list(extra)
    if o["preset"]:
        overrides.insert(0, f"model.preset={o['preset']}")
    if o["out"]:
        overrides.append(f"run.output_dir={o['out']}")
    return load_config(o["config"], overrides)


@click.group()
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
              help="INI configuration file.")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
              help="Built-in parameter set.")
@click.option("--set", "set_", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Override a configuration value (repeatable).")
@click.option("--out", default=None, help="Output directory.")
@click.pass_context
def main(ctx, config, preset, set_, out):
    """Tools for the limiting system of a cross-diffusion competition model."""
    ctx.obj = {"config": config, "preset": preset, "set": set_, "out": out}


@main.command()
@click.pass_context
def regime(ctx):
    """Regime, constant state, D, tau_bar and bifurcation points."""
    _run(lambda: click.echo(cmd_regime(_cfg(ctx))))


@main.command()
@click.option("--tau", "taus", default=None, help="Comma-separated tau values.")
@click.pass_context
def hprofile(ctx, taus):
    """CSV of h(u, tau) on a log-spaced u grid, zeros appended."""
    def go():
        cfg = _cfg(ctx, [f"hprofile.tau={taus}"] if taus else [])
        files = cmd_hprofile(cfg, _floats(_require(cfg, "hprofile", "tau")))
        for f in files:
            click.echo(str(f))
    _run(go)


@main.command()
@click.option("--tau", type=float, default=None)
@click.option("--d", type=float, default=None)
@click.pass_context
def timemap(ctx, tau, d):
    """CSV of X(m) over the admissible interval plus the limit row."""
    def go():
        extra = ([f"timemap.tau={tau!r}"] if tau is not None else []) + \
                ([f"timemap.d={d!r}"] if d is not None else [])
        cfg = _cfg(ctx, extra)
        click.echo(str(cmd_timemap(cfg, _require(cfg, "timemap", "tau"), _require(cfg, "timemap", "d"))))
    _run(go)


@main.command()
@click.option("--j", type=int, default=None)
@click.option("--d", type=float, default=None)
@click.option("--orientation", type=click.Choice(["+", "-", "both"]), default=None)
@click.pass_context
def solve(ctx, j, d, orientation):
    """Solve the constrained problem at one d and write the profile."""
    def go():
        extra = [f"solve.{k}={v!r}" if k != "orientation" else f"solve.orientation={v}"
                 for k, v in (("j", j), ("d", d), ("orientation", orientation)) if v is not None]
        cfg = _cfg(ctx, extra)
        rep = cmd_solve(cfg, cfg.get("solve", "j"), _require(cfg, "solve", "d"),
                        cfg.get("solve", "orientation"))
        for s in rep["solutions"]:
            click.echo(f"{s['file']}: tau={_fmt(s['tau'])} int_f={s['int_f']:.3e} "
                       f"int_g={s['int_g']:.3e} ode={s['ode_residual']:.3e} bc={s['bc_residual']:.3e}")
    _run(go)


@main.command()
@click.option("--j", "js", default=None, help="Comma-separated mode numbers.")
@click.option("--jobs", type=int, default=None, help="Worker processes.")
@click.pass_context
def branch(ctx, js, jobs):
    """Trace branches in d and write CSVs plus a manifest."""
    def go():
        extra = ([f"branch.j={js}"] if js else []) + ([f"run.jobs={jobs}"] if jobs else [])
        cfg = _cfg(ctx, extra)
        modes = [int(v) for v in _floats(cfg.get("branch", "j"))]
        orients = [o.strip() for o in cfg.get("branch", "orientations").split(",") if o.strip()]
        if any(o not in ("+", "-") for o in orients):
            raise ConfigError(f"orientations must be '+' and/or '-', got {orients}")
        man = cmd_branch(cfg, modes, orients, cfg.get("run", "jobs"))
        for b in man["branches"]:
            ep = b["endpoint"] or {}
            click.echo(f"{b['file']}: {b['n_points']} points, onset {_fmt(b['onset_d'])}, "
                       f"endpoint {ep.get('kind')} tau0={ep.get('tau0')}")
    _run(go)


@main.command()
@click.option("--j", type=int, default=None)
@click.option("--d", type=float, default=None)
@click.option("--betas", default=None, help="Comma-separated beta values (alpha = gamma beta).")
@click.pass_context
def validate(ctx, j, d, betas):
    """Compare full-system solutions across a beta sweep with the limiting profile."""
    def go():
        extra = [f"validate.{k}={v}" for k, v in (("j", j), ("d", d), ("betas", betas)) if v is not None]
        cfg = _cfg(ctx, extra)
        rep = cmd_validate(cfg, cfg.get("validate", "j"), cfg.get("validate", "d"),
                           _floats(cfg.get("validate", "betas")))
        for r in rep["sweep"]:
            click.echo(f"beta={r['beta']:g}: sup|uv-tau|={r['sup_uv_minus_tau']:.3e} "
                       f"sup|u-u_lim|={r['sup_u_distance']:.3e}")
        click.echo(f"uv_decreasing={rep['uv_decreasing']} u_distance_decreasing={rep['u_distance_decreasing']}")
    _run(go)


if __name__ == "__main__":
    main()
