"""Command line runner: `vecadvect run|inspect|convert|suite`.

Exit codes: 0 all checks pass, 2 config or file error, 3 numerical guard, 4 acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from . import duality as du
from . import fields as fl
from . import fk, flows, pde, so3, vaf
from .fields import Grid, VectorField
from .pde import NumericalGuardError, SolverConfig

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_ACCEPT = 0, 2, 3, 4
KINDS = ["duality", "duality-relation", "serrin", "fk2d", "fk3d", "fk-surface", "martingale",
         "one-point-law", "so3-check", "scaling", "solve"]
STOCHASTIC = ["fk2d", "fk3d", "fk-surface", "martingale", "one-point-law"]
FLOW_NAMES = {"identity": flows.Identity, "rot2d_brownian": flows.Rot2DBrownian}

_FIELD_SPEC = {
    "type": "object",
    "oneOf": [
        {"properties": {"recipe": {"type": "string"}, "params": {"type": "object"}},
         "required": ["recipe"], "additionalProperties": False},
        {"properties": {"random": {"type": "object", "properties": {
            "kmax": {"type": "integer", "minimum": 1}, "seed": {"type": "integer", "minimum": 0}},
            "additionalProperties": False}}, "required": ["random"], "additionalProperties": False},
        {"properties": {"vaf": {"type": "string"}}, "required": ["vaf"], "additionalProperties": False},
    ],
}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FLOW = {"type": "string", "enum": sorted(FLOW_NAMES)}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "grid"],
    "properties": {
        "kind": {"type": "string", "enum": KINDS},
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["dim"],
            "properties": {
                "dim": {"type": "integer", "enum": [2, 3]},
                "n": {"type": "integer", "minimum": 8},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 8}},
                "box": {"oneOf": [_POS, {"type": "array", "items": _POS}]},
            },
        },
        "nu": _POS, "T": _POS, "s": _POS, "dt": _POS, "pde_dt": _POS,
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "velocity": _FIELD_SPEC, "F0": _FIELD_SPEC, "G0": _FIELD_SPEC,
        "flow": {"oneOf": [_FLOW, {"type": "array", "items": _FLOW, "minItems": 1}]},
        "angle_scale": {"type": "number"},
        "checkpoints": {"type": "integer", "minimum": 2},
        "levels": {"type": "integer", "minimum": 3},
        "n_trials": {"type": "integer", "minimum": 1},
        "lambda": _POS,
        "resize": {"type": "boolean"},
        "contour": {"type": "object", "additionalProperties": False,
                    "properties": {"center": {"type": "array", "items": {"type": "number"}},
                                   "radius": _POS, "M": {"type": "integer", "minimum": 16}}},
        "complex_check_paths": {"type": "integer", "minimum": 1},
        "one_point_paths": {"type": "integer", "minimum": 1},
        "equation": {"type": "string", "enum": ["F", "G"]},
        "acceptance": {"type": "object", "additionalProperties": False,
                       "properties": {"tol": _POS, "min_order": {"type": "number"}, "floor": {"type": "number"},
                                      "n_se": _POS, "max_runtime": _POS}},
        "output": {"type": "string"},
        "save_fields": {"type": "boolean"},
        "plots": {"type": "boolean"},
    },
    "allOf": [{"if": {"properties": {"kind": {"enum": STOCHASTIC}}, "required": ["kind"]},
               "then": {"required": ["seed"]}}],
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return validate(cfg)


# config resolution

def make_grid(spec: dict) -> Grid:
    dim = spec["dim"]
    sizes = spec.get("sizes") or [spec.get("n", 32)] * dim
    if len(sizes) != dim:
        raise ConfigError(f"grid.sizes has {len(sizes)} entries for dim {dim}")
    box = spec.get("box", 2 * math.pi)
    box = [box] * dim if isinstance(box, (int, float)) else box
    try:
        return Grid(dim, tuple(sizes), tuple(box))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def make_field(spec, grid: Grid, name: str, default=None) -> VectorField:
    spec = spec or default
    if spec is None:
        raise ConfigError(f"missing field spec '{name}'")
    if "recipe" in spec:
        try:
            f = fl.analytic_field(spec["recipe"], grid, 0.0, **spec.get("params", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
        return f
    if "random" in spec:
        r = spec["random"]
        return fl.random_solenoidal(grid, np.random.default_rng(r.get("seed", 0)), kmax=r.get("kmax", 3))
    try:
        f = vaf.read(spec["vaf"])
    except (OSError, vaf.VafError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if f.grid != grid:
        raise ConfigError(f"{name}: file grid {f.grid.sizes} does not match config grid {grid.sizes}")
    return f


def _flows(cfg: dict) -> list:
    f = cfg.get("flow", "identity")
    return [f] if isinstance(f, str) else list(f)


def _rotation(name: str, cfg: dict):
    if name == "rot2d_brownian":
        return flows.Rot2DBrownian(angle_scale=cfg.get("angle_scale"))
    return flows.Identity()


# outcomes and artifacts

@dataclass
class Plot:
    name: str
    x: list
    series: dict                  # label -> y values
    errors: dict = field(default_factory=dict)  # label -> y errors
    xlabel: str = "x"
    ylabel: str = "y"
    logx: bool = False
    logy: bool = False


@dataclass
class Outcome:
    result: dict
    checks: dict
    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for r in rows:
            w.writerow(r)


def write_plot(out: Path, p: Plot) -> None:
    labels = list(p.series)
    head = ["x"] + [c for lab in labels for c in ([lab] + ([lab + "_err"] if lab in p.errors else []))]
    rows = [head]
    for i, x in enumerate(p.x):
        row = [x]
        for lab in labels:
            row.append(p.series[lab][i])
            if lab in p.errors:
                row.append(p.errors[lab][i])
        rows.append(row)
    write_csv(out / f"{p.name}.csv", rows)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for lab in labels:
        if lab in p.errors:
            ax.errorbar(p.x, p.series[lab], yerr=p.errors[lab], marker="o", ms=3, capsize=3, label=lab)
        else:
            ax.plot(p.x, p.series[lab], marker="o", ms=3, label=lab)
    if p.logx:
        ax.set_xscale("log")
    if p.logy:
        ax.set_yscale("log")
    ax.set_xlabel(p.xlabel)
    ax.set_ylabel(p.ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / f"{p.name}.svg", format="svg", metadata={"Date": None})
    plt.close(fig)


# experiment runners

def _acc(cfg, key, default):
    return cfg.get("acceptance", {}).get(key, default)


def run_duality(cfg: dict, grid: Grid) -> Outcome:
    nu, T = cfg.get("nu", 0.05), cfg.get("T", 0.5)
    dt = cfg.get("dt", 1e-3)
    levels = cfg.get("levels", 3)
    v = pde.as_velocity(make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "abc_flow"}))
    F0 = make_field(cfg.get("F0"), grid, "F0", {"random": {"kmax": 3, "seed": 1}})
    G0 = make_field(cfg.get("G0"), grid, "G0", {"random": {"kmax": 3, "seed": 2}})
    # halving chain that ends at the requested dt
    conv = du.pairing_convergence(F0, G0, v, T, SolverConfig(nu, dt * 2 ** (levels - 1)),
                                  cfg.get("checkpoints", 10), levels)
    fine = conv["reports"][-1]
    order = min(conv["orders"]) if conv["orders"] else float("nan")
    res = {"dts": conv["dts"], "pairing_values": conv["values"], "deviations": conv["deviations"],
           "orders": conv["orders"], "deviation": fine.deviation, "times": fine.times, "pairings": fine.pairings}
    checks = {"deviation": fine.deviation <= _acc(cfg, "tol", 1e-5),
              "order": bool(order >= _acc(cfg, "min_order", 3.5))}
    dv = [abs(a - conv["values"][-1]) for a in conv["values"][:-1]]
    plots = [Plot("pairing", fine.times, {"pairing": fine.pairings}, xlabel="t", ylabel="(F(t), G(T-t))"),
             Plot("pairing_convergence", conv["dts"][:-1], {"|P(dt) - P(finest)|": dv}, xlabel="dt",
                  ylabel="gap", logx=True, logy=True)]
    return Outcome(res, checks, {"pairing": list(fine.csv_rows())}, plots)


def run_duality_relation(cfg: dict, grid: Grid) -> Outcome:
    nu, T, dt = cfg.get("nu", 0.05), cfg.get("T", 0.5), cfg.get("dt", 1e-3)
    v = pde.as_velocity(make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "abc_flow"}))
    rng = np.random.default_rng(cfg.get("seed", 0))
    rows = [("trial", "left", "right", "gap")]
    gaps = []
    for i in range(cfg.get("n_trials", 5)):
        F0 = fl.random_solenoidal(grid, rng, kmax=3)
        G0 = fl.random_solenoidal(grid, rng, kmax=3)
        left, right = du.duality_relation(F0, G0, v, T, SolverConfig(nu, dt))
        gaps.append(du.rel_gap(left, right))
        rows.append((i, left, right, gaps[-1]))
    return Outcome({"gaps": gaps, "max_gap": max(gaps)}, {"gap": max(gaps) <= _acc(cfg, "tol", 1e-5)},
                   {"relation": rows})


def run_serrin(cfg: dict, grid: Grid) -> Outcome:
    r = du.serrin_experiment(cfg.get("nu", 0.05), cfg.get("T", 0.5), n=grid.sizes[0], nz=grid.sizes[2],
                             dt=cfg.get("dt", 1e-3), n_trials=cfg.get("n_trials", 3), seed=cfg.get("seed", 0))
    checks = {"gap": r["max_gap"] <= _acc(cfg, "tol", 1e-5), "vorticity_ratio": r["ratio_error"] <= 1e-8}
    return Outcome(r, checks)


def _fk_setup(cfg, grid, default_velocity):
    nu, T, s = cfg.get("nu", 0.1), cfg.get("T", 0.5), cfg.get("s", 0.25)
    v = make_field(cfg.get("velocity"), grid, "velocity", default_velocity)
    F0 = fl.helmholtz_project(make_field(cfg.get("F0"), grid, "F0", {"random": {"kmax": 2, "seed": 1}}))
    fcfg = flows.FlowConfig(nu, cfg.get("dt", 5e-3), cfg.get("n_paths", 1000), cfg["seed"])
    ref = fk.pde_reference(F0, v, nu, T, s, cfg.get("pde_dt", 1e-3))
    return nu, T, s, v, F0, fcfg, ref


def run_fk2d(cfg: dict, grid: Grid) -> Outcome:
    nu, T, s, v, F0, fcfg, ref = _fk_setup(cfg, grid, {"recipe": "taylor_green_2d"})
    res, checks, tables, fields_ = {}, {}, {}, {"reference": ref}
    floor, nse = _acc(cfg, "floor", 0.02), _acc(cfg, "n_se", 3.0)
    for name in _flows(cfg):
        c = flows.FlowConfig(nu, fcfg.dt, fcfg.n_paths, fcfg.seed, rotation=_rotation(name, cfg))
        if name == "rot2d_brownian":
            phi = flows.stream_function(v)
            est = fk.fk_rot2d(F0, phi, nu, T, s, c)
            if "complex_check_paths" in cfg:
                cc = replace(c, n_paths=cfg["complex_check_paths"])
                rep = fk.fk_complex_check(F0, phi, nu, T, s, cc)
                res["complex_check"] = {k: rep[k] for k in ("max_state_gap", "max_weight_gap", "estimate_gap",
                                                            "n_nodes", "n_paths")}
                checks["complex_pathwise"] = rep["passed"]
            if "one_point_paths" in cfg:
                op = flows.one_point_law_test(replace(c, n_paths=cfg["one_point_paths"]), s,
                                              v=v, x0=np.full(2, 1.0), t0=T - s)
                res["one_point"] = op.to_dict()
                checks["one_point_cov"] = op.passed_cov
        else:
            est = fk.fk_curve(F0, v, nu, T, s, c)
        cmp = fk.compare(est, ref, floor, nse)
        res[name] = {"comparison": cmp.to_dict(), "estimate": est.summary()}
        checks[f"{name}_vs_pde"] = cmp.passed
        tables[f"nodes_{name}"] = list(fk.node_rows(est, ref))
        fields_[f"estimate_{name}"] = est.field
    return Outcome(res, checks, tables, [], fields_)


def run_fk3d(cfg: dict, grid: Grid) -> Outcome:
    nu, T, s, v, F0, fcfg, ref = _fk_setup(cfg, grid, {"recipe": "abc_flow", "params": {"A": 0.5, "B": 0.5, "C": 0.5}})
    est = fk.fk_curve(F0, v, nu, T, s, fcfg)
    cmp = fk.compare(est, ref, _acc(cfg, "floor", 0.02), _acc(cfg, "n_se", 3.0))
    return Outcome({"comparison": cmp.to_dict(), "estimate": est.summary()}, {"vs_pde": cmp.passed},
                   {"nodes": list(fk.node_rows(est, ref))}, [], {"estimate": est.field, "reference": ref})


def run_fk_surface(cfg: dict, grid: Grid) -> Outcome:
    nu, T, s = cfg.get("nu", 0.1), cfg.get("T", 0.5), cfg.get("s", 0.1)
    v = make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "abc_flow", "params": {"A": 0.5, "B": 0.5, "C": 0.5}})
    G0 = make_field(cfg.get("G0"), grid, "G0", {"random": {"kmax": 2, "seed": 3}})
    fcfg = flows.FlowConfig(nu, cfg.get("dt", 1e-2), cfg.get("n_paths", 1000), cfg["seed"])
    r = fk.surface_curl_consistency(G0, v, nu, T, s, fcfg, _acc(cfg, "n_se", 3.0))
    res = {k: r[k] for k in ("gap", "se", "threshold", "passed", "n_flagged")}
    res["surface"] = r["surface"].summary()
    res["curve"] = r["curve"].summary()
    return Outcome(res, {"curl_consistency": r["passed"]}, {}, [], {"surface": r["surface"].field})


def run_martingale(cfg: dict, grid: Grid) -> Outcome:
    if grid.dim != 2:
        raise ConfigError("martingale runs on a 2D grid")
    nu, T, s = cfg.get("nu", 0.1), cfg.get("T", 0.5), cfg.get("s", 0.25)
    v = make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "taylor_green_2d"})
    F0 = fl.helmholtz_project(make_field(cfg.get("F0"), grid, "F0", {"random": {"kmax": 2, "seed": 1}}))
    cs = cfg.get("contour", {})
    contour = flows.Contour.circle(cs.get("center", [3.0, 3.0]), cs.get("radius", 0.5), cs.get("M", 256))
    res, checks, tables, plots = {}, {}, {}, []
    for name in _flows(cfg):
        fc = flows.FlowConfig(nu, cfg.get("dt", 5e-3), cfg.get("n_paths", 1000), cfg["seed"],
                              rotation=_rotation(name, cfg))
        rep = flows.martingale_test(contour, F0, v, T, s, fc, SolverConfig(nu, cfg.get("pde_dt", 1e-3)),
                                    cfg.get("checkpoints", 5))
        res[name] = rep.to_dict()
        checks[name] = rep.passed
        tables[f"martingale_{name}"] = list(rep.csv_rows())
        plots.append(Plot(f"martingale_{name}", rep.times, {"E M(t)": rep.means}, {"E M(t)": [3 * e for e in rep.stderr]},
                          xlabel="t", ylabel="circulation"))
    return Outcome(res, checks, tables, plots)


def run_one_point(cfg: dict, grid: Grid) -> Outcome:
    nu, T = cfg.get("nu", 0.5), cfg.get("T", 1.0)
    v = make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "taylor_green_2d"})
    name = _flows(cfg)[0] if "flow" in cfg else "rot2d_brownian"
    fc = flows.FlowConfig(nu, cfg.get("dt", 1e-2), cfg.get("n_paths", 100000), cfg["seed"],
                          rotation=_rotation(name, cfg))
    rep = flows.one_point_law_test(fc, T, v=v)
    return Outcome(rep.to_dict(), {"mean": rep.passed_mean, "cov": rep.passed_cov, "kurtosis": rep.passed_kurtosis})


def run_so3(cfg: dict, grid: Grid) -> Outcome:
    r = so3.self_check(cfg.get("seed", 0), n_pairs=cfg.get("n_trials", 1000))
    return Outcome(r, {"so3": r["passed"]})


def run_scaling(cfg: dict, grid: Grid) -> Outcome:
    nu, t, dt = cfg.get("nu", 0.1), cfg.get("T", 0.1), cfg.get("dt", 1e-3)
    lam = cfg.get("lambda", 0.5)
    v = make_field(cfg.get("velocity"), grid, "velocity",
                   {"recipe": "taylor_green_2d"} if grid.dim == 2 else {"recipe": "abc_flow"})
    F0 = make_field(cfg.get("F0"), grid, "F0", {"random": {"kmax": 3, "seed": 1}})
    sizes = tuple(int(round(n / lam)) for n in grid.sizes) if cfg.get("resize", False) else None
    try:
        back = du.scaling_transform(du.scaling_transform(v, lam), 1 / lam)
        r = du.scaling_intertwining(v, F0, lam, t, SolverConfig(nu, dt), sizes)
    except ValueError as exc:
        raise ConfigError(f"scaling: {exc}") from None
    exact = bool(np.array_equal(back.components, v.components))
    r["roundtrip_exact"] = exact
    return Outcome(r, {"intertwining": r["gap"] <= _acc(cfg, "tol", 1e-6), "roundtrip": exact})


def run_solve(cfg: dict, grid: Grid) -> Outcome:
    nu, T, dt = cfg.get("nu", 0.1), cfg.get("T", 0.5), cfg.get("dt", 1e-3)
    v = pde.as_velocity(make_field(cfg.get("velocity"), grid, "velocity", {"recipe": "zero"}))
    F0 = make_field(cfg.get("F0"), grid, "F0", {"random": {"kmax": 3, "seed": 1}})
    sc = SolverConfig(nu, dt)
    n = pde.n_steps_for(T, dt)
    solve = pde.solve_G if cfg.get("equation", "F") == "G" else pde.solve_F
    traj = solve(F0, v, None, T, sc, record=list(range(n + 1)))
    res = {"n_steps": n, "norm_initial": fl.norm_H(F0), "norm_final": fl.norm_H(traj.final)}
    checks = {}
    if cfg.get("equation", "F") == "F":
        en = pde.energy_diagnostics(traj, v, sc)
        res["energy_residual"] = en.max_residual
        res["energy_inequality"] = en.inequality_holds
        checks["energy_inequality"] = en.inequality_holds
        plots = [Plot("energy", list(en.times), {"|F|^2": list(en.energy), "bound": list(en.bound)},
                      xlabel="t", ylabel="energy")]
    else:
        plots = []
    return Outcome(res, checks, {}, plots, {"final": traj.final})


RUNNERS: dict[str, Callable] = {
    "duality": run_duality, "duality-relation": run_duality_relation, "serrin": run_serrin,
    "fk2d": run_fk2d, "fk3d": run_fk3d, "fk-surface": run_fk_surface, "martingale": run_martingale,
    "one-point-law": run_one_point, "so3-check": run_so3, "scaling": run_scaling, "solve": run_solve,
}


def resolve_out(arg_out, cfg: dict) -> Path:
    out = arg_out or cfg.get("output") or os.environ.get("VECADVECT_OUT") or "vecadvect_out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def execute(cfg: dict, out: Path) -> Outcome:
    """Run one validated config and write its artifacts; returns the outcome."""
    grid = make_grid(cfg["grid"])
    t0 = time.time()
    oc = RUNNERS[cfg["kind"]](cfg, grid)
    wall = time.time() - t0
    if "max_runtime" in cfg.get("acceptance", {}):
        oc.checks["runtime"] = wall <= cfg["acceptance"]["max_runtime"]
    result = {"kind": cfg["kind"], "passed": oc.passed, "checks": oc.checks, "result": oc.result}
    (out / "result.json").write_text(json.dumps(_jsonable(result), indent=2, sort_keys=True))
    for name, rows in oc.tables.items():
        write_csv(out / f"{name}.csv", rows)
    if cfg.get("plots", True):
        for p in oc.plots:
            write_plot(out, p)
    if cfg.get("save_fields", False):
        for name, f in oc.fields.items():
            vaf.write(out / f"{name}.vaf", f)
    manifest = {"config": cfg, "version": __version__, "wall_time": wall, "argv": sys.argv,
                "passed": oc.passed}
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    return oc


# subcommands

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
        validate(cfg)
    oc = execute(cfg, resolve_out(args.out, cfg))
    for k, ok in oc.checks.items():
        print(f"{cfg['kind']}/{k}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if oc.passed else EXIT_ACCEPT


def inspect_text(f) -> str:
    g = f.grid
    lines = [f"dim: {g.dim}", f"sizes: {list(g.sizes)}", f"box: {list(g.box)}"]
    data = f.samples[None] if isinstance(f, fl.ScalarField) else f.components
    for c, a in enumerate(data):
        lines.append(f"component {c}: min {a.min():.6e} max {a.max():.6e} "
                     f"norm {math.sqrt(np.sum(a * a) * g.cell_volume):.6e}")
    if isinstance(f, VectorField):
        div = fl.divergence(f).samples
        lines.append(f"divergence norm: {math.sqrt(np.sum(div * div) * g.cell_volume):.6e}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    try:
        f = vaf.read(args.path)
    except (OSError, vaf.VafError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(inspect_text(f))
    return EXIT_OK


def cmd_convert(args) -> int:
    """VAF1 <-> .npz (arrays: data, sizes, box); VAF1 -> VAF1 rewrites the canonical bytes."""
    src, dst = Path(args.src), Path(args.dst)
    try:
        if src.suffix == ".npz":
            z = np.load(src)
            g = Grid(len(z["sizes"]), tuple(int(s) for s in z["sizes"]), tuple(float(b) for b in z["box"]))
            data = z["data"]
            f = fl.ScalarField(g, data[0]) if data.shape[0] == 1 else VectorField(g, data)
        else:
            f = vaf.read(src)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if dst.suffix == ".npz":
        data = f.samples[None] if isinstance(f, fl.ScalarField) else f.components
        np.savez(dst, data=data, sizes=np.array(f.grid.sizes), box=np.array(f.grid.box))
    else:
        vaf.write(dst, f)
    return EXIT_OK


def cmd_suite(args) -> int:
    from .suite import run_suite
    out = resolve_out(args.out, {})
    ok = run_suite(out, quick=args.quick, seed=args.seed)
    return EXIT_OK if ok else EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecadvect", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default $VECADVECT_OUT)")
        sp.add_argument("--seed", type=int, help="override the config seed (u64)")
        sp.add_argument("--threads", type=int, help="cap on worker threads")

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    common(r)
    i = sub.add_parser("inspect", help="describe a VAF1 file")
    i.add_argument("path")
    c = sub.add_parser("convert", help="convert between VAF1 and .npz")
    c.add_argument("src")
    c.add_argument("dst")
    s = sub.add_parser("suite", help="run the acceptance battery")
    s.add_argument("--quick", action="store_true", help="reduced sizes for a smoke run")
    common(s)
    return p


def _threads(n):
    if n:
        import numba
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "suite") and args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _threads(getattr(args, "threads", None))
        if args.command == "run":
            return cmd_run(args)
        if args.command == "inspect":
            return cmd_inspect(args)
        if args.command == "convert":
            return cmd_convert(args)
        return cmd_suite(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
