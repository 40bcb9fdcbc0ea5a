"""The acceptance battery: ten property checks at desk scale.

Each criterion returns a Check; `run_suite` writes summary.csv and one JSON per check.
quick=True shrinks path counts and grids for a smoke run (thresholds unchanged).
"""
from __future__ import annotations

import csv
import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import duality as du
from . import fields as fl
from . import fk, flows, pde, so3, vaf
from .fields import Grid, VectorField
from .pde import SolverConfig


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number} {self.name}: {'PASS' if self.passed else 'FAIL'}"


def _timed(number, name, fn):
    t0 = time.time()
    passed, metrics = fn()
    return Check(number, name, bool(passed), metrics, time.time() - t0)


def tg_setup(n: int = 32):
    """Shared 2D setup: 32^2, Taylor-Green frozen at t = 0, a smooth projected F0."""
    g = Grid.cube(2, n)
    x, y = g.coords()
    F0 = fl.helmholtz_project(VectorField(g, [np.sin(2 * y) + 0.5 * np.cos(x + y), np.cos(x)]))
    return g, fl.taylor_green_2d(g), F0


def abc_setup(n: int = 16, seed: int = 0):
    g = Grid.cube(3, n)
    rng = np.random.default_rng(seed)
    return g, fl.abc_flow(g), fl.random_solenoidal(g, rng, kmax=3), fl.random_solenoidal(g, rng, kmax=3)


def c1_duality_pairing(quick=False, seed=0):
    def run():
        g, v, F0, G0 = abc_setup(16, seed)
        t0 = time.time()
        conv = du.pairing_convergence(F0, G0, v, 0.5, SolverConfig(0.05, 4e-3), 10, 3)
        wall = time.time() - t0
        fine = conv["reports"][-1]
        order = min(conv["orders"])
        m = {"deviation": fine.deviation, "orders": conv["orders"], "values": conv["values"],
             "dts": conv["dts"], "wall": wall}
        return fine.deviation <= 1e-5 and order >= 3.5 and wall <= 60, m
    return _timed(1, "duality pairing", run)


def c2_duality_relation(quick=False, seed=0):
    def run():
        g, v, _, _ = abc_setup(16, seed)
        rng = np.random.default_rng(seed + 100)
        gaps = []
        for _ in range(5):
            F0 = fl.random_solenoidal(g, rng, kmax=3)
            G0 = fl.random_solenoidal(g, rng, kmax=3)
            gaps.append(du.rel_gap(*du.duality_relation(F0, G0, v, 0.5, SolverConfig(0.05, 1e-3))))
        return max(gaps) <= 1e-5, {"gaps": gaps}
    return _timed(2, "duality relation", run)


def c3_serrin(quick=False, seed=0):
    def run():
        r = du.serrin_experiment(0.05, 0.5, n=16 if quick else 32, nz=8, dt=1e-3, n_trials=3, seed=seed)
        m = {k: r[k] for k in ("max_gap", "vorticity_ratio", "expected_ratio", "ratio_error")}
        return r["max_gap"] <= 1e-5 and r["ratio_error"] <= 1e-8, m
    return _timed(3, "serrin experiment", run)


def c4_fk_standard(quick=False, seed=1):
    def run():
        g, v, F0 = tg_setup()
        ref = fk.pde_reference(F0, v, 0.1, 0.5, 0.25)
        cfg = flows.FlowConfig(0.1, 5e-3, 1000 if quick else 20000, seed)
        t0 = time.time()
        est = fk.fk_curve(F0, v, 0.1, 0.5, 0.25, cfg)
        wall = time.time() - t0
        c = fk.compare(est, ref)
        return c.passed and wall <= 600, {**c.to_dict(), "wall": wall, "n_paths": cfg.n_paths,
                                         "n_flagged": est.n_flagged}
    return _timed(4, "feynman-kac standard flow", run)


def c5_rotated(quick=False, seed=1):
    def run():
        g, v, F0 = tg_setup()
        ref = fk.pde_reference(F0, v, 0.1, 0.5, 0.25)
        phi = flows.stream_function(v)
        cfg = flows.FlowConfig(0.1, 5e-3, 1000 if quick else 20000, seed, rotation=flows.Rot2DBrownian())
        est = fk.fk_rot2d(F0, phi, 0.1, 0.5, 0.25, cfg)
        a = fk.compare(est, ref)
        op = flows.one_point_law_test(flows.FlowConfig(0.1, 5e-3, 10000 if quick else 100000, seed + 1,
                                                       rotation=flows.Rot2DBrownian()), 0.5, v=v)
        nodes = np.arange(0, g.n_points, 16)
        cc = fk.fk_complex_check(F0, phi, 0.1, 0.5, 0.25, flows.FlowConfig(0.1, 5e-3, 200, seed + 2), nodes)
        m = {"pde": a.to_dict(), "cov": op.cov, "cov_se": op.cov_se, "expected_cov": op.expected_cov,
             "complex": {k: cc[k] for k in ("max_state_gap", "max_weight_gap", "estimate_gap", "n_nodes")}}
        m["parts"] = {"a": a.passed, "b": op.passed_cov, "c": cc["passed"]}
        return all(m["parts"].values()), m
    return _timed(5, "rotated brownian representation", run)


def c6_martingale(quick=False, seed=2):
    def run():
        g, v, F0 = tg_setup()
        contour = flows.Contour.circle([3.0, 3.0], 0.5, 256)
        out = {}
        for rot in (flows.Identity(), flows.Rot2DBrownian()):
            cfg = flows.FlowConfig(0.1, 5e-3, 1000 if quick else 10000, seed, rotation=rot)
            r = flows.martingale_test(contour, F0, v, 0.5, 0.25, cfg, SolverConfig(0.1, 1e-3))
            out[cfg.kind_name] = r.to_dict()
        return all(r["passed"] for r in out.values()), out
    return _timed(6, "circulation martingale", run)


def c7_so3(quick=False, seed=0):
    def run():
        r = so3.self_check(seed)
        return r["passed"], r
    return _timed(7, "so3 toolkit", run)


def c8_representation(quick=False, seed=0):
    def run():
        g = Grid.cube(2, 32)
        rng = np.random.default_rng(seed)
        res = []
        for _ in range(3):
            b, phi, psi, v = so3.embedded_triple(fl.random_scalar(g, rng, kmax=4), 0.1)
            F = fl.embed_2d(fl.random_solenoidal(g, rng, kmax=4))
            res.append(so3.representation_residual(b, phi, psi, v, F, 0.1).max_abs())
        return max(res) <= 1e-10, {"residuals": res}
    return _timed(8, "3d representation residual", run)


def c9_surface(quick=False, seed=3):
    def run():
        g = Grid.cube(3, 8 if quick else 16)
        G0 = fl.random_solenoidal(g, np.random.default_rng(seed), kmax=2)
        v = fl.abc_flow(g, 0.5, 0.5, 0.5)
        cfg = flows.FlowConfig(0.1, 1e-2, 1000 if quick else 10000, seed)
        r = fk.surface_curl_consistency(G0, v, 0.1, 0.5, 0.1, cfg)
        return r["passed"], {k: r[k] for k in ("gap", "se", "threshold", "n_flagged")}
    return _timed(9, "surface feynman-kac", run)


def _bitwise_rerun(seed: int) -> bool:
    g, v, F0 = tg_setup(16)
    cfg = flows.FlowConfig(0.1, 1e-2, 50, seed)
    a = fk.fk_curve(F0, v, 0.1, 0.5, 0.1, cfg)
    b = fk.fk_curve(F0, v, 0.1, 0.5, 0.1, cfg)
    return np.array_equal(a.raw.components, b.raw.components) and np.array_equal(a.stderr, b.stderr)


def se_slope_probe(ns=(1000, 10000, 100000), seed: int = 5) -> tuple:
    """SE of one node mean against path count on the shared 2D setup."""
    g, v, F0 = tg_setup()
    x = np.array([[1.0, 2.0]])
    ses = []
    for i, n in enumerate(ns):
        cfg = flows.FlowConfig(0.1, 1e-2, n, seed + i)
        _, pos, grads = flows.simulate(x, v, cfg, 0.25, 0.5)
        w = np.einsum("pi,pij->pj", fl.evaluate_at(F0, pos[-1, :, 0]), grads[-1, :, 0])[:, 0]
        ses.append(float(np.std(w, ddof=1) / math.sqrt(n)))
    return flows.se_slope(ns, ses), ses


def c10_infrastructure(quick=False, seed=0):
    def run():
        rng = np.random.default_rng(seed)
        g = Grid.cube(3, 16)
        f = VectorField(g, rng.standard_normal((3,) + g.sizes))
        h = VectorField(g, rng.standard_normal((3,) + g.sizes))
        pf = fl.helmholtz_project(f)
        idem = fl.norm_H(fl.helmholtz_project(pf) - pf) / fl.norm_H(pf)
        sa = abs(fl.inner_product_H(pf, h) - fl.inner_product_H(f, fl.helmholtz_project(h)))
        sa /= fl.norm_H(f) * fl.norm_H(h)
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "f.vaf"
            vaf.write(p, f)
            raw = p.read_bytes()
            back = vaf.read(p)
            vaf.write(Path(d) / "g.vaf", back)
            rt = np.array_equal(back.components, f.components) and (Path(d) / "g.vaf").read_bytes() == raw
        rerun = _bitwise_rerun(seed)
        ns = (300, 3000, 30000) if quick else (1000, 10000, 100000)
        slope, ses = se_slope_probe(ns)
        m = {"idempotence": idem, "self_adjoint": sa, "vaf_roundtrip": rt, "bitwise_rerun": rerun,
             "se_slope": slope, "ses": ses}
        return idem <= 1e-10 and sa <= 1e-10 and rt and rerun and abs(slope + 0.5) <= 0.05, m
    return _timed(10, "infrastructure", run)


CRITERIA = [c1_duality_pairing, c2_duality_relation, c3_serrin, c4_fk_standard, c5_rotated, c6_martingale,
            c7_so3, c8_representation, c9_surface, c10_infrastructure]


def _json(x):
    from .cli import _jsonable
    return _jsonable(x)


def run_suite(out: Path, quick: bool = False, seed=None, only=None) -> bool:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [("criterion", "name", "passed", "runtime_s")]
    ok = True
    for fn in CRITERIA:
        num = int(fn.__name__[1:].split("_")[0])
        if only and num not in only:
            continue
        c = fn(quick) if seed is None else fn(quick, seed)
        print(c.line(), flush=True)
        ok &= c.passed
        rows.append((c.number, c.name, c.passed, round(c.runtime, 2)))
        (out / f"criterion_{c.number}.json").write_text(
            json.dumps(_json({"name": c.name, "passed": c.passed, "runtime": c.runtime, "metrics": c.metrics}),
                       indent=2, sort_keys=True))
    with open(out / "summary.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return ok
