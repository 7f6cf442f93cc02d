"""Verification pipelines: configuration, orchestration and report emission."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import io as wio
from .alpha import (AlphaSolver, DivergenceError, NonConvergenceError, decay_report, default_grids,
                    find_amplitude, summary_rho)
from .fields import WallNormalGrid, inverse_fourier, trapezoid_weights
from .norms import UAlphaParams
from .obstacle import (ObstacleConfig, OracleError, PicardNonConvergence, TruncatedDomain, compute_force,
                       epsilon_sweep, invading_sweep, solve_truncated)
from .suites import antisymmetry_batch, collocation_batch, convolution_batch, hardy_batch, manufactured_batch
from .truncation import AnnulusCutoff, _radius, standard_source, tns_source, truncate_velocity

log = logging.getLogger(__name__)

__all__ = ["ConfigError", "StageError", "PipelineConfig", "ComparisonReport", "run_alpha_solve",
           "run_decay", "run_contraction", "run_oracle", "run_oracle_sweep", "run_weak_strong",
           "run_property_suites", "PIPELINES"]

PIPELINES = ("alpha-solve", "decay", "contraction", "oracle-solve", "oracle-sweep", "weak-strong", "verify")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it, ``kind`` is 'numeric' or 'divergence'."""

    def __init__(self, stage: str, msg: str, kind: str = "numeric"):
        super().__init__(f"[{stage}] {msg}")
        self.stage, self.kind = stage, kind


_DEFAULTS = {
    "grids": {"y_max": 1000.0, "k_min": 1e-5, "k_max": 64.0, "k_ratio": 1.08, "dk_max": 0.25,
              "k_knee": 8.0, "h_core": 0.01, "y_core": 3.0, "y_ratio": 1.03,
              "n": 16, "d_fine": None, "refine": 1, "cells_across": 8.0},
    "physical": {"h": 1.0, "eps": 0.05, "alpha": 4.0, "amplitude": None, "shape": "disk",
                 "semi_axes": [1.0, 1.0]},
    "tolerances": {"picard": 1e-8, "max_iter": 60, "oracle": 1e-8, "oracle_max_iter": 200,
                   "rho_target": 0.2, "rho_band": 0.15, "decay_slope": 0.15, "gradient_slope": 0.25,
                   "comparison": 0.10, "hardy": 0.05},
    "options": {"suites": ["hardy", "antisymmetry", "manufactured", "convolution"],
                "sweep": "invading", "n_list": [1, 2, 3], "eps_list": [0.2, 0.1, 0.05],
                "compare_radius": 2.0, "count": None, "stencil": "centered"},
}


@dataclass
class PipelineConfig:
    pipeline: str = "verify"
    grids: dict = field(default_factory=dict)
    physical: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    out: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        for sect in ("grids", "physical", "tolerances", "options"):
            given = getattr(self, sect)
            given = {} if given is None else given
            if not isinstance(given, dict):
                raise ConfigError(f"section {sect!r} must be an object")
            unknown = set(given) - set(_DEFAULTS[sect])
            if unknown:
                raise ConfigError(f"unknown keys in {sect!r}: {sorted(unknown)}")
            setattr(self, sect, {**_DEFAULTS[sect], **given})
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for key, val in self.tolerances.items():
            if not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(f"tolerance {key!r} must be positive")
        ph = self.physical
        if not (ph["h"] > 0 and ph["eps"] >= 0 and ph["alpha"] > 0):
            raise ConfigError("h and alpha must be positive, eps non-negative")

    @classmethod
    def from_dict(cls, d: dict, **override) -> "PipelineConfig":
        d = {**d, **{k: v for k, v in override.items() if v is not None}}
        known = {"pipeline", "grids", "physical", "tolerances", "options", "out", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path, **override) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, **override)

    def resolved(self) -> dict:
        return asdict(self)

    # --- derived objects

    def alpha_grids(self):
        g = self.grids
        return default_grids(g["y_max"], g["k_min"], g["k_max"], g["k_ratio"], g["dk_max"], g["k_knee"],
                             g["h_core"], g["y_core"], g["y_ratio"])

    def obstacle(self, eps=None) -> ObstacleConfig:
        ph = self.physical
        try:
            return ObstacleConfig(eps=ph["eps"] if eps is None else eps, h=ph["h"], shape=ph["shape"],
                                  semi_axes=tuple(ph["semi_axes"]))
        except OracleError as exc:
            raise ConfigError(str(exc)) from exc

    def domain(self, eps=None) -> TruncatedDomain:
        g, ph = self.grids, self.physical
        eps = ph["eps"] if eps is None else eps
        d = g["d_fine"] or 2 * eps * min(ph["semi_axes"]) / g["cells_across"]
        dom = TruncatedDomain(n=int(g["n"]), h=ph["h"], d_fine=d)
        return dom.refined(int(g["refine"])) if int(g["refine"]) > 1 else dom


def _outdir(cfg: PipelineConfig) -> Optional[Path]:
    if cfg.out is None:
        return None
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _finish(cfg: PipelineConfig, report: dict, name: str) -> dict:
    # wall-clock numbers live under "timing" so the rest of the report is reproducible
    timing = {k: report.pop(k) for k in [k for k in report if k == "seconds"]}
    report = {"pipeline": name, "seed": cfg.seed, "config": cfg.resolved(), **report}
    if timing:
        report["timing"] = timing
    out = _outdir(cfg)
    if out is not None:
        wio.write_json(out / f"{name}.json", report)
    return report


# ---------------------------------------------------------------------------
# alpha-solutions


def _alpha_setup(cfg: PipelineConfig):
    kg, yg = cfg.alpha_grids()
    solver = AlphaSolver(kg, yg, UAlphaParams(cfg.physical["alpha"]))
    src = standard_source(cfg.physical["h"])
    return solver, src


def _amplitude(cfg, solver, src):
    a = cfg.physical["amplitude"]
    if a is not None:
        return float(a), None
    t = cfg.tolerances
    a0, r0 = find_amplitude(solver, src, t["rho_target"], t["rho_band"])
    return float(a0), float(r0)


def _solve_alpha(cfg, solver, src, amplitude):
    t = cfg.tolerances
    try:
        return solver.iterate(src.scaled(amplitude), t["picard"], int(t["max_iter"]))
    except DivergenceError as exc:
        raise StageError("picard", f"smallness condition violated: {exc}", "divergence") from exc
    except NonConvergenceError as exc:
        raise StageError("picard", str(exc)) from exc


def run_alpha_solve(cfg: PipelineConfig, return_solution: bool = False):
    t0 = time.time()
    solver, src = _alpha_setup(cfg)
    a0, probe = _amplitude(cfg, solver, src)
    sol = _solve_alpha(cfg, solver, src, a0)
    dec = decay_report(sol)
    dis, work = sol.energy_balance()
    report = {
        "amplitude": a0, "probe_rho": probe, "u_alpha_norm": sol.u_alpha, "source_norm": sol.source_norm,
        "norm_ratio": sol.u_alpha / sol.source_norm if sol.source_norm else None,
        "rho_trace": sol.rho_trace, "rho": sol.rho, "increments": sol.increments, "iterations": sol.iterations,
        "decay_slopes": {"velocity": dec.get("velocity_slope"), "gradient": dec.get("gradient_slope")},
        "energy": {"dissipation": dis, "work": work}, "seconds": time.time() - t0,
    }
    out = _outdir(cfg)
    if out is not None:
        wio.write_container(out / "alpha_solution.wflw", label="alpha-solution",
                            grids=[("k", sol.kgrid.rule, sol.kgrid.nodes), ("y", sol.ygrid.rule, sol.ygrid.nodes)],
                            arrays=[("omega", sol.Z[0]), ("u", sol.u_hat), ("v", sol.v_hat)],
                            meta={"amplitude": a0, "u_alpha_norm": sol.u_alpha})
    rep = _finish(cfg, report, "alpha-solve")
    return (rep, sol) if return_solution else rep


def run_decay(cfg: PipelineConfig, solution=None) -> dict:
    t0 = time.time()
    if solution is None:
        _, solution = run_alpha_solve(cfg, return_solution=True)
    dec = decay_report(solution)
    if dec["trivial"]:
        raise StageError("decay", "trivial field: no decay to fit")
    t = cfg.tolerances
    vel_ok = abs(dec["velocity_slope"] + 1.5) <= t["decay_slope"]
    grad_ok = abs(dec["gradient_slope"] + 2.5) <= t["gradient_slope"]
    out = _outdir(cfg)
    if out is not None:
        wio.write_csv(out / "decay_profile.csv", {"y": dec["profile_y"], "sup_velocity": dec["velocity_sup"],
                                                  "sup_gradient": dec["gradient_sup"]})
    report = {k: v for k, v in dec.items() if k not in ("profile_y", "velocity_sup", "gradient_sup")}
    report.update({"velocity_ok": bool(vel_ok), "gradient_ok": bool(grad_ok),
                   "passed": bool(vel_ok and grad_ok), "seconds": time.time() - t0})
    return _finish(cfg, report, "decay")


def run_contraction(cfg: PipelineConfig, factors=(1, 2, 4), steps: int = 4) -> dict:
    """Probed rho at multiples of the fixture amplitude; growth must stay within 1.6x of linear."""
    solver, src = _alpha_setup(cfg)
    a0, _ = _amplitude(cfg, solver, src)
    base = src.scaled(1.0 / src.amplitude)
    f1, f2 = solver.source_hat(base)
    rows = []
    for c in factors:
        ratios = solver.contraction_probe(base, steps, (c * a0 * f1, c * a0 * f2))
        rows.append({"factor": c, "amplitude": c * a0, "ratios": ratios.tolist(), "rho": summary_rho(ratios)})
    r0 = rows[0]["rho"]
    growth = [r["rho"] / r0 for r in rows]
    lin_ok = all(f / 1.6 <= g <= f * 1.6 for f, g in zip(factors, growth))
    report = {"amplitude": a0, "rows": rows, "growth": growth, "rho_a0": r0,
              "rho_ok": bool(r0 <= 0.25), "linear_ok": bool(lin_ok), "passed": bool(r0 <= 0.25 and lin_ok)}
    return _finish(cfg, report, "contraction")


# ---------------------------------------------------------------------------
# oracle


def _oracle(cfg, eps=None, stage="oracle"):
    t = cfg.tolerances
    try:
        return solve_truncated(cfg.obstacle(eps), cfg.domain(eps), t["oracle"], int(t["oracle_max_iter"]))
    except PicardNonConvergence as exc:
        raise StageError(stage, str(exc), "divergence") from exc
    except OracleError as exc:
        raise ConfigError(str(exc)) from exc


def _oracle_summary(sol) -> dict:
    sig = compute_force(sol, "test-function")
    sig_s = compute_force(sol, "stress-integral")
    dn2 = sol.d_norm_sq
    return {
        "d_norm": sol.d_norm, "d_norm_sq": dn2, "sigma": sig.tolist(), "sigma_stress": sig_s.tolist(),
        "force_agreement": float(np.linalg.norm(sig - sig_s) / np.linalg.norm(sig)),
        "energy_defect": abs(dn2 - sig[0] * sol.direction) / abs(sig[0]),
        "apriori_ratio": sol.d_norm / np.sqrt(np.linalg.norm(sig)),
        "iterations": len(sol.trace), "box": list(sol.dom.box), "cells": [sol.mesh.nx, sol.mesh.ny],
        "seconds": sol.seconds,
    }


def run_oracle(cfg: PipelineConfig, return_solution: bool = False):
    sol = _oracle(cfg)
    rep = _oracle_summary(sol)
    rep["passed"] = bool(rep["energy_defect"] <= 0.05 and rep["apriori_ratio"] <= 1.03
                         and rep["force_agreement"] <= 0.05)
    out = _outdir(cfg)
    if out is not None:
        m = sol.mesh
        wio.write_container(out / "oracle_solution.wflw", label="oracle-mac",
                            grids=[("xf", "faces", m.xf), ("yf", "faces", m.yf)],
                            arrays=[("u", sol.u), ("v", sol.v), ("p", np.nan_to_num(sol.p))],
                            meta={"sigma": rep["sigma"], "d_norm": rep["d_norm"]})
    rep = _finish(cfg, rep, "oracle-solve")
    return (rep, sol) if return_solution else rep


def run_oracle_sweep(cfg: PipelineConfig) -> dict:
    opt, t = cfg.options, cfg.tolerances
    out = _outdir(cfg)
    try:
        if opt["sweep"] == "invading":
            res = invading_sweep(cfg.obstacle(), opt["n_list"], t["oracle"], dom=cfg.domain(),
                                 max_iter=int(t["oracle_max_iter"]))
            res.pop("solutions")
            rows = res["rows"]
            passed = res["cauchy_decreasing"] and res["bounded"]
            if out is not None:
                wio.write_csv(out / "invading_sweep.csv", {
                    "n": [r["n"] for r in rows], "d_norm": [r["d_norm"] for r in rows],
                    "sigma_x": [r["sigma"][0] for r in rows], "sigma_y": [r["sigma"][1] for r in rows]})
        elif opt["sweep"] == "epsilon":
            g = cfg.grids
            res = epsilon_sweep(opt["eps_list"], int(g["n"]), t["oracle"], h=cfg.physical["h"],
                                cells_across=g["cells_across"], shape=cfg.physical["shape"],
                                max_iter=int(t["oracle_max_iter"]))
            rows = res["rows"]
            passed = res["d_norm_decreasing"] and res["sigma_decreasing"]
            if out is not None:
                wio.write_csv(out / "epsilon_sweep.csv", {
                    "eps": [r["eps"] for r in rows], "d_norm": [r["d_norm"] for r in rows],
                    "sigma_x": [r["sigma"][0] for r in rows], "sigma_y": [r["sigma"][1] for r in rows]})
        else:
            raise ConfigError(f"unknown sweep {opt['sweep']!r}")
    except PicardNonConvergence as exc:
        raise StageError("oracle-sweep", str(exc), "divergence") from exc
    except OracleError as exc:
        raise ConfigError(str(exc)) from exc
    res["passed"] = bool(passed)
    return _finish(cfg, res, "oracle-sweep")


# ---------------------------------------------------------------------------
# weak-strong comparison


@dataclass
class ComparisonReport:
    relative_l2: float
    regions: dict
    rho: float
    rho_trace: list
    threshold: float
    sigma: list = field(default_factory=list)
    oracle_box: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.relative_l2 <= self.threshold)

    def as_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def compare_fields(sol, oracle_field, h: float, radius: float = 2.0, rings=(2 / 3, 1.0, 1.5)):
    """Relative L2 difference of the alpha-solution and a truncated oracle field on {2h/3 < r < radius h}."""
    x, y = oracle_field.x, oracle_field.y
    R = radius * h
    xs_sel = np.abs(x) <= R
    ys_sel = y <= 1.0 + h + R
    xs, ys = x[xs_sel], y[ys_sel]
    yg = sol.ygrid.nodes
    sel = yg <= ys[-1] + 0.5
    k = sol.kgrid.nodes
    ua = CubicSpline(yg[sel], inverse_fourier(sol.u_hat[:, sel], k, xs), axis=1)(ys)
    va = CubicSpline(yg[sel], inverse_fourier(sol.v_hat[:, sel], k, xs), axis=1)(ys)
    wu = oracle_field.u[np.ix_(xs_sel, ys_sel)]
    wv = oracle_field.v[np.ix_(xs_sel, ys_sel)]
    r = _radius(xs, ys, h)[2]
    W = np.outer(trapezoid_weights(xs), trapezoid_weights(ys))
    err2 = (ua - wu) ** 2 + (va - wv) ** 2
    ref2 = wu**2 + wv**2

    def rel(mask):
        den = np.sum(W * mask * ref2)
        return float(np.sqrt(np.sum(W * mask * err2) / den)) if den > 0 else 0.0

    edges = [e * h for e in rings] + [R]
    regions = {f"{a / h:.3g}h-{b / h:.3g}h": rel((r > a) & (r < b)) for a, b in zip(edges, edges[1:])}
    return rel((r > 2 * h / 3) & (r < R)), regions


def run_weak_strong(cfg: PipelineConfig) -> ComparisonReport:
    t0 = time.time()
    h = cfg.physical["h"]
    chi = AnnulusCutoff(h)
    kg, yg = cfg.alpha_grids()
    solver = AlphaSolver(kg, yg, UAlphaParams(cfg.physical["alpha"]))
    if cfg.physical["eps"] == 0:
        # no obstacle: the oracle is skipped and both fields vanish
        rep = ComparisonReport(0.0, {}, 0.0, [], cfg.tolerances["comparison"], [0.0, 0.0])
        _finish(cfg, rep.as_dict(), "weak-strong")
        return rep
    osol = _oracle(cfg, stage="solve_truncated")
    try:
        w = osol.corner_field()
        wt = truncate_velocity(w, chi)
    except Exception as exc:
        raise StageError("truncate", str(exc)) from exc
    try:
        src = tns_source(w, osol.corner_pressure(), chi)
    except Exception as exc:
        raise StageError("tns_source", str(exc)) from exc
    t = cfg.tolerances
    try:
        sol = solver.iterate(src, t["picard"], int(t["max_iter"]))
    except DivergenceError as exc:
        raise StageError("picard_iterate", f"smallness condition violated: {exc}", "divergence") from exc
    except NonConvergenceError as exc:
        raise StageError("picard_iterate", str(exc)) from exc
    total, regions = compare_fields(sol, wt, h, cfg.options["compare_radius"])
    rep = ComparisonReport(total, regions, sol.rho, sol.rho_trace, t["comparison"],
                           compute_force(osol).tolist(), list(osol.dom.box), time.time() - t0)
    _finish(cfg, rep.as_dict(), "weak-strong")
    return rep


# ---------------------------------------------------------------------------


def run_property_suites(cfg: PipelineConfig) -> dict:
    opt = cfg.options
    count = opt["count"]
    results = {}
    for name in opt["suites"]:
        if name == "hardy":
            r = hardy_batch(cfg.seed, count or 50, tol=cfg.tolerances["hardy"])
        elif name == "antisymmetry":
            r = antisymmetry_batch(cfg.seed, count or 10, stencil=opt["stencil"])
        elif name == "manufactured":
            r = manufactured_batch(cfg.seed)
        elif name == "collocation":
            r = collocation_batch()
        elif name == "convolution":
            r = convolution_batch(cfg.seed)
        else:
            raise ConfigError(f"unknown suite {name!r}")
        results[name] = {k: v for k, v in r.items() if k != "rows"}
    failed = [n for n, r in results.items() if not r["passed"]]
    return _finish(cfg, {"suites": results, "failed": failed, "passed": not failed}, "verify")
