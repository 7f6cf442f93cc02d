"""Weight profiles, weighted sup-norms of spectral data and decay-rate fits."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict, field
from typing import Sequence

import numpy as np
from scipy import stats

from .fields import (PhysicalVectorField, SpectralField, inverse_fourier, fourier_x,
                     trapezoid_weights)

__all__ = [
    "NormParams", "UAlphaParams", "WAlphaParams", "mu", "b_norm", "b_norm_ratio",
    "weight", "u_alpha_norm", "w_alpha_norm", "decay_exponent", "FitResult", "fit_ls_decay",
    "ls_norm_profile", "decay_x_nodes", "fourier_compact_bound_check", "norm_record",
]


@dataclass(frozen=True)
class NormParams:
    alpha: float
    p: float
    q: float

    def __post_init__(self):
        for name in ("alpha", "p", "q"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")


@dataclass(frozen=True)
class UAlphaParams:
    """Component weights for (omega, u, v)."""

    alpha: float = 4.0

    def __post_init__(self):
        if not self.alpha > 3:
            raise ValueError("alpha must exceed 3")

    @property
    def omega(self) -> NormParams:
        return NormParams(self.alpha, 2.5, 1.0)

    @property
    def u(self) -> NormParams:
        return NormParams(self.alpha, 0.5, 0.0)

    @property
    def v(self) -> NormParams:
        return NormParams(self.alpha, 0.5, 1.0)


@dataclass(frozen=True)
class WAlphaParams:
    """Source weights for (F1, F2); (alpha, 5/2, 2) each unless overridden."""

    alpha: float = 4.0
    f1: tuple = (2.5, 2.0)
    f2: tuple = (2.5, 2.0)

    def __post_init__(self):
        if not self.alpha > 3:
            raise ValueError("alpha must exceed 3")
        NormParams(self.alpha, *self.f1)
        NormParams(self.alpha, *self.f2)

    @property
    def first(self) -> NormParams:
        return NormParams(self.alpha, *self.f1)

    @property
    def second(self) -> NormParams:
        return NormParams(self.alpha, *self.f2)


def mu(alpha, r, k, t):
    """``1 / (1 + (|k| t^r)^alpha)``; broadcasts."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValueError("mu is defined for t >= 1 only")
    out = 1.0 / (1.0 + (np.abs(k) * t**r) ** alpha)
    return float(out) if np.ndim(out) == 0 else out


def weight(params: NormParams, k, t):
    """Denominator ``t^-p mu_{a,1} + t^-q mu_{a,2}`` on the (k, t) mesh."""
    k = np.asarray(k, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[None, :]
    a = params.alpha
    return t ** (-params.p) * mu(a, 1, k, t) + t ** (-params.q) * mu(a, 2, k, t)


def b_norm_ratio(fld: SpectralField, params: NormParams) -> np.ndarray:
    return np.abs(fld.values) / weight(params, fld.kgrid.nodes, fld.ygrid.nodes)


def b_norm(fld: SpectralField, params: NormParams) -> float:
    """Grid supremum of the weighted ratio (a lower bound of the continuum norm)."""
    if fld.values.size == 0:
        raise ValueError("empty field")
    return float(np.max(b_norm_ratio(fld, params)))


def u_alpha_norm(omega: SpectralField, u: SpectralField, v: SpectralField,
                 params: UAlphaParams) -> float:
    if not (omega.same_grids(u) and omega.same_grids(v)):
        raise ValueError("grid mismatch between components")
    return max(b_norm(omega, params.omega), b_norm(u, params.u), b_norm(v, params.v))


def w_alpha_norm(f1: SpectralField, f2: SpectralField, params: WAlphaParams) -> float:
    if not f1.same_grids(f2):
        raise ValueError("grid mismatch between components")
    return max(b_norm(f1, params.first), b_norm(f2, params.second))


def decay_exponent(s: float, p: float, q: float) -> float:
    if s < 2:
        raise ValueError("s must be >= 2")
    inv = 0.0 if np.isinf(s) else 1.0 / s
    return min(1.0 - inv + p, 2.0 * (1.0 - inv) + q)


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class FitResult:
    slope: float
    width: float          # 95% confidence half-width of the slope
    intercept: float
    y: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)

    def to_dict(self):
        return {"slope": self.slope, "width": self.width, "intercept": self.intercept,
                "n_points": int(self.y.size)}


def decay_x_nodes(y: float, n: int = 160, span: float = 8.0) -> np.ndarray:
    """Symmetric x-samples resolving both the y and y^2 scales at height ``y``."""
    g = np.linspace(0.0, span, n + 1)[1:]
    pos = np.unique(np.concatenate([y * g, y * y * g, g]))
    return np.concatenate([-pos[::-1], [0.0], pos])


def _ls(values: np.ndarray, x: np.ndarray, s: float) -> np.ndarray:
    if np.isinf(s):
        return np.max(values, axis=0)
    return (trapezoid_weights(x) @ values**s) ** (1.0 / s)


def ls_norm_profile(components, kgrid, y: np.ndarray, s: float, x_nodes=None) -> np.ndarray:
    """``|| |f(., y)| ; L^s ||`` for each height, from spectral rows of shape (nk, ny).

    ``components`` is a list of spectral arrays; the pointwise magnitude is the
    Euclidean norm over components.  For s = 2 the Plancherel identity is used.
    """
    k = kgrid.nodes
    out = np.empty(y.size)
    if s == 2:
        w = trapezoid_weights(k)
        tot = sum(w @ np.abs(c) ** 2 for c in components)
        return np.sqrt(tot / (2 * np.pi))
    for j, yy in enumerate(y):
        x = decay_x_nodes(yy) if x_nodes is None else x_nodes
        mag2 = 0.0
        for c in components:
            mag2 = mag2 + np.abs(inverse_fourier(c[:, j:j + 1], k, x, real=False)) ** 2
        out[j] = _ls(np.sqrt(mag2), x, s)[0]
    return out


def _window_mask(y: np.ndarray, window) -> np.ndarray:
    lo, hi = window
    if not (lo > 0 and hi > lo):
        raise ValueError("invalid window")
    if np.log10(hi / lo) < 1.0 - 1e-9:
        raise ValueError("fit window must span at least one decade")
    mask = (y >= lo * (1 - 1e-12)) & (y <= hi * (1 + 1e-12))
    if mask.sum() < 3:
        raise ValueError("fewer than three grid heights inside the fit window")
    return mask


def _fit(y, norms) -> FitResult:
    good = norms > 0
    if good.sum() < 3:
        raise ValueError("field is zero on the fit window")
    ly, ln = np.log(y[good]), np.log(norms[good])
    res = stats.linregress(ly, ln)
    tcrit = stats.t.ppf(0.975, max(good.sum() - 2, 1))
    return FitResult(float(res.slope), float(tcrit * res.stderr), float(res.intercept),
                     y[good], norms[good])


def fit_ls_decay(fld, s: float, y_window=None) -> FitResult:
    """Least-squares slope of log ||f(., y); L^s|| against log y.

    ``fld`` is a PhysicalVectorField, a SpectralField, or a sequence of
    SpectralFields sharing grids (magnitude taken across them).
    """
    if isinstance(fld, PhysicalVectorField):
        y = fld.y
        if y_window is None:
            y_window = (y[-1] / 30, y[-1] / 3)
        mask = _window_mask(y, y_window)
        mag = np.hypot(fld.u, fld.v)[:, mask]
        return _fit(y[mask], _ls(mag, fld.x, s))
    fields = [fld] if isinstance(fld, SpectralField) else list(fld)
    y = fields[0].ygrid.nodes
    if y_window is None:
        y_window = (y[-1] / 30, y[-1] / 3)
    mask = _window_mask(y, y_window)
    comps = [f.values[:, mask] for f in fields]
    norms = ls_norm_profile(comps, fields[0].kgrid, y[mask], s)
    return _fit(y[mask], norms)


# ---------------------------------------------------------------------------


def fourier_compact_bound_check(f: PhysicalVectorField, kgrid, support_box=None,
                                pq_list: Sequence = ((2.5, 2.0), (1.5, 1.0), (0.5, 0.0)),
                                alpha: float = 4.0, scale: float = 2.0) -> dict:
    """Weighted norms of the x-transform of a compactly supported source.

    The data must vanish on the outer ring of the sampling grid (otherwise the
    support touches the boundary and an error is raised).
    """
    u, v = f.u, f.v
    ring = max(np.max(np.abs(u[[0, -1], :])), np.max(np.abs(u[:, -1])),
               np.max(np.abs(v[[0, -1], :])), np.max(np.abs(v[:, -1])))
    if ring > 0:
        raise ValueError("source support touches the grid boundary")
    k = kgrid.nodes
    report = {"alpha": alpha, "entries": []}
    f1 = SpectralField(kgrid, f.ygrid, fourier_x(u, f.x, k), "F1")
    f2 = SpectralField(kgrid, f.ygrid, fourier_x(v, f.x, k), "F2")
    for p, q in pq_list:
        prm = NormParams(alpha, p, q)
        val = max(b_norm(f1, prm), b_norm(f2, prm))
        scaled = max(b_norm(f1 * scale, prm), b_norm(f2 * scale, prm))
        ratio = scaled / val if val > 0 else (1.0 if scaled == 0 else np.inf)
        report["entries"].append({"p": p, "q": q, "value": val, "scaled_value": scaled,
                                  "finite": bool(np.isfinite(val)),
                                  "homogeneity_defect": abs(ratio - scale) if val > 0 else 0.0})
    report["ok"] = all(e["finite"] and e["homogeneity_defect"] <= 1e-8 for e in report["entries"])
    return report


def norm_record(params, value: float, grid_descriptor: dict) -> str:
    p = asdict(params) if hasattr(params, "__dataclass_fields__") else dict(params)
    return json.dumps({"params": p, "value": value, "grid": grid_descriptor,
                       "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())})
