"""Cut-off profiles, stream-function truncation and the compact-source builder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.special import expit

from .fields import (PhysicalVectorField, StreamFunction, WallNormalGrid, WaveNumberGrid,
                     ddx, fourier_x, divergence_residual)

__all__ = [
    "CutoffProfile", "AnnulusCutoff", "BallCutoff", "CompactSource", "ContaminationError",
    "DivergenceResidualError", "stream_function", "truncate_velocity", "truncate_pressure",
    "navier_stokes_operator", "tns_source", "force_test_function", "standard_source",
    "path_audit",
]


class ContaminationError(ValueError):
    def __init__(self, msg, location=None, leakage=None):
        super().__init__(msg)
        self.location = location
        self.leakage = leakage


class DivergenceResidualError(ValueError):
    pass


@dataclass(frozen=True)
class CutoffProfile:
    """C-infinity step: 1 for s <= 0, 0 for s >= 1, built from exp(-1/t) pieces."""

    order: float = np.inf
    expression: str = "e(1-s) / (e(1-s) + e(s)), e(t) = exp(-1/t) for t > 0 else 0"

    @staticmethod
    def _e(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        a = self._e(1.0 - s)
        b = self._e(s)
        return a / (a + b)

    def derivatives(self, s):
        """Value and first three derivatives, using zeta = logistic(1/(1-s) - 1/s)."""
        s = np.asarray(s, dtype=float)
        out = [np.where(s <= 0, 1.0, 0.0)] + [np.zeros_like(s) for _ in range(3)]
        inside = (s > 0) & (s < 1)
        si = s[inside]
        t = 1.0 - si
        g = 1.0 / t - 1.0 / si
        g1 = 1.0 / si**2 + 1.0 / t**2
        g2 = -2.0 / si**3 + 2.0 / t**3
        g3 = 6.0 / si**4 + 6.0 / t**4
        p = expit(-g)
        q = p * (1.0 - p)
        p1 = -q
        p2 = (1.0 - 2.0 * p) * q
        p3 = -q * ((1.0 - 2.0 * p) ** 2 - 2.0 * q)
        out[0][inside] = p
        out[1][inside] = p1 * g1
        out[2][inside] = p2 * g1**2 + p1 * g2
        out[3][inside] = p3 * g1**3 + 3 * p2 * g1 * g2 + p1 * g3
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > 0) & (s < 1)
        si = s[inside]
        a = np.exp(-1.0 / (1.0 - si))
        b = np.exp(-1.0 / si)
        out[inside] = -a * b * (1.0 / (1.0 - si) ** 2 + 1.0 / si**2) / (a + b) ** 2
        return out


def _radius(x, y, h):
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    return X, Y - 1.0 - h, np.hypot(X, Y - 1.0 - h)


@dataclass(frozen=True)
class AnnulusCutoff:
    """0 on B(h/3), 1 outside B(2h/3), centred at (0, 1 + h)."""

    h: float = 1.0
    profile: CutoffProfile = field(default_factory=CutoffProfile)

    @property
    def center(self):
        return (0.0, 1.0 + self.h)

    @property
    def inner(self):
        return self.h / 3

    @property
    def outer(self):
        return 2 * self.h / 3

    def radial(self, r):
        return 1.0 - self.profile((np.asarray(r) - self.inner) / (self.h / 3))

    def radial_derivative(self, r):
        return -self.profile.derivative((np.asarray(r) - self.inner) / (self.h / 3)) / (self.h / 3)

    def radial_derivatives(self, r):
        """chi and its first three radial derivatives."""
        w = self.h / 3
        z = self.profile.derivatives((np.asarray(r, float) - self.inner) / w)
        return [1.0 - z[0]] + [-z[n] / w**n for n in (1, 2, 3)]

    def __call__(self, x, y):
        return self.radial(_radius(x, y, self.h)[2])


@dataclass(frozen=True)
class BallCutoff:
    """1 on B(delta), 0 outside B(2 delta), centred at (0, 1 + h)."""

    h: float
    delta: float
    profile: CutoffProfile = field(default_factory=CutoffProfile)

    def __post_init__(self):
        if not 0 < self.delta < self.h / 3:
            raise ValueError("delta must lie in (0, h/3)")

    def radial(self, r):
        return self.profile(np.asarray(r) / self.delta - 1.0)

    def radial_derivative(self, r):
        return self.profile.derivative(np.asarray(r) / self.delta - 1.0) / self.delta

    def __call__(self, x, y):
        return self.radial(_radius(x, y, self.h)[2])


# ---------------------------------------------------------------------------


def _scale(w: PhysicalVectorField):
    sp = min(np.min(np.diff(w.x)), np.min(np.diff(w.y)))
    amp = max(np.max(np.abs(w.u)), np.max(np.abs(w.v)))
    return amp / sp


def stream_function(w: PhysicalVectorField, div_tol: float = 1e-6) -> StreamFunction:
    """psi(x, y) = -int_1^y u(x, z) dz.

    Fields carrying their own stream function return it unchanged (exact
    inverse of the discrete curl); otherwise cumulative trapezoidal rule.
    """
    if w.psi is not None:
        return StreamFunction(w.x, w.ygrid, w.psi)
    scale = _scale(w)
    if scale > 0 and divergence_residual(w) > div_tol * scale:
        raise DivergenceResidualError("field is not divergence-free; stream function undefined")
    psi = -cumulative_trapezoid(w.u, w.y, axis=1, initial=0.0)
    return StreamFunction(w.x, w.ygrid, psi)


def path_audit(w: PhysicalVectorField, psi: np.ndarray, n_samples: int = 16, seed: int = 0):
    """Compare psi with the integral of w-perp along wall -> up at x_ref -> across.

    Returns the max relative discrepancy over random sample nodes.
    """
    rng = np.random.default_rng(seed)
    x, y = w.x, w.y
    iref = x.size // 2
    up = -cumulative_trapezoid(w.u[iref], y, initial=0.0)          # psi(x_ref, y)
    scale = max(np.max(np.abs(psi)), np.finfo(float).tiny)
    worst = 0.0
    for _ in range(n_samples):
        i = rng.integers(0, x.size)
        j = rng.integers(0, y.size)
        lo, hi = sorted((iref, i))
        seg = np.trapezoid(w.v[lo:hi + 1, j], x[lo:hi + 1])
        val = up[j] + (seg if i >= iref else -seg)
        worst = max(worst, abs(val - psi[i, j]) / scale)
    return worst


def truncate_velocity(w: PhysicalVectorField, chi: AnnulusCutoff) -> PhysicalVectorField:
    """grad-perp(chi * psi)."""
    # product rule with the exact cut-off gradient: chi w + psi grad-perp chi
    sf = stream_function(w)
    G, r = _cutoff_geometry(chi, w.x, w.y)
    u = G["chi"] * w.u - sf.psi * G["gy"]
    v = G["chi"] * w.v + sf.psi * G["gx"]
    # chi == 0 exactly on B(h/3): make the zero bit-exact there
    inside = r < chi.inner
    u[inside] = 0.0
    v[inside] = 0.0
    return PhysicalVectorField(w.x, w.ygrid, u, v, psi=G["chi"] * sf.psi)


def truncate_pressure(q: np.ndarray, x, y, chi: AnnulusCutoff) -> np.ndarray:
    return chi(x, y) * np.asarray(q, dtype=float)


def navier_stokes_operator(w: PhysicalVectorField, q: np.ndarray):
    """(w + e1) . grad w - lap w + grad q, by second-order differences."""
    x, y = w.x, w.y
    out = []
    for comp, dq in ((w.u, ddx(q, x, 0)), (w.v, ddx(q, y, 1))):
        cx = ddx(comp, x, 0)
        cy = ddx(comp, y, 1)
        lap = ddx(cx, x, 0) + ddx(cy, y, 1)
        out.append((w.u + 1.0) * cx + w.v * cy - lap + dq)
    return out[0], out[1]


@dataclass
class CompactSource:
    """Force f in the momentum-balance convention (u + e1).grad u - lap u + grad p = f.

    Either sampled (``x``, ``ygrid``, ``f1``, ``f2``) or analytic (``fn(x, y)``
    returning (f1, f2) on the tensor mesh).  ``h`` fixes the support annulus.
    """

    h: float = 1.0
    x: Optional[np.ndarray] = None
    ygrid: Optional[WallNormalGrid] = None
    f1: Optional[np.ndarray] = None
    f2: Optional[np.ndarray] = None
    fn: Optional[Callable] = None
    amplitude: float = 1.0
    label: str = "custom"

    def sample(self, x, y):
        if self.fn is not None:
            f1, f2 = self.fn(np.asarray(x, float), np.asarray(y, float))
            return self.amplitude * f1, self.amplitude * f2
        raise ValueError("sampled source cannot be re-sampled on a new grid; use spectral()")

    def scaled(self, c: float) -> "CompactSource":
        return CompactSource(self.h, self.x, self.ygrid, self.f1, self.f2, self.fn,
                             self.amplitude * c, self.label)

    def is_zero(self) -> bool:
        if self.amplitude == 0:
            return True
        if self.fn is None:
            return not (np.any(self.f1) or np.any(self.f2))
        return False

    def support_box(self):
        c = 1.0 + self.h
        R = 2 * self.h / 3
        return (-R, R), (c - R, c + R)

    def spectral(self, kgrid: WaveNumberGrid, ygrid: WallNormalGrid, nx: int = 801):
        """(f1_hat, f2_hat) on the solver grids (momentum convention)."""
        k = kgrid.nodes
        y = ygrid.nodes
        (x0, x1), (y0, y1) = self.support_box()
        out = [np.zeros((k.size, y.size), complex) for _ in range(2)]
        if self.is_zero():
            return out
        if self.fn is not None:
            xs = np.linspace(x0 - 1e-3, x1 + 1e-3, nx)
            sel = (y >= y0 - 1e-12) & (y <= y1 + 1e-12)
            f1, f2 = self.sample(xs, y[sel])
            out[0][:, sel] = fourier_x(f1, xs, k)
            out[1][:, sel] = fourier_x(f2, xs, k)
            return out
        yo = self.ygrid.nodes
        g = [fourier_x(self.amplitude * f, self.x, k) for f in (self.f1, self.f2)]
        sel = (y >= yo[0]) & (y <= yo[-1])
        nz = np.nonzero(np.any(np.abs(self.f1) + np.abs(self.f2) > 0, axis=0))[0]
        if nz.size:
            lo, hi = yo[max(nz[0] - 1, 0)], yo[min(nz[-1] + 1, yo.size - 1)]
            sel &= (y >= lo) & (y <= hi)
        for o, gi in zip(out, g):
            spl_r = CubicSpline(yo, gi.real, axis=1)
            spl_i = CubicSpline(yo, gi.imag, axis=1)
            o[:, sel] = spl_r(y[sel]) + 1j * spl_i(y[sel])
        return out


def _cutoff_geometry(chi: AnnulusCutoff, x, y):
    """chi, grad chi, Hessian entries, lap chi and grad lap chi on the tensor mesh."""
    X, Yc, r = _radius(x, y, chi.h)
    c0, c1, c2, c3 = chi.radial_derivatives(r)
    rs = np.where(r > 0, r, 1.0)
    ex, ey = X / rs, Yc / rs
    t = c1 / rs
    g = {
        "chi": c0, "gx": c1 * ex, "gy": c1 * ey,
        "hxx": c2 * ex * ex + t * (1 - ex * ex),
        "hxy": (c2 - t) * ex * ey,
        "hyy": c2 * ey * ey + t * (1 - ey * ey),
        "lap": c2 + t,
    }
    dl = c3 + c2 / rs - c1 / rs**2
    g["lx"], g["ly"] = dl * ex, dl * ey
    return g, r


def tns_source(w: PhysicalVectorField, q: np.ndarray, chi: AnnulusCutoff,
               threshold: float = 1e-4) -> CompactSource:
    """-chi f + NS(T_v w, T_pi q), f = NS(w, q) set to zero inside B(h/4).

    On the annulus this is the commutator NS(chi-truncation) - chi NS; it is
    expanded with exact cut-off derivatives so that only first derivatives of
    w are differenced.  Identically zero off the annulus.
    """
    q = np.asarray(q, dtype=float)
    x, y = w.x, w.y
    psi = stream_function(w).psi
    G, r = _cutoff_geometry(chi, x, y)
    c0 = G["chi"]
    ux, uy = ddx(w.u, x, 0), ddx(w.u, y, 1)
    vx, vy = ddx(w.v, x, 0), ddx(w.v, y, 1)
    omega = vx - uy
    px, py = w.v, -w.u                           # grad psi
    a1, a2 = -G["gy"], G["gx"]                   # grad-perp chi
    # rows of grad a: d a1 = (-hxy, -hyy), d a2 = (hxx, hxy); lap a = (-ly, lx)
    b1 = c0 * w.u + psi * a1 + 1.0
    b2 = c0 * w.v + psi * a2
    d1 = (c0 - 1.0) * w.u + psi * a1
    d2 = (c0 - 1.0) * w.v + psi * a2
    bchi = b1 * G["gx"] + b2 * G["gy"]
    bpsi = b1 * px + b2 * py
    s1 = (c0 * (d1 * ux + d2 * uy) + w.u * bchi + psi * (-b1 * G["hxy"] - b2 * G["hyy"])
          + a1 * bpsi - 2 * (ux * G["gx"] + uy * G["gy"]) - w.u * G["lap"] + psi * G["ly"]
          + 2 * (px * G["hxy"] + py * G["hyy"]) - a1 * omega + q * G["gx"])
    s2 = (c0 * (d1 * vx + d2 * vy) + w.v * bchi + psi * (b1 * G["hxx"] + b2 * G["hxy"])
          + a2 * bpsi - 2 * (vx * G["gx"] + vy * G["gy"]) - w.v * G["lap"] - psi * G["lx"]
          - 2 * (px * G["hxx"] + py * G["hxy"]) - a2 * omega + q * G["gy"])
    s1[r < chi.inner] = 0.0
    s2[r < chi.inner] = 0.0
    mag = np.hypot(s1, s2)
    peak = float(np.max(mag))
    outside = r > chi.outer
    if peak > 0 and np.any(outside):
        leak = float(np.max(mag[outside]))
        if leak > threshold * peak:
            i, j = np.unravel_index(np.argmax(np.where(outside, mag, -1.0)), mag.shape)
            raise ContaminationError("source leaks outside the annulus",
                                     (float(x[i]), float(y[j])), leak / peak)
        s1[outside] = 0.0
        s2[outside] = 0.0
    return CompactSource(chi.h, w.x, w.ygrid, s1, s2, label="tns")


def force_test_function(W, delta: float, chi_delta: BallCutoff, x, ygrid: WallNormalGrid):
    """-grad-perp(chi_delta * [W-perp . ((x, y) - (0, 1 + h))]); equals W on B(delta)."""
    if not 0 < delta < chi_delta.h / 3 or abs(delta - chi_delta.delta) > 1e-15:
        raise ValueError("delta must match the ball cut-off and lie in (0, h/3)")
    W1, W2 = (float(c) for c in W)
    X, Yc, r = _radius(x, ygrid.nodes, chi_delta.h)
    lin = -W2 * X + W1 * Yc
    cut = chi_delta.radial(r)
    dcut = chi_delta.radial_derivative(r)
    rs = np.where(r > 0, r, 1.0)
    cx, cy = dcut * X / rs, dcut * Yc / rs
    # grad-perp(g) = (-g_y, g_x) with g = cut * lin
    gx = cx * lin + cut * (-W2)
    gy = cy * lin + cut * W1
    return PhysicalVectorField(x, ygrid, gy, -gx, psi=-cut * lin)


def standard_source(h: float = 1.0, amplitude: float = 1.0) -> CompactSource:
    """f = amplitude * grad-perp[chi(r) bump(r)], supported in the closed annulus."""
    chi = AnnulusCutoff(h)
    prof = chi.profile

    def G(r):
        return chi.radial(r) * prof((r - h / 2) / (h / 6))

    def dG(r):
        return (chi.radial_derivative(r) * prof((r - h / 2) / (h / 6))
                + chi.radial(r) * prof.derivative((r - h / 2) / (h / 6)) / (h / 6))

    def fn(x, y):
        X, Yc, r = _radius(x, y, h)
        rs = np.where(r > 0, r, 1.0)
        d = dG(r) / rs
        return -d * Yc, d * X

    return CompactSource(h=h, fn=fn, amplitude=amplitude, label="standard")
