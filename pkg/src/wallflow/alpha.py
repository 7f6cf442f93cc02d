"""Nonlinear fixed point: Picard iteration of the mode solver with convolution sources."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import (PhysicalVectorField, SpectralField, WallNormalGrid, WaveNumberGrid,
                     ddx, inverse_fourier, trapezoid_weights)
from .norms import NormParams, UAlphaParams, WAlphaParams, b_norm, fit_ls_decay, u_alpha_norm, w_alpha_norm
from .oseen import ETA, OMEGA, PHI, PSI, ModeSolver, physical_rhs
from .truncation import CompactSource

log = logging.getLogger(__name__)

__all__ = [
    "DivergenceError", "NonConvergenceError", "Convolver", "convolve_k", "AlphaSolver",
    "AlphaSolution", "summary_rho", "picard_iterate", "decay_report", "default_grids", "find_amplitude",
]


class DivergenceError(RuntimeError):
    """Picard map not contracting: the source is too large."""

    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


def default_grids(y_max: float = 1000.0, k_min: float = 1e-5, k_max: float = 64.0,
                  k_ratio: float = 1.08, dk_max: float = 0.25, k_knee: float = 8.0,
                  h_core: float = 0.01, y_core: float = 3.0, y_ratio: float = 1.03):
    return (WaveNumberGrid.clustered(k_min, k_max, k_ratio, dk_max, k_knee),
            WallNormalGrid.stretched(y_max, h_core, y_core, y_ratio))


class Convolver:
    """(a * b)(k) = int a(k - k') b(k') dk' on a fixed k-grid.

    Trapezoidal weights in k', linear interpolation of ``a`` at k - k'
    (also across the gap at 0), zero beyond the grid ends.
    """

    def __init__(self, kgrid: WaveNumberGrid, chunk: int = 8):
        k = kgrid.nodes
        n = k.size
        self.kgrid = kgrid
        self.chunk = chunk
        w = trapezoid_weights(k)
        K = k[:, None] - k[None, :]
        L = np.searchsorted(k, K, side="right") - 1
        top = np.isclose(K, k[-1], rtol=1e-14, atol=0)
        L = np.where(top, n - 2, L)
        valid = (L >= 0) & (L <= n - 2)
        Lc = np.clip(L, 0, n - 2)
        T = (K - k[Lc]) / (k[Lc + 1] - k[Lc])
        valid &= (T >= -1e-12) & (T <= 1 + 1e-12)
        self.L = Lc
        self.W0 = np.where(valid, (1 - T) * w[None, :], 0.0)
        self.W1 = np.where(valid, T * w[None, :], 0.0)

    def __call__(self, a: np.ndarray, bs):
        """Convolve ``a`` (nk, ny) with one array or a list of arrays ``bs``."""
        single = isinstance(bs, np.ndarray)
        blist = [bs] if single else list(bs)
        nk, ny = a.shape
        outs = [np.empty((nk, ny), complex) for _ in blist]
        L = self.L
        for s in range(0, ny, self.chunk):
            sl = slice(s, s + self.chunk)
            ac = a[:, sl]
            M = self.W0[:, :, None] * ac[L] + self.W1[:, :, None] * ac[L + 1]   # (nk, nk, c)
            for o, b in zip(outs, blist):
                o[:, sl] = np.einsum("ijc,jc->ic", M, b[:, sl])
        return outs[0] if single else outs


def convolve_k(a: SpectralField, b: SpectralField, convolver: Optional[Convolver] = None) -> SpectralField:
    if not a.same_grids(b):
        raise ValueError("grid mismatch")
    conv = convolver or Convolver(a.kgrid)
    return a.with_values(conv(a.values, b.values), "other")


def summary_rho(ratios) -> float:
    """Geometric mean of the increment ratios after the first one.

    The first ratio compares the first nonlinear correction with the linear
    response and is not a contraction rate of the map.
    """
    r = np.asarray(ratios, dtype=float)
    if r.size == 0:
        return 0.0
    tail = r[1:] if r.size > 1 else r
    tail = tail[tail > 0]
    return float(np.exp(np.mean(np.log(tail)))) if tail.size else 0.0


@dataclass
class AlphaSolution:
    kgrid: WaveNumberGrid
    ygrid: WallNormalGrid
    Z: np.ndarray                    # (omega, eta, phi, psi) state, (4, nk, ny)
    u_alpha: float
    increments: list
    rho_trace: list
    source_norm: float
    source: dict = field(default_factory=dict)
    params: UAlphaParams = field(default_factory=UAlphaParams)
    f_hat: Optional[tuple] = field(default=None, repr=False)

    @property
    def u_hat(self):
        return -self.Z[ETA] + self.Z[PHI]

    @property
    def v_hat(self):
        return self.Z[OMEGA] + self.Z[PSI]

    def spectral(self, label):
        vals = {"omega": self.Z[OMEGA], "eta": self.Z[ETA], "phi": self.Z[PHI],
                "psi": self.Z[PSI], "u": self.u_hat, "v": self.v_hat}[label]
        return SpectralField(self.kgrid, self.ygrid, vals, label)

    @property
    def rho(self) -> float:
        return summary_rho(self.rho_trace)

    @property
    def iterations(self) -> int:
        return len(self.increments)

    def stream_hat(self):
        """Fourier transform of the stream function: v = d_x psi  =>  psi_hat = i v_hat / k."""
        return 1j * self.v_hat / self.kgrid.nodes[:, None]

    def physical(self, x) -> PhysicalVectorField:
        """Velocity as the discrete curl of the inverse-transformed stream function."""
        psi = inverse_fourier(self.stream_hat(), self.kgrid.nodes, x)
        return PhysicalVectorField.from_stream(np.asarray(x, float), self.ygrid, psi)

    def velocity(self, x, y_sel=None):
        """(u, v) by direct inverse transform (no differencing)."""
        sl = slice(None) if y_sel is None else y_sel
        k = self.kgrid.nodes
        return (inverse_fourier(self.u_hat[:, sl], k, x), inverse_fourier(self.v_hat[:, sl], k, x))

    def pressure(self, x, y_sel=None):
        """p = -phi - |u|^2 / 2."""
        sl = slice(None) if y_sel is None else y_sel
        u, v = self.velocity(x, sl)
        phi = inverse_fourier(self.Z[PHI][:, sl], self.kgrid.nodes, x)
        return -phi - 0.5 * (u**2 + v**2)

    def navier_stokes_residual(self, x_span=(-1.5, 1.5), y_span=(1.05, 2.9), dx: float = 0.01) -> dict:
        """Momentum residual of the physical-space fields by 4th-order differences.

        Velocity and pressure come from the inverse transform on a patch; the
        forcing is the band-limited source (inverse transform of the same
        spectral data the iteration used).  Returned values are relative to
        sup |f| on the patch.
        """
        if self.f_hat is None:
            raise ValueError("solution carries no source spectrum")
        x = np.arange(x_span[0] - 2 * dx, x_span[1] + 2.5 * dx, dx)
        y = self.ygrid.nodes
        inner = np.where((y >= y_span[0]) & (y <= y_span[1]))[0]
        if inner.size == 0 or inner[0] < 2 or inner[-1] > y.size - 3:
            raise ValueError("patch must stay two nodes away from the grid ends")
        rows = np.arange(inner[0] - 2, inner[-1] + 3)
        u, v = self.velocity(x, rows)
        p = self.pressure(x, rows)
        k = self.kgrid.nodes
        f1 = inverse_fourier(self.f_hat[0][:, inner], k, x[2:-2])
        f2 = inverse_fourier(self.f_hat[1][:, inner], k, x[2:-2])

        def d_x(f, order):
            st = ([1, -8, 0, 8, -1], 12 * dx) if order == 1 else ([-1, 16, -30, 16, -1], 12 * dx * dx)
            out = sum(c * f[i:f.shape[0] - 4 + i] for i, c in enumerate(st[0])) / st[1]
            return out[:, 2:-2]

        yy = y[rows]
        wts = np.empty((inner.size, 2, 5))
        for j in range(inner.size):
            off = yy[j:j + 5] - yy[j + 2]
            V = np.vander(off, 5, increasing=True).T
            wts[j, 0] = np.linalg.solve(V, [0, 1, 0, 0, 0])
            wts[j, 1] = np.linalg.solve(V, [0, 0, 2, 0, 0])

        def d_y(f, order):
            return np.stack([f[2:-2, j:j + 5] @ wts[j, order - 1] for j in range(inner.size)], axis=1)

        U, Vv = u[2:-2, 2:-2], v[2:-2, 2:-2]
        r1 = (U + 1) * d_x(u, 1) + Vv * d_y(u, 1) - d_x(u, 2) - d_y(u, 2) + d_x(p, 1) - f1
        r2 = (U + 1) * d_x(v, 1) + Vv * d_y(v, 1) - d_x(v, 2) - d_y(v, 2) + d_y(p, 1) - f2
        scale = max(np.max(np.abs(f1)), np.max(np.abs(f2)), np.finfo(float).tiny)
        div = d_x(u, 1) + d_y(v, 1)
        return {"momentum_x": float(np.max(np.abs(r1)) / scale),
                "momentum_y": float(np.max(np.abs(r2)) / scale),
                "divergence": float(np.max(np.abs(div)) / max(np.max(np.abs(U)), np.finfo(float).tiny)),
                "relative": float(max(np.max(np.abs(r1)), np.max(np.abs(r2))) / scale)}

    def energy_balance(self):
        """(int |grad u|^2, int f . u) evaluated spectrally (Plancherel)."""
        k = self.kgrid.nodes[:, None]
        y = self.ygrid.nodes
        wk = trapezoid_weights(self.kgrid.nodes)
        wy = trapezoid_weights(y)
        u, v = self.u_hat, self.v_hat
        uy, vy = ddx(u, y, 1), ddx(v, y, 1)
        grad = k**2 * (np.abs(u) ** 2 + np.abs(v) ** 2) + np.abs(uy) ** 2 + np.abs(vy) ** 2
        dissip = float(wk @ grad @ wy) / (2 * np.pi)
        if self.f_hat is None:
            return dissip, 0.0
        f1, f2 = self.f_hat
        work = float((wk @ (f1 * np.conj(u) + f2 * np.conj(v)) @ wy).real) / (2 * np.pi)
        return dissip, work


class AlphaSolver:
    """Holds the precomputed mode propagators and the convolution plan."""

    def __init__(self, kgrid: Optional[WaveNumberGrid] = None, ygrid: Optional[WallNormalGrid] = None,
                 params: UAlphaParams = UAlphaParams(), chunk: int = 8):
        if kgrid is None or ygrid is None:
            dk, dy = default_grids()
            kgrid = kgrid or dk
            ygrid = ygrid or dy
        self.kgrid, self.ygrid, self.params = kgrid, ygrid, params
        self.modes = ModeSolver(kgrid.nodes, ygrid)
        self.conv = Convolver(kgrid, chunk)

    def source_hat(self, source: CompactSource):
        return source.spectral(self.kgrid, self.ygrid)

    def step(self, Z, f1h, f2h):
        """One Picard map application; f in the momentum convention (F = -f)."""
        om = Z[OMEGA]
        u = -Z[ETA] + Z[PHI]
        v = Z[OMEGA] + Z[PSI]
        if np.any(om):
            cu, cv = self.conv(om, [u, v])
        else:
            cu = cv = np.zeros_like(om)
        q0 = cu / (2 * np.pi) - f2h
        q1 = cv / (2 * np.pi) + f1h
        return self.modes.solve(physical_rhs(q0, q1), tail_tol=None)

    def norm(self, Z):
        mk = lambda vals, lab: SpectralField(self.kgrid, self.ygrid, vals, lab)
        return u_alpha_norm(mk(Z[OMEGA], "omega"), mk(-Z[ETA] + Z[PHI], "u"),
                            mk(Z[OMEGA] + Z[PSI], "v"), self.params)

    def iterate(self, source: CompactSource, tol: float = 1e-8, max_iter: int = 60,
                relative: bool = True, f_hat=None) -> AlphaSolution:
        """Picard iteration from the zero state.

        Stops when the increment U_alpha norm drops to ``tol`` (times the first
        increment when ``relative``).  Raises DivergenceError after three
        consecutive non-contracting steps.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        f1h, f2h = f_hat if f_hat is not None else self.source_hat(source)
        w_par = WAlphaParams(self.params.alpha)
        fs = lambda vals, lab: SpectralField(self.kgrid, self.ygrid, vals, lab)
        src_norm = w_alpha_norm(fs(-f1h, "F1"), fs(-f2h, "F2"), w_par)
        Z = np.zeros((4, len(self.kgrid), len(self.ygrid)), complex)
        incs, rhos = [], []
        bad = 0
        desc = {"label": source.label, "h": source.h, "amplitude": source.amplitude}
        for it in range(max_iter):
            Zn = self.step(Z, f1h, f2h)
            inc = self.norm(Zn - Z)
            Z = Zn
            if not np.isfinite(inc):
                raise DivergenceError("non-finite iterate: smallness condition violated", incs)
            if incs:
                rho = inc / incs[-1] if incs[-1] > 0 else 0.0
                rhos.append(rho)
                bad = bad + 1 if rho >= 1 else 0
                if bad >= 3:
                    raise DivergenceError("Picard ratio >= 1 for 3 consecutive steps: "
                                          "smallness condition violated", incs + [inc])
            incs.append(inc)
            log.debug("picard %d increment %.3e", it, inc)
            scale = incs[0] if relative else 1.0
            if inc <= tol * scale:
                return AlphaSolution(self.kgrid, self.ygrid, Z, self.norm(Z), incs, rhos,
                                     src_norm, desc, self.params, (f1h, f2h))
        raise NonConvergenceError(f"no convergence in {max_iter} iterations", incs)

    def contraction_probe(self, source: CompactSource, steps: int = 4, f_hat=None):
        """First ``steps`` increment ratios (cheap estimate of rho)."""
        f1h, f2h = f_hat if f_hat is not None else self.source_hat(source)
        Z = np.zeros((4, len(self.kgrid), len(self.ygrid)), complex)
        incs = []
        for _ in range(steps + 1):
            Zn = self.step(Z, f1h, f2h)
            incs.append(self.norm(Zn - Z))
            Z = Zn
        incs = np.array(incs)
        return incs[1:] / incs[:-1]


def picard_iterate(source: CompactSource, params: UAlphaParams = UAlphaParams(), tol: float = 1e-8,
                   max_iter: int = 60, solver: Optional[AlphaSolver] = None) -> AlphaSolution:
    solver = solver or AlphaSolver(params=params)
    return solver.iterate(source, tol, max_iter)


def find_amplitude(solver: AlphaSolver, source: CompactSource, target: float = 0.2,
                   band: float = 0.15, steps: int = 4, max_probe: int = 12):
    """Amplitude whose probed contraction ratio lies within ``band`` (relative) of ``target``.

    Bisection in log-amplitude, seeded by the (approximately linear) scaling of rho.
    """
    base = source.scaled(1.0 / source.amplitude) if source.amplitude else source
    f1, f2 = solver.source_hat(base)

    def rho_at(a):
        return summary_rho(solver.contraction_probe(base, steps, (a * f1, a * f2)))

    a = 1.0
    r = rho_at(a)
    lo = hi = None
    for _ in range(max_probe):
        if abs(r - target) <= band * target:
            return a, r
        if r < target:
            lo = a
        else:
            hi = a
        if lo is not None and hi is not None:
            a = np.sqrt(lo * hi)
        else:
            a = a * np.clip(target / max(r, 1e-300), 1e-3, 1e3)
        r = rho_at(a)
    return a, r


def decay_report(sol: AlphaSolution, window=None) -> dict:
    """Sup-norm decay slopes of velocity and gradient, plus gradient memberships."""
    u, v = sol.u_hat, sol.v_hat
    if not (np.any(u) or np.any(v)):
        return {"trivial": True, "velocity_slope": None, "gradient_slope": None}
    kg, yg = sol.kgrid, sol.ygrid
    k = kg.nodes[:, None]
    y = yg.nodes
    mk = lambda vals: SpectralField(kg, yg, vals, "other")
    vel = fit_ls_decay([mk(u), mk(v)], np.inf, window)
    uy = ddx(u, y, 1)
    grad = fit_ls_decay([mk(-1j * k * u), mk(-1j * k * v), mk(uy), mk(1j * k * u)], np.inf, window)
    a = sol.params.alpha
    ux = b_norm(mk(-1j * k * u), NormParams(a - 1, 1.5, 2.0))
    vx = b_norm(mk(-1j * k * v), NormParams(a - 1, 1.5, 3.0))
    return {
        "trivial": False,
        "velocity_slope": vel.slope, "velocity_width": vel.width,
        "gradient_slope": grad.slope, "gradient_width": grad.width,
        "window": [float(vel.y[0]), float(vel.y[-1])],
        "ux_membership": ux, "vx_membership": vx,
        "memberships_finite": bool(np.isfinite(ux) and np.isfinite(vx)),
        "profile_y": vel.y.tolist(), "velocity_sup": vel.norms.tolist(),
        "gradient_sup": grad.norms.tolist(),
    }
