"""Per-wavenumber linear solver for the (omega, eta, phi, psi) system on y >= 1.

For each k the state obeys::

    omega' = -i k eta + S_omega        eta' = (1 + i k) omega + S_eta
    psi'   =  i k phi + S_psi          phi' = -i k psi + S_phi

with velocity u = -eta + phi, v = omega + psi.  The physical right-hand side
is S = (Q1, Q0, Q0, -Q1) in the order (omega, eta, phi, psi).

Each 2x2 pair is diagonalised; decaying coordinates are marched upward from
the wall, growing ones downward from y_max, with an exponential integrator
(exact homogeneous propagation, cubic interpolation of the source).  Two
decaying homogeneous modes are then added to enforce u(1) = v(1) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import WallNormalGrid, WaveNumberGrid, SpectralField

__all__ = [
    "ModeError", "IllConditionedModeError", "SourceTailError", "DegenerateModeError",
    "homogeneous_roots", "SourcePair", "ModeState", "ModeBatch", "ModeSolver",
    "solve_mode", "solve_all_modes", "assemble_velocity", "physical_rhs",
]

OMEGA, ETA, PHI, PSI = range(4)


class ModeError(ValueError):
    def __init__(self, msg, ks=()):
        super().__init__(msg)
        self.ks = list(ks)


class DegenerateModeError(ModeError):
    pass


class IllConditionedModeError(ModeError):
    pass


class SourceTailError(ModeError):
    pass


def homogeneous_roots(k):
    """(sqrt(k^2 - i k) with positive real part, |k|); vectorised."""
    k = np.asarray(k, dtype=float)
    if np.any(k == 0):
        raise DegenerateModeError("k = 0 has no exponential dichotomy", [0.0])
    lam = np.sqrt(k * k - 1j * k)        # principal branch: Re >= 0
    if lam.ndim == 0:
        return complex(lam), float(abs(k))
    return lam, np.abs(k)


# ---------------------------------------------------------------------------
# exponential moments


_SERIES_CUT = 2.0
_NTERMS = 40


def _moments_up(z):
    """g_m(z) = int_0^1 exp(-z (1 - s)) s^m ds, m = 0..3."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((4,) + z.shape, complex)
    small = np.abs(z) < _SERIES_CUT
    zs = z[small]
    # series sum_n (-z)^n m! / (n + m + 1)!
    for m in range(4):
        acc = np.zeros(zs.shape, complex)
        term = np.full(zs.shape, 1.0 / math.factorial(m + 1) * math.factorial(m), complex)
        for n in range(_NTERMS):
            acc += term
            term = term * (-zs) / (n + m + 2)
        out[m][small] = acc
    zl = z[~small]
    g = (1 - np.exp(-zl)) / zl
    out[0][~small] = g
    for m in range(1, 4):
        g = (1 - m * g) / zl
        out[m][~small] = g
    return out


def _moments_down(z):
    """h_m(z) = int_0^1 exp(-z s) s^m ds, m = 0..3."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((4,) + z.shape, complex)
    small = np.abs(z) < _SERIES_CUT
    zs = z[small]
    for m in range(4):
        acc = np.zeros(zs.shape, complex)
        term = np.ones(zs.shape, complex)     # (-z)^n / n!
        for n in range(_NTERMS):
            acc += term / (n + m + 1)
            term = term * (-zs) / (n + 1)
        out[m][small] = acc
    zl = z[~small]
    ez = np.exp(-zl)
    h = (1 - ez) / zl
    out[0][~small] = h
    for m in range(1, 4):
        h = (-ez + m * h) / zl
        out[m][~small] = h
    return out


def _interval_stencils(y: np.ndarray):
    """Node indices (n_int, 4) and monomial maps C (n_int, 4, 4) per interval.

    On interval j the source is the cubic through the 4 stencil nodes, written
    as sum_m a_m s^m in the local coordinate s = (y - y_j) / h_j, a = C @ values.
    """
    n = y.size
    if n < 4:
        raise ValueError("wall-normal grid needs at least 4 nodes")
    j = np.arange(n - 1)
    start = np.clip(j - 1, 0, n - 4)
    idx = start[:, None] + np.arange(4)[None, :]
    h = np.diff(y)
    sig = (y[idx] - y[j][:, None]) / h[:, None]          # (n_int, 4)
    V = sig[:, :, None] ** np.arange(4)[None, None, :]    # V[node, m]
    C = np.linalg.inv(V)                                  # a = C @ f
    return idx, C, h


@dataclass
class _Scalar:
    """Propagation data for c' = mu c + s on one grid, for a vector of rates."""
    decay: np.ndarray      # exp(-|rate| h) per (k, interval)
    weights: np.ndarray    # (k, interval, 4)
    upward: bool


def _scalar_ops(rate: np.ndarray, idx, C, h, upward: bool) -> _Scalar:
    z = rate[:, None] * h[None, :]                        # (nk, n_int)
    mom = _moments_up(z) if upward else _moments_down(z)  # (4, nk, n_int)
    # weight on stencil node n: h * sum_m mom_m C[m, n]
    W = np.einsum("mki,imn->kin", mom, C) * h[None, :, None]
    return _Scalar(np.exp(-z), W, upward)


class ModeSolver:
    """Precomputed propagators for a fixed set of wavenumbers and heights."""

    def __init__(self, k, ygrid: WallNormalGrid, det_tol: float = 1e-12):
        self.k = np.atleast_1d(np.asarray(k, dtype=float))
        self.ygrid = ygrid
        self.y = ygrid.nodes
        lam, lap = homogeneous_roots(self.k)
        self.lam = np.atleast_1d(lam)
        self.lap = np.atleast_1d(lap)
        self.sgn = np.sign(self.k)
        self.idx, self.C, self.h = _interval_stencils(self.y)
        self._ops = {
            "oseen_up": _scalar_ops(self.lam, self.idx, self.C, self.h, True),
            "oseen_down": _scalar_ops(self.lam, self.idx, self.C, self.h, False),
            "lap_up": _scalar_ops(self.lap.astype(complex), self.idx, self.C, self.h, True),
            "lap_down": _scalar_ops(self.lap.astype(complex), self.idx, self.C, self.h, False),
        }
        det = 1j * (self.lam - self.lap) / self.k
        bad = np.abs(det) < det_tol
        if np.any(bad):
            raise IllConditionedModeError("wall system singular", self.k[bad])
        self.det = det

    # coordinates ---------------------------------------------------------
    def to_diag(self, Z):
        """(omega, eta, phi, psi) -> (c_plus, c_minus, d_plus, d_minus)."""
        k = self.k[:, None]
        lam = self.lam[:, None]
        s = self.sgn[:, None]
        om, et, ph, ps = Z
        r = 1j * k * et / lam
        iphi = 1j * s * ph
        return np.stack([(om - r) / 2, (om + r) / 2, (ps + iphi) / 2, (ps - iphi) / 2])

    def from_diag(self, D):
        k = self.k[:, None]
        lam = self.lam[:, None]
        s = self.sgn[:, None]
        cp, cm, dp, dm = D
        om = cp + cm
        et = (1j * lam / k) * (cp - cm)
        ps = dp + dm
        ph = (-1j * s) * (dp - dm)
        return np.stack([om, et, ph, ps])

    # marching ------------------------------------------------------------
    def _forcing(self, op: _Scalar, s):
        return np.einsum("kin,kin->ki", op.weights, s[:, self.idx])

    def _march(self, op: _Scalar, s):
        b = self._forcing(op, s)
        nk, ny = s.shape
        c = np.zeros((nk, ny), complex)
        E = op.decay
        if op.upward:
            for j in range(ny - 1):
                c[:, j + 1] = E[:, j] * c[:, j] + b[:, j]
        else:
            for j in range(ny - 2, -1, -1):
                c[:, j] = E[:, j] * c[:, j + 1] - b[:, j]
        return c

    def particular(self, S):
        Sd = self.to_diag(S)
        return np.stack([
            self._march(self._ops["oseen_down"], Sd[0]),
            self._march(self._ops["oseen_up"], Sd[1]),
            self._march(self._ops["lap_down"], Sd[2]),
            self._march(self._ops["lap_up"], Sd[3]),
        ])

    def solve(self, S, tail_tol: Optional[float] = 1e-6):
        """Solve for a stacked source S of shape (4, nk, ny); returns (4, nk, ny)."""
        S = np.asarray(S, dtype=complex)
        if S.shape != (4, self.k.size, self.y.size):
            raise ValueError(f"source shape {S.shape} incompatible with solver")
        if tail_tol is not None:
            self.check_tail(S, tail_tol)
        D = self.particular(S)
        Z = self.from_diag(D)
        # homogeneous decaying modes: omega += a, eta += -i lam a / k; psi += b, phi += i sgn b
        u1 = -Z[ETA, :, 0] + Z[PHI, :, 0]
        v1 = Z[OMEGA, :, 0] + Z[PSI, :, 0]
        m11 = 1j * self.lam / self.k
        m12 = 1j * self.sgn
        # [m11 m12; 1 1] [a; b] = [-u1; -v1]
        a = (-u1 + m12 * v1) / self.det
        b = -v1 - a
        y1 = self.y - 1.0
        ea = np.exp(-np.outer(self.lam, y1)) * a[:, None]
        eb = np.exp(-np.outer(self.lap, y1)) * b[:, None]
        Z[OMEGA] += ea
        Z[ETA] += (-1j * self.lam / self.k)[:, None] * ea
        Z[PSI] += eb
        Z[PHI] += (1j * self.sgn)[:, None] * eb
        return Z

    def check_tail(self, S, tol):
        mag = np.max(np.abs(S), axis=(0, 2))
        tail = np.max(np.abs(S[:, :, -2:]), axis=(0, 2))
        bad = tail > tol * np.maximum(mag, np.finfo(float).tiny)
        bad &= mag > 0
        if np.any(bad):
            raise SourceTailError("source does not vanish near y_max", self.k[bad])

    # residuals -------------------------------------------------------------
    def scheme_residual(self, Z, S):
        """Relative defect of the discrete variation-of-constants relations."""
        S = np.asarray(S, dtype=complex)
        D = self.to_diag(Z)
        Sd = self.to_diag(S)
        scale = max(np.max(np.abs(S)), np.max(np.abs(Z)) * 1e-300, np.finfo(float).tiny)
        worst = 0.0
        for comp, name in ((0, "oseen_down"), (1, "oseen_up"), (2, "lap_down"), (3, "lap_up")):
            op = self._ops[name]
            b = self._forcing(op, Sd[comp])
            c = D[comp]
            if op.upward:
                r = c[:, 1:] - op.decay * c[:, :-1] - b
            else:
                r = c[:, :-1] - op.decay * c[:, 1:] + b
            worst = max(worst, float(np.max(np.abs(r))))
        return worst / scale

    def fd_residual(self, Z, S):
        """Centred-difference defect of the four ODEs, interior nodes, relative to |S|."""
        from .fields import ddx
        S = np.asarray(S, dtype=complex)
        k = self.k[:, None]
        dZ = ddx(Z, self.y, axis=2)
        om, et, ph, ps = Z
        r = np.stack([
            dZ[OMEGA] - (-1j * k * et + S[OMEGA]),
            dZ[ETA] - ((1 + 1j * k) * om + S[ETA]),
            dZ[PHI] - (-1j * k * ps + S[PHI]),
            dZ[PSI] - (1j * k * ph + S[PSI]),
        ])
        scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
        return float(np.max(np.abs(r[:, :, 1:-1]))) / scale


def physical_rhs(q0, q1):
    """Stack (Q1, Q0, Q0, -Q1) in state order."""
    q0 = np.asarray(q0, dtype=complex)
    q1 = np.asarray(q1, dtype=complex)
    return np.stack([q1, q0, q0, -q1])


@dataclass
class SourcePair:
    k: float
    ygrid: WallNormalGrid
    q0: np.ndarray
    q1: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k == 0:
            raise DegenerateModeError("k = 0 excluded", [0.0])
        self.q0 = np.asarray(self.q0, dtype=complex)
        self.q1 = np.asarray(self.q1, dtype=complex)
        y = self.ygrid.nodes
        nz = np.nonzero(np.abs(self.q0) + np.abs(self.q1))[0]
        self.meta.setdefault("support", (float(y[nz[0]]), float(y[nz[-1]])) if nz.size else None)

    def stacked(self):
        return physical_rhs(self.q0, self.q1)


@dataclass
class ModeState:
    k: float
    ygrid: WallNormalGrid
    omega: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    @property
    def u(self):
        return -self.eta + self.phi

    @property
    def v(self):
        return self.omega + self.psi

    def as_array(self):
        return np.stack([self.omega, self.eta, self.phi, self.psi])


def assemble_velocity(state):
    """(u_hat, v_hat) = (-eta + phi, omega + psi); works on ModeState or ModeBatch."""
    return -state.eta + state.phi, state.omega + state.psi


def solve_mode(k: float, source, ygrid: Optional[WallNormalGrid] = None,
               tail_tol: Optional[float] = 1e-6) -> ModeState:
    """Solve one mode.  ``source`` is a SourcePair or a (4, ny) stacked right-hand side."""
    if isinstance(source, SourcePair):
        ygrid = source.ygrid
        S = source.stacked()
    else:
        if ygrid is None:
            raise ValueError("ygrid required with a raw source array")
        S = np.asarray(source, dtype=complex)
    solver = ModeSolver([k], ygrid)
    Z = solver.solve(S[:, None, :], tail_tol=tail_tol)[:, 0, :]
    return ModeState(float(k), ygrid, *Z)


@dataclass
class ModeBatch:
    kgrid: WaveNumberGrid
    ygrid: WallNormalGrid
    Z: np.ndarray            # (4, nk, ny)

    omega = property(lambda self: self.Z[OMEGA])
    eta = property(lambda self: self.Z[ETA])
    phi = property(lambda self: self.Z[PHI])
    psi = property(lambda self: self.Z[PSI])

    def state(self, j) -> ModeState:
        return ModeState(float(self.kgrid.nodes[j]), self.ygrid, *self.Z[:, j, :])

    def spectral(self, label: str) -> SpectralField:
        u, v = assemble_velocity(self)
        data = {"omega": self.omega, "eta": self.eta, "phi": self.phi, "psi": self.psi,
                "u": u, "v": v}[label]
        return SpectralField(self.kgrid, self.ygrid, data, label)


def solve_all_modes(kgrid: WaveNumberGrid, ygrid: WallNormalGrid, S, order=None,
                    solver: Optional[ModeSolver] = None, tail_tol: Optional[float] = 1e-6,
                    chunk: int = 0) -> ModeBatch:
    """Solve every mode of a stacked source (4, nk, ny).

    ``order`` permutes the processing order (results are placed by k);
    ``chunk`` > 0 processes that many modes at a time.
    """
    S = np.asarray(S, dtype=complex)
    nk = len(kgrid)
    if S.shape[:2] != (4, nk):
        raise ValueError("source must have shape (4, nk, ny)")
    if solver is not None and order is None and chunk == 0:
        return ModeBatch(kgrid, ygrid, solver.solve(S, tail_tol=tail_tol))
    order = np.arange(nk) if order is None else np.asarray(order)
    step = chunk if chunk > 0 else nk
    out = np.empty_like(S)
    failed = []
    for s in range(0, nk, step):
        sel = order[s:s + step]
        try:
            sv = ModeSolver(kgrid.nodes[sel], ygrid)
            out[:, sel, :] = sv.solve(S[:, sel, :], tail_tol=tail_tol)
        except ModeError as exc:
            failed.extend(exc.ks)
    if failed:
        raise ModeError(f"{len(failed)} modes failed", sorted(failed))
    return ModeBatch(kgrid, ygrid, out)
