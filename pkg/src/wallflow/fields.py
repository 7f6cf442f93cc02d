"""Grids, field containers and the x-Fourier bridge.

Fourier convention (used everywhere in the package)::

    f_hat(k, y) = int exp(+i k x) f(x, y) dx
    f(x, y)     = (1 / 2 pi) int exp(-i k x) f_hat(k, y) dk

so that d/dx acts as multiplication by ``-i k`` and the transform of a
product is ``(1 / 2 pi) (f_hat * g_hat)``.

Physical arrays are indexed ``[ix, iy]`` and spectral arrays ``[ik, iy]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "WallNormalGrid",
    "WaveNumberGrid",
    "SpectralField",
    "PhysicalVectorField",
    "StreamFunction",
    "SPECTRAL_LABELS",
    "ddx",
    "trapezoid_weights",
    "curl_perp",
    "divergence",
    "transform_x",
    "inverse_transform_x",
    "fourier_x",
    "filon_weights",
    "inverse_fourier",
    "d_norm",
    "divergence_residual",
    "hardy_ratio",
    "UndefinedRatioError",
]

SPECTRAL_LABELS = ("omega", "eta", "phi", "psi", "u", "v", "Q0", "Q1", "F1", "F2", "other")


class UndefinedRatioError(ValueError):
    pass


def _as_nodes(nodes) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(nodes, dtype=float))
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("grid needs at least two nodes")
    if not np.all(np.diff(arr) > 0):
        raise ValueError("grid nodes must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class WallNormalGrid:
    """Sample points in y on ``[1, y_max]``."""

    nodes: np.ndarray
    rule: str = "custom"

    def __post_init__(self):
        nodes = _as_nodes(self.nodes)
        if abs(nodes[0] - 1.0) > 1e-14:
            raise ValueError("wall-normal grid must start at y = 1")
        nodes = nodes.copy()
        nodes[0] = 1.0
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def y_min(self) -> float:
        return float(self.nodes[0])

    @property
    def y_max(self) -> float:
        return float(self.nodes[-1])

    def __len__(self):
        return self.nodes.size

    @classmethod
    def uniform(cls, y_max: float, n: int) -> "WallNormalGrid":
        return cls(np.linspace(1.0, y_max, n), rule="uniform")

    @classmethod
    def geometric(cls, y_max: float, h0: float, ratio: float) -> "WallNormalGrid":
        """First spacing ``h0`` growing by ``ratio`` per cell; last node snapped to ``y_max``."""
        if ratio < 1.0:
            raise ValueError("geometric stretch factor must be >= 1")
        return cls(_march(1.0, y_max, h0, ratio, np.inf), rule=f"geometric({h0},{ratio})")

    @classmethod
    def stretched(cls, y_max: float, h_core: float, y_core: float, ratio: float = 1.04,
                  h_max: float = np.inf) -> "WallNormalGrid":
        """Uniform spacing ``h_core`` on ``[1, y_core]`` then geometric growth to ``y_max``."""
        if ratio < 1.0:
            raise ValueError("geometric stretch factor must be >= 1")
        n_core = max(1, int(round((y_core - 1.0) / h_core)))
        core = np.linspace(1.0, 1.0 + n_core * h_core, n_core + 1)
        if core[-1] >= y_max:
            return cls(np.linspace(1.0, y_max, n_core + 1), rule="uniform")
        tail = _march(core[-1], y_max, h_core * ratio, ratio, h_max)
        return cls(np.concatenate([core, tail[1:]]),
                   rule=f"stretched({h_core},{y_core},{ratio})")

    def descriptor(self) -> dict:
        return {"rule": self.rule, "n": len(self), "y_min": self.y_min, "y_max": self.y_max}


def _march(start: float, stop: float, h0: float, ratio: float, h_max: float) -> np.ndarray:
    pts = [start]
    h = h0
    while pts[-1] + h < stop - 0.5 * min(h, h_max):
        pts.append(pts[-1] + h)
        h = min(h * ratio, h_max)
    pts.append(stop)
    return np.array(pts)


@dataclass(frozen=True, eq=False)
class WaveNumberGrid:
    """Sorted real wavenumbers, symmetric about 0, never containing 0."""

    nodes: np.ndarray
    rule: str = "custom"

    def __post_init__(self):
        nodes = _as_nodes(self.nodes)
        if np.any(nodes == 0.0):
            raise ValueError("k = 0 is excluded from wavenumber grids")
        if not np.allclose(nodes, -nodes[::-1], rtol=1e-13, atol=0.0):
            raise ValueError("wavenumber grid must be symmetric about 0")
        nodes = 0.5 * (nodes - nodes[::-1])
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return self.nodes.size

    @property
    def k_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def k_min(self) -> float:
        return float(np.min(np.abs(self.nodes)))

    @property
    def positive(self) -> np.ndarray:
        return self.nodes[self.nodes > 0]

    def mirror_index(self) -> np.ndarray:
        """Index of ``-k`` for every node."""
        return np.arange(len(self))[::-1]

    def weights(self) -> np.ndarray:
        """Trapezoidal weights; the gap across k = 0 is bridged linearly."""
        return trapezoid_weights(self.nodes)

    @classmethod
    def from_positive(cls, kpos, rule="custom") -> "WaveNumberGrid":
        kpos = np.sort(np.asarray(kpos, dtype=float))
        return cls(np.concatenate([-kpos[::-1], kpos]), rule=rule)

    @classmethod
    def from_x_grid(cls, x) -> "WaveNumberGrid":
        """Grid induced by a uniform x-grid: k_j = 2 pi j / L, 0 < |j| < N/2."""
        x = np.asarray(x, dtype=float)
        n = x.size
        L = n * (x[1] - x[0])
        j = np.arange(1, n // 2)
        return cls.from_positive(2 * np.pi * j / L, rule=f"fft(n={n},L={L:g})")

    @classmethod
    def clustered(cls, k_min: float = 1 / 64, k_max: float = 64.0, ratio: float = 1.12,
                  dk_max: float = 0.25, k_knee: float = np.inf) -> "WaveNumberGrid":
        """Geometric clustering towards 0 from ``k_min``; spacing capped at ``dk_max``
        up to ``k_knee`` and growing proportionally to k beyond it."""
        if not 0 < k_min < k_max:
            raise ValueError("need 0 < k_min < k_max")
        pts = [k_min]
        while pts[-1] < k_max * (1 - 1e-12):
            kk = pts[-1]
            step = min(kk * (ratio - 1.0), dk_max * max(1.0, kk / k_knee))
            pts.append(min(kk + step, k_max))
        if len(pts) > 2 and pts[-1] - pts[-2] < 0.3 * (pts[-2] - pts[-3]):
            del pts[-2]
        return cls.from_positive(pts, rule=f"clustered({k_min:g},{k_max:g},{ratio},{dk_max},{k_knee:g})")

    def descriptor(self) -> dict:
        return {"rule": self.rule, "n": len(self), "k_min": self.k_min, "k_max": self.k_max}


@dataclass(frozen=True, eq=False)
class SpectralField:
    kgrid: WaveNumberGrid
    ygrid: WallNormalGrid
    values: np.ndarray
    label: str = "other"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (len(self.kgrid), len(self.ygrid)):
            raise ValueError(f"values shape {vals.shape} does not match grids "
                             f"({len(self.kgrid)}, {len(self.ygrid)})")
        if self.label not in SPECTRAL_LABELS:
            raise ValueError(f"unknown component label {self.label!r}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, kgrid, ygrid, label="other"):
        return cls(kgrid, ygrid, np.zeros((len(kgrid), len(ygrid)), complex), label)

    def with_values(self, values, label=None) -> "SpectralField":
        return SpectralField(self.kgrid, self.ygrid, values, label or self.label)

    def same_grids(self, other: "SpectralField") -> bool:
        return (self.kgrid.nodes.shape == other.kgrid.nodes.shape
                and np.array_equal(self.kgrid.nodes, other.kgrid.nodes)
                and self.ygrid.nodes.shape == other.ygrid.nodes.shape
                and np.array_equal(self.ygrid.nodes, other.ygrid.nodes))

    def hermitian_defect(self) -> float:
        """max |f(-k) - conj f(k)|, zero for transforms of real fields."""
        v = self.values
        return float(np.max(np.abs(v[::-1] - np.conj(v)), initial=0.0))

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PhysicalVectorField:
    """Velocity samples ``u[ix, iy]``, ``v[ix, iy]`` on a tensor grid.

    ``psi`` optionally keeps the stream function the field was built from,
    which makes :func:`wallflow.truncation.stream_function` exact for it.
    """

    x: np.ndarray
    ygrid: WallNormalGrid
    u: np.ndarray
    v: np.ndarray
    psi: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        x = _as_nodes(self.x)
        if not np.allclose(x, -x[::-1], rtol=0, atol=1e-12 * max(1.0, abs(x[-1]))):
            raise ValueError("x-grid must be symmetric about 0")
        shape = (x.size, len(self.ygrid))
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != shape or v.shape != shape:
            raise ValueError(f"components must have shape {shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def y(self) -> np.ndarray:
        return self.ygrid.nodes

    @property
    def shape(self):
        return self.u.shape

    def is_uniform_x(self, rtol=1e-10) -> bool:
        dx = np.diff(self.x)
        return bool(np.all(np.abs(dx - dx[0]) <= rtol * abs(dx[0])))

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @classmethod
    def zeros(cls, x, ygrid):
        shape = (len(x), len(ygrid))
        return cls(x, ygrid, np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_stream(cls, x, ygrid, psi) -> "PhysicalVectorField":
        """Discrete ``grad-perp psi = (-d_y psi, d_x psi)``."""
        psi = np.asarray(psi, dtype=float)
        u, v = curl_perp(psi, x, ygrid.nodes)
        return cls(x, ygrid, u, v, psi=psi)

    def scaled(self, c: float) -> "PhysicalVectorField":
        psi = None if self.psi is None else c * self.psi
        return PhysicalVectorField(self.x, self.ygrid, c * self.u, c * self.v, psi)

    def __add__(self, other):
        psi = None if self.psi is None or other.psi is None else self.psi + other.psi
        return PhysicalVectorField(self.x, self.ygrid, self.u + other.u, self.v + other.v, psi)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def wall_trace(self) -> float:
        return float(max(np.max(np.abs(self.u[:, 0])), np.max(np.abs(self.v[:, 0]))))


@dataclass(frozen=True, eq=False)
class StreamFunction:
    x: np.ndarray
    ygrid: WallNormalGrid
    psi: np.ndarray

    def velocity(self) -> PhysicalVectorField:
        return PhysicalVectorField.from_stream(self.x, self.ygrid, self.psi)


# ---------------------------------------------------------------------------
# finite differences and quadrature on (possibly) non-uniform tensor grids


def _fd_weights(nodes: np.ndarray):
    """Three-point first-derivative weights (lower, centre, upper) per node.

    Centred second-order in the interior, one-sided second-order at the ends.
    """
    h = np.diff(nodes)
    n = nodes.size
    wl = np.zeros(n)
    wc = np.zeros(n)
    wu = np.zeros(n)
    hm, hp = h[:-1], h[1:]
    wl[1:-1] = -hp / (hm * (hm + hp))
    wc[1:-1] = (hp - hm) / (hm * hp)
    wu[1:-1] = hm / (hp * (hm + hp))
    if n == 2:
        wc[0], wu[0] = -1 / h[0], 1 / h[0]
        wl[1], wc[1] = -1 / h[0], 1 / h[0]
        return wl, wc, wu, None
    # one-sided at ends, stored as offsets (0, 1, 2) / (0, -1, -2)
    h1, h2 = h[0], h[1]
    ends = {
        "lo": (-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))),
    }
    h1, h2 = h[-1], h[-2]
    ends["hi"] = ((2 * h1 + h2) / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    return wl, wc, wu, ends


def ddx(values: np.ndarray, nodes: np.ndarray, axis: int = 0) -> np.ndarray:
    """First derivative along ``axis`` (second order, non-uniform nodes)."""
    f = np.moveaxis(np.asarray(values), axis, 0)
    wl, wc, wu, ends = _fd_weights(np.asarray(nodes, dtype=float))
    shp = (-1,) + (1,) * (f.ndim - 1)
    out = np.empty_like(f, dtype=np.result_type(f, float))
    if ends is None:
        out[0] = (f[1] - f[0]) / (nodes[1] - nodes[0])
        out[1] = out[0]
        return np.moveaxis(out, 0, axis)
    out[1:-1] = (wl[1:-1].reshape(shp) * f[:-2] + wc[1:-1].reshape(shp) * f[1:-1]
                 + wu[1:-1].reshape(shp) * f[2:])
    a, b, c = ends["lo"]
    out[0] = a * f[0] + b * f[1] + c * f[2]
    a, b, c = ends["hi"]
    out[-1] = a * f[-1] + b * f[-2] + c * f[-3]
    return np.moveaxis(out, 0, axis)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    h = np.diff(np.asarray(nodes, dtype=float))
    w = np.zeros(h.size + 1)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def curl_perp(psi: np.ndarray, x: np.ndarray, y: np.ndarray):
    """``(-d_y psi, d_x psi)``; the x- and y-stencils commute exactly."""
    return -ddx(psi, y, axis=1), ddx(psi, x, axis=0)


def divergence(u: np.ndarray, v: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return ddx(u, x, axis=0) + ddx(v, y, axis=1)


# ---------------------------------------------------------------------------
# x-Fourier transforms


def transform_x(fld: PhysicalVectorField):
    """FFT-based transform of a field on a uniform, even-sized x-grid.

    Returns ``(u_hat, v_hat, meta)``; the k = 0 and Nyquist rows are dropped
    and the x-mean is removed first.
    """
    x = fld.x
    n = x.size
    if n % 2:
        raise ValueError("transform_x needs an even number of x nodes")
    if not fld.is_uniform_x():
        raise ValueError("transform_x needs a uniform x-grid")
    dx = x[1] - x[0]
    edge = max(np.max(np.abs(fld.u[[0, -1]])), np.max(np.abs(fld.v[[0, -1]])))
    scale = max(np.max(np.abs(fld.u)), np.max(np.abs(fld.v)), np.finfo(float).tiny)
    meta = {"boundary_warning": bool(edge > 1e-8 * scale), "edge_ratio": float(edge / scale),
            "x_mean_u": fld.u.mean(axis=0), "x_mean_v": fld.v.mean(axis=0)}
    if meta["boundary_warning"]:
        warnings.warn("field does not vanish at the x-boundaries; transform is periodic", stacklevel=2)
    kgrid = WaveNumberGrid.from_x_grid(x)
    out = []
    for comp in (fld.u, fld.v):
        c = comp - comp.mean(axis=0, keepdims=True)
        out.append(_dft_forward(c, x, kgrid.nodes, dx))
    return (SpectralField(kgrid, fld.ygrid, out[0], "u"),
            SpectralField(kgrid, fld.ygrid, out[1], "v"), meta)


def _dft_forward(c: np.ndarray, x: np.ndarray, k: np.ndarray, dx: float) -> np.ndarray:
    n = x.size
    # exp(i k x_m) with x_m = x_0 + m dx, k_j = 2 pi j / (n dx): ifft gives sum_m c_m e^{+2 pi i j m / n}
    F = np.fft.ifft(c, axis=0) * n
    j = np.rint(k * n * dx / (2 * np.pi)).astype(int)
    rows = F[j % n]
    return dx * np.exp(1j * k * x[0])[:, None] * rows


def inverse_transform_x(u_hat: SpectralField, x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`transform_x` on the same uniform x-grid (mean-free)."""
    x = np.asarray(x, dtype=float)
    k = u_hat.kgrid.nodes
    n = x.size
    dx = x[1] - x[0]
    dk = 2 * np.pi / (n * dx)
    j = np.rint(k / dk).astype(int)
    # e^{-i k_j x_m} = e^{-i k_j x_0} e^{-2 pi i j m / n}
    G = np.zeros((n, u_hat.values.shape[1]), complex)
    G[j % n] = u_hat.values * np.exp(-1j * k * x[0])[:, None]
    out = (dk / (2 * np.pi)) * np.fft.fft(G, axis=0)
    return out.real if u_hat.hermitian_defect() <= 1e-12 * max(1.0, np.max(np.abs(u_hat.values))) else out


def fourier_x(values: np.ndarray, x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Direct trapezoidal forward transform ``sum_m w_m e^{i k x_m} f(x_m, .)``.

    Works on any x-grid; intended for compactly supported data.
    """
    w = trapezoid_weights(x)
    E = np.exp(1j * np.outer(k, x)) * w[None, :]
    return E @ np.asarray(values)


def filon_weights(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Weights ``W[ix, ik]`` with ``(1/2pi) int e^{-ikx} f(k) dk ~ W @ f``.

    Exact for the piecewise-linear interpolant of ``f`` over the sorted nodes.
    """
    k = np.asarray(k, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dk = np.diff(k)                                  # (m,)
    th = np.outer(x, dk)                             # (nx, m)
    A, B = _filon_ab(th)
    phase = np.exp(-1j * np.outer(x, k[:-1]))        # e^{-i k_a x}
    left = phase * dk[None, :] * A                   # weight on f_a
    right = phase * dk[None, :] * B                  # weight on f_b
    W = np.zeros((x.size, k.size), complex)
    W[:, :-1] += left
    W[:, 1:] += right
    return W / (2 * np.pi)


def _filon_ab(th: np.ndarray):
    """A = int_0^1 e^{-i th s}(1-s) ds, B = int_0^1 e^{-i th s} s ds."""
    c = -1j * th
    small = np.abs(th) < 0.05
    A = np.empty(th.shape, complex)
    B = np.empty(th.shape, complex)
    cs = c[~small]
    ec = np.exp(cs)
    B[~small] = ec * (cs - 1) / cs**2 + 1 / cs**2
    A[~small] = (ec - 1) / cs - B[~small]
    cz = c[small]
    # series: int_0^1 s^m e^{cs} ds = sum_n c^n / (n! (n+m+1))
    sA = np.zeros(cz.shape, complex)
    sB = np.zeros(cz.shape, complex)
    term = np.ones(cz.shape, complex)
    for n in range(12):
        if n:
            term = term * cz / n
        sB += term / (n + 2)
        sA += term / (n + 1)
    B[small] = sB
    A[small] = sA - sB
    return A, B


def inverse_fourier(values: np.ndarray, k: np.ndarray, x: np.ndarray, real: bool = True,
                    chunk: int = 256) -> np.ndarray:
    """Evaluate ``(1/2pi) int e^{-ikx} f(k, y) dk`` at arbitrary ``x`` (Filon, linear).

    ``values`` has shape ``(nk, ny)``; the result has shape ``(nx, ny)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.size, values.shape[1]), float if real else complex)
    for s in range(0, x.size, chunk):
        W = filon_weights(k, x[s:s + chunk])
        r = W @ values
        out[s:s + chunk] = r.real if real else r
    return out


# ---------------------------------------------------------------------------
# functionals


def _integrate2d(f: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(trapezoid_weights(x) @ f @ trapezoid_weights(y))


def d_norm(fld: PhysicalVectorField) -> float:
    """``(int |grad w|^2)^(1/2)`` by second-order differences and trapezoidal quadrature."""
    x, y = fld.x, fld.y
    g2 = (ddx(fld.u, x, 0) ** 2 + ddx(fld.u, y, 1) ** 2
          + ddx(fld.v, x, 0) ** 2 + ddx(fld.v, y, 1) ** 2)
    return float(np.sqrt(_integrate2d(g2, x, y)))


def divergence_residual(fld: PhysicalVectorField) -> float:
    d = divergence(fld.u, fld.v, fld.x, fld.y)
    return float(np.max(np.abs(d[1:-1, 1:-1]), initial=0.0))


def hardy_ratio(fld: PhysicalVectorField) -> float:
    """``int |w|^2/(y-1)^2 / ||w; D||^2`` with the wall limit ``|d_y w(x,1)|^2``."""
    dn = d_norm(fld)
    if not dn > 0:
        raise UndefinedRatioError("hardy ratio undefined for a field with zero D-norm")
    y = fld.y
    t = y - 1.0
    num = np.empty_like(fld.u)
    num[:, 1:] = (fld.u[:, 1:] ** 2 + fld.v[:, 1:] ** 2) / t[None, 1:] ** 2
    num[:, 0] = ddx(fld.u, y, 1)[:, 0] ** 2 + ddx(fld.v, y, 1)[:, 0] ** 2
    return _integrate2d(num, fld.x, y) / dn**2
