"""Dense Chebyshev collocation for one mode, used as an independent check.

The four ODEs are collocated on Chebyshev points of [1, Y]; the wall rows
carry u(1) = v(1) = 0 and the top rows kill the two growing eigen-coordinates
at Y.  Exact when the source vanishes beyond Y.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .oseen import homogeneous_roots


def cheb(n: int):
    """Chebyshev points cos(pi j / n) and the differentiation matrix."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (X + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def collocation_mode(k: float, source_fn, y_top: float, n: int = 160):
    """Solve one mode; ``source_fn(y)`` returns the stacked (4, len(y)) right-hand side.

    Returns (nodes, Z) with Z of shape (4, n + 1) in (omega, eta, phi, psi) order.
    """
    x, Dx = cheb(n)
    y = 1.0 + (y_top - 1.0) * (1.0 - x) / 2.0
    D = Dx * (-2.0 / (y_top - 1.0))
    m = n + 1
    I = np.eye(m)
    lam, _ = homogeneous_roots(k)
    sg = np.sign(k)
    A = np.array([[0, -1j * k, 0, 0],
                  [1 + 1j * k, 0, 0, 0],
                  [0, 0, 0, -1j * k],
                  [0, 0, 1j * k, 0]])
    L = np.kron(np.eye(4), D).astype(complex) - np.kron(A, I)
    rhs = np.asarray(source_fn(y), dtype=complex).reshape(-1).copy()

    def row(comp, node):
        return comp * m + node

    def set_row(r, coeffs, node):
        L[r] = 0.0
        for comp, c in coeffs:
            L[r, comp * m + node] = c
        rhs[r] = 0.0

    # wall (node 0): u = -eta + phi, v = omega + psi
    set_row(row(0, 0), [(1, -1.0), (2, 1.0)], 0)
    set_row(row(3, 0), [(0, 1.0), (3, 1.0)], 0)
    # top (node n): growing coordinates omega - i k eta / lam and psi + i sgn phi
    set_row(row(1, n), [(0, 1.0), (1, -1j * k / lam)], n)
    set_row(row(2, n), [(3, 1.0), (2, 1j * sg)], n)
    Z = np.linalg.solve(L, rhs).reshape(4, m)
    return y, Z


def interpolate_to(y_nodes, Z, y_eval):
    """Barycentric interpolation of collocation profiles onto ``y_eval``."""
    out = np.empty((Z.shape[0], np.size(y_eval)), complex)
    for c in range(Z.shape[0]):
        re = BarycentricInterpolator(y_nodes, Z[c].real)(y_eval)
        im = BarycentricInterpolator(y_nodes, Z[c].imag)(y_eval)
        out[c] = re + 1j * im
    return out
