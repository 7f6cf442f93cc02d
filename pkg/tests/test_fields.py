import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from wallflow.fields import (PhysicalVectorField, SpectralField, UndefinedRatioError, WallNormalGrid,
                             WaveNumberGrid, d_norm, divergence_residual, hardy_ratio, inverse_fourier,
                             inverse_transform_x, transform_x)
from helpers import wall_field


def periodic_x(n, L=2 * np.pi):
    dx = L / n
    return -L / 2 + dx * (np.arange(n) + 0.5)


def compact_field(rng, x, y):
    X, Y = np.meshgrid(x, y, indexing="ij")
    u = np.zeros_like(X)
    v = np.zeros_like(X)
    for _ in range(3):
        c, w = rng.uniform(-1.5, 1.5), rng.uniform(0.8, 1.5)
        s = np.clip(1 - ((X - c) / w) ** 2, 0, None) ** 24
        u += rng.normal() * s * np.exp(-(Y - 2) ** 2)
        v += rng.normal() * s * np.sin(Y)
    return PhysicalVectorField(x, WallNormalGrid(y), u, v)


# --- grids ------------------------------------------------------------------


def test_wavenumber_grid_symmetric_and_excludes_zero():
    kg = WaveNumberGrid.clustered(1e-3, 16.0)
    assert not np.any(kg.nodes == 0)
    assert np.allclose(kg.nodes, -kg.nodes[kg.mirror_index()])
    with pytest.raises(ValueError):
        WaveNumberGrid(np.array([-1.0, 0.0, 1.0]))


def test_wall_grid_must_start_at_wall():
    with pytest.raises(ValueError):
        WallNormalGrid(np.array([0.5, 1.0, 2.0]))


# --- transform --------------------------------------------------------------


def test_transform_of_zero_is_zero():
    x = periodic_x(32)
    f = PhysicalVectorField.zeros(x, WallNormalGrid.uniform(3, 5))
    uh, vh, _ = transform_x(f)
    assert not np.any(uh.values) and not np.any(vh.values)


def test_cosine_concentrates_at_unit_wavenumbers():
    x = periodic_x(64)
    yg = WallNormalGrid.uniform(4.0, 7)
    g = np.exp(-yg.nodes)
    u = np.cos(x)[:, None] * g[None, :]
    f = PhysicalVectorField(x, yg, u, np.zeros_like(u))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        uh, _, meta = transform_x(f)
    assert meta["boundary_warning"]
    k = uh.kgrid.nodes
    dx = x[1] - x[0]
    # direct summation oracle of sum_m dx e^{i k x_m} u(x_m)
    direct = np.array([[sum(dx * np.exp(1j * kk * xm) * u[m, j] for m, xm in enumerate(x))
                        for j in range(len(yg))] for kk in k])
    assert np.max(np.abs(uh.values - direct)) < 1e-12
    one = np.isclose(np.abs(k), 1.0)
    # Fourier-series coefficient g/2 per side times the period 2 pi
    assert np.allclose(uh.values[one], np.pi * g[None, :], atol=1e-12)
    assert np.max(np.abs(uh.values[~one])) < 1e-12


def test_round_trip_identity(rng):
    x = periodic_x(256, 8.0)
    y = np.linspace(1.0, 4.0, 9)
    f = compact_field(rng, x, y)
    uh, vh, meta = transform_x(f)
    assert not meta["boundary_warning"]
    for comp, hat in ((f.u, uh), (f.v, vh)):
        back = inverse_transform_x(hat, x)
        assert np.isrealobj(back)
        ref = comp - comp.mean(axis=0, keepdims=True)
        assert np.max(np.abs(back - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_transform_is_hermitian_and_linear(rng):
    x = periodic_x(64, 8.0)
    y = np.linspace(1.0, 3.0, 5)
    f, g = compact_field(rng, x, y), compact_field(rng, x, y)
    uf, _, _ = transform_x(f)
    ug, _, _ = transform_x(g)
    assert uf.hermitian_defect() < 1e-12
    h = f.scaled(2.0) + g.scaled(-3.0)
    uh, _, _ = transform_x(h)
    assert np.allclose(uh.values, 2 * uf.values - 3 * ug.values, atol=1e-12)


def test_non_hermitian_data_inverts_to_complex(rng):
    x = periodic_x(32, 8.0)
    kg = WaveNumberGrid.from_x_grid(x)
    vals = rng.normal(size=(len(kg), 3)) + 1j * rng.normal(size=(len(kg), 3))
    out = inverse_transform_x(SpectralField(kg, WallNormalGrid.uniform(2, 3), vals, "u"), x)
    assert np.iscomplexobj(out)


def test_transform_rejects_nonuniform_or_odd_grid():
    yg = WallNormalGrid.uniform(2, 3)
    x = np.array([-2.0, -0.5, 0.5, 2.0])
    with pytest.raises(ValueError):
        transform_x(PhysicalVectorField.zeros(x, yg))
    with pytest.raises(ValueError):
        transform_x(PhysicalVectorField.zeros(np.linspace(-1, 1, 5), yg))


def test_filon_inverse_of_gaussian():
    # (1/2pi) int e^{-ikx} e^{-k^2} dk = e^{-x^2/4} / (2 sqrt(pi))
    k = np.linspace(-12, 12, 4001)
    k = k[k != 0]
    x = np.linspace(-3, 3, 13)
    got = inverse_fourier(np.exp(-k**2)[:, None], k, x)[:, 0]
    assert np.allclose(got, np.exp(-x**2 / 4) / (2 * np.sqrt(np.pi)), atol=1e-6)


# --- functionals --------------------------------------------------------------


def test_d_norm_zero_and_homogeneous():
    x = np.linspace(-4, 4, 81)
    y = np.linspace(1, 9, 81)
    assert d_norm(PhysicalVectorField.zeros(x, WallNormalGrid(y))) == 0.0
    w = wall_field(x, y)
    assert d_norm(w.scaled(-2.5)) == pytest.approx(2.5 * d_norm(w), rel=1e-14)


def test_d_norm_against_exact_integral():
    xs, ys = sp.symbols("x y", real=True)
    psi = (ys - 1) ** 2 * sp.exp(-ys) * sp.cos(xs)
    w1, w2 = -sp.diff(psi, ys), sp.diff(psi, xs)
    g2 = sum(sp.diff(c, v) ** 2 for c in (w1, w2) for v in (xs, ys))
    exact = float(sp.integrate(sp.integrate(sp.expand(g2), (xs, -sp.pi, sp.pi)), (ys, 1, sp.oo)))

    def value(n):
        x = np.linspace(-np.pi, np.pi, n + 1)
        y = np.linspace(1, 41, 20 * n + 1)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return d_norm(PhysicalVectorField.from_stream(x, WallNormalGrid(y), (Y - 1) ** 2 * np.exp(-Y) * np.cos(X))) ** 2

    coarse, fine = value(64), value(128)
    richardson = (4 * fine - coarse) / 3
    assert abs(fine - exact) / exact < 0.005
    assert abs(richardson - exact) / exact < 0.005


def test_divergence_of_discrete_curl_vanishes(rng):
    x = np.linspace(-2, 2, 41)
    y = np.geomspace(1, 6, 37)
    psi = rng.normal(size=(41, 37))
    f = PhysicalVectorField.from_stream(x, WallNormalGrid(y), psi)
    assert divergence_residual(f) < 1e-10 * np.max(np.abs(f.u))


def test_divergence_of_linear_field():
    x = np.linspace(-1, 1, 11)
    yg = WallNormalGrid.uniform(2, 6)
    X, _ = np.meshgrid(x, yg.nodes, indexing="ij")
    f = PhysicalVectorField(x, yg, X, np.zeros_like(X))
    assert divergence_residual(f) == pytest.approx(1.0, rel=1e-12)


def test_hardy_ratio_wall_profile():
    x = np.linspace(-4, 4, 161)
    y = np.linspace(1, 31, 1201)
    r = hardy_ratio(wall_field(x, y))
    assert 0 < r <= 4 * 1.05


def test_hardy_ratio_scale_invariant_and_undefined_for_zero():
    x = np.linspace(-4, 4, 81)
    y = np.linspace(1, 21, 401)
    w = wall_field(x, y)
    assert hardy_ratio(w.scaled(7.0)) == pytest.approx(hardy_ratio(w), rel=1e-12)
    with pytest.raises(UndefinedRatioError):
        hardy_ratio(PhysicalVectorField.zeros(x, WallNormalGrid(y)))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_d_norm_triangle_inequality(a, b):
    x = np.linspace(-4, 4, 41)
    y = np.linspace(1, 9, 41)
    X, Y = np.meshgrid(x, y, indexing="ij")
    f = PhysicalVectorField.from_stream(x, WallNormalGrid(y), a * (Y - 1) ** 2 * np.exp(-Y) * np.cos(X / 3))
    g = PhysicalVectorField.from_stream(x, WallNormalGrid(y), b * (Y - 1) ** 2 * np.exp(-2 * Y) * np.sin(X))
    assert d_norm(f + g) <= d_norm(f) + d_norm(g) + 1e-12
