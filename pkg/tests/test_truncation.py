import numpy as np
import pytest

from wallflow.fields import PhysicalVectorField, WallNormalGrid, curl_perp, d_norm, divergence_residual, ddx
from wallflow.truncation import (AnnulusCutoff, BallCutoff, CutoffProfile, DivergenceResidualError,
                                 _radius, force_test_function, path_audit, stream_function,
                                 tns_source, truncate_pressure, truncate_velocity)
from helpers import oracle, wall_field

CHI = AnnulusCutoff(1.0)


def annulus_grid(n=161):
    x = np.linspace(-2, 2, n)
    y = np.linspace(1, 5, n)
    return x, y


def test_profile_limits_and_monotone():
    z = CutoffProfile()
    s = np.linspace(-0.5, 1.5, 2001)
    v = z(s)
    assert np.all(v[s <= 0] == 1.0) and np.all(v[s >= 1] == 0.0)
    assert np.all(np.diff(v) <= 0)
    assert np.all((v >= 0) & (v <= 1))


def test_profile_derivatives_match_differences():
    z = CutoffProfile()
    s = np.linspace(0.02, 0.98, 97)
    d = z.derivatives(s)
    h = 1e-5
    for n in range(3):
        fd = (z.derivatives(s + h)[n] - z.derivatives(s - h)[n]) / (2 * h)
        assert np.allclose(d[n + 1], fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(d[n + 1])))
    ends = z.derivatives(np.array([0.0, 1.0, -1.0, 2.0]))
    for n in (1, 2, 3):
        assert not np.any(ends[n])


def test_annulus_cutoff_values():
    x, y = annulus_grid()
    r = _radius(x, y, 1.0)[2]
    c = CHI(x, y)
    assert np.all(c[r <= 1 / 3] == 0.0)
    assert np.all(c[r >= 2 / 3] == 1.0)
    assert np.all((c >= 0) & (c <= 1))


def test_ball_cutoff():
    b = BallCutoff(1.0, 0.1)
    x, y = annulus_grid()
    r = _radius(x, y, 1.0)[2]
    c = b(x, y)
    assert np.all(c[r <= 0.1] == 1.0) and np.all(c[r >= 0.2] == 0.0)
    with pytest.raises(ValueError):
        BallCutoff(1.0, 0.4)


# --- stream function -----------------------------------------------------------


def _analytic_w(x, y):
    X, Y = np.meshgrid(x, y, indexing="ij")
    psi = np.sin(X) * (Y - 1) ** 2 * np.exp(-Y)
    u = -np.sin(X) * (2 * (Y - 1) - (Y - 1) ** 2) * np.exp(-Y)
    v = np.cos(X) * (Y - 1) ** 2 * np.exp(-Y)
    return PhysicalVectorField(x, WallNormalGrid(y), u, v), psi


def test_stream_function_of_zero():
    x, y = annulus_grid(21)
    assert not np.any(stream_function(PhysicalVectorField.zeros(x, WallNormalGrid(y))).psi)


def test_stream_function_recovers_analytic():
    x = np.linspace(-3, 3, 61)
    y = np.linspace(1, 11, 40001)
    w, psi = _analytic_w(x, y)
    assert np.max(np.abs(stream_function(w).psi - psi)) <= 1e-8


def test_path_audit_agrees_on_fine_grid():
    # the horizontal leg is a trapezoid in x as well, so x needs resolving too
    x = np.linspace(-1, 1, 2001)
    y = np.linspace(1, 4, 3001)
    w, _ = _analytic_w(x, y)
    assert path_audit(w, stream_function(w).psi) <= 1e-6


def test_curl_of_stream_function_reproduces_field():
    x = np.linspace(-3, 3, 241)
    y = np.linspace(1, 11, 4001)
    w, _ = _analytic_w(x, y)
    u, v = curl_perp(stream_function(w).psi, x, y)
    scale = np.max(np.abs(w.u))
    assert np.max(np.abs(u - w.u)[:, 1:-1]) <= 1e-3 * scale
    assert np.max(np.abs(v - w.v)[1:-1, 1:-1]) <= 1e-3 * scale


def test_stream_function_rejects_divergent_field():
    x, y = annulus_grid(21)
    X, _ = np.meshgrid(x, y, indexing="ij")
    with pytest.raises(DivergenceResidualError):
        stream_function(PhysicalVectorField(x, WallNormalGrid(y), X, np.zeros_like(X)))


# --- truncation ------------------------------------------------------------------


def test_truncate_zero():
    x, y = annulus_grid(41)
    out = truncate_velocity(PhysicalVectorField.zeros(x, WallNormalGrid(y)), CHI)
    assert not np.any(out.u) and not np.any(out.v)


def test_truncation_support_and_far_field():
    x, y = annulus_grid()
    w = wall_field(x, y)
    t = truncate_velocity(w, CHI)
    r = _radius(x, y, 1.0)[2]
    inner, far = r < 1 / 3, r >= 2 / 3
    assert np.all(t.u[inner] == 0.0) and np.all(t.v[inner] == 0.0)
    assert np.array_equal(t.u[far], w.u[far]) and np.array_equal(t.v[far], w.v[far])
    tt = truncate_velocity(t, CHI)
    assert np.array_equal(tt.u[far], t.u[far])


def test_truncated_stream_function_is_exactly_solenoidal():
    x, y = annulus_grid()
    t = truncate_velocity(wall_field(x, y), CHI)
    curl = PhysicalVectorField.from_stream(x, t.ygrid, t.psi)
    assert divergence_residual(curl) <= 1e-10 * np.max(np.abs(curl.u))


def test_product_rule_field_divergence_second_order():
    # the steep cut-off keeps coarser grids pre-asymptotic
    res = []
    for n in (321, 641):
        x, y = annulus_grid(n)
        t = truncate_velocity(wall_field(x, y), CHI)
        res.append(divergence_residual(t))
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_truncate_pressure():
    x, y = annulus_grid(81)
    one = np.ones((81, 81))
    assert np.array_equal(truncate_pressure(one, x, y, CHI), CHI(x, y))
    assert not np.any(truncate_pressure(0 * one, x, y, CHI))
    q = np.random.default_rng(0).normal(size=(81, 81))
    far = _radius(x, y, 1.0)[2] >= 2 / 3
    assert np.array_equal(truncate_pressure(q, x, y, CHI)[far], q[far])


def test_stream_estimate_stable_under_refinement():
    ratios = []
    for n in (161, 321):
        x, y = annulus_grid(n)
        w = wall_field(x, y)
        psi = stream_function(w).psi
        r = _radius(x, y, 1.0)[2]
        ann = (r >= 1 / 3) & (r <= 2 / 3)
        c1 = max(np.max(np.abs(psi[ann])), np.max(np.abs(ddx(psi, x, 0)[ann])), np.max(np.abs(ddx(psi, y, 1)[ann])))
        c0 = np.max(np.hypot(w.u, w.v)[y[None, :].repeat(n, 0) <= 1 + 5 / 3])
        ratios.append(c1 / c0)
    assert abs(ratios[0] / ratios[1] - 1) <= 0.01


# --- TNS source -----------------------------------------------------------------


def test_tns_of_zero():
    x, y = annulus_grid(41)
    src = tns_source(PhysicalVectorField.zeros(x, WallNormalGrid(y)), np.zeros((41, 41)), CHI)
    assert src.is_zero()


def _c_norms(w, q, region):
    x, y = w.x, w.y
    d = [w.u, w.v]
    c2 = 0.0
    for comp in d:
        dx, dy = ddx(comp, x, 0), ddx(comp, y, 1)
        parts = [comp, dx, dy, ddx(dx, x, 0), ddx(dy, y, 1), ddx(dx, y, 1)]
        c2 = max(c2, max(np.max(np.abs(p[region])) for p in parts))
    sup2 = np.max((w.u**2 + w.v**2)[region])
    c1q = max(np.max(np.abs(p[region])) for p in (q, ddx(q, x, 0), ddx(q, y, 1)))
    return c2 + sup2 + c1q


def test_tns_source_from_oracle_shrinks_with_eps():
    peaks, consts = [], []
    for eps in (0.2, 0.1, 0.05):
        sol = oracle(eps=eps, n=2)
        w, q = sol.corner_field(), sol.corner_pressure()
        src = tns_source(w, q, CHI)
        r = _radius(w.x, w.y, 1.0)[2]
        mag = np.hypot(src.f1, src.f2)
        assert np.all(mag[(r < 1 / 3) | (r > 2 / 3)] == 0.0)
        peaks.append(np.max(mag))
        ann = (r >= 1 / 3) & (r <= 2 / 3)
        consts.append(peaks[-1] / _c_norms(w, np.nan_to_num(q), ann))
    assert peaks[0] > peaks[1] > peaks[2] > 0
    # empirical constant of the control estimate stays put along the sweep
    assert max(consts) / min(consts) <= 3.0


# --- force test function -----------------------------------------------------------


def test_force_test_function():
    x = np.linspace(-1, 1, 201)
    yg = WallNormalGrid(np.linspace(1, 3, 201))
    chi_d = BallCutoff(1.0, 0.2)
    zero = force_test_function((0, 0), 0.2, chi_d, x, yg)
    assert not np.any(zero.u) and not np.any(zero.v)
    e1 = force_test_function((1, 0), 0.2, chi_d, x, yg)
    r = _radius(x, yg.nodes, 1.0)[2]
    ball = r < 0.2
    assert np.all(e1.u[ball] == 1.0) and np.all(e1.v[ball] == 0.0)
    W = np.array([0.3, -0.4])
    base = d_norm(force_test_function(W, 0.2, chi_d, x, yg))
    big = d_norm(force_test_function(3 * W, 0.2, chi_d, x, yg))
    assert abs(big - 3 * base) <= 1e-10 * big
