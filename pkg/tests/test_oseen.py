import numpy as np
import pytest
import sympy as sp

from wallflow.collocation import collocation_mode, interpolate_to
from wallflow.fields import WallNormalGrid, WaveNumberGrid
from wallflow.oseen import (DegenerateModeError, ModeSolver, SourcePair, SourceTailError, assemble_velocity,
                            homogeneous_roots, physical_rhs, solve_all_modes, solve_mode)
from wallflow.suites import ManufacturedMode

YG = WallNormalGrid.stretched(100.0, 0.01, 8.0, 1.03)
KS = [1 / 64, -0.1, 0.5, -1.0, 3.0, -8.0, 20.0, 64.0]


def test_roots_at_unit_wavenumber():
    lam = sp.symbols("lam")
    # e^{lam y} in the homogeneous (omega, eta) pair: lam^2 = k^2 - i k at k = 1
    sols = [complex(s) for s in sp.solve(sp.Eq(lam**2, 1 - sp.I), lam)]
    decaying = max(sols, key=lambda s: s.real)
    lo, la = homogeneous_roots(1.0)
    assert lo == pytest.approx(decaying, abs=1e-14)
    assert lo == pytest.approx(1.0987 - 0.4551j, abs=1e-4)
    assert la == 1.0


def test_roots_conjugate_and_large_k():
    k = np.array([0.3, 2.0, 50.0])
    a, _ = homogeneous_roots(k)
    b, _ = homogeneous_roots(-k)
    assert np.allclose(b, np.conj(a), atol=1e-14)
    big, _ = homogeneous_roots(np.array([1e3, 1e5]))
    assert np.allclose(big / np.array([1e3, 1e5]), 1.0, atol=1e-3)


def test_zero_wavenumber_rejected():
    with pytest.raises(DegenerateModeError):
        homogeneous_roots(0.0)
    with pytest.raises(ValueError):
        SourcePair(0.0, YG, np.zeros(len(YG)), np.zeros(len(YG)))


def test_zero_source_gives_zero_state():
    st = solve_mode(2.0, np.zeros((4, len(YG))), YG)
    assert not np.any(st.as_array())
    u, v = assemble_velocity(st)
    assert not np.any(u) and not np.any(v)


@pytest.mark.parametrize("k", KS)
def test_manufactured_mode_recovered(k, rng):
    mm = ManufacturedMode(k, rng.normal(size=4) + 1j * rng.normal(size=4))
    st = solve_mode(k, mm.rhs(YG.nodes), YG, tail_tol=None)
    ex = mm.state(YG.nodes)
    assert np.max(np.abs(st.as_array() - ex)) <= 1e-6 * np.max(np.abs(ex))
    u, v = assemble_velocity(st)
    assert np.max(np.abs(u - (-ex[1] + ex[2]))) <= 1e-6 * np.max(np.abs(ex))
    assert max(abs(u[0]), abs(v[0])) <= 1e-10 * np.max(np.abs(ex))


@pytest.mark.parametrize("k", [1 / 64, 0.1, 1.0, -3.0, 8.0, 64.0])
def test_agrees_with_dense_collocation(k):
    mm = ManufacturedMode(k, [1.0, 0.5j, -0.3, 0.2 + 0.1j])
    Z = solve_mode(k, mm.rhs(YG.nodes), YG, tail_tol=None).as_array()
    yc, Zc = collocation_mode(k, mm.rhs, 30.0, 160)
    sel = YG.nodes <= 10.0
    Zi = interpolate_to(yc, Zc, YG.nodes[sel])
    assert np.max(np.abs(Z[:, sel] - Zi)) <= 1e-6 * np.max(np.abs(Zi))


def _smooth_source(k, seed=0):
    rng = np.random.default_rng(seed)
    y = YG.nodes
    prof = np.where(np.abs(y - 3) < 1.5, (1 - ((y - 3) / 1.5) ** 2) ** 8, 0.0)
    q0 = (rng.normal() + 1j * rng.normal()) * prof
    q1 = (rng.normal() + 1j * rng.normal()) * prof * (y - 1)
    return physical_rhs(q0, q1)


def test_scheme_residual_and_fd_convergence():
    k = np.array([0.5, -2.0, 10.0])
    S = np.stack([_smooth_source(kk, i) for i, kk in enumerate(k)], axis=1)
    sv = ModeSolver(k, YG)
    Z = sv.solve(S)
    assert sv.scheme_residual(Z, S) <= 1e-8
    # centred-difference residual is second order: halving the core spacing cuts it ~4x
    res = []
    for h in (0.02, 0.01):
        yg = WallNormalGrid.stretched(100.0, h, 8.0, 1.03)
        Sg = np.stack([physical_rhs(*_rhs_on(yg, kk, i)) for i, kk in enumerate(k)], axis=1)
        sg = ModeSolver(k, yg)
        res.append(sg.fd_residual(sg.solve(Sg), Sg))
    assert 3.0 <= res[0] / res[1] <= 5.0


def _rhs_on(yg, k, seed):
    rng = np.random.default_rng(seed)
    y = yg.nodes
    prof = np.where(np.abs(y - 3) < 1.5, (1 - ((y - 3) / 1.5) ** 2) ** 8, 0.0)
    return ((rng.normal() + 1j * rng.normal()) * prof, (rng.normal() + 1j * rng.normal()) * prof * (y - 1))


def test_linearity_and_conjugate_symmetry():
    k = 1.7
    S1, S2 = _smooth_source(k, 1), _smooth_source(k, 2)
    a, b = 2.0 - 1.0j, 0.3
    Z1 = solve_mode(k, S1, YG).as_array()
    Z2 = solve_mode(k, S2, YG).as_array()
    Z12 = solve_mode(k, a * S1 + b * S2, YG).as_array()
    assert np.max(np.abs(Z12 - (a * Z1 + b * Z2))) <= 1e-10 * np.max(np.abs(Z12))
    Zm = solve_mode(-k, np.conj(S1), YG).as_array()
    assert np.allclose(Zm, np.conj(Z1), rtol=0, atol=1e-12 * np.max(np.abs(Z1)))


@pytest.mark.parametrize("k", [0.05, 1.0, 6.0])
def test_profiles_decay_beyond_support(k):
    mm = ManufacturedMode(k, [1.0, 1.0j, 0.5, -0.5], y0=4.0, width=2.8)
    S = mm.rhs(YG.nodes)
    # add a homogeneous-exciting part: a source whose solution does not vanish above the support
    S[1] += np.where(np.abs(YG.nodes - 3) < 1, (1 - (YG.nodes - 3) ** 2) ** 6, 0.0)
    Z = solve_mode(k, S, YG, tail_tol=None).as_array()
    y = YG.nodes
    top = 4.0 + 2.8
    j0 = np.searchsorted(y, top)
    lam, lap = homogeneous_roots(k)
    rate = min(lam.real, lap)
    mag = np.max(np.abs(Z), axis=0)
    sel = (y > top) & (mag > 1e-280)
    bound = 2 * mag[j0] * np.exp(-rate * (y[sel] - y[j0]))
    assert np.all(mag[sel] <= bound)


def test_source_tail_rejected():
    S = np.zeros((4, len(YG)), complex)
    S[0, -3:] = 1.0
    with pytest.raises(SourceTailError):
        solve_mode(1.0, S, YG)


def test_solve_all_modes_decoupled_and_order_independent():
    kg = WaveNumberGrid.clustered(0.05, 8.0, 1.3, 0.5)
    nk = len(kg)
    S = np.zeros((4, nk, len(YG)), complex)
    assert not np.any(solve_all_modes(kg, YG, S).Z)
    j = nk // 3
    S[:, j] = _smooth_source(kg.nodes[j])
    Z = solve_all_modes(kg, YG, S).Z
    others = np.ones(nk, bool)
    others[j] = False
    assert not np.any(Z[:, others])
    S2 = np.stack([np.stack([_smooth_source(kk, i)[c] for i, kk in enumerate(kg.nodes)]) for c in range(4)])
    ref = solve_all_modes(kg, YG, S2, chunk=1).Z
    perm = np.random.default_rng(3).permutation(nk)
    again = solve_all_modes(kg, YG, S2, order=perm, chunk=1).Z
    assert np.array_equal(ref, again)
