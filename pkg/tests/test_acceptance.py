"""Acceptance criteria at their stated tolerances; one PASS/FAIL line each.

Run directly (``python tests/test_acceptance.py``) or through pytest, where the
lines are repeated in the terminal summary.
"""

import numpy as np

from wallflow.alpha import decay_report
from wallflow.fields import SpectralField, WallNormalGrid, WaveNumberGrid
from wallflow.norms import NormParams, decay_exponent, fit_ls_decay, weight
from wallflow.obstacle import compute_force, epsilon_sweep
from wallflow.pipelines import PipelineConfig, run_contraction
from wallflow.suites import antisymmetry_batch, collocation_batch, hardy_batch, manufactured_batch
from helpers import SECONDS, alpha_fixture, fixture_amplitude, oracle, report, weak_strong


def test_criterion_01_decay_rate():
    rep = decay_report(alpha_fixture())
    secs = SECONDS.get("amplitude", 0.0) + SECONDS.get("solve", 0.0)
    vel, grad = rep["velocity_slope"], rep["gradient_slope"]
    ok_v = abs(vel + 1.5) <= 0.15
    ok_g = abs(grad + 2.5) <= 0.25
    ok_t = secs <= 300
    report(1, "velocity sup-norm slope", ok_v, f"{vel:.4f} vs -1.5 +- 0.15")
    report(1, "gradient sup-norm slope", ok_g, f"{grad:.4f} vs -2.5 +- 0.25")
    report(1, "runtime at default resolution", ok_t, f"{secs:.0f} s vs 300 s")
    assert ok_v and ok_g and ok_t


def test_criterion_02_weighted_profile_decay():
    kg = WaveNumberGrid.clustered(1e-5, 64.0, 1.08, 0.25, 8.0)
    yg = WallNormalGrid.stretched(1000.0, 0.05, 3.0, 1.04)
    worst = 0.0
    for a, p, q in [(4, 0.5, 0), (4, 0.5, 1), (3, 1.5, 1)]:
        prof = SpectralField(kg, yg, weight(NormParams(a, p, q), kg.nodes, yg.nodes).astype(complex), "u")
        for s in (2, np.inf):
            slope = fit_ls_decay(prof, s).slope
            dev = abs(slope + decay_exponent(s, p, q))
            worst = max(worst, dev)
            report(2, f"L^{s} slope, (alpha,p,q)=({a},{p},{q})", dev <= 0.1,
                   f"{slope:.4f} vs {-decay_exponent(s, p, q)} +- 0.1")
    assert worst <= 0.1


def test_criterion_03_hardy():
    rep = hardy_batch()
    report(3, "50 random wall fields below the constant", rep["bound_ok"],
           f"max ratio {rep['max_ratio']:.4f} vs 4.2")
    report(3, "batch excess shrinks under 2x refinement", rep["excess_shrinks"],
           f"{rep['excess'][0]:.2e} -> {rep['excess'][1]:.2e}")
    assert rep["passed"]


def test_criterion_04_linear_solver():
    man, col = manufactured_batch(), collocation_batch()
    report(4, "manufactured modes, |k| in [1/64, 64]", man["passed"], f"{man['max_error']:.2e} vs 1e-6")
    report(4, "dense collocation agreement", col["passed"], f"{col['max_error']:.2e} vs 1e-6")
    assert man["passed"] and col["passed"]


def test_criterion_05_energy_identity_and_a_priori():
    fixtures = {"eps=0.1 n=2": {}, "eps=0.05 n=2": {"eps": 0.05}, "eps=0.1 n=3": {"n": 3},
                "eps=0.1 Stokes": {"convective": False}}
    ok = True
    for name, kw in fixtures.items():
        sol = oracle(**kw)
        sig = compute_force(sol)
        defect = sol.energy_defect()
        ratio = sol.d_norm / np.sqrt(np.linalg.norm(sig))
        ok &= report(5, f"energy identity, {name}", defect <= 0.05, f"{defect:.2e} vs 0.05")
        ok &= report(5, f"a-priori bound, {name}", ratio <= 1.03, f"{ratio:.4f} vs 1.03")
    assert ok


def test_criterion_06_force_methods_and_refinement():
    sol = oracle()
    a, b = compute_force(sol, "test-function"), compute_force(sol, "stress-integral")
    agree = np.linalg.norm(a - b) / np.linalg.norm(a)
    coarse, fine = compute_force(oracle(cells=16.0)), compute_force(oracle(cells=16.0, refine=2))
    change = np.linalg.norm(fine - coarse) / np.linalg.norm(coarse)
    ok1 = report(6, "stress integral vs test function", agree <= 0.05, f"{agree:.2e} vs 0.05")
    ok2 = report(6, "force change under 2x refinement", change <= 0.02, f"{change:.4f} vs 0.02")
    assert ok1 and ok2


def test_criterion_07_epsilon_sweep():
    rep = epsilon_sweep([0.2, 0.1, 0.05])
    dn = [r["d_norm"] for r in rep["rows"]]
    sg = [r["sigma_norm"] for r in rep["rows"]]
    ok1 = report(7, "D-norm decreasing over eps (5% slack)", rep["d_norm_decreasing"],
                 " > ".join(f"{v:.4f}" for v in dn))
    ok2 = report(7, "force magnitude trending to zero", sg[0] > sg[1] > sg[2],
                 " > ".join(f"{v:.4f}" for v in sg))
    assert ok1 and ok2


def test_criterion_08_weak_strong_default():
    base, fine = weak_strong(16), weak_strong(16, refine=2)
    ok1 = report(8, "weak-strong difference, eps=0.05h, n=16", base.passed,
                 f"{base.relative_l2:.4f} vs 0.10")
    ok2 = report(8, "difference decreases under 2x refinement", fine.relative_l2 < base.relative_l2,
                 f"{base.relative_l2:.4f} -> {fine.relative_l2:.4f}")
    assert ok1 and ok2


def test_criterion_08_weak_strong_small_box_fixture():
    # the n=3 box truncation alone leaves a ~50% discrepancy; see the README
    rep = weak_strong(3)
    ok = report(8, "weak-strong difference, eps=0.05h, n=3", rep.passed, f"{rep.relative_l2:.4f} vs 0.10")
    assert ok


def test_criterion_09_contraction():
    cfg = PipelineConfig("contraction", physical={"amplitude": fixture_amplitude()})
    rep = run_contraction(cfg)
    ok1 = report(9, "Picard ratio at the fixture amplitude", rep["rho_ok"], f"{rep['rho_a0']:.4f} vs 0.25")
    ok2 = report(9, "growth at 2a0, 4a0 within 1.6x of linear", rep["linear_ok"],
                 ", ".join(f"{g:.3f}" for g in rep["growth"][1:]) + " vs [1.25, 3.2], [2.5, 6.4]")
    assert ok1 and ok2


def test_criterion_10_trilinear_antisymmetry():
    rep = antisymmetry_batch()
    lo, hi = min(rep["ratios"]), max(rep["ratios"])
    ok = report(10, "defect ratio under 2x refinement, 10 triples", rep["passed"],
                f"{lo:.3f}..{hi:.3f} vs 4 +- 30%")
    assert ok


if __name__ == "__main__":
    import sys
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
