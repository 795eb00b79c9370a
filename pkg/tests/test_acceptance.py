"""Acceptance checks, one test per criterion.

Every test prints a single ``PASS``/``FAIL`` line with the measured value and
the pinned tolerance, then asserts. Run ``pytest tests/test_acceptance.py -v``
or ``python tests/test_acceptance.py`` for the report alone.

Criterion 1 runs at a reduced 96x144 resolution by default; set
``COLORBREGMAN_FULLSIZE=1`` to also time the 512x768 run.
"""
from __future__ import annotations

import math
import os
import time

import numpy as np
import pytest
import scipy.linalg

from colorbregman.admm import AdmmConfig, objective_value, solve_rof_with_prior
from colorbregman.bench import (
    SKIMAGE_NATURAL,
    ExperimentSpec,
    gen_demo1d,
    gen_nested_squares,
    jump_positions,
    method_means,
    run_experiment,
)
from colorbregman.bregman import StopRule, WeightMatrix, psnr, run
from colorbregman.dct import solve_screened_poisson
from colorbregman.functionals import is_subgradient, l1_infconv_bregman
from colorbregman.grid import TVFlavor, divergence, gradient, laplacian, shrink
from colorbregman.infconv import infconv_run

from oracles import l1_infconv_bruteforce, rof_oracle, ternary_signals

# pinned tolerances
BENCH_SHAPE = (96, 144)
BENCH_BUDGET_S = 300.0
MIN_GAIN_OVER_TV_DB = 0.5
DEMO_WINDOW = 2
DEMO_ITERATION = 6
DEMO_BUDGET_S = 5.0
MONOTONE_SLACK = 1e-6
RATE_FACTOR = 2.0
THEORY_BUDGET_S = 30.0
CONSENSUS_GAP = 0.05
CONSENSUS_ITERS = 30
L1_TOL = 1e-3
ADMM_OBJ_TOL = 1e-5
ADJOINT_TOL = 1e-12
DCT_TOL = 1e-9
PROX_TOL = 1e-10
SIGN_TOL = 1e-6

_REPORT = []


def report(capsys, label: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    _REPORT.append(line)
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)


# 1 ---------------------------------------------------------------------------


def _ordering(shape):
    spec = ExperimentSpec(
        images=tuple(f"skimage:{n}" for n in SKIMAGE_NATURAL),
        sigma=0.05, shape=shape, max_iters=6, tol=1e-3, seed=0,
    )
    t0 = time.perf_counter()
    rows = run_experiment(spec)
    elapsed = time.perf_counter() - t0
    means = {m: v for (m, _), v in method_means(rows).items()}
    return rows, means, elapsed


def test_c1_ordering_on_natural_images(capsys):
    rows, m, elapsed = _ordering(BENCH_SHAPE)
    ok_rows = len({r.image for r in rows}) >= 6 and all(r.status == "ok" for r in rows)
    chain = m["color_bregman"] >= m["infconv"] >= max(m["bregman"], m["tv"])
    gain = m["color_bregman"] - m["tv"]
    ok = ok_rows and chain and gain >= MIN_GAIN_OVER_TV_DB and elapsed <= BENCH_BUDGET_S
    report(capsys, "C1 PSNR ordering, 6 images at 96x144", ok,
           f"color {m['color_bregman']:.2f} >= infconv {m['infconv']:.2f} >= max(bregman {m['bregman']:.2f}, "
           f"tv {m['tv']:.2f}); gain over TV {gain:.2f} dB (need >= {MIN_GAIN_OVER_TV_DB}); "
           f"{elapsed:.0f} s (budget {BENCH_BUDGET_S:.0f} s)")
    assert ok


@pytest.mark.skipif(os.environ.get("COLORBREGMAN_FULLSIZE") != "1",
                    reason="full-resolution timing is opt-in (COLORBREGMAN_FULLSIZE=1)")
def test_c1_runtime_full_resolution(capsys):
    _, m, elapsed = _ordering((512, 768))
    ok = elapsed <= BENCH_BUDGET_S
    report(capsys, "C1 runtime at 512x768", ok, f"{elapsed:.0f} s (budget {BENCH_BUDGET_S:.0f} s)")
    assert ok


# 2 ---------------------------------------------------------------------------


def _demo_jumps(W, seed=0):
    clean, noisy = gen_demo1d(seed=seed)
    cfg = AdmmConfig(tol_primal=1e-5, tol_dual=1e-5, max_inner=20000, flavor=TVFlavor.ANISOTROPIC)
    u, _ = run(noisy, W, 24.0, StopRule.fixed_iterations(DEMO_ITERATION), cfg)
    return jump_positions(u[2])


def _in_window(jumps):
    return abs(jumps[0] - 50) <= DEMO_WINDOW and abs(jumps[1] - 100) <= DEMO_WINDOW


def test_c2_one_dimensional_demo(capsys):
    t0 = time.perf_counter()
    coupled = _demo_jumps(WeightMatrix.uniform(3, 1 / 3))
    elapsed = time.perf_counter() - t0
    separate = _demo_jumps(WeightMatrix.identity(3))
    ok = _in_window(coupled) and not _in_window(separate) and elapsed <= DEMO_BUDGET_S
    report(capsys, "C2 blue-channel jumps after 6 iterations", ok,
           f"coupled {coupled}, channelwise {separate}, target (50, 100) +/- {DEMO_WINDOW}; "
           f"{elapsed:.1f} s (budget {DEMO_BUDGET_S:.0f} s)")
    assert ok


# 3, 4 ------------------------------------------------------------------------


def _clean_squares():
    clean, _ = gen_nested_squares(sigma=0.0)
    states = []
    t0 = time.perf_counter()
    _, diags = run(clean, WeightMatrix.uniform(3, 1 / 3), 0.3, StopRule.fixed_iterations(50),
                   AdmmConfig(tol_primal=1e-6, tol_dual=1e-6, max_inner=20000), on_step=states.append)
    return states, diags, time.perf_counter() - t0


@pytest.fixture(scope="module")
def clean_squares_run():
    return _clean_squares()


def _first_rise(values):
    tol = MONOTONE_SLACK * values[0]
    return next((k + 2 for k, (a, b) in enumerate(zip(values, values[1:])) if b > a + tol), None)


def test_c3_convergence_theory(clean_squares_run, capsys):
    _, diags, elapsed = clean_squares_run
    r = np.array([d.residual for d in diags])
    dq = np.array([d.dq for d in diags])
    k = np.arange(1, len(r) + 1)
    rate = float(np.max(k * r**2) / r[0] ** 2)
    rise_r, rise_dq = _first_rise(r), _first_rise(dq)
    ok = rise_r is None and rise_dq is None and rate <= RATE_FACTOR and elapsed <= THEORY_BUDGET_S
    report(capsys, "C3 monotone residuals and C/sqrt(k) rate, k <= 50", ok,
           f"first rise of ||r|| at {rise_r}, of ||dq|| at {rise_dq} (slack {MONOTONE_SLACK:g}); "
           f"max k r_k^2 / r_1^2 = {rate:.3f} (limit {RATE_FACTOR:g}); {elapsed:.1f} s (budget {THEORY_BUDGET_S:.0f} s)")
    assert ok


def test_c4_common_subgradient(clean_squares_run, capsys):
    states, _, _ = clean_squares_run
    s = states[CONSENSUS_ITERS - 1]
    worst, excess = 0.0, 0.0
    for i in range(3):
        for j in range(3):
            rep = is_subgradient(s.u[i], s.q[j])
            worst = max(worst, rep.duality_gap / rep.tv)
            excess = max(excess, rep.dual_norm_excess)
    ok = worst <= CONSENSUS_GAP and excess <= 1e-6
    report(capsys, f"C4 pairwise subgradient certificates after {CONSENSUS_ITERS} iterations", ok,
           f"max gap / TV = {worst:.2e} (limit {CONSENSUS_GAP}), dual-norm excess {excess:.1e}")
    assert ok


# 5 ---------------------------------------------------------------------------


def test_c5_l1_infconv_closed_form(capsys):
    r = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        n = int(r.integers(1, 4))
        v = r.uniform(-2, 2, n)
        p = r.uniform(-1, 1, n)
        worst = max(worst, abs(l1_infconv_bregman(v, p) - l1_infconv_bruteforce(v, p)))
    ok = worst <= L1_TOL
    report(capsys, "C5 l1 infimal convolution vs grid search, 200 cases", ok,
           f"max error {worst:.2e} (tol {L1_TOL:g})")
    assert ok


# 6 ---------------------------------------------------------------------------


def test_c6_admm_matches_conic_oracle(capsys):
    alpha = 0.25
    cfg = AdmmConfig(tol_primal=1e-9, tol_dual=1e-9, max_inner=100000)
    worst_1d = 0.0
    count = 0
    for f in ternary_signals(5):
        u = solve_rof_with_prior(f, alpha, cfg).u
        _, ref = rof_oracle(f, alpha, "anisotropic")
        worst_1d = max(worst_1d, abs(objective_value(u, f, alpha, TVFlavor.ANISOTROPIC) - ref))
        count += 1
    r = np.random.default_rng(6)
    worst_2d = 0.0
    for _ in range(20):
        f = r.uniform(0, 1, (4, 4))
        u = solve_rof_with_prior(f, alpha, cfg).u
        _, ref = rof_oracle(f, alpha, "isotropic")
        worst_2d = max(worst_2d, abs(objective_value(u, f, alpha) - ref))
    ok = worst_1d <= ADMM_OBJ_TOL and worst_2d <= ADMM_OBJ_TOL
    report(capsys, f"C6 ADMM vs conic solver ({count} ternary signals, 20 random 4x4)", ok,
           f"max objective gap 1-D {worst_1d:.1e}, 2-D {worst_2d:.1e} (tol {ADMM_OBJ_TOL:g})")
    assert ok


# 7 ---------------------------------------------------------------------------


def _dense_laplacian(h, w):
    L = np.empty((h * w, h * w))
    for k in range(h * w):
        e = np.zeros(h * w)
        e[k] = 1.0
        L[:, k] = laplacian(e.reshape(h, w)).ravel()
    return L


def _prox_violation(v, s, t, flavor):
    """Distance from ``v - s`` to ``t`` times the subdifferential of the norm at ``s`` (pointwise)."""
    r = v - s
    if flavor is TVFlavor.ANISOTROPIC:
        on = s != 0
        return max(np.max(np.abs(r[on] - t * np.sign(s[on])), initial=0.0),
                   np.max(np.abs(r[~on]) - t, initial=0.0))
    ns = np.sqrt(s[0] ** 2 + s[1] ** 2)
    nr = np.sqrt(r[0] ** 2 + r[1] ** 2)
    on = ns > 0
    aligned = np.abs(r[:, on] - t * s[:, on] / ns[on])
    return max(np.max(aligned, initial=0.0), np.max(nr[~on] - t, initial=0.0))


def test_c7_operator_identities(capsys):
    r = np.random.default_rng(7)
    adj = 0.0
    for h, w in [(1, 1), (1, 17), (8, 8), (13, 5), (32, 24)]:
        u = r.standard_normal((h, w))
        g = r.standard_normal((2, h, w))
        adj = max(adj, abs(np.vdot(gradient(u), g) + np.vdot(u, divergence(g))))
    dct = 0.0
    for h, w in [(1, 1), (1, 16), (3, 7), (9, 9), (16, 16)]:
        rhs = r.standard_normal((h, w))
        a, b = r.uniform(0.1, 2), r.uniform(0, 5)
        A = a * np.eye(h * w) - b * _dense_laplacian(h, w)
        ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), rhs.ravel()).reshape(h, w)
        dct = max(dct, float(np.max(np.abs(solve_screened_poisson(rhs, a, b) - ref))))
    prox = 0.0
    for n in range(100):
        flavor = TVFlavor.ISOTROPIC if n % 2 else TVFlavor.ANISOTROPIC
        v = r.standard_normal((2, 4, 4)) * r.uniform(0.1, 3)
        t = r.uniform(0, 2)
        prox = max(prox, _prox_violation(v, shrink(v, t, flavor), t, flavor))
    ok = adj <= ADJOINT_TOL and dct <= DCT_TOL and prox <= PROX_TOL
    report(capsys, "C7 operator identities", ok,
           f"adjointness {adj:.1e} (tol {ADJOINT_TOL:g}), DCT vs LU {dct:.1e} (tol {DCT_TOL:g}), "
           f"prox optimality {prox:.1e} over 100 inputs (tol {PROX_TOL:g})")
    assert ok


# 8 ---------------------------------------------------------------------------


OPPOSITE = ((1, 1), (1, -1), (-1, 1))


def test_c8_sign_independence(capsys):
    _, noisy = gen_nested_squares(OPPOSITE, seed=0)
    flipped = noisy.copy()
    flipped[1] *= -1
    W = WeightMatrix.uniform(3, 1 / 3)
    cfg = AdmmConfig(tol_primal=1e-4, tol_dual=1e-4, strict=False)
    a, b = [], []
    infconv_run(noisy, W, 0.2, StopRule.fixed_iterations(3), cfg, on_step=a.append)
    infconv_run(flipped, W, 0.2, StopRule.fixed_iterations(3), cfg, on_step=b.append)
    others = max(float(np.max(np.abs(sa.u[[0, 2]] - sb.u[[0, 2]]))) for sa, sb in zip(a, b))
    own = max(float(np.max(np.abs(sa.u[1] + sb.u[1]))) for sa, sb in zip(a, b))
    ok = others <= SIGN_TOL and own <= SIGN_TOL
    report(capsys, "C8a negating one channel (infconv, 3 iterations)", ok,
           f"other channels change by {others:.1e}, negated channel mirrors to {own:.1e} (tol {SIGN_TOL:g})")
    assert ok


def test_c8_infconv_beats_color_bregman_on_opposite_signs(capsys):
    clean, noisy = gen_nested_squares(OPPOSITE, seed=0)
    W = WeightMatrix.uniform(3, 1 / 3)
    cfg = AdmmConfig(tol_primal=1e-4, tol_dual=1e-4, strict=False)
    best = {"color_bregman": -math.inf, "infconv": -math.inf}
    for alpha in (0.05, 0.1, 0.2, 0.4):
        for name, engine in (("color_bregman", run), ("infconv", infconv_run)):
            ps = []
            engine(noisy, W, alpha, StopRule.fixed_iterations(5), cfg, on_step=lambda s: ps.append(psnr(s.u, clean)))
            best[name] = max(best[name], max(ps))
    ok = best["infconv"] > best["color_bregman"]
    report(capsys, "C8b opposite-sign squares, best PSNR over alpha and 5 iterations", ok,
           f"infconv {best['infconv']:.2f} dB vs color Bregman {best['color_bregman']:.2f} dB")
    assert ok


if __name__ == "__main__":
    import logging

    logging.disable(logging.WARNING)
    checks = [
        test_c1_ordering_on_natural_images,
        test_c2_one_dimensional_demo,
        test_c5_l1_infconv_closed_form,
        test_c6_admm_matches_conic_oracle,
        test_c7_operator_identities,
        test_c8_sign_independence,
        test_c8_infconv_beats_color_bregman_on_opposite_signs,
    ]
    for check in checks:
        try:
            check(None)
        except AssertionError:
            pass
    clean_run = _clean_squares()
    for check in (test_c3_convergence_theory, test_c4_common_subgradient):
        try:
            check(clean_run, None)
        except AssertionError:
            pass
