import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from colorbregman.admm import AdmmConfig, InnerSolverError, balance_penalty, objective_value, solve_rof_with_prior
from colorbregman.functionals import is_subgradient
from colorbregman.grid import TVFlavor, divergence, dual_norm

from oracles import rof_oracle

TIGHT = AdmmConfig(tol_primal=1e-8, tol_dual=1e-8, max_inner=50000)


def test_config_validation():
    with pytest.raises(ValueError):
        AdmmConfig(mu0=0.0)
    with pytest.raises(ValueError):
        AdmmConfig(tol_primal=-1.0)
    with pytest.raises(ValueError):
        AdmmConfig(max_inner=0)
    assert AdmmConfig(flavor="anisotropic").flavor is TVFlavor.ANISOTROPIC


def test_balance_penalty_rules():
    assert balance_penalty(1.0, 100.0, 1.0) == 2.0
    assert balance_penalty(1.0, 1.0, 100.0) == 0.5
    assert balance_penalty(1.0, 5.0, 1.0) == 1.0
    assert balance_penalty(1e4, 100.0, 1.0) == 1e4
    assert balance_penalty(1e-4, 1.0, 100.0) == 1e-4


def test_constant_image_is_fixed():
    sol = solve_rof_with_prior(np.full((6, 5), 0.7), 0.3)
    np.testing.assert_allclose(sol.u, 0.7, atol=1e-12)
    assert sol.converged.all()


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_rof_with_prior(np.ones((3, 3)), 0.0)
    with pytest.raises(ValueError):
        solve_rof_with_prior(np.array([[np.nan, 1.0]]), 1.0)


@pytest.mark.parametrize("flavor", ["isotropic", "anisotropic"])
def test_matches_conic_oracle_on_small_images(flavor, rng):
    cfg = AdmmConfig(tol_primal=1e-8, tol_dual=1e-8, max_inner=50000, flavor=flavor)
    for _ in range(3):
        f = rng.uniform(0, 1, (5, 4))
        sol = solve_rof_with_prior(f, 0.15, cfg)
        ref_u, ref_obj = rof_oracle(f, 0.15, flavor)
        assert objective_value(sol.u, f, 0.15, flavor) == pytest.approx(ref_obj, abs=1e-6)
        np.testing.assert_allclose(sol.u, ref_u, atol=1e-4)


def test_two_level_signal_closed_form():
    # a single jump of height 1 shrinks by 2*alpha/n on each side
    f = np.array([0.0] * 4 + [1.0] * 4)
    sol = solve_rof_with_prior(f, 0.5, TIGHT)
    np.testing.assert_allclose(sol.u[0], [0.125] * 4 + [0.875] * 4, atol=1e-6)


def test_dual_field_certifies_solution(rng):
    f = rng.uniform(0, 1, (8, 8))
    sol = solve_rof_with_prior(f, 0.2, TIGHT)
    np.testing.assert_allclose(sol.u - f, 0.2 * divergence(sol.q_out), atol=1e-6)
    assert np.max(dual_norm(sol.q_out, "isotropic")) <= 1 + 1e-9
    assert is_subgradient(sol.u, sol.q_out, tol=1e-5).ok


@given(st.integers(0, 10**6), st.floats(0.05, 1.0))
def test_stacked_call_equals_separate_calls(seed, alpha):
    f = np.random.default_rng(seed).uniform(0, 1, (3, 5, 6))
    cfg = AdmmConfig(tol_primal=1e-6, tol_dual=1e-6)
    stacked = solve_rof_with_prior(f, alpha, cfg)
    for c in range(3):
        single = solve_rof_with_prior(f[c], alpha, cfg)
        np.testing.assert_array_equal(stacked.u[c], single.u)
        assert stacked.inner_iters[c] == single.inner_iters


def test_warm_start_from_solution_converges_immediately(rng):
    f = rng.uniform(0, 1, (8, 8))
    cfg = AdmmConfig(tol_primal=1e-6, tol_dual=1e-6)
    first = solve_rof_with_prior(f, 0.2, cfg)
    again = solve_rof_with_prior(f, 0.2, cfg, warm=first.warm_start())
    assert again.inner_iters < first.inner_iters
    np.testing.assert_allclose(again.u, first.u, atol=1e-4)


def test_non_convergence_is_reported(rng, caplog):
    f = rng.uniform(0, 1, (2, 16, 16))
    cfg = AdmmConfig(tol_primal=1e-12, tol_dual=1e-12, max_inner=3)
    with pytest.raises(InnerSolverError) as info:
        solve_rof_with_prior(f, 0.3, cfg)
    assert info.value.channel == 0 and info.value.iterations == 3
    with caplog.at_level(logging.WARNING):
        sol = solve_rof_with_prior(f, 0.3, AdmmConfig(tol_primal=1e-12, tol_dual=1e-12, max_inner=3, strict=False))
    assert not sol.converged.any()
    assert "did not converge" in caplog.text


def test_penalty_is_clamped(rng):
    f = rng.uniform(0, 1, (8, 8))
    sol = solve_rof_with_prior(f, 0.2, AdmmConfig(mu0=1e-4))
    assert 1e-4 <= sol.mu <= 1e4
    sol = solve_rof_with_prior(f, 0.2, AdmmConfig(mu0=9e3))
    assert 1e-4 <= sol.mu <= 1e4
