"""Enumeration oracle and joint self-consistency check behaviour."""

import math

import numpy as np
import pytest

from spatcount.model import ConfigError, CountData, StateSpace, TrapArray
from spatcount.oracle import (
    BudgetError,
    allocation_marginal_check,
    brute_force_N_posterior,
    geweke_style_joint_check,
)
from spatcount.simulate import Scenario

ONE_TRAP = TrapArray(np.array([[0.0, 0.0]]))
UNIT_SPACE = StateSpace(-1.0, 1.0, -1.0, 1.0)


def test_pmf_is_a_distribution():
    data = CountData(np.array([[1, 0], [0, 1]]))
    traps = TrapArray(np.array([[0.0, 0.0], [1.0, 0.0]]))
    space = StateSpace(-1.0, 2.0, -1.0, 1.0)
    gp = brute_force_N_posterior(data, traps, space, 0.6, 0.8, 3, G=11)
    assert gp.pmf.shape == (4,)
    assert np.all(gp.pmf >= 0)
    assert abs(gp.pmf.sum() - 1.0) < 1e-10


def test_vanishing_rate_recovers_flat_prior():
    # with essentially no detection the data carry no information, so the
    # posterior over N must return the discrete-uniform prior
    data = CountData(np.zeros((1, 2), dtype=np.int64))
    gp = brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 1e-12, 3, G=11)
    flat = np.full(4, 0.25)
    assert gp.total_variation(flat) < 1e-6


def test_positive_count_excludes_empty_population():
    data = CountData(np.array([[2, 1]]))
    gp = brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 0.8, 2, G=11)
    assert gp.pmf[0] == 0.0
    assert gp.loglik[0] == -math.inf


def test_grid_refinement_agreement():
    data = CountData(np.array([[2, 1], [0, 1]]))
    traps = TrapArray(np.array([[0.0, 0.0], [1.0, 0.0]]))
    space = StateSpace(-1.0, 2.0, -1.0, 1.0)
    coarse = brute_force_N_posterior(data, traps, space, 0.6, 0.8, 2, G=21)
    fine = brute_force_N_posterior(data, traps, space, 0.6, 0.8, 2, G=41)
    assert coarse.total_variation(fine.pmf) < 1e-3


def test_trap_permutation_symmetry():
    counts = np.array([[2, 0], [1, 1], [0, 3]])
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    space = StateSpace(-1.0, 2.0, -1.0, 2.0)
    perm = np.array([2, 0, 1])
    a = brute_force_N_posterior(CountData(counts), TrapArray(coords),
                                space, 0.7, 0.5, 2, G=15)
    b = brute_force_N_posterior(CountData(counts[perm]), TrapArray(coords[perm]),
                                space, 0.7, 0.5, 2, G=15)
    assert a.total_variation(b.pmf) < 1e-12


def test_independent_quadrature_cross_check():
    # scipy adaptive integration over the same integrand
    from scipy.integrate import dblquad

    sigma, lam0 = 0.8, 0.6
    zero = CountData(np.zeros((1, 2), dtype=np.int64))
    gp = brute_force_N_posterior(zero, ONE_TRAP, UNIT_SPACE, sigma, lam0, 1, G=41)
    I0, _ = dblquad(
        lambda y, x: np.exp(-2 * lam0 * np.exp(-(x * x + y * y) / (2 * sigma**2))),
        -1, 1, -1, 1)
    I0 /= UNIT_SPACE.area
    assert abs(float(gp.pmf[1]) - I0 / (1 + I0)) < 2e-4

    one = CountData(np.array([[1, 0]]))
    gp1 = brute_force_N_posterior(one, ONE_TRAP, UNIT_SPACE, sigma, lam0, 1, G=41)

    def integrand(y, x):
        rate = 2 * lam0 * np.exp(-(x * x + y * y) / (2 * sigma**2))
        return rate * np.exp(-rate)

    I1, _ = dblquad(integrand, -1, 1, -1, 1)
    I1 /= UNIT_SPACE.area
    assert abs(float(np.exp(gp1.loglik[1])) - I1) / I1 < 1e-3


def test_budget_and_size_guards():
    data = CountData(np.zeros((1, 1), dtype=np.int64))
    with pytest.raises(BudgetError):
        brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 0.5, 3, G=41)
    with pytest.raises(ConfigError):
        brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 0.5, 4, G=11)
    with pytest.raises(ConfigError):
        brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 0.5, 2, G=1)
    with pytest.raises(ConfigError):
        brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.0, 0.5, 2, G=11)
    big = TrapArray.grid(3, 2)
    with pytest.raises(ConfigError):
        brute_force_N_posterior(CountData(np.zeros((6, 1), dtype=np.int64)),
                                big, UNIT_SPACE, 0.5, 0.5, 2, G=11)


def test_total_variation_shape_guard():
    data = CountData(np.zeros((1, 1), dtype=np.int64))
    gp = brute_force_N_posterior(data, ONE_TRAP, UNIT_SPACE, 0.5, 0.5, 2, G=11)
    with pytest.raises(ValueError):
        gp.total_variation(np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# allocation identity


def test_allocation_check_reference_cases():
    assert allocation_marginal_check(0, [0.0, 0.0])
    assert allocation_marginal_check(2, [0.3, 0.7])
    assert allocation_marginal_check(1, [0.0, 0.5])
    assert allocation_marginal_check(3, [1.2])
    assert allocation_marginal_check(3, [0.1, 2.0, 0.7])


def test_allocation_check_guards():
    with pytest.raises(ConfigError):
        allocation_marginal_check(4, [0.5])
    with pytest.raises(ConfigError):
        allocation_marginal_check(1, [])
    with pytest.raises(ConfigError):
        allocation_marginal_check(1, [0.5, -0.1])


# ---------------------------------------------------------------------------
# joint self-consistency harness


def tiny_joint_scenario():
    return Scenario(traps=TrapArray.grid(2, 2, spacing=1.0), buffer=1.5,
                    sigma=0.5, lambda0=0.5, N_true=3, T=2, seed=0)


def test_joint_check_is_deterministic():
    sc = tiny_joint_scenario()
    a = geweke_style_joint_check(sc, 200, algorithm="marginal", seed=3)
    b = geweke_style_joint_check(sc, 200, algorithm="marginal", seed=3)
    assert a.z_scores == b.z_scores
    assert a.sample_means == b.sample_means


def test_joint_check_reports_all_quantities():
    sc = tiny_joint_scenario()
    for algorithm in ("marginal", "conditional"):
        rep = geweke_style_joint_check(sc, 300, algorithm=algorithm, seed=1)
        assert set(rep.z_scores) == {"sigma", "lambda0", "phi", "N"}
        assert rep.algorithm == algorithm and rep.sweeps == 300
        assert all(math.isfinite(v) for v in rep.z_scores.values())
        assert rep.prior_means["sigma"] == pytest.approx(1.3)
        assert rep.prior_means["lambda0"] == pytest.approx(1.0)
        assert rep.prior_means["phi"] == 0.5
        assert rep.prior_means["N"] == 2.5
        assert rep.max_abs_z() == max(abs(v) for v in rep.z_scores.values())


def test_joint_check_guards():
    sc = tiny_joint_scenario()
    with pytest.raises(ConfigError):
        geweke_style_joint_check(sc, 50)
    with pytest.raises(ConfigError):
        geweke_style_joint_check(sc, 200, M=0)
    big = Scenario(traps=TrapArray.grid(3, 3), buffer=1.0, sigma=0.5,
                   lambda0=0.5, N_true=2, T=2)
    with pytest.raises(ConfigError):
        geweke_style_joint_check(big, 200)
    long_t = Scenario(traps=TrapArray.grid(2, 2), buffer=1.0, sigma=0.5,
                      lambda0=0.5, N_true=2, T=3)
    with pytest.raises(ConfigError):
        geweke_style_joint_check(long_t, 200)
