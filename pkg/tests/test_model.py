"""Core types, geometry, kernel, and likelihood behaviour."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatcount.model import (
    AugmentedState,
    ConfigError,
    CountData,
    DataError,
    GammaPrior,
    MarkedObservations,
    ModelParams,
    PriorSpec,
    StateSpace,
    TrapArray,
    UniformPrior,
    conditional_loglik,
    distance_matrix,
    kernel,
    marginal_loglik,
    poisson_logpmf,
    state_space_from_traps,
    trap_intensity,
)

ORIGIN_TRAP = TrapArray(np.array([[0.0, 0.0]]))


def single_active_state(x, y, M=1, w=None):
    centers = np.tile([[x, y]], (M, 1)).astype(float)
    if w is None:
        w = np.zeros(M, dtype=np.uint8)
        w[0] = 1
    return AugmentedState(centers=centers, w=np.asarray(w))


# ---------------------------------------------------------------------------
# kernel


def test_kernel_frozen_values():
    assert kernel(0.0, 1.0) == 1.0
    assert abs(kernel(0.5, 0.5) - 0.6065306597126334) < 1e-15
    assert abs(kernel(1.0, 0.5) - 0.1353352832366127) < 1e-15
    # reference points quoted to 6 decimals
    assert abs(kernel(0.5, 0.5) - 0.606531) < 1e-6
    assert abs(kernel(1.0, 0.5) - 0.135335) < 1e-6


def test_kernel_at_sigma_multiples():
    for sigma in (0.25, 1.0, 3.7):
        assert math.isclose(float(kernel(sigma, sigma)), math.exp(-0.5), rel_tol=1e-12)
        assert math.isclose(float(kernel(2 * sigma, sigma)), math.exp(-2.0), rel_tol=1e-12)


def test_kernel_rejects_bad_args():
    with pytest.raises(ConfigError):
        kernel(1.0, 0.0)
    with pytest.raises(ConfigError):
        kernel(1.0, -1.0)
    with pytest.raises(ConfigError):
        kernel(1.0, math.inf)
    with pytest.raises(ConfigError):
        kernel(-0.1, 1.0)


@given(
    d1=st.floats(0.0, 50.0),
    gap=st.floats(1e-6, 50.0),
    sigma=st.floats(0.01, 20.0),
)
def test_kernel_strictly_decreasing_in_distance(d1, gap, sigma):
    lo = float(kernel(d1, sigma))
    hi = float(kernel(d1 + gap, sigma))
    if lo > 0.0:
        assert hi < lo
    else:
        assert hi == 0.0


@given(
    d=st.floats(1e-3, 50.0),
    s1=st.floats(0.01, 20.0),
    bump=st.floats(1e-6, 20.0),
)
def test_kernel_strictly_increasing_in_scale(d, s1, bump):
    lo = float(kernel(d, s1))
    hi = float(kernel(d, s1 + bump))
    if hi < 1.0:
        assert hi > lo or (lo == 0.0 and hi >= 0.0)
    assert hi >= lo


# ---------------------------------------------------------------------------
# Poisson log pmf conventions


def test_poisson_logpmf_zero_rate_convention():
    assert poisson_logpmf(0, 0.0) == 0.0
    assert poisson_logpmf(3, 0.0) == -math.inf


def test_poisson_logpmf_matches_direct_formula():
    val = poisson_logpmf(2, 2.5)
    assert math.isclose(val, 2 * math.log(2.5) - 2.5 - math.log(2.0), rel_tol=1e-14)


def test_poisson_logpmf_broadcasts():
    out = poisson_logpmf(np.array([0, 1, 2]), np.array([0.0, 1.0, 2.0]))
    assert out.shape == (3,)
    assert out[0] == 0.0
    assert math.isclose(out[1], -1.0, rel_tol=1e-14)


def test_poisson_logpmf_rejects_bad_input():
    with pytest.raises(ValueError):
        poisson_logpmf(-1, 1.0)
    with pytest.raises(ValueError):
        poisson_logpmf(1.5, 1.0)
    with pytest.raises(ValueError):
        poisson_logpmf(1, -0.5)


# ---------------------------------------------------------------------------
# geometry


def test_state_space_from_grid_example():
    traps = TrapArray.grid(15, 15, spacing=1.0)
    space = state_space_from_traps(traps, 3.0)
    assert (space.xmin, space.xmax, space.ymin, space.ymax) == (-3.0, 17.0, -3.0, 17.0)
    assert space.area == 400.0


def test_state_space_single_trap():
    space = state_space_from_traps(ORIGIN_TRAP, 1.0)
    assert (space.xmin, space.xmax, space.ymin, space.ymax) == (-1.0, 1.0, -1.0, 1.0)
    assert space.area == 4.0


def test_state_space_zero_buffer_is_exact_bbox():
    traps = TrapArray(np.array([[0.0, 1.0], [2.0, 5.0], [1.0, 3.0]]))
    space = state_space_from_traps(traps, 0.0)
    assert (space.xmin, space.xmax, space.ymin, space.ymax) == (0.0, 2.0, 1.0, 5.0)


def test_state_space_negative_buffer_rejected():
    with pytest.raises(ConfigError):
        state_space_from_traps(ORIGIN_TRAP, -0.5)


def test_state_space_degenerate_rejected():
    with pytest.raises(ConfigError):
        StateSpace(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        StateSpace(0.0, 1.0, 2.0, 1.0)


def test_state_space_contains_and_sampling():
    space = StateSpace(-1.0, 1.0, 0.0, 2.0)
    inside = space.contains(np.array([[0.0, 1.0], [-1.0, 0.0], [1.0, 2.0]]))
    assert inside.all()
    outside = space.contains(np.array([[1.001, 1.0], [0.0, -0.001]]))
    assert not outside.any()
    pts = space.sample_uniform(500, np.random.default_rng(1))
    assert pts.shape == (500, 2)
    assert space.contains(pts).all()


def test_trap_array_validation():
    with pytest.raises(DataError):
        TrapArray(np.zeros((0, 2)))
    with pytest.raises(DataError):
        TrapArray(np.zeros((3, 3)))
    with pytest.raises(DataError):
        TrapArray(np.array([[0.0, np.nan]]))
    with pytest.warns(UserWarning, match="duplicate"):
        TrapArray(np.array([[0.0, 0.0], [0.0, 0.0]]))


def test_trap_grid_layout():
    g = TrapArray.grid(2, 3, spacing=2.0, origin=(1.0, 1.0))
    assert g.R == 6
    assert g.coords[:, 0].min() == 1.0 and g.coords[:, 0].max() == 5.0
    assert g.coords[:, 1].min() == 1.0 and g.coords[:, 1].max() == 3.0
    with pytest.raises(ConfigError):
        TrapArray.grid(0, 3)


def test_median_nn_spacing():
    assert TrapArray.grid(3, 3, spacing=2.0).median_nn_spacing() == 2.0
    assert ORIGIN_TRAP.median_nn_spacing() == 1.0


def test_distance_matrix_values():
    traps = TrapArray(np.array([[0.0, 0.0], [3.0, 4.0]]))
    d = distance_matrix(traps, np.array([[0.0, 0.0]]))
    assert d.shape == (1, 2)
    assert d[0, 0] == 0.0 and d[0, 1] == 5.0


# ---------------------------------------------------------------------------
# data containers


def test_count_data_validation():
    ok = CountData(np.array([[0, 1], [2, 3]]))
    assert ok.R == 2 and ok.T == 2
    assert np.array_equal(ok.totals, [1, 5])
    # whole floats are accepted and coerced
    assert CountData(np.array([[1.0, 0.0]])).counts.dtype == np.int64
    with pytest.raises(DataError):
        CountData(np.array([[1.5, 0.0]]))
    with pytest.raises(DataError):
        CountData(np.array([[-1, 0]]))
    with pytest.raises(DataError):
        CountData(np.array([1, 2, 3]))


def test_marked_observations_validation():
    data = CountData(np.array([[2, 0], [1, 1]]))
    good = MarkedObservations(np.array([[[1, 0], [0, 1]]]))
    good.validate_against(data)
    with pytest.raises(DataError, match="shape"):
        MarkedObservations(np.ones((1, 3, 2), dtype=np.int64)).validate_against(data)
    with pytest.raises(DataError, match="exceed"):
        MarkedObservations(np.array([[[3, 0], [0, 0]]])).validate_against(data)
    with pytest.raises(DataError):
        MarkedObservations(np.array([[[-1, 0], [0, 0]]]))


def test_augmented_state_invariants():
    with pytest.raises(DataError):
        AugmentedState(centers=np.zeros((2, 2)), w=np.array([0, 2]))
    with pytest.raises(DataError):
        AugmentedState(centers=np.zeros((2, 2)), w=np.array([1, 0]),
                       z=np.ones((2, 1, 1), dtype=np.int64))
    with pytest.raises(DataError):
        AugmentedState(centers=np.zeros((2, 2)), w=np.array([0, 1]),
                       fixed=np.array([True, False]))
    # fixed rows must lead
    with pytest.raises(DataError):
        AugmentedState(centers=np.zeros((2, 2)), w=np.array([1, 1]),
                       fixed=np.array([False, True]))
    st_ok = AugmentedState(centers=np.zeros((3, 2)), w=np.array([1, 1, 0]),
                           fixed=np.array([True, False, False]))
    assert st_ok.M == 3 and st_ok.N == 2


def test_augmented_state_validate_against_space_and_counts():
    space = StateSpace(0.0, 1.0, 0.0, 1.0)
    bad = AugmentedState(centers=np.array([[2.0, 0.5]]), w=np.array([1]))
    with pytest.raises(DataError, match="outside"):
        bad.validate(space)
    data = CountData(np.array([[2]]))
    mismatched = AugmentedState(centers=np.array([[0.5, 0.5]]), w=np.array([1]),
                                z=np.array([[[1]]]))
    with pytest.raises(DataError, match="sum"):
        mismatched.validate(space, data)


# ---------------------------------------------------------------------------
# priors and params


def test_uniform_prior():
    p = UniformPrior(2.0)
    assert p.in_support(1.0) and p.in_support(2.0)
    assert not p.in_support(0.0) and not p.in_support(2.5)
    assert math.isclose(p.logpdf(1.0), -math.log(2.0))
    assert p.logpdf(3.0) == -math.inf
    assert p.mean == 1.0
    with pytest.raises(ConfigError):
        UniformPrior(0.0)
    with pytest.raises(ConfigError):
        UniformPrior(math.inf)


def test_gamma_prior():
    p = GammaPrior(13.0, 10.0)
    assert math.isclose(p.mean, 1.3)
    assert math.isclose(p.sd, math.sqrt(13.0) / 10.0)
    from scipy.stats import gamma as sp_gamma
    assert math.isclose(p.logpdf(1.1), sp_gamma.logpdf(1.1, 13.0, scale=0.1),
                        rel_tol=1e-12)
    assert p.logpdf(0.0) == -math.inf
    with pytest.raises(ConfigError):
        GammaPrior(0.0, 1.0)


def test_prior_spec_defaults_and_validation():
    priors = PriorSpec()
    assert isinstance(priors.sigma, UniformPrior) and priors.sigma.upper == 100.0
    assert isinstance(priors.lambda0, UniformPrior) and priors.lambda0.upper == 100.0
    with pytest.raises(ConfigError):
        PriorSpec(lambda0=GammaPrior(1.0, 1.0))


def test_model_params_validation():
    ModelParams(sigma=1.0, lambda0=0.0, phi=0.0)
    for bad in (dict(sigma=0.0, lambda0=1.0, phi=0.5),
                dict(sigma=1.0, lambda0=-0.1, phi=0.5),
                dict(sigma=1.0, lambda0=1.0, phi=1.5)):
        with pytest.raises(ConfigError):
            ModelParams(**bad)


# ---------------------------------------------------------------------------
# intensities and likelihoods


def test_trap_intensity_empty_population():
    state = AugmentedState(centers=np.zeros((3, 2)), w=np.zeros(3, dtype=np.uint8))
    lam = trap_intensity(ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)
    assert np.array_equal(lam, [0.0])


def test_trap_intensity_center_on_trap():
    state = single_active_state(0.0, 0.0)
    lam = trap_intensity(ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)
    assert math.isclose(lam[0], 0.5, rel_tol=1e-15)


def test_trap_intensity_two_centers_at_sigma():
    # both active centers sit one kernel scale from the trap
    centers = np.array([[0.5, 0.0], [-0.5, 0.0]])
    state = AugmentedState(centers=centers, w=np.array([1, 1]))
    lam = trap_intensity(ModelParams(0.5, 0.5, 0.5), state, ORIGIN_TRAP)
    assert abs(lam[0] - 2 * 0.5 * 0.606531) < 1e-6


def test_marginal_loglik_reference_value():
    state = single_active_state(0.0, 0.0)
    data = CountData(np.array([[2, 0, 0, 0, 0]]))  # total 2 over T=5
    val = marginal_loglik(data, ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)
    expected = 2 * math.log(2.5) - 2.5 - math.log(2.0)
    assert math.isclose(val, expected, rel_tol=0, abs_tol=1e-9)
    assert abs(val - -1.3605657168116352) < 1e-12


def test_marginal_loglik_zero_cases():
    empty = AugmentedState(centers=np.zeros((2, 2)), w=np.zeros(2, dtype=np.uint8))
    zero = CountData(np.zeros((1, 3), dtype=np.int64))
    assert marginal_loglik(zero, ModelParams(1.0, 0.5, 0.5), empty, ORIGIN_TRAP) == 0.0
    seen = CountData(np.array([[1, 0, 0]]))
    assert marginal_loglik(seen, ModelParams(1.0, 0.5, 0.5), empty, ORIGIN_TRAP) == -math.inf
    # lambda0 = 0 behaves like no population
    state = single_active_state(0.0, 0.0)
    assert marginal_loglik(zero, ModelParams(1.0, 0.0, 0.5), state, ORIGIN_TRAP) == 0.0
    assert marginal_loglik(seen, ModelParams(1.0, 0.0, 0.5), state, ORIGIN_TRAP) == -math.inf


def test_marginal_loglik_shape_mismatch():
    state = single_active_state(0.0, 0.0)
    data = CountData(np.zeros((2, 3), dtype=np.int64))
    with pytest.raises(DataError):
        marginal_loglik(data, ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)


def test_conditional_loglik_reference_value():
    state = single_active_state(0.0, 0.0)
    z = np.array([[[1]]])
    val = conditional_loglik(z, ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)
    assert math.isclose(val, math.log(0.5) - 0.5, rel_tol=1e-14)


def test_conditional_loglik_zero_and_inf_cases():
    empty = AugmentedState(centers=np.zeros((1, 2)), w=np.array([0]))
    z0 = np.zeros((1, 1, 2), dtype=np.int64)
    assert conditional_loglik(z0, ModelParams(1.0, 0.5, 0.5), empty, ORIGIN_TRAP) == 0.0
    z1 = np.array([[[1, 0]]])
    # an inactive candidate cannot produce events
    assert conditional_loglik(z1, ModelParams(1.0, 0.5, 0.5), empty, ORIGIN_TRAP) == -math.inf
    state = single_active_state(0.0, 0.0)
    with pytest.raises(DataError):
        conditional_loglik(np.zeros((2, 1, 1), dtype=np.int64),
                           ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)
    with pytest.raises(DataError):
        conditional_loglik(np.array([[[-1]]]),
                           ModelParams(1.0, 0.5, 0.5), state, ORIGIN_TRAP)


def test_marginal_equals_sum_over_allocations():
    # T=1, R=1: enumerating every latent allocation of n events between
    # the active candidates must reproduce the marginalised value
    from scipy.special import logsumexp

    traps = ORIGIN_TRAP
    centers = np.array([[0.3, 0.0], [-0.8, 0.2]])
    state = AugmentedState(centers=centers, w=np.array([1, 1]))
    params = ModelParams(0.7, 0.9, 0.5)
    for n in range(4):
        data = CountData(np.array([[n]]))
        target = marginal_loglik(data, params, state, traps)
        parts = []
        for a in range(n + 1):
            z = np.array([[[a]], [[n - a]]])
            parts.append(conditional_loglik(z, params, state, traps))
        assert math.isclose(float(logsumexp(parts)), target, rel_tol=1e-12)


# ---------------------------------------------------------------------------
# invariance properties


def _rigid(points, angle, dx, dy):
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + np.array([dx, dy])


@given(
    seed=st.integers(0, 10_000),
    angle=st.floats(-math.pi, math.pi),
    dx=st.floats(-50.0, 50.0),
    dy=st.floats(-50.0, 50.0),
)
def test_rigid_motion_invariance(seed, angle, dx, dy):
    rng = np.random.default_rng(seed)
    R, M = 4, 3
    tc = rng.uniform(-2, 2, size=(R, 2))
    centers = rng.uniform(-3, 3, size=(M, 2))
    w = np.array([1, 1, 0])
    counts = rng.integers(0, 4, size=(R, 2))
    params = ModelParams(0.8, 0.6, 0.5)
    data = CountData(counts)
    z = np.zeros((M, R, 2), dtype=np.int64)
    z[0] = rng.integers(0, 3, size=(R, 2))

    base_tr = TrapArray(tc)
    base_state = AugmentedState(centers=centers, w=w)
    moved_tr = TrapArray(_rigid(tc, angle, dx, dy))
    moved_state = AugmentedState(centers=_rigid(centers, angle, dx, dy), w=w)

    d0 = distance_matrix(base_tr, centers)
    d1 = distance_matrix(moved_tr, moved_state.centers)
    assert np.allclose(d0, d1, rtol=1e-12, atol=1e-9)

    m0 = marginal_loglik(data, params, base_state, base_tr)
    m1 = marginal_loglik(data, params, moved_state, moved_tr)
    assert math.isclose(m0, m1, rel_tol=1e-12, abs_tol=1e-9)

    c0 = conditional_loglik(z, params, base_state, base_tr)
    c1 = conditional_loglik(z, params, moved_state, moved_tr)
    assert math.isclose(c0, c1, rel_tol=1e-12, abs_tol=1e-9)


@given(
    seed=st.integers(0, 10_000),
    c=st.sampled_from([2, 3, 5]),
)
def test_effort_rate_tradeoff_invariance(seed, c):
    # totals depend on effort and baseline only through their product:
    # c-fold more occasions at baseline/c leaves the total-count
    # likelihood unchanged
    rng = np.random.default_rng(seed)
    R = 3
    tc = rng.uniform(-2, 2, size=(R, 2))
    traps = TrapArray(tc)
    centers = rng.uniform(-3, 3, size=(2, 2))
    state = AugmentedState(centers=centers, w=np.array([1, 1]))
    totals = rng.integers(0, 5, size=R)

    T = 4
    base = np.zeros((R, T), dtype=np.int64)
    base[:, 0] = totals
    scaled = np.zeros((R, T * c), dtype=np.int64)
    scaled[:, 0] = totals

    lam0 = 0.75
    v0 = marginal_loglik(CountData(base), ModelParams(0.9, lam0, 0.5), state, traps)
    v1 = marginal_loglik(CountData(scaled), ModelParams(0.9, lam0 / c, 0.5),
                         state, traps)
    assert math.isclose(v0, v1, rel_tol=1e-10, abs_tol=1e-10)
