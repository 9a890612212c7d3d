import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadrl.env_model import (
    CalibrationError,
    ConfigurationError,
    DyadParams,
    QLearningConfig,
    approx_optimal_policy,
    calibrate_burden_scaling,
    impute_population,
    impute_treatment_effects,
    solve_c_treat,
)
from dyadrl.env_model.calibration import TAU_RULES, simulate_burden
from dyadrl.env_model.clock import N_DAYS, SLOTS_PER_WEEK
from dyadrl.env_model.optimal import N_JOINT, N_TYPES, VALID_ACTIONS, Discretizer, fitted_q_iteration


def test_burden_standardization_on_fresh_streams():
    p = calibrate_burden_scaling(DyadParams(), np.random.default_rng(0))
    assert p.aya_sd > 0 and p.care_sd > 0
    fresh = np.random.default_rng(12345)
    for th, om, period, mean, sd in (
        ((p.aya_th0, p.aya_th1, p.aya_th2, p.aya_th3), p.aya_omega, SLOTS_PER_WEEK, p.aya_mean, p.aya_sd),
        ((p.care_th0, p.care_th1, p.care_th2, p.care_th3), p.care_omega, N_DAYS, p.care_mean, p.care_sd),
    ):
        z = (simulate_burden(th, om, period, 10_000, 64, fresh) - mean) / sd
        assert abs(z.mean()) < 0.05
        assert abs(z.std() - 1) < 0.05


def test_burden_paths_nonnegative():
    raw = simulate_burden((0.2, 13 / 14, 1.0, 0.2), 2.4, 14, 500, 4, np.random.default_rng(1))
    assert raw.min() >= 0.0


def test_impute_examples():
    p = DyadParams(am_b1=-0.5, rel_b1=0.8, care_b1=0.4)
    q = impute_treatment_effects(p, 0.3)
    assert q.am_tau0 == pytest.approx(0.15)
    assert q.am_tau1 == pytest.approx(0.15)
    assert q.am_tau2 == pytest.approx(-0.15)
    assert q.care_tau0 == pytest.approx(-0.12)
    assert impute_treatment_effects(p, 0.5).rel_tau0 == pytest.approx(0.4)
    zero = impute_treatment_effects(p, 0.0)
    assert all(getattr(zero, tau) == 0.0 for tau, _, _ in TAU_RULES)


@given(st.floats(0.0, 5.0), st.floats(-2, 2))
def test_impute_signs_follow_rules(c, b1):
    q = impute_treatment_effects(DyadParams(am_b1=b1, pm_b1=b1, care_b1=b1, rel_b1=b1), c)
    for tau, _, sign in TAU_RULES:
        assert getattr(q, tau) == pytest.approx(sign * c * abs(b1))


def test_impute_population_heterogeneity(small_pop):
    a = impute_population(small_pop, 0.5, hetero_seed=3)
    b = impute_population(small_pop, 0.5, hetero_seed=3)
    assert np.array_equal(a.table, b.table)
    flat = impute_population(small_pop, 0.5, heterogeneity=False)
    assert np.allclose(flat.column("am_tau0"), 0.5 * np.abs(small_pop.column("am_b1")))
    # Heterogeneity scales with c_treat through shared normals.
    a2 = impute_population(small_pop, 1.0, hetero_seed=3)
    dev1 = a.column("am_tau0") - flat.column("am_tau0")
    dev2 = a2.column("am_tau0") - 2 * flat.column("am_tau0")
    assert np.allclose(dev2, 2 * dev1)
    with pytest.raises(ConfigurationError):
        impute_population(small_pop, -1.0)


def test_impute_zero_beta_skips_heterogeneity(small_pop):
    pop = small_pop.replace(rel_b1=np.where(np.arange(len(small_pop)) == 0, 0.0, small_pop.column("rel_b1")))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = impute_population(pop, 0.5, hetero_seed=1)
    assert out.column("rel_tau0")[0] == 0.0
    assert any("rel_b1" in str(w.message) for w in caught)


@given(st.floats(0.2, 3.0), st.floats(0.1, 1.0))
def test_solve_c_treat_recovers_linear_root(slope, target):
    res = solve_c_treat(lambda c: slope * c, target, tol=0.005, c_max=1e4)
    assert abs(res.achieved - target) <= 0.005
    assert res.c_treat == pytest.approx(target / slope, abs=0.005 / slope + 1e-9)


def test_solve_c_treat_unreachable():
    with pytest.raises(CalibrationError):
        solve_c_treat(lambda c: min(c, 0.2), 0.5, c_max=8)
    with pytest.raises(ConfigurationError):
        solve_c_treat(lambda c: c, 0.0)


# ---------------------------------------------------------------- offline Q-learning

def test_fitted_q_hand_solved_chain():
    """Two logged paths from state 0: stop with reward 1, or move to state 3 and collect 2."""
    s = np.array([0, 0, 3])
    a = np.array([0, 1, 0])
    r = np.array([1.0, 0.0, 2.0])
    s_next = np.array([0, 3, 0])
    terminal = np.array([True, False, True])
    q, sweeps, ok, _ = fitted_q_iteration(s, a, r, s_next, terminal, 0.95, 50, 1e-12)
    assert ok
    assert q[0, 0] == pytest.approx(1.0)
    assert q[0, 1] == pytest.approx(0.95 * 2.0)
    assert q[3, 0] == pytest.approx(2.0)
    assert q[0, 2] == 0.0  # unvisited
    assert np.isneginf(q[2, 4])  # evening decision: relationship/carepartner actions invalid


def test_discretizer_clips_to_edge_bins():
    d = Discretizer((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    lo = d.index(0, -5.0, -5.0, -5.0, 0, 0)
    hi = d.index(1, 5.0, 5.0, 5.0, 1, 2)
    assert lo == 0
    assert hi == 2 * 10 * 10 * 10 * 2 * N_TYPES - 1


def test_approx_optimal_policy_valid_actions(small_pop):
    pop = impute_population(small_pop, 1.0)
    pol = approx_optimal_policy(pop, np.random.default_rng(0), QLearningConfig(n_trajectories=50))
    types = np.arange(len(pol.greedy)) % N_TYPES
    assert np.all(VALID_ACTIONS[types, pol.greedy])
    assert pol.q.shape[1] == N_JOINT
    assert pol.sweeps >= 1
    again = approx_optimal_policy(pop, np.random.default_rng(0), QLearningConfig(n_trajectories=50))
    assert np.array_equal(pol.greedy, again.greedy)
