import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadrl.env_model import (
    ALL_CLOCKS,
    ActionBundle,
    ClockIndex,
    ConfigurationError,
    ContractViolation,
    DyadParams,
    EnvNoise,
    FixedProbPolicy,
    PopulationConfig,
    ZeroPolicy,
    adherence_prob,
    distress_step,
    env_step,
    generate_population,
    read_population,
    simulate,
    transition_burden,
    week_mediators,
    write_population,
)
from dyadrl.env_model.dynamics import burden_update, relationship_prob, sigmoid
from dyadrl.env_model.params import DEFAULT_COEFFS, check_truncation
from dyadrl.env_model.variants import TestbedVariant, VariantKind, make_variant


# ---------------------------------------------------------------- clock

@given(st.integers(0, 195))
def test_clock_index_roundtrip(i):
    c = ClockIndex.from_index(i)
    assert c.index == i
    if c.successor() is not None:
        assert c.successor().predecessor() == c
    if c.predecessor() is not None:
        assert c.predecessor().successor() == c


def test_clock_boundaries():
    assert len(ALL_CLOCKS) == 196
    assert ClockIndex(14, 7, 2).successor() is None
    assert ClockIndex(1, 1, 1).predecessor() is None
    assert sum(c.is_week_start for c in ALL_CLOCKS) == 14
    assert sum(c.is_day_start for c in ALL_CLOCKS) == 98
    assert [c.n_actions for c in ALL_CLOCKS[:3]] == [3, 1, 2]
    with pytest.raises(ContractViolation):
        ClockIndex(15, 1, 1)


def test_action_bundle_gating():
    c = ClockIndex(1, 2, 2)
    b = ActionBundle.for_clock(c, 1, 1, 1)
    assert b.a_care is None and b.a_rel is None
    with pytest.raises(ContractViolation):
        ActionBundle(1, 1, None).check(c)


# ---------------------------------------------------------------- params

def test_generate_population_deterministic():
    a, b = generate_population(7, 3), generate_population(7, 3)
    assert a.table.tobytes() == b.table.tobytes()


def test_truncation_to_zero():
    cfg = PopulationConfig().with_coeff("am_b2", -0.4, 0.0)
    pop = generate_population(3, 50, cfg)
    assert np.all(pop.column("am_b2") == 0.0)


def test_population_means_within_three_se():
    pop = generate_population(11, 1000)
    truncated = {"am_b2", "pm_b2", "am_b3", "pm_b3", "rel_b3"}
    for name, (mean, sd) in DEFAULT_COEFFS.items():
        if name in truncated or sd == 0:
            continue
        col = pop.column(name)
        assert abs(col.mean() - mean) < 3 * sd / math.sqrt(len(col)), name


@pytest.mark.parametrize("name,value", [("am_b1", (0.3, -0.1)), ("aya_th1", (1.2, 0.0)),
                                        ("care_sigma", (0.0, 0.0))])
def test_invalid_population_config(name, value):
    with pytest.raises(ConfigurationError):
        generate_population(0, 5, PopulationConfig().with_coeff(name, *value))


def test_population_file_roundtrip(tmp_path, small_pop):
    path = tmp_path / "pop.csv"
    write_population(path, small_pop)
    back = read_population(path)
    assert back == small_pop
    assert back.meta == small_pop.meta
    path.write_text(path.read_text().replace("#version=1", "#version=9"))
    with pytest.raises(ConfigurationError):
        read_population(path)


def test_param_vector_roundtrip(params):
    assert DyadParams.from_vector(params.to_vector()) == params


# ---------------------------------------------------------------- transitions

def test_burden_update_examples():
    assert burden_update(0.0, 0, 0, 0.2, 13 / 14, 1, 0.2, 2.4, 0.0) == pytest.approx(0.2)
    assert burden_update(1.0, 1, 1, 0.2, 13 / 14, 1, 0.2, 2.4, 0.0) == pytest.approx(0.2 + 13 / 14 + 1.2)
    assert burden_update(0.0, 0, 0, -5.0, 0, 0, 0, 2.4, 0.0) == 0.0


def test_transition_burden_standardizes(start, params):
    acts = ActionBundle.for_clock(ClockIndex(1, 1, 1), np.ones(3), np.ones(3), np.ones(3))
    raw, b = transition_burden("AYA", start, acts, params, np.zeros(3))
    assert np.allclose(raw, 0.2 + 13 / 14 * start.raw_aya + 1.2)
    assert np.allclose(b, (raw - params.aya_mean) / params.aya_sd)
    with pytest.raises(ContractViolation):
        transition_burden("CARE", start, ActionBundle(np.ones(3)), params, np.zeros(3))


def test_adherence_prob_examples(start):
    zero = DyadParams()
    assert np.allclose(adherence_prob(start, 0, zero, 0), 0.5)
    assert np.allclose(adherence_prob(start, 0, replace(zero, am_b0=1.0), 0), 0.7310585786300049)
    p = replace(zero, am_tau0=0.4)
    assert np.all(adherence_prob(start, 1, p, 0) > adherence_prob(start, 0, p, 0))


@given(st.floats(-20, 20), st.floats(-3, 3), st.integers(0, 1), st.integers(0, 1))
def test_probabilities_open_interval(b0, burden, a, y):
    p = replace(DyadParams(), am_b0=b0, am_tau0=0.5, am_tau2=-0.5, rel_tau0=1.0, rel_tau1=-1.0)
    val = sigmoid(b0 + a * (0.5 - 0.5 * burden))
    assert 0.0 <= val <= 1.0
    q = relationship_prob(y, 3.0, -1.0, a, burden, burden, p)
    assert 0.0 < q < 1.0


def test_distress_examples(start):
    zero = DyadParams()
    assert np.allclose(distress_step(start, 0, zero, np.zeros(3)), 0.0)
    p = replace(zero, care_tau0=-0.3)
    drop = distress_step(start, 0, p, np.zeros(3)) - distress_step(start, 1, p, np.zeros(3))
    assert np.allclose(drop, 0.3)
    s = start.copy()
    s.last_distress = np.full(3, 2.0)
    assert np.allclose(distress_step(s, 0, replace(zero, care_b1=1.0), np.zeros(3)), 2.0)


def test_week_mediators_weights():
    adh = np.ones(14)
    dis = np.arange(7.0)
    ra, rc = week_mediators(adh, dis, 0.9)
    assert ra == pytest.approx(sum(0.9 ** k for k in range(14)))
    assert rc == pytest.approx(sum(x * 0.9 ** (6 - i) for i, x in enumerate(dis)))
    assert week_mediators(np.zeros(0), np.zeros(0)) == (0.0, 0.0)
    with pytest.raises(ContractViolation):
        week_mediators(adh, dis, 0.0)


def test_env_step_does_not_mutate(start, params):
    before = start.copy()
    env_step(start, ClockIndex(1, 1, 1), ActionBundle(np.ones(3), np.ones(3), np.ones(3)), params,
             np.random.default_rng(1))
    for f in ("b_aya", "raw_care", "week_adherence_hist", "rel_action_this_week"):
        assert np.array_equal(getattr(before, f), getattr(start, f))


def test_env_step_clock_mismatch(start, params):
    with pytest.raises(ContractViolation):
        env_step(start, ClockIndex(1, 1, 2), ActionBundle(np.ones(3)), params, np.random.default_rng(0))


def test_histories_reset_weekly(small_pop):
    batch = small_pop.batch(np.arange(4))
    noise = EnvNoise.draw(np.random.default_rng(2), 4)
    state = noise.initial_state(batch)
    for clock in ALL_CLOCKS:
        assert state.n_adh < 14 and state.n_dis < 7
        state, _, obs = env_step(state, clock, ZeroPolicy().act(state, clock), batch, noise.step(clock.index))
        if clock.is_week_end:
            assert state.n_adh == 0 and state.n_dis == 0
            assert obs.rbar_aya is not None and obs.relationship is not None


def test_trajectory_counts_and_crn(small_pop):
    batch = small_pop.batch(np.arange(6))
    noise = EnvNoise.draw(np.random.default_rng(4), 6)
    tr = simulate(batch, FixedProbPolicy.from_rng(0.5, 0.5, 0.5, np.random.default_rng(5), 6), noise)
    assert tr.adherence.shape == (6, 196) and tr.distress.shape == (6, 98) and tr.relationship.shape == (6, 14)
    again = simulate(batch, FixedProbPolicy.from_rng(0.5, 0.5, 0.5, np.random.default_rng(5), 6), noise)
    assert np.array_equal(tr.adherence, again.adherence)
    assert np.all(np.isfinite(tr.distress))


def test_no_mediator_adherence_ignores_carepartner(small_pop):
    """With the mediator paths cut, carepartner actions cannot reach adherence."""
    pop = make_variant(small_pop.replace(care_tau0=-0.5, rel_tau0=0.5), TestbedVariant(VariantKind.NO_MEDIATOR))
    batch = pop.batch(np.arange(len(pop)))
    noise = EnvNoise.draw(np.random.default_rng(8), len(pop))
    u = np.random.default_rng(9).random((196, 3, len(pop)))
    lo = simulate(batch, FixedProbPolicy(0.5, 0.0, 0.5, u), noise)
    hi = simulate(batch, FixedProbPolicy(0.5, 1.0, 0.5, u), noise)
    assert np.array_equal(lo.adherence, hi.adherence)
    assert not np.array_equal(lo.distress, hi.distress)


def test_variants(small_pop):
    nm = make_variant(small_pop, TestbedVariant(VariantKind.NO_MEDIATOR))
    assert np.all(nm.column("am_b2") == 0) and np.all(nm.column("rel_b3") == 0)
    dd = make_variant(small_pop, TestbedVariant(VariantKind.DIRECT_DISTRESS, c_treat=0.5))
    assert np.allclose(dd.column("am_b3"), -0.5 * np.abs(small_pop.column("am_b1")))
    check_truncation(dd)
    rm = make_variant(small_pop, TestbedVariant(VariantKind.RANDOM_MEDIATOR, mediator_sd=1.0),
                      np.random.default_rng(0))
    assert np.any(rm.column("am_b2") < 0) or np.any(rm.column("rel_b3") > 0)
