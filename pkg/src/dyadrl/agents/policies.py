"""Policies that run many independent trials ("lanes") in lockstep.

Every policy follows the same protocol, driven by the trial loop:

``begin_dyad(rngs)`` once per dyad with one generator per lane, then per
decision time ``act(state, clock)`` followed by
``after_step(prev_state, clock, actions, adherence, observation, next_state)``.

Learning policies keep their data and parameters across dyads, so later
dyads benefit from earlier ones.
"""
from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np

from ..env_model.clock import DECISIONS_PER_DYAD, N_DAYS, N_WEEKS, ActionBundle, ClockIndex
from ..env_model.dynamics import DyadState, StepObservation
from ..env_model.optimal import TabularPolicy
from ..rl_core import LAMBDA, SIGMA, BatchRLSVI
from .features import STATE_DIMS, build_features
from .surrogate import (
    SurrogateRewardModel,
    care_covariates,
    rel_covariates,
    surrogate_care_reward,
    surrogate_rel_reward,
)

SNAPSHOT_VERSION = 1
COMPONENTS = ("aya", "care", "rel")
GAMMAS = {"aya": 0.5, "care": 0.5, "rel": 0.0, "single": 0.5}


def _stack(rngs: Sequence[np.random.Generator], draw) -> np.ndarray:
    """Per-lane draws stacked with the lane axis second: (steps, lanes, ...)."""
    return np.stack([draw(g) for g in rngs], axis=1)


class LanePolicy:
    name = "policy"

    def __init__(self, n_lanes: int):
        self.n_lanes = n_lanes
        self.action_sums = {c: np.zeros(n_lanes) for c in COMPONENTS}
        self.action_counts = {c: 0 for c in COMPONENTS}

    def begin_dyad(self, rngs: Sequence[np.random.Generator]) -> None:
        pass

    def act(self, state: DyadState, clock: ClockIndex) -> ActionBundle:
        raise NotImplementedError

    def after_step(self, prev: DyadState, clock: ClockIndex, actions: ActionBundle,
                   adherence: np.ndarray, obs: StepObservation, nxt: DyadState) -> None:
        pass

    def _count(self, actions: ActionBundle) -> None:
        for c, a in zip(COMPONENTS, (actions.a_aya, actions.a_care, actions.a_rel)):
            if a is not None:
                self.action_sums[c] += a
                self.action_counts[c] += 1

    def intervention_rate(self, component: str) -> np.ndarray:
        """Fraction of decisions on which ``component`` intervened, per lane."""
        n = self.action_counts[component]
        return self.action_sums[component] / max(n, 1)

    def snapshot(self) -> dict:
        return {"format": "dyadrl-policy", "version": SNAPSHOT_VERSION, "policy": self.name}

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


class FixedProbLanePolicy(LanePolicy):
    """Bernoulli(p) per component, independent across decisions."""

    name = "FixedProb"

    def __init__(self, n_lanes: int, p_aya: float = 0.5, p_care: float = 0.5, p_rel: float = 0.5):
        super().__init__(n_lanes)
        for p in (p_aya, p_care, p_rel):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        self.probs = np.array([p_aya, p_care, p_rel])
        self.u = None

    def begin_dyad(self, rngs):
        self.u = _stack(rngs, lambda g: g.random((DECISIONS_PER_DYAD, 3)))

    def act(self, state, clock):
        a = (self.u[clock.index] < self.probs).astype(float)
        bundle = ActionBundle.for_clock(clock, a[:, 0], a[:, 1], a[:, 2])
        self._count(bundle)
        return bundle

    def snapshot(self):
        d = super().snapshot()
        d["probs"] = self.probs.tolist()
        return d


class TabularLanePolicy(LanePolicy):
    name = "OptimalApprox"

    def __init__(self, n_lanes: int, policy: TabularPolicy):
        super().__init__(n_lanes)
        self.policy = policy

    def act(self, state, clock):
        bundle = self.policy.act(state, clock)
        self._count(bundle)
        return bundle


def _lane_snapshot(agent: BatchRLSVI) -> dict:
    return {"theta": agent.theta.tolist(), "w": agent.w.tolist(), "n_transitions": agent.n}


class SingleAgentPolicy(LanePolicy):
    """One learner over the joint action in {0,1}^3 and a 9-dimensional state."""

    name = "SingleAgent"

    def __init__(self, n_lanes: int, gamma: float = GAMMAS["single"], lam: float = LAMBDA,
                 sigma: float = SIGMA, capacity: int = 256):
        super().__init__(n_lanes)
        self.agent = BatchRLSVI(n_lanes, STATE_DIMS["single"], 3, gamma, lam, sigma, capacity)
        self.z = None
        self._a = None

    def begin_dyad(self, rngs):
        d = self.agent.d
        self.z = _stack(rngs, lambda g: g.standard_normal((DECISIONS_PER_DYAD, d)))

    def act(self, state, clock):
        self.agent.observe(build_features("single", state, clock))
        self.agent.update(self.z[clock.index])
        a = self.agent.act()
        self._a = a
        # Components outside their period are chosen and recorded but not delivered.
        bundle = ActionBundle.for_clock(clock, a[:, 0], a[:, 1], a[:, 2])
        self._count(bundle)
        return bundle

    def after_step(self, prev, clock, actions, adherence, obs, nxt):
        self.agent.record(self._a, adherence)

    def snapshot(self):
        d = super().snapshot()
        d["agents"] = {"single": _lane_snapshot(self.agent)}
        return d


class MultiAgentPolicy(LanePolicy):
    """Separate AYA, carepartner and relationship learners on their own timescales.

    With ``use_surrogate`` the carepartner and relationship learners are
    rewarded by the surrogate models instead of averaged adherence.
    ``fixed_probs`` replaces any component's learner by Bernoulli(p) delivery.
    """

    def __init__(self, n_lanes: int, use_surrogate: bool = False,
                 fixed_probs: Optional[dict] = None, lam: float = LAMBDA, sigma: float = SIGMA,
                 capacity: int = 256, gammas: Optional[dict] = None):
        super().__init__(n_lanes)
        self.use_surrogate = use_surrogate
        self.fixed = dict(fixed_probs or {})
        unknown = set(self.fixed) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown components {sorted(unknown)}")
        g = dict(GAMMAS, **(gammas or {}))
        self.agents: dict[str, BatchRLSVI] = {
            c: BatchRLSVI(n_lanes, STATE_DIMS[c], 1, g[c], lam, sigma, capacity)
            for c in COMPONENTS if c not in self.fixed
        }
        self.surrogate = SurrogateRewardModel(n_lanes, lam, sigma) if use_surrogate else None
        self._a = {}
        self._day_sum = np.zeros(n_lanes)
        self._week_sum = np.zeros(n_lanes)
        self._care_rows = []
        self.z = {}
        self.u = None

    @property
    def name(self):
        base = "MultiAgentSurrogate" if self.use_surrogate else "MultiAgent"
        return base if not self.fixed else base + "+fixed"

    def begin_dyad(self, rngs):
        steps = {"aya": DECISIONS_PER_DYAD, "care": N_WEEKS * N_DAYS, "rel": N_WEEKS}
        draws = {}
        for g in rngs:
            for c in COMPONENTS:
                if c in self.agents:
                    draws.setdefault(c, []).append(g.standard_normal((steps[c], self.agents[c].d)))
            if self.fixed:
                draws.setdefault("u", []).append(g.random((DECISIONS_PER_DYAD, 3)))
        self.z = {c: np.stack(v, axis=1) for c, v in draws.items() if c != "u"}
        self.u = np.stack(draws["u"], axis=1) if self.fixed else None

    def _choose(self, c: str, state, clock, step: int, **kw) -> np.ndarray:
        if c in self.fixed:
            col = COMPONENTS.index(c)
            return (self.u[clock.index, :, col] < self.fixed[c]).astype(float)
        agent = self.agents[c]
        agent.observe(build_features(c, state, clock, **kw))
        agent.update(self.z[c][step])
        return agent.act()[:, 0]

    def act(self, state, clock):
        a_rel = a_care = None
        if clock.is_week_start:
            a_rel = self._a["rel"] = self._choose("rel", state, clock, clock.week - 1)
        week_rel = a_rel if a_rel is not None else state.rel_action_this_week
        if clock.is_day_start:
            a_care = self._a["care"] = self._choose("care", state, clock, clock.day_index, a_rel=week_rel)
        a_aya = self._a["aya"] = self._choose("aya", state, clock, clock.index, a_rel=week_rel)
        bundle = ActionBundle.for_clock(clock, a_aya, a_care, a_rel)
        self._count(bundle)
        return bundle

    def after_step(self, prev, clock, actions, adherence, obs, nxt):
        if "aya" in self.agents:
            self.agents["aya"].record(self._a["aya"], adherence)
        self._day_sum += adherence
        self._week_sum += adherence
        if clock.is_day_end:
            self._close_day(prev, clock, nxt)
        if clock.is_week_end:
            self._close_week(prev, clock, obs, nxt)

    def _close_day(self, prev, clock, nxt):
        last_day = clock.successor() is None
        # Tomorrow's burden is not observed after the final day; use today's.
        b_next = prev.b_care if last_day else nxt.b_care
        a_care = prev.care_action_today
        if self.use_surrogate:
            self._care_rows.append(care_covariates(prev.distress_today, b_next,
                                                   prev.rel_quality_prev_week, a_care))
        if "care" in self.agents:
            if self.use_surrogate:
                r = surrogate_care_reward(prev.distress_today, b_next, prev.rel_quality_prev_week,
                                          a_care, self.surrogate.beta_care)
            else:
                r = self._day_sum / 2.0
            self.agents["care"].record(a_care, r)
        self._day_sum = np.zeros(self.n_lanes)

    def _close_week(self, prev, clock, obs, nxt):
        a_rel = prev.rel_action_this_week
        if "rel" in self.agents:
            if self.use_surrogate:
                r = surrogate_rel_reward(prev.rel_quality_prev_week, prev.b_aya_week_start, a_rel,
                                         obs.relationship, nxt.b_aya, self.surrogate.beta_rel,
                                         lookahead=clock.week < N_WEEKS)
            else:
                r = self._week_sum / (2.0 * N_DAYS)
            self.agents["rel"].record(a_rel, r)
        if self.use_surrogate:
            X_rel = rel_covariates(prev.rel_quality_prev_week, prev.b_aya_week_start, a_rel)
            self.surrogate.add_rows("rel", X_rel, self._week_sum)
            self.surrogate.add_rows("care", np.stack(self._care_rows, axis=1), obs.relationship)
            self.surrogate.refit()
        self._care_rows = []
        self._week_sum = np.zeros(self.n_lanes)

    def snapshot(self):
        d = super().snapshot()
        d["agents"] = {c: _lane_snapshot(a) for c, a in self.agents.items()}
        d["fixed_probs"] = self.fixed
        if self.surrogate is not None:
            d["beta_rel"] = self.surrogate.beta_rel.tolist()
            d["beta_care"] = self.surrogate.beta_care.tolist()
            d["surrogate_rows"] = dict(self.surrogate.n_rows)
        return d
