"""Lockstep simulation of many dyads under simple, non-learning policies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .clock import ALL_CLOCKS, DECISIONS_PER_DYAD, N_DAYS, N_WEEKS, ActionBundle, ClockIndex
from .dynamics import (
    BURN_IN_SLOTS,
    DEFAULT_MEDIATOR_GAMMA,
    DyadState,
    StepNoise,
    env_step,
    initial_state_from_noise,
)


@dataclass
class EnvNoise:
    """All environment randomness for one dyad trajectory per lane (lanes last)."""

    init_u: np.ndarray  # (n,)
    burn_u: np.ndarray  # (burn_in, n)
    burn_z: np.ndarray  # (burn_in, 3, n)
    u: np.ndarray  # (196, 2, n)
    z: np.ndarray  # (196, 3, n)

    @classmethod
    def draw(cls, rng: np.random.Generator, n: int, burn_in: int = BURN_IN_SLOTS) -> "EnvNoise":
        return cls(
            rng.random(n),
            rng.random((burn_in, n)),
            rng.standard_normal((burn_in, 3, n)),
            rng.random((DECISIONS_PER_DYAD, 2, n)),
            rng.standard_normal((DECISIONS_PER_DYAD, 3, n)),
        )

    @classmethod
    def per_lane(cls, rngs: Sequence[np.random.Generator], burn_in: int = BURN_IN_SLOTS) -> "EnvNoise":
        """One independent generator per lane, so a lane's noise ignores its neighbours."""
        parts = [cls.draw(g, 1, burn_in) for g in rngs]
        return cls(*(np.concatenate([getattr(p, f) for p in parts], axis=-1)
                     for f in ("init_u", "burn_u", "burn_z", "u", "z")))

    @property
    def n_lanes(self) -> int:
        return self.init_u.shape[0]

    def step(self, i: int) -> StepNoise:
        return StepNoise(self.u[i, 0], self.u[i, 1], self.z[i, 0], self.z[i, 1], self.z[i, 2])

    def initial_state(self, params, mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA) -> DyadState:
        return initial_state_from_noise(params, self.init_u, self.burn_u, self.burn_z, mediator_gamma)


class Policy(Protocol):
    def act(self, state: DyadState, clock: ClockIndex) -> ActionBundle: ...


class ZeroPolicy:
    """Never intervenes."""

    def act(self, state: DyadState, clock: ClockIndex) -> ActionBundle:
        zero = np.zeros(state.n_lanes)
        return ActionBundle.for_clock(clock, zero, zero, zero)


class FixedProbPolicy:
    """Independent Bernoulli draws per component from pre-drawn uniforms (196, 3, n)."""

    def __init__(self, p_aya: float, p_care: float, p_rel: float, uniforms: np.ndarray):
        for p in (p_aya, p_care, p_rel):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        self.probs = np.array([p_aya, p_care, p_rel])
        self.uniforms = uniforms

    @classmethod
    def from_rng(cls, p_aya, p_care, p_rel, rng: np.random.Generator, n: int) -> "FixedProbPolicy":
        return cls(p_aya, p_care, p_rel, rng.random((DECISIONS_PER_DYAD, 3, n)))

    def act(self, state: DyadState, clock: ClockIndex) -> ActionBundle:
        a = (self.uniforms[clock.index] < self.probs[:, None]).astype(float)
        return ActionBundle.for_clock(clock, a[0], a[1], a[2])


@dataclass
class Trajectory:
    """Outcomes of one 196-slot pass, lanes first."""

    adherence: np.ndarray  # (n, 196)
    distress: np.ndarray  # (n, 98)
    relationship: np.ndarray  # (n, 14)
    a_aya: np.ndarray  # (n, 196)
    a_care: np.ndarray  # (n, 98)
    a_rel: np.ndarray  # (n, 14)

    @property
    def cumulative_adherence(self) -> np.ndarray:
        return self.adherence.sum(axis=1)


def simulate(params, policy: Policy, noise: EnvNoise, state: DyadState | None = None,
             mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA) -> Trajectory:
    """Run every lane through the full trial under ``policy``.

    ``params`` is a ParamBatch aligned with the noise lanes. Pass ``state`` to
    reuse an initial state (for example across policies sharing noise).
    """
    n = noise.n_lanes
    if state is None:
        state = noise.initial_state(params, mediator_gamma)
    adh = np.empty((n, DECISIONS_PER_DYAD))
    dis = np.empty((n, N_WEEKS * N_DAYS))
    rel = np.empty((n, N_WEEKS))
    a_aya = np.empty((n, DECISIONS_PER_DYAD))
    a_care = np.empty((n, N_WEEKS * N_DAYS))
    a_rel = np.empty((n, N_WEEKS))
    for clock in ALL_CLOCKS:
        actions = policy.act(state, clock)
        state, y, obs = env_step(state, clock, actions, params, noise.step(clock.index), mediator_gamma)
        adh[:, clock.index] = y
        a_aya[:, clock.index] = actions.a_aya
        if obs.distress is not None:
            dis[:, clock.day_index] = obs.distress
            a_care[:, clock.day_index] = actions.a_care
        if clock.is_week_start:
            a_rel[:, clock.week - 1] = actions.a_rel
        if obs.relationship is not None:
            rel[:, clock.week - 1] = obs.relationship
    return Trajectory(adh, dis, rel, a_aya, a_care, a_rel)
