"""Transition models and the per-slot environment step.

Every function here works on scalars or on equal-length arrays, one entry per
simulated dyad ("lane"). Parameters come either as a :class:`DyadParams` or as
a :class:`ParamBatch`; both expose the same attribute names.

Order of events inside one call to :func:`env_step`:

* week start: the relationship action is recorded.
* day start: the day's distress is drawn from yesterday's distress, the last
  adherence and the current carepartner burden; the carepartner burden for
  tomorrow is drawn and held until the day closes.
* every slot: adherence is drawn with the burden in force before the slot's
  action, then the AYA burden moves.
* day end: today's distress becomes ``last_distress``; tomorrow's carepartner
  burden comes into force.
* week end: the week's weighted mediators are formed and the week's
  relationship quality is drawn.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from .clock import N_DAYS, SLOTS_PER_WEEK, ActionBundle, ClockIndex, ContractViolation

BURN_IN_SLOTS = 500
DEFAULT_MEDIATOR_GAMMA = 0.9

sigmoid = expit


def burden_update(raw, a_own, a_rel, th0, th1, th2, th3, omega, eta):
    """One raw burden transition, truncated at zero."""
    return np.maximum(0.0, th0 + th1 * raw + th2 * a_own + th3 * a_rel + omega * eta)


def standardize(raw, mean, sd):
    return (raw - mean) / sd


def _adherence_coeffs(params, window: int):
    p = "am" if window == 0 else "pm"
    g = params.__getattribute__
    return [g(f"{p}_{k}") for k in ("b0", "b1", "b2", "b3", "b4", "tau0", "tau1", "tau2")]


def adherence_logit(last_adh, rel_prev, last_distress, b_aya, a_aya, params, window: int):
    b0, b1, b2, b3, b4, t0, t1, t2 = _adherence_coeffs(params, window)
    m = params.mediator_multiplier
    return (
        b0 + b1 * last_adh + m * b2 * rel_prev + b3 * last_distress + b4 * b_aya
        + a_aya * (t0 + t1 * rel_prev + t2 * b_aya)
    )


def adherence_prob(state: "DyadState", a_aya, params, window: Optional[int] = None):
    """Probability the next dose is taken; window defaults to the state's clock."""
    if window is None:
        window = state.clock.window
    return sigmoid(adherence_logit(
        state.last_adherence, state.rel_quality_prev_week, state.last_distress,
        state.b_aya, a_aya, params, window))


def distress_mean(last_distress, last_adh, rel_prev, b_care, a_care, params):
    p = params
    return (
        p.care_b0 + p.care_b1 * last_distress + p.care_b2 * last_adh + p.care_b3 * rel_prev
        + p.care_b4 * b_care + a_care * (p.care_tau0 + p.care_tau1 * rel_prev + p.care_tau2 * b_care)
    )


def distress_step(state: "DyadState", a_care, params, eps):
    """Today's carepartner distress; ``eps`` is a standard normal draw."""
    mu = distress_mean(state.last_distress, state.last_adherence, state.rel_quality_prev_week,
                       state.b_care, a_care, params)
    return mu + params.care_sigma * eps


def week_mediators(adherence_hist, distress_hist, gamma: float = DEFAULT_MEDIATOR_GAMMA):
    """Exponentially weighted sums over a week, most recent entry weighted 1.

    Histories are chronological along the last axis; empty histories give 0.
    """
    if not 0 < gamma <= 1:
        raise ContractViolation(f"mediator gamma must be in (0, 1], got {gamma}")

    def wsum(x):
        x = np.asarray(x, dtype=float)
        k = x.shape[-1]
        if k == 0:
            return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
        w = gamma ** np.arange(k - 1, -1, -1)
        return x @ w

    return wsum(adherence_hist), wsum(distress_hist)


def relationship_prob(rel_prev, rbar_aya, rbar_care, a_rel, b_aya, b_care, params):
    p = params
    z = (p.rel_b0 + p.rel_b1 * rel_prev + p.rel_b2 * rbar_aya
         + p.mediator_multiplier * p.rel_b3 * rbar_care
         + a_rel * (p.rel_tau0 + p.rel_tau1 * (b_care + b_aya)))
    return sigmoid(z)


@dataclass
class StepNoise:
    """Exogenous randomness consumed by one slot, drawn whether or not it is used.

    Keeping the draw count independent of the actions lets two policies share
    the same noise (common random numbers).
    """

    u_adh: np.ndarray
    u_rel: np.ndarray
    eta_aya: np.ndarray
    eta_care: np.ndarray
    eps_care: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, shape=()) -> "StepNoise":
        u = rng.random((2,) + tuple(shape))
        z = rng.standard_normal((3,) + tuple(shape))
        return cls(u[0], u[1], z[0], z[1], z[2])


@dataclass
class DyadState:
    """Observable and latent state of one or more dyads between decision times.

    ``clock`` is the next decision time to execute (None once the trial is
    over). Array fields have one entry per lane.
    """

    clock: Optional[ClockIndex]
    raw_aya: np.ndarray
    raw_care: np.ndarray
    b_aya: np.ndarray
    b_care: np.ndarray
    b_care_next: np.ndarray
    last_adherence: np.ndarray
    last_distress: np.ndarray
    distress_today: np.ndarray
    rel_quality_prev_week: np.ndarray
    rel_action_this_week: np.ndarray
    care_action_today: np.ndarray
    week_adherence_hist: np.ndarray
    week_distress_hist: np.ndarray
    n_adh: int = 0
    n_dis: int = 0
    # Summaries of the last completed week, used by agents' state features.
    rbar_aya_prev: np.ndarray = None
    rbar_care_prev: np.ndarray = None
    b_aya_week_start: np.ndarray = None
    b_care_week_start: np.ndarray = None

    def copy(self) -> "DyadState":
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return DyadState(**kw)

    @property
    def n_lanes(self) -> int:
        return int(np.size(self.b_aya))

    @property
    def adherence_history(self) -> np.ndarray:
        return self.week_adherence_hist[..., : self.n_adh]

    @property
    def distress_history(self) -> np.ndarray:
        return self.week_distress_hist[..., : self.n_dis]


@dataclass
class StepObservation:
    adherence: np.ndarray
    distress: Optional[np.ndarray] = None
    relationship: Optional[np.ndarray] = None
    rbar_aya: Optional[np.ndarray] = None
    rbar_care: Optional[np.ndarray] = None


def _as_lanes(x, n):
    return np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()


def env_step(state: DyadState, clock: ClockIndex, actions: ActionBundle, params,
             noise: Union[StepNoise, np.random.Generator],
             mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA):
    """Advance one decision slot. Returns ``(next_state, adherence, observation)``.

    ``state`` is not modified.
    """
    actions.check(clock)
    if state.clock != clock:
        raise ContractViolation(f"state is at {state.clock}, step requested at {clock}")
    n = state.n_lanes
    if isinstance(noise, np.random.Generator):
        noise = StepNoise.draw(noise, (n,))
    s = state.copy()
    p = params
    distress = rel = rbar_a = rbar_c = None

    if clock.is_week_start:
        s.rel_action_this_week = _as_lanes(actions.a_rel, n)
        s.b_aya_week_start = s.b_aya.copy()
        s.b_care_week_start = s.b_care.copy()

    if clock.is_day_start:
        a_care = _as_lanes(actions.a_care, n)
        s.care_action_today = a_care
        distress = distress_step(s, a_care, p, noise.eps_care)
        s.distress_today = distress
        s.raw_care = burden_update(s.raw_care, a_care, s.rel_action_this_week,
                                   p.care_th0, p.care_th1, p.care_th2, p.care_th3,
                                   p.care_omega, noise.eta_care)
        s.b_care_next = standardize(s.raw_care, p.care_mean, p.care_sd)

    a_aya = _as_lanes(actions.a_aya, n)
    prob = adherence_prob(s, a_aya, p, clock.window)
    adherence = (noise.u_adh < prob).astype(float)
    s.raw_aya = burden_update(s.raw_aya, a_aya, s.rel_action_this_week,
                              p.aya_th0, p.aya_th1, p.aya_th2, p.aya_th3,
                              p.aya_omega, noise.eta_aya)
    s.b_aya = standardize(s.raw_aya, p.aya_mean, p.aya_sd)
    s.last_adherence = adherence
    s.week_adherence_hist[..., s.n_adh] = adherence
    s.n_adh += 1

    if clock.is_day_end:
        s.last_distress = s.distress_today
        s.week_distress_hist[..., s.n_dis] = s.distress_today
        s.n_dis += 1
        s.b_care = s.b_care_next

    if clock.is_week_end:
        rbar_a, rbar_c = week_mediators(s.adherence_history, s.distress_history, mediator_gamma)
        prob_rel = relationship_prob(s.rel_quality_prev_week, rbar_a, rbar_c,
                                     s.rel_action_this_week, s.b_aya, s.b_care, p)
        rel = (noise.u_rel < prob_rel).astype(float)
        s.rel_quality_prev_week = rel
        s.rbar_aya_prev, s.rbar_care_prev = rbar_a, rbar_c
        s.n_adh = s.n_dis = 0
        s.week_adherence_hist[...] = 0.0
        s.week_distress_hist[...] = 0.0

    s.clock = clock.successor()
    return s, adherence, StepObservation(adherence, distress, rel, rbar_a, rbar_c)


def initial_state(params, rng: np.random.Generator, n_lanes: Optional[int] = None,
                  burn_in: int = BURN_IN_SLOTS,
                  mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA) -> DyadState:
    """State before the first decision.

    Relationship quality starts at 1 with probability 1/2, burdens at their
    calibration mean; adherence and distress come from a no-intervention
    burn-in with the relationship held fixed. The burn-in's final 14 slots
    stand in for the week before the trial.
    """
    if n_lanes is None:
        n_lanes = int(np.size(params.am_b0))
    u0 = rng.random(n_lanes)
    u = rng.random((burn_in, n_lanes))
    z = rng.standard_normal((burn_in, 3, n_lanes))
    return initial_state_from_noise(params, u0, u, z, mediator_gamma)


def initial_state_from_noise(params, u0, u, z, mediator_gamma=DEFAULT_MEDIATOR_GAMMA) -> DyadState:
    """Deterministic core of :func:`initial_state`.

    ``u0``: (n,) uniforms for the starting relationship; ``u``: (burn_in, n)
    adherence uniforms; ``z``: (burn_in, 3, n) normals (AYA burden, CARE
    burden, distress).
    """
    p = params
    n = u0.shape[0]
    burn_in = u.shape[0]
    if burn_in < SLOTS_PER_WEEK:
        raise ContractViolation("burn-in must cover at least one week")
    zeros = np.zeros(n)
    rel = (u0 < 0.5).astype(float)
    raw_aya = np.broadcast_to(np.asarray(p.aya_mean, float), (n,)).copy()
    raw_care = np.broadcast_to(np.asarray(p.care_mean, float), (n,)).copy()
    b_aya = standardize(raw_aya, p.aya_mean, p.aya_sd)
    b_care = standardize(raw_care, p.care_mean, p.care_sd)
    last_adh = zeros.copy()
    last_dis = zeros.copy()
    adh_tail = np.zeros((SLOTS_PER_WEEK, n))
    dis_tail = np.zeros((N_DAYS, n))
    start = burn_in - SLOTS_PER_WEEK
    for i in range(burn_in):
        window = i % 2
        if window == 0:
            mu = distress_mean(last_dis, last_adh, rel, b_care, zeros, p)
            today = mu + p.care_sigma * z[i, 2]
            raw_care = burden_update(raw_care, 0.0, 0.0, p.care_th0, p.care_th1, p.care_th2,
                                     p.care_th3, p.care_omega, z[i, 1])
        prob = sigmoid(adherence_logit(last_adh, rel, last_dis, b_aya, 0.0, p, window))
        last_adh = (u[i] < prob).astype(float)
        raw_aya = burden_update(raw_aya, 0.0, 0.0, p.aya_th0, p.aya_th1, p.aya_th2,
                                p.aya_th3, p.aya_omega, z[i, 0])
        b_aya = standardize(raw_aya, p.aya_mean, p.aya_sd)
        if i >= start:
            adh_tail[i - start] = last_adh
        if window == 1:
            last_dis = today
            b_care = standardize(raw_care, p.care_mean, p.care_sd)
            if i >= start:
                dis_tail[(i - start) // 2] = today
    if burn_in % 2 == 1:
        # Burn-in stopped mid-day; close the day so the trial starts in the morning.
        last_dis = today
        b_care = standardize(raw_care, p.care_mean, p.care_sd)
    rbar_a, rbar_c = week_mediators(adh_tail.T, dis_tail.T, mediator_gamma)
    return DyadState(
        clock=ClockIndex(1, 1, 1),
        raw_aya=raw_aya, raw_care=raw_care, b_aya=b_aya, b_care=b_care,
        b_care_next=b_care.copy(), last_adherence=last_adh, last_distress=last_dis,
        distress_today=last_dis.copy(), rel_quality_prev_week=rel,
        rel_action_this_week=zeros.copy(), care_action_today=zeros.copy(),
        week_adherence_hist=np.zeros((n, SLOTS_PER_WEEK)),
        week_distress_hist=np.zeros((n, N_DAYS)),
        rbar_aya_prev=rbar_a, rbar_care_prev=rbar_c,
        b_aya_week_start=b_aya.copy(), b_care_week_start=b_care.copy(),
    )


def transition_burden(kind: str, state: DyadState, actions: ActionBundle, params, eta):
    """Single burden move for ``kind`` in {"AYA", "CARE"}: returns (raw', standardized')."""
    p = params
    a_rel = actions.a_rel if actions.a_rel is not None else state.rel_action_this_week
    if kind == "AYA":
        raw = burden_update(state.raw_aya, actions.a_aya, a_rel, p.aya_th0, p.aya_th1,
                            p.aya_th2, p.aya_th3, p.aya_omega, eta)
        return raw, standardize(raw, p.aya_mean, p.aya_sd)
    if kind == "CARE":
        if actions.a_care is None:
            raise ContractViolation("carepartner burden moves only when a carepartner action exists")
        raw = burden_update(state.raw_care, actions.a_care, a_rel, p.care_th0, p.care_th1,
                            p.care_th2, p.care_th3, p.care_omega, eta)
        return raw, standardize(raw, p.care_mean, p.care_sd)
    raise ContractViolation(f"unknown burden kind {kind!r}")
