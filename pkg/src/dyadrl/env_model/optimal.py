"""Offline tabular Q-learning on a random-policy dataset.

The learned greedy policy stands in for the per-dyad optimal policy when
measuring standardized treatment effects and as an upper reference in
experiments.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .batch import EnvNoise, FixedProbPolicy, simulate
from .clock import ActionBundle, ClockIndex
from .dynamics import DEFAULT_MEDIATOR_GAMMA, DyadState
from .params import Population

N_BINS = 10
N_TYPES = 3  # week start, other day start, evening
N_JOINT = 8  # a_aya + 2 a_care + 4 a_rel
N_STATES = 2 * N_BINS * N_BINS * N_BINS * 2 * N_TYPES

# Joint actions allowed for each decision type.
VALID_ACTIONS = np.zeros((N_TYPES, N_JOINT), dtype=bool)
VALID_ACTIONS[0, :] = True
VALID_ACTIONS[1, :4] = True
VALID_ACTIONS[2, :2] = True


@dataclass
class QLearningConfig:
    n_trajectories: int = 2000
    discount: float = 0.95
    max_sweeps: int = 1000
    tol: float = 1e-6
    chunk: int = 2000


def decision_type(clock: ClockIndex) -> int:
    return {3: 0, 2: 1, 1: 2}[clock.n_actions]


def _bin(x, edges):
    # Equal-width bins over [lo, hi]; values outside fall in the edge bins.
    lo, hi = edges
    width = (hi - lo) / N_BINS
    if width <= 0:
        return np.zeros(np.shape(x), dtype=np.int64)
    return np.clip(((np.asarray(x) - lo) / width).astype(np.int64), 0, N_BINS - 1)


@dataclass
class Discretizer:
    distress: tuple[float, float]
    b_aya: tuple[float, float]
    b_care: tuple[float, float]

    def index(self, last_adh, distress, b_aya, b_care, rel, dtype):
        i = np.asarray(last_adh).astype(np.int64)
        i = i * N_BINS + _bin(distress, self.distress)
        i = i * N_BINS + _bin(b_aya, self.b_aya)
        i = i * N_BINS + _bin(b_care, self.b_care)
        i = i * 2 + np.asarray(rel).astype(np.int64)
        return i * N_TYPES + dtype

    def state_index(self, state: DyadState, clock: ClockIndex):
        return self.index(state.last_adherence, state.last_distress, state.b_aya, state.b_care,
                          state.rel_quality_prev_week, decision_type(clock))


def decode_joint(a: np.ndarray):
    a = np.asarray(a)
    return (a & 1).astype(float), ((a >> 1) & 1).astype(float), ((a >> 2) & 1).astype(float)


@dataclass
class TabularPolicy:
    """Greedy policy over the discretized state space."""

    discretizer: Discretizer
    q: np.ndarray  # (N_STATES, N_JOINT), invalid actions hold -inf
    greedy: np.ndarray = field(init=False)
    sweeps: int = 0
    converged: bool = False

    def __post_init__(self):
        # argmax returns the first maximizer: the smallest joint index on ties.
        self.greedy = np.argmax(self.q, axis=1)

    def act(self, state: DyadState, clock: ClockIndex) -> ActionBundle:
        a = self.greedy[self.discretizer.state_index(state, clock)]
        a_aya, a_care, a_rel = decode_joint(a)
        return ActionBundle.for_clock(clock, a_aya, a_care, a_rel)

    def to_json(self) -> str:
        d = self.discretizer
        return json.dumps({
            "format": "dyadrl-tabular-policy", "version": 1,
            "edges": {"distress": d.distress, "b_aya": d.b_aya, "b_care": d.b_care},
            "greedy": self.greedy.tolist(), "sweeps": self.sweeps,
        })


class _Recorder:
    """Random policy that also logs discretization inputs."""

    def __init__(self, inner: FixedProbPolicy):
        self.inner = inner
        self.rows = []

    def act(self, state, clock):
        a = self.inner.act(state, clock)
        joint = a.a_aya + 2 * (a.a_care if a.a_care is not None else 0) + 4 * (a.a_rel if a.a_rel is not None else 0)
        self.rows.append((state.last_adherence, state.last_distress, state.b_aya, state.b_care,
                          state.rel_quality_prev_week, decision_type(clock), joint))
        return a


def random_policy_dataset(population: Population, rng: np.random.Generator, n_trajectories: int,
                          chunk: int = 2000, mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA):
    """Trajectories of dyads drawn with replacement under Bernoulli(1/2) actions.

    Returns per-transition columns with shape (n_trajectories, 196).
    """
    if n_trajectories < 1 or len(population) == 0:
        raise ValueError("empty dataset: need at least one trajectory and one dyad")
    cols = {k: [] for k in ("adh", "dis", "b_aya", "b_care", "rel", "type", "action", "reward")}
    done = 0
    while done < n_trajectories:
        n = min(chunk, n_trajectories - done)
        idx = rng.integers(len(population), size=n)
        params = population.batch(idx)
        rec = _Recorder(FixedProbPolicy.from_rng(0.5, 0.5, 0.5, rng, n))
        traj = simulate(params, rec, EnvNoise.draw(rng, n), mediator_gamma=mediator_gamma)
        stacked = [np.stack([np.broadcast_to(r[j], (n,)) for r in rec.rows], axis=1) for j in range(7)]
        for key, arr in zip(("adh", "dis", "b_aya", "b_care", "rel", "type", "action"), stacked):
            cols[key].append(arr)
        cols["reward"].append(traj.adherence)
        done += n
    return {k: np.concatenate(v, axis=0) for k, v in cols.items()}


def fitted_q_iteration(s, a, r, s_next, terminal, discount, max_sweeps, tol):
    """Exact Bellman sweeps on the empirical transition model.

    Each sweep replaces Q(s, a) with the average of r + discount * max Q(s')
    over the logged transitions from (s, a); unvisited pairs stay at 0.
    Returns (Q, sweeps, converged, last max-change).
    """
    sa = s * N_JOINT + a
    size = N_STATES * N_JOINT
    count = np.bincount(sa, minlength=size).astype(float)
    rsum = np.bincount(sa, weights=r, minlength=size)
    visited = count > 0
    safe = np.where(visited, count, 1.0)
    invalid = ~VALID_ACTIONS[np.arange(N_STATES) % N_TYPES]
    live = ~terminal
    q = np.zeros(size)
    delta = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        qm = q.reshape(N_STATES, N_JOINT).copy()
        qm[invalid] = -np.inf
        v = qm.max(axis=1)
        vsum = np.bincount(sa[live], weights=v[s_next[live]], minlength=size)
        q_new = np.where(visited, (rsum + discount * vsum) / safe, 0.0)
        delta = np.max(np.abs(q_new - q))
        q = q_new
        sweeps += 1
        if delta < tol:
            break
    qm = q.reshape(N_STATES, N_JOINT).copy()
    qm[invalid] = -np.inf
    return qm, sweeps, delta < tol, delta


def approx_optimal_policy(population: Population, rng: np.random.Generator,
                          config: QLearningConfig | None = None,
                          mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA) -> TabularPolicy:
    config = config or QLearningConfig()
    data = random_policy_dataset(population, rng, config.n_trajectories, config.chunk, mediator_gamma)
    edges = {k: (float(data[k].min()), float(data[k].max())) for k in ("dis", "b_aya", "b_care")}
    disc = Discretizer(edges["dis"], edges["b_aya"], edges["b_care"])
    s = disc.index(data["adh"], data["dis"], data["b_aya"], data["b_care"], data["rel"], data["type"])
    a = data["action"].astype(np.int64)
    r = data["reward"]
    # Next state is the following slot of the same trajectory; the last slot ends it.
    s_next = np.empty_like(s)
    s_next[:, :-1] = s[:, 1:]
    s_next[:, -1] = 0
    terminal = np.zeros(s.shape, dtype=bool)
    terminal[:, -1] = True
    q, sweeps, ok, _ = fitted_q_iteration(s.ravel(), a.ravel(), r.ravel(), s_next.ravel(),
                                          terminal.ravel(), config.discount, config.max_sweeps, config.tol)
    return TabularPolicy(disc, q, sweeps=sweeps, converged=ok)
