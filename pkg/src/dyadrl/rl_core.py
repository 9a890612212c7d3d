"""Bayesian ridge regression and infinite-horizon randomized least-squares value iteration.

Two implementations of the same update live here:

* :func:`rlsvi_step` works on one :class:`AgentState`, keeps raw transitions
  and refits from scratch. It is the readable reference.
* :class:`BatchRLSVI` advances many independent agents in lockstep (one per
  simulated trial). It keeps the Gram matrix and X^T r as running sums and
  recomputes only the parameter-dependent bootstrap term on each call.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numba
import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .env_model.clock import ContractViolation

LAMBDA = 0.75
SIGMA = 0.5


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray


def ridge_posterior(X, y, lam: float = LAMBDA, sigma: float = SIGMA,
                    prior_mean=None) -> GaussianPosterior:
    """Posterior of a linear model under a N(prior_mean, I/lam) prior and N(0, sigma^2) noise."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam <= 0 or sigma <= 0:
        raise ContractViolation("lambda and sigma must be positive")
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ContractViolation(f"X {X.shape} and y {y.shape} are not conformable")
    d = X.shape[1]
    prior = np.zeros(d) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    if prior.shape != (d,):
        raise ContractViolation(f"prior mean has shape {prior.shape}, expected ({d},)")
    if X.shape[0] == 0:
        # Exact prior, rather than prior * lam / lam after a factorization.
        return GaussianPosterior(prior.copy(), np.eye(d) / lam)
    s2 = sigma * sigma
    precision = X.T @ X / s2 + lam * np.eye(d)
    factor = cho_factor(precision, lower=True)
    mean = cho_solve(factor, X.T @ y / s2 + lam * prior)
    cov = cho_solve(factor, np.eye(d))
    return GaussianPosterior(mean, 0.5 * (cov + cov.T))


class FeatureMap(Protocol):
    dim: int

    def evaluate(self, state, action) -> np.ndarray: ...


@dataclass(frozen=True)
class InteractionFeatures:
    """phi(s, a) = (1, s, a, s*a_1, ..., s*a_K) for binary action vectors a."""

    state_dim: int
    n_actions: int

    @property
    def dim(self) -> int:
        return 1 + self.state_dim + self.n_actions + self.n_actions * self.state_dim

    def evaluate(self, state, action) -> np.ndarray:
        s = np.asarray(state, dtype=float)
        a = np.atleast_1d(np.asarray(action, dtype=float))
        if s.shape != (self.state_dim,) or a.shape != (self.n_actions,):
            raise ContractViolation(f"state {s.shape} / action {a.shape} do not fit {self}")
        return np.concatenate(([1.0], s, a, np.outer(a, s).ravel()))

    def batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Row-wise features for (m, state_dim) states and (m, n_actions) actions."""
        m = states.shape[0]
        inter = (actions[:, :, None] * states[:, None, :]).reshape(m, -1)
        return np.concatenate((np.ones((m, 1)), states, actions, inter), axis=1)

    def action_set(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=self.n_actions))


def greedy_action(features: FeatureMap, theta, state, action_set: Sequence) -> tuple:
    """Maximizer of <phi(state, a), theta>, ties going to the lexicographically smallest a."""
    if len(action_set) == 0:
        raise ContractViolation("empty action set")
    best, best_val = None, -np.inf
    for a in sorted(tuple(np.atleast_1d(x).tolist()) for x in action_set):
        v = float(features.evaluate(state, a) @ theta)
        if best is None or v > best_val:
            best, best_val = a, v
    return best


def max_value(features: FeatureMap, theta, state, action_set: Sequence) -> float:
    return max(float(features.evaluate(state, a) @ theta) for a in action_set)


@dataclass
class AgentState:
    """One learner: transitions (s_i, a_i, r_i), a trailing state, and (theta, w)."""

    features: FeatureMap
    gamma: float
    lam: float = LAMBDA
    sigma: float = SIGMA
    theta: np.ndarray = None
    perturb_w: np.ndarray = None
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_state: Optional[np.ndarray] = None

    def __post_init__(self):
        d = self.features.dim
        if not 0 <= self.gamma < 1:
            raise ContractViolation("gamma must lie in [0, 1)")
        if self.theta is None:
            self.theta = np.zeros(d)
        if self.perturb_w is None:
            self.perturb_w = np.zeros(d)

    @property
    def n_transitions(self) -> int:
        return len(self.rewards)

    def observe(self, state) -> None:
        """Set the trailing state (the state the next decision is made in)."""
        self.next_state = np.asarray(state, dtype=float)

    def record(self, action, reward) -> None:
        """Close the transition from the trailing state."""
        if self.next_state is None:
            raise ContractViolation("record() before observe()")
        self.states.append(self.next_state)
        self.actions.append(np.atleast_1d(np.asarray(action, dtype=float)))
        self.rewards.append(float(reward))
        self.next_state = None


def rlsvi_targets(agent: AgentState, action_set=None) -> np.ndarray:
    """r_i + gamma * max_a <phi(s_{i+1}, a), theta> with the stored theta."""
    n = agent.n_transitions
    r = np.asarray(agent.rewards, dtype=float)
    if agent.gamma == 0 or n == 0:
        return r
    action_set = action_set or agent.features.action_set()
    nxt = agent.states[1:] + [agent.next_state]
    if agent.next_state is None:
        raise ContractViolation("bootstrap needs the state following the last transition")
    boot = np.array([max_value(agent.features, agent.theta, s, action_set) for s in nxt])
    return r + agent.gamma * boot


def sample_perturbation(w_old, gamma: float, chol_lower: np.ndarray, z: np.ndarray) -> np.ndarray:
    """gamma * w_old + sqrt(1 - gamma^2) * L^{-T} z, which is N(gamma w, (1-gamma^2) Sigma)
    when L L^T is the posterior precision."""
    return gamma * w_old + np.sqrt(1.0 - gamma * gamma) * solve_triangular(chol_lower, z, lower=True, trans="T")


def rlsvi_step(agent: AgentState, rng: np.random.Generator | None = None,
               z: np.ndarray | None = None) -> AgentState:
    """One value-iteration and posterior-sampling update; updates ``agent`` in place and returns it.

    Pass ``z`` (standard normals of length dim) to fix the perturbation draw.
    """
    d = agent.features.dim
    if z is None:
        z = rng.standard_normal(d)
    n = agent.n_transitions
    if n:
        X = np.array([agent.features.evaluate(s, a) for s, a in zip(agent.states, agent.actions)])
    else:
        X = np.zeros((0, d))
    y = rlsvi_targets(agent)
    s2 = agent.sigma ** 2
    precision = X.T @ X / s2 + agent.lam * np.eye(d)
    L = np.linalg.cholesky(precision)
    mean = cho_solve((L, True), X.T @ y / s2)
    w_new = sample_perturbation(agent.perturb_w, agent.gamma, L, z)
    agent.theta = mean + w_new
    agent.perturb_w = w_new
    return agent


# ---------------------------------------------------------------- batched learners


@numba.njit(fastmath=True, cache=True)
def _bootstrap_moments(UT, AT, n, theta, p1, K):
    """For each lane r, G[j, 0] = sum_i u_ij m_i and G[j, k+1] = sum_i u_ij a_ik m_i,
    where m_i = max_a <phi(s_{i+1}, a), theta_r> and u = (1, s).

    Column layout: UT (R, p1, cap+1) holds u for every stored state, the
    trailing state at column n; AT (R, K, cap) the actions. u_0 must be 1.
    """
    R = UT.shape[0]
    out = np.zeros((R, p1, K + 1))
    m = np.empty(n)
    v = np.empty(n)
    for r in range(R):
        th = theta[r]
        for i in range(n):
            m[i] = 0.0
        for j in range(p1):
            t = th[j]
            for i in range(n):
                m[i] += UT[r, j, i + 1] * t
        for k in range(K):
            t0 = th[p1 + k]
            for i in range(n):
                v[i] = t0
            for j in range(1, p1):
                t = th[p1 + K + k * (p1 - 1) + j - 1]
                for i in range(n):
                    v[i] += UT[r, j, i + 1] * t
            for i in range(n):
                if v[i] > 0.0:
                    m[i] += v[i]
        for j in range(p1):
            acc = 0.0
            for i in range(n):
                acc += UT[r, j, i] * m[i]
            out[r, j, 0] = acc
            for k in range(K):
                acc = 0.0
                for i in range(n):
                    acc += UT[r, j, i] * AT[r, k, i] * m[i]
                out[r, j, k + 1] = acc
    return out


def bootstrap_moments_reference(UT, AT, n, theta, p1, K):
    """Plain numpy version of the compiled kernel, used to cross-check it."""
    U = UT[:, :, : n + 1]
    base = np.einsum("rji,rj->ri", U[:, :, 1:], theta[:, :p1])
    th_k = np.concatenate(
        (theta[:, p1:p1 + K, None], theta[:, p1 + K:].reshape(-1, K, p1 - 1)), axis=2)  # (R, K, p1)
    vk = np.einsum("rji,rkj->rki", U[:, :, 1:], th_k)
    m = base + np.maximum(vk, 0.0).sum(axis=1)
    out = np.empty((UT.shape[0], p1, K + 1))
    out[:, :, 0] = np.einsum("rji,ri->rj", U[:, :, :n], m)
    out[:, :, 1:] = np.einsum("rji,rki,ri->rjk", U[:, :, :n], AT[:, :, :n], m)
    return out


def moments_to_features(G: np.ndarray) -> np.ndarray:
    """Rearrange (R, p1, K+1) moments into the (1, s, a, s*a) feature order."""
    R = G.shape[0]
    return np.concatenate((G[:, :, 0], G[:, 0, 1:], G[:, 1:, 1:].transpose(0, 2, 1).reshape(R, -1)), axis=1)


class BatchRLSVI:
    """``n_lanes`` independent agents with the same feature map, updated together.

    Per decision: :meth:`observe` the state, :meth:`update` the parameters,
    :meth:`act`, then :meth:`record` the action and reward once it is known.
    """

    def __init__(self, n_lanes: int, state_dim: int, n_actions: int, gamma: float,
                 lam: float = LAMBDA, sigma: float = SIGMA, capacity: int = 256):
        if not 0 <= gamma < 1:
            raise ContractViolation("gamma must lie in [0, 1)")
        self.features = InteractionFeatures(state_dim, n_actions)
        self.R, self.p1, self.K = n_lanes, state_dim + 1, n_actions
        self.d = self.features.dim
        self.gamma, self.lam, self.sigma = gamma, lam, sigma
        self.UT = np.zeros((n_lanes, self.p1, capacity + 1))
        self.UT[:, 0, :] = 1.0
        self.AT = np.zeros((n_lanes, n_actions, capacity))
        self.rewards = np.zeros((n_lanes, capacity))
        self.gram = np.zeros((n_lanes, self.d, self.d))
        self.xr = np.zeros((n_lanes, self.d))
        self.theta = np.zeros((n_lanes, self.d))
        self.w = np.zeros((n_lanes, self.d))
        self.n = 0
        self._has_state = False

    def _grow(self):
        cap = self.AT.shape[2]
        new = 2 * cap
        UT = np.zeros((self.R, self.p1, new + 1))
        UT[:, 0, :] = 1.0
        UT[:, :, : cap + 1] = self.UT
        AT = np.zeros((self.R, self.K, new))
        AT[:, :, :cap] = self.AT
        rw = np.zeros((self.R, new))
        rw[:, :cap] = self.rewards
        self.UT, self.AT, self.rewards = UT, AT, rw

    @property
    def state(self) -> np.ndarray:
        return self.UT[:, 1:, self.n]

    def observe(self, states: np.ndarray) -> None:
        self.UT[:, 1:, self.n] = states
        self._has_state = True

    def update(self, z: np.ndarray) -> None:
        """Refit on all closed transitions and resample (theta, w); z is (R, d) standard normal."""
        if not self._has_state:
            raise ContractViolation("update() needs the current state: call observe() first")
        s2 = self.sigma ** 2
        rhs = self.xr.copy()
        if self.gamma > 0 and self.n > 0:
            G = _bootstrap_moments(self.UT, self.AT, self.n, self.theta, self.p1, self.K)
            rhs += self.gamma * moments_to_features(G)
        precision = self.gram / s2 + self.lam * np.eye(self.d)
        L = np.linalg.cholesky(precision)
        mean = np.linalg.solve(precision, (rhs / s2)[:, :, None])[:, :, 0]
        pert = np.linalg.solve(L.transpose(0, 2, 1), z[:, :, None])[:, :, 0]
        self.w = self.gamma * self.w + np.sqrt(1.0 - self.gamma ** 2) * pert
        self.theta = mean + self.w

    def action_scores(self, states: np.ndarray | None = None) -> np.ndarray:
        """Per-component advantage u.theta_k of switching action k on, shape (R, K)."""
        u = np.concatenate((np.ones((self.R, 1)), self.state if states is None else states), axis=1)
        p1, K = self.p1, self.K
        th_k = np.concatenate((self.theta[:, p1:p1 + K, None],
                               self.theta[:, p1 + K:].reshape(self.R, K, p1 - 1)), axis=2)
        return np.einsum("rj,rkj->rk", u, th_k)

    def act(self) -> np.ndarray:
        """Greedy joint action; each component is on only if it strictly helps."""
        return (self.action_scores() > 0.0).astype(float)

    def record(self, actions: np.ndarray, rewards: np.ndarray) -> None:
        if not self._has_state:
            raise ContractViolation("record() without a current state")
        actions = np.asarray(actions, dtype=float).reshape(self.R, self.K)
        rewards = np.asarray(rewards, dtype=float).reshape(self.R)
        u = self.UT[:, 1:, self.n]
        phi = self.features.batch(u, actions)
        self.gram += phi[:, :, None] * phi[:, None, :]
        self.xr += phi * rewards[:, None]
        self.AT[:, :, self.n] = actions
        self.rewards[:, self.n] = rewards
        self.n += 1
        self._has_state = False
        if self.n >= self.AT.shape[2]:
            self._grow()

    def lane_agent(self, r: int) -> AgentState:
        """Reference :class:`AgentState` holding lane ``r``'s data and parameters."""
        a = AgentState(self.features, self.gamma, self.lam, self.sigma,
                       theta=self.theta[r].copy(), perturb_w=self.w[r].copy())
        for i in range(self.n):
            a.states.append(self.UT[r, 1:, i].copy())
            a.actions.append(self.AT[r, :, i].copy())
            a.rewards.append(float(self.rewards[r, i]))
        if self._has_state:
            a.next_state = self.UT[r, 1:, self.n].copy()
        return a
