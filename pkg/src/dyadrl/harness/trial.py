"""Testbeds and sequential-recruitment trial simulation."""
from __future__ import annotations

import enum
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import _seeding
from ..agents.policies import (
    FixedProbLanePolicy,
    LanePolicy,
    MultiAgentPolicy,
    SingleAgentPolicy,
    TabularLanePolicy,
)
from ..env_model.batch import EnvNoise
from ..env_model.calibration import (
    REFERENCE_C_TREAT,
    compute_ste,
    impute_population,
    solve_c_treat,
)
from ..env_model.clock import ALL_CLOCKS, DECISIONS_PER_DYAD
from ..env_model.dynamics import DEFAULT_MEDIATOR_GAMMA, env_step
from ..env_model.optimal import QLearningConfig, TabularPolicy, approx_optimal_policy
from ..env_model.params import ConfigurationError, Population
from ..env_model.variants import TestbedVariant, make_variant

STE_MISMATCH_LIMIT = 0.05


class AlgorithmKind(str, enum.Enum):
    SINGLE = "SingleAgent"
    MULTI = "MultiAgent"
    SURROGATE = "MultiAgentSurrogate"
    RANDOM = "UniformRandom"
    FIXED = "FixedProb"
    OPTIMAL = "OptimalApprox"


@dataclass(frozen=True)
class Algorithm:
    kind: AlgorithmKind
    probs: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "kind", AlgorithmKind(self.kind))
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ConfigurationError(f"probabilities {self.probs} outside [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        """``"MultiAgent"`` or ``"FixedProb(0.7, 0.7, 0.7)"``."""
        text = text.strip()
        m = re.fullmatch(r"FixedProb\(([^)]*)\)", text)
        if m:
            probs = tuple(float(x) for x in m.group(1).split(","))
            if len(probs) == 1:
                probs = probs * 3
            if len(probs) != 3:
                raise ConfigurationError(f"FixedProb needs 1 or 3 probabilities: {text!r}")
            return cls(AlgorithmKind.FIXED, probs)
        try:
            return cls(AlgorithmKind(text))
        except ValueError:
            raise ConfigurationError(f"unknown algorithm {text!r}") from None

    @property
    def label(self) -> str:
        if self.kind is AlgorithmKind.FIXED:
            return "FixedProb({:g},{:g},{:g})".format(*self.probs)
        return self.kind.value


BASELINE = Algorithm(AlgorithmKind.RANDOM)


@dataclass
class Testbed:
    """A population with treatment effects sized to a target effect."""

    __test__ = False

    label: str
    population: Population
    c_treat: float
    variant: TestbedVariant
    ste_target: Optional[float] = None
    achieved_ste: Optional[float] = None
    opt_policy: Optional[TabularPolicy] = None
    mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA
    evaluations: list = field(default_factory=list)

    @property
    def reference_c_treat(self) -> Optional[float]:
        return REFERENCE_C_TREAT.get(self.ste_target) if self.ste_target is not None else None


def label_for(variant: TestbedVariant, ste_target) -> str:
    return f"{variant.kind.value}-ste{ste_target:g}" if ste_target is not None else variant.kind.value


def build_testbed(base: Population, ste_target: float, variant: TestbedVariant | None = None,
                  seed: int = 0, n_eval: int = 50, q_config: QLearningConfig | None = None,
                  tol: float = 0.01, mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA,
                  cache: dict | None = None) -> Testbed:
    """Tune c_treat so the optimal-vs-no-intervention STE hits ``ste_target``.

    ``base`` must already carry burden scaling. Every STE evaluation reuses
    the same random streams so the search sees a deterministic curve.
    """
    variant = variant or TestbedVariant()
    env_base = make_variant(base, variant, _seeding.stream(seed, _seeding.SETUP, "variant"))

    def ste_fn(c):
        return compute_ste(c, env_base, None, n_eval, _seeding.stream(seed, _seeding.SETUP, "ste"),
                           hetero_seed=seed, q_config=q_config, mediator_gamma=mediator_gamma)

    res = solve_c_treat(ste_fn, ste_target, tol=tol, cache=cache)
    return build_testbed_at(base, res.c_treat, variant, seed, ste_target=ste_target,
                          achieved_ste=res.achieved, q_config=q_config,
                          mediator_gamma=mediator_gamma, evaluations=res.evaluations)


def build_testbed_at(base: Population, c_treat: float, variant: TestbedVariant | None = None,
                   seed: int = 0, ste_target=None, achieved_ste=None,
                   q_config: QLearningConfig | None = None, with_policy: bool = True,
                   mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA, evaluations=None) -> Testbed:
    variant = variant or TestbedVariant()
    env_base = make_variant(base, variant, _seeding.stream(seed, _seeding.SETUP, "variant"))
    pop = impute_population(env_base, c_treat, hetero_seed=seed)
    policy = None
    if with_policy:
        # Same stream as inside compute_ste, so the policy is the one the STE was measured with.
        q_rng, _ = _seeding.stream(seed, _seeding.SETUP, "ste").spawn(2)
        policy = approx_optimal_policy(pop, q_rng, q_config, mediator_gamma)
    pop.meta.update({"ste_target": repr(ste_target), "achieved_ste": repr(achieved_ste),
                     "variant": variant.kind.value})
    return Testbed(label_for(variant, ste_target), pop, c_treat, variant, ste_target,
                   achieved_ste, policy, mediator_gamma, list(evaluations or []))


@dataclass
class TrialConfig:
    algorithm: Algorithm = BASELINE
    n_dyads: int = 25
    n_runs: int = 200
    ste_target: Optional[float] = None
    variant: TestbedVariant = field(default_factory=TestbedVariant)
    master_seed: int = 0
    run_start: int = 0
    stream_key: Optional[str] = None  # defaults to the algorithm label

    def __post_init__(self):
        if isinstance(self.algorithm, str):
            self.algorithm = Algorithm.parse(self.algorithm)
        if self.n_dyads < 1 or self.n_runs < 1:
            raise ConfigurationError("n_dyads and n_runs must be >= 1")

    @property
    def key(self) -> str:
        return self.stream_key or self.algorithm.label


@dataclass
class RunMetrics:
    """Adherence outcomes of a block of runs; arrays are indexed by run first."""

    algorithm: str
    run_ids: np.ndarray
    dyad_ids: np.ndarray  # (runs, n_dyads)
    adherence: np.ndarray  # (runs, n_dyads, 196), 0/1
    intervention_rates: dict = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.run_ids)

    @property
    def dyad_totals(self) -> np.ndarray:
        return self.adherence.sum(axis=2, dtype=np.int64)

    @property
    def cumulative(self) -> np.ndarray:
        """Adherence summed over dyads 1..k, shape (runs, n_dyads); nondecreasing in k."""
        return np.cumsum(self.dyad_totals, axis=1)

    @property
    def total(self) -> np.ndarray:
        return self.cumulative[:, -1]

    @classmethod
    def merge(cls, parts: list["RunMetrics"]) -> "RunMetrics":
        parts = sorted(parts, key=lambda p: int(p.run_ids[0]))
        rates = {k: np.concatenate([p.intervention_rates[k] for p in parts]) for k in parts[0].intervention_rates}
        return cls(parts[0].algorithm, np.concatenate([p.run_ids for p in parts]),
                   np.concatenate([p.dyad_ids for p in parts]),
                   np.concatenate([p.adherence for p in parts]), rates)


def make_policy(algorithm: Algorithm, n_lanes: int, testbed: Testbed) -> LanePolicy:
    k = algorithm.kind
    if k is AlgorithmKind.SINGLE:
        return SingleAgentPolicy(n_lanes)
    if k is AlgorithmKind.MULTI:
        return MultiAgentPolicy(n_lanes, use_surrogate=False)
    if k is AlgorithmKind.SURROGATE:
        return MultiAgentPolicy(n_lanes, use_surrogate=True)
    if k is AlgorithmKind.RANDOM:
        return FixedProbLanePolicy(n_lanes, 0.5, 0.5, 0.5)
    if k is AlgorithmKind.FIXED:
        return FixedProbLanePolicy(n_lanes, *algorithm.probs)
    if testbed.opt_policy is None:
        raise ConfigurationError("testbed has no approximate optimal policy")
    return TabularLanePolicy(n_lanes, testbed.opt_policy)


def check_testbed(config: TrialConfig, testbed: Testbed) -> None:
    if config.ste_target is not None:
        if testbed.achieved_ste is None:
            raise ConfigurationError("testbed has no measured STE to check against the target")
        if abs(testbed.achieved_ste - config.ste_target) > STE_MISMATCH_LIMIT:
            raise ConfigurationError(
                f"testbed STE {testbed.achieved_ste:.3f} differs from target {config.ste_target} "
                f"by more than {STE_MISMATCH_LIMIT}")
    if config.variant.kind is not testbed.variant.kind:
        raise ConfigurationError(f"trial wants {config.variant.kind.value}, testbed is {testbed.variant.kind.value}")


def simulate_runs(config: TrialConfig, testbed: Testbed, runs, policy: LanePolicy | None = None,
                  cell: str | None = None) -> tuple[RunMetrics, LanePolicy]:
    """Core loop: the given runs in lockstep, dyads recruited one after another."""
    runs = list(runs)
    R = len(runs)
    pop = testbed.population
    seed = config.master_seed
    dyads = _seeding.dyad_sequence(seed, runs, config.n_dyads, len(pop))
    policy = policy or make_policy(config.algorithm, R, testbed)
    cell = cell or f"{config.key}|{testbed.label}"
    adh = np.zeros((R, config.n_dyads, DECISIONS_PER_DYAD), dtype=np.uint8)
    gamma = testbed.mediator_gamma
    for k in range(config.n_dyads):
        params = pop.batch(dyads[:, k])
        noise = EnvNoise.per_lane(_seeding.lane_streams(seed, _seeding.ENV, cell, runs, k))
        policy.begin_dyad(_seeding.lane_streams(seed, _seeding.POLICY, cell, runs, k))
        state = noise.initial_state(params, gamma)
        for clock in ALL_CLOCKS:
            actions = policy.act(state, clock)
            nxt, y, obs = env_step(state, clock, actions, params, noise.step(clock.index), gamma)
            policy.after_step(state, clock, actions, y, obs, nxt)
            adh[:, k, clock.index] = y
            state = nxt
    rates = {c: policy.intervention_rate(c) for c in ("aya", "care", "rel")}
    return RunMetrics(config.algorithm.label, np.array(runs), dyads, adh, rates), policy


def _run_chunk(args):
    config, testbed, runs = args
    return simulate_runs(config, testbed, runs)[0]


def run_trial(config: TrialConfig, testbed: Testbed, jobs: int = 1, chunk_size: int | None = None) -> RunMetrics:
    """Simulate ``config.n_runs`` independent trials of ``config.n_dyads`` dyads.

    Results depend only on the master seed and run ids, not on ``jobs`` or
    the chunking.
    """
    check_testbed(config, testbed)
    runs = list(range(config.run_start, config.run_start + config.n_runs))
    if jobs <= 1:
        if chunk_size is None:
            return simulate_runs(config, testbed, runs)[0]
        chunks = [runs[i:i + chunk_size] for i in range(0, len(runs), chunk_size)]
        return RunMetrics.merge([simulate_runs(config, testbed, c)[0] for c in chunks])
    size = chunk_size or math.ceil(len(runs) / jobs)
    chunks = [runs[i:i + size] for i in range(0, len(runs), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, [(config, testbed, c) for c in chunks]))
    return RunMetrics.merge(parts)
