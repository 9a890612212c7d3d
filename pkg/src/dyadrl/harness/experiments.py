"""Learning curves, ablations and collaboration analyses built on :func:`run_trial`."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _seeding
from ..agents.policies import MultiAgentPolicy
from ..env_model.batch import EnvNoise, FixedProbPolicy, simulate
from ..env_model.clock import ContractViolation
from .trial import BASELINE, Algorithm, AlgorithmKind, RunMetrics, Testbed, TrialConfig, run_trial, simulate_runs


def cumulative_improvement(runs: RunMetrics, baseline: RunMetrics, per_dyad: bool = False):
    """Pointwise mean and sample sd (ddof=1) over runs of cumulative adherence minus baseline.

    With ``per_dyad`` the cumulative difference after k dyads is divided by k.
    Runs are paired by run id and must share their dyad sequences.
    """
    if runs.n_runs != baseline.n_runs or runs.dyad_ids.shape != baseline.dyad_ids.shape:
        raise ContractViolation("run sets differ in size")
    if not np.array_equal(runs.run_ids, baseline.run_ids) or not np.array_equal(runs.dyad_ids, baseline.dyad_ids):
        raise ContractViolation("run sets are not paired on the same dyad sequences")
    diff = (runs.cumulative - baseline.cumulative).astype(float)
    if per_dyad:
        diff = diff / np.arange(1, diff.shape[1] + 1)
    sd = diff.std(axis=0, ddof=1) if diff.shape[0] > 1 else np.zeros(diff.shape[1])
    return diff.mean(axis=0), sd


@dataclass
class Summary:
    """End-of-trial improvement per dyad (adherent doses out of 196) over the random baseline."""

    algorithm: str
    mean: float
    se: float
    relative: float
    baseline_mean: float
    n_runs: int

    def as_row(self) -> dict:
        return {"algorithm": self.algorithm, "mean_improvement": self.mean, "se": self.se,
                "relative_improvement": self.relative, "baseline_per_dyad": self.baseline_mean,
                "n_runs": self.n_runs}


def summarize(runs: RunMetrics, baseline: RunMetrics) -> Summary:
    mean, sd = cumulative_improvement(runs, baseline, per_dyad=True)
    n = runs.n_runs
    base = float(baseline.total.mean() / baseline.dyad_ids.shape[1])
    return Summary(runs.algorithm, float(mean[-1]), float(sd[-1] / np.sqrt(n)), float(mean[-1] / base), base, n)


def pooled_se(a: Summary, b: Summary) -> float:
    return float(np.hypot(a.se, b.se))


ALGORITHMS = (Algorithm(AlgorithmKind.SINGLE), Algorithm(AlgorithmKind.MULTI), Algorithm(AlgorithmKind.SURROGATE))


def learning_curves(testbed: Testbed, algorithms=ALGORITHMS, n_runs: int = 200, n_dyads: int = 25,
                    master_seed: int = 0, jobs: int = 1):
    """Run each algorithm and the uniform-random baseline on one testbed.

    Returns ``(metrics by label, baseline metrics)``.
    """
    def cfg(alg):
        return TrialConfig(alg, n_dyads, n_runs, testbed.ste_target, testbed.variant, master_seed)

    baseline = run_trial(cfg(BASELINE), testbed, jobs)
    out = {a.label: run_trial(cfg(a), testbed, jobs) for a in algorithms}
    return out, baseline


@dataclass
class AblationCell:
    testbed: str
    summaries: dict
    curves: dict
    overlap_ok: bool | None = None


def ablation_suite(testbeds: list[Testbed], algorithms=ALGORITHMS, n_runs: int = 200, n_dyads: int = 25,
                   master_seed: int = 0, jobs: int = 1) -> list[AblationCell]:
    """All algorithms on every testbed; NoMediator cells also check surrogate-vs-naive overlap."""
    report = []
    for tb in testbeds:
        metrics, base = learning_curves(tb, algorithms, n_runs, n_dyads, master_seed, jobs)
        sums = {k: summarize(m, base) for k, m in metrics.items()}
        curves = {k: cumulative_improvement(m, base, per_dyad=True) for k, m in metrics.items()}
        cell = AblationCell(tb.label, sums, curves)
        s, m = sums.get(AlgorithmKind.SURROGATE.value), sums.get(AlgorithmKind.MULTI.value)
        if tb.variant.kind.value == "NoMediator" and s and m:
            cell.overlap_ok = abs(s.mean - m.mean) < pooled_se(s, m)
        report.append(cell)
    return report


@dataclass
class CollaborationResult:
    component: str
    fixed_probs: dict
    rates: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return float(self.rates.mean())

    @property
    def se(self) -> float:
        return float(self.rates.std(ddof=1) / np.sqrt(len(self.rates))) if len(self.rates) > 1 else float("nan")


def collaboration_experiment(testbed: Testbed, trained: str, fixed_probs: dict, n_dyads: int = 1000,
                             n_reps: int = 8, master_seed: int = 0) -> CollaborationResult:
    """Train one surrogate-reward agent (``"REL"`` or ``"CARE"``) while the other two
    components deliver with fixed probabilities; return its intervention rate.

    ``n_reps`` independent replications run in lockstep; the rate is averaged
    over all of the agent's decisions across the ``n_dyads`` dyads.
    """
    comp = {"REL": "rel", "CARE": "care"}[trained.upper()]
    fixed = {c: float(p) for c, p in fixed_probs.items()}
    if comp in fixed or set(fixed) | {comp} != {"aya", "care", "rel"}:
        raise ValueError("fix exactly the two components that are not trained")
    policy = MultiAgentPolicy(n_reps, use_surrogate=True, fixed_probs=fixed, capacity=1024)
    label = f"collab-{comp}-" + ",".join(f"{k}={v:g}" for k, v in sorted(fixed.items()))
    config = TrialConfig(BASELINE, n_dyads, n_reps, None, testbed.variant, master_seed, stream_key=label)
    simulate_runs(config, testbed, range(n_reps), policy=policy)
    return CollaborationResult(comp, fixed, policy.intervention_rate(comp))


def fixed_prob_sweep(testbed: Testbed, vary: str, grid, fixed_probs: dict, n_lanes: int = 4000,
                     seed: int = 0) -> dict:
    """Mean adherence per dyad for each probability of component ``vary`` with the others fixed.

    All grid points share the same dyads and environment noise.
    """
    rng = _seeding.stream(seed, _seeding.SETUP, f"sweep-{vary}")
    idx = rng.integers(len(testbed.population), size=n_lanes)
    params = testbed.population.batch(idx)
    noise = EnvNoise.draw(rng, n_lanes)
    init = noise.initial_state(params, testbed.mediator_gamma)
    u = rng.random((196, 3, n_lanes))
    out = {}
    for p in grid:
        probs = dict(fixed_probs, **{vary: p})
        pol = FixedProbPolicy(probs["aya"], probs["care"], probs["rel"], u)
        traj = simulate(params, pol, noise, init, testbed.mediator_gamma)
        out[p] = float(traj.adherence.mean())
    return out
