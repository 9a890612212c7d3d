"""Burden standardization, treatment-effect imputation and effect-size tuning."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .batch import EnvNoise, ZeroPolicy, simulate
from .clock import N_DAYS, SLOTS_PER_WEEK
from .dynamics import DEFAULT_MEDIATOR_GAMMA, burden_update
from .optimal import QLearningConfig, TabularPolicy, approx_optimal_policy
from .params import FIELD_INDEX, ConfigurationError, DyadParams, Population

BURDEN_STEPS = 10_000
BURDEN_CHAINS = 64
BURDEN_WARMUP = 1_000

# (treatment field, baseline coefficient it scales with, sign)
TAU_RULES: tuple[tuple[str, str, int], ...] = (
    ("am_tau0", "am_b1", +1),
    ("am_tau1", "am_b1", +1),
    ("am_tau2", "am_b1", -1),
    ("pm_tau0", "pm_b1", +1),
    ("pm_tau1", "pm_b1", +1),
    ("pm_tau2", "pm_b1", -1),
    ("care_tau0", "care_b1", -1),
    ("care_tau1", "care_b1", -1),
    ("care_tau2", "care_b1", +1),
    ("rel_tau0", "rel_b1", +1),
    ("rel_tau1", "rel_b1", -1),
)

# Effect-size coefficients reported for the original testbeds; kept as metadata.
REFERENCE_C_TREAT = {0.15: 0.2, 0.3: 0.3, 0.5: 0.5}


class CalibrationError(RuntimeError):
    """Burden scaling or effect-size tuning failed."""


class UndefinedSTEError(CalibrationError):
    """The no-intervention outcome does not vary across dyads."""


# ---------------------------------------------------------------- burden


def simulate_burden(th, omega, period: int, n_steps: int, n_chains: int,
                    rng: np.random.Generator, warmup: int = BURDEN_WARMUP) -> np.ndarray:
    """Raw burden paths under Bernoulli(1/2) actions, shape (n_steps, n_chains).

    ``period`` is the number of burden steps per week: the relationship
    action is redrawn every ``period`` steps, the own action every step.
    """
    th0, th1, th2, th3 = th
    raw = np.zeros(n_chains)
    out = np.empty((n_steps, n_chains))
    a_rel = np.zeros(n_chains)
    for t in range(warmup + n_steps):
        if t % period == 0:
            a_rel = (rng.random(n_chains) < 0.5).astype(float)
        a_own = (rng.random(n_chains) < 0.5).astype(float)
        raw = burden_update(raw, a_own, a_rel, th0, th1, th2, th3, omega, rng.standard_normal(n_chains))
        if t >= warmup:
            out[t - warmup] = raw
    return out


def _scaling(th, omega, period, rng, n_steps, n_chains):
    raw = simulate_burden(th, omega, period, n_steps, n_chains, rng)
    mean, sd = float(raw.mean()), float(raw.std())
    if not sd >= 1e-9:
        raise CalibrationError(f"degenerate burden spread {sd!r} for theta={th}, omega={omega}")
    return mean, sd


def calibrate_burden_scaling(params: DyadParams, rng: np.random.Generator,
                             n_steps: int = BURDEN_STEPS, n_chains: int = BURDEN_CHAINS) -> DyadParams:
    """Store the mean and sd of raw burden under random actions.

    ``n_chains`` independent chains of ``n_steps`` steps each are pooled; a
    single chain of 10,000 steps is too autocorrelated to pin the mean down
    to a few hundredths of an sd.
    """
    p = params
    aya = _scaling((p.aya_th0, p.aya_th1, p.aya_th2, p.aya_th3), p.aya_omega,
                   SLOTS_PER_WEEK, rng, n_steps, n_chains)
    care = _scaling((p.care_th0, p.care_th1, p.care_th2, p.care_th3), p.care_omega,
                    N_DAYS, rng, n_steps, n_chains)
    return replace(p, aya_mean=aya[0], aya_sd=aya[1], care_mean=care[0], care_sd=care[1])


_AYA_COLS = ("aya_th0", "aya_th1", "aya_th2", "aya_th3", "aya_omega")
_CARE_COLS = ("care_th0", "care_th1", "care_th2", "care_th3", "care_omega")


def calibrate_population_burden(pop: Population, rng: np.random.Generator,
                                n_steps: int = BURDEN_STEPS, n_chains: int = BURDEN_CHAINS) -> Population:
    """Burden scaling for every dyad; dyads sharing burden coefficients share one run."""
    out = pop.copy()
    for cols, period, mean_col, sd_col in ((_AYA_COLS, SLOTS_PER_WEEK, "aya_mean", "aya_sd"),
                                           (_CARE_COLS, N_DAYS, "care_mean", "care_sd")):
        block = pop.table[:, [FIELD_INDEX[c] for c in cols]]
        uniq, inverse = np.unique(block, axis=0, return_inverse=True)
        stats = np.array([_scaling(tuple(row[:4]), row[4], period, rng, n_steps, n_chains) for row in uniq])
        out.table[:, FIELD_INDEX[mean_col]] = stats[inverse.ravel(), 0]
        out.table[:, FIELD_INDEX[sd_col]] = stats[inverse.ravel(), 1]
    out.meta["burden_calibrated"] = "1"
    return out


# ---------------------------------------------------------------- treatment effects


def impute_treatment_effects(params: DyadParams, c_treat: float,
                             rng: np.random.Generator | None = None,
                             beta1_spread: Mapping[str, float] | None = None) -> DyadParams:
    """Fill every treatment coefficient as a signed multiple of |b1| of its model.

    With ``rng`` and ``beta1_spread`` (population sd of each b1 field), each
    coefficient also gets a N(0, (c_treat * spread)^2) dyad-level deviation.
    """
    if c_treat < 0 or not math.isfinite(c_treat):
        raise ConfigurationError(f"c_treat must be a finite non-negative number, got {c_treat}")
    values = {}
    z = rng.standard_normal(len(TAU_RULES)) if rng is not None else np.zeros(len(TAU_RULES))
    spread = beta1_spread or {}
    for k, (tau, b1, sign) in enumerate(TAU_RULES):
        mag = abs(getattr(params, b1))
        values[tau] = sign * c_treat * mag
        s = spread.get(b1, 0.0)
        if s > 0 and c_treat > 0:
            if mag == 0:
                warnings.warn(f"{b1} is zero; no heterogeneity added to {tau}", RuntimeWarning, stacklevel=2)
                continue
            values[tau] += c_treat * s * z[k]
    return replace(params, **values)


def impute_population(pop: Population, c_treat: float, hetero_seed: int = 0,
                      heterogeneity: bool = True) -> Population:
    """Vectorized :func:`impute_treatment_effects` over a population.

    The heterogeneity normals come from ``hetero_seed`` alone, so populations
    built at different ``c_treat`` share them.
    """
    if c_treat < 0 or not math.isfinite(c_treat):
        raise ConfigurationError(f"c_treat must be a finite non-negative number, got {c_treat}")
    n = len(pop)
    z = np.random.default_rng(hetero_seed).standard_normal((n, len(TAU_RULES)))
    out = pop.copy()
    for k, (tau, b1, sign) in enumerate(TAU_RULES):
        beta = pop.column(b1)
        mag = np.abs(beta)
        col = sign * c_treat * mag
        spread = float(beta.std(ddof=1)) if (heterogeneity and n > 1) else 0.0
        if spread > 0 and c_treat > 0:
            zero = mag == 0
            if zero.any():
                warnings.warn(f"{int(zero.sum())} dyads have {b1} = 0; no heterogeneity on {tau}",
                              RuntimeWarning, stacklevel=2)
            col = col + np.where(zero, 0.0, c_treat * spread * z[:, k])
        out.table[:, FIELD_INDEX[tau]] = col
    out.meta.update({"c_treat": repr(float(c_treat)), "hetero_seed": str(hetero_seed)})
    return out


# ---------------------------------------------------------------- STE


@dataclass
class STEResult:
    ste: float
    mean_gain: float
    baseline_sd: float
    per_dyad_opt: np.ndarray
    per_dyad_zero: np.ndarray


def evaluate_policies(population: Population, policies, n_eval: int, rng: np.random.Generator,
                      chunk: int = 4000, mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA):
    """Mean cumulative adherence per dyad for each policy under shared noise.

    Returns an array (n_policies, n_dyads). Each dyad gets ``n_eval``
    replications; every policy sees the same noise in each replication.
    """
    n = len(population)
    lanes = np.repeat(np.arange(n), n_eval)
    totals = np.zeros((len(policies), n))
    for start in range(0, lanes.size, chunk):
        idx = lanes[start:start + chunk]
        params = population.batch(idx)
        noise = EnvNoise.draw(rng, idx.size)
        init = noise.initial_state(params, mediator_gamma)
        for j, make in enumerate(policies):
            pol = make(idx.size) if callable(make) and not hasattr(make, "act") else make
            traj = simulate(params, pol, noise, init, mediator_gamma)
            np.add.at(totals[j], idx, traj.cumulative_adherence)
    return totals / n_eval


def compute_ste(c_treat: float, population: Population, opt_policy: TabularPolicy | None,
                n_eval: int, rng: np.random.Generator, hetero_seed: int = 0,
                q_config: QLearningConfig | None = None, details: bool = False,
                mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA):
    """Standardized effect of the (approximately) optimal policy over never intervening.

    ``population`` holds baseline coefficients; treatment effects are imputed
    at ``c_treat``. When ``opt_policy`` is None it is learned on the imputed
    population first.
    """
    if n_eval < 2:
        raise ConfigurationError("n_eval must be at least 2")
    q_rng, eval_rng = rng.spawn(2)
    env = impute_population(population, c_treat, hetero_seed)
    if opt_policy is None:
        opt_policy = approx_optimal_policy(env, q_rng, q_config, mediator_gamma)
    opt, zero = evaluate_policies(env, [opt_policy, ZeroPolicy()], n_eval, eval_rng,
                                  mediator_gamma=mediator_gamma)
    sd = float(zero.std(ddof=1)) if zero.size > 1 else 0.0
    if not sd > 1e-12:
        raise UndefinedSTEError("baseline cumulative adherence has zero spread across dyads")
    gain = float((opt - zero).mean())
    res = STEResult(gain / sd, gain, sd, opt, zero)
    return res if details else res.ste


@dataclass
class CalibrationResult:
    target: float
    c_treat: float
    achieved: float
    evaluations: list[tuple[float, float]] = field(default_factory=list)

    @property
    def reference_c_treat(self) -> float | None:
        return REFERENCE_C_TREAT.get(self.target)


def solve_c_treat(ste_fn: Callable[[float], float], target: float, tol: float = 0.01,
                  accept: float = 0.03, c_start: float = 0.5, c_max: float = 64.0,
                  max_iter: int = 30, cache: dict | None = None) -> CalibrationResult:
    """Find c with ste_fn(c) near ``target`` by bracketing then bisection.

    ``ste_fn`` should reuse its random numbers across calls so it is a
    deterministic function of c. Raises CalibrationError if no c within
    ``accept`` of the target is found.
    """
    cache = {} if cache is None else cache

    def f(c):
        if c not in cache:
            cache[c] = float(ste_fn(c))
        return cache[c]

    if target <= 0:
        raise ConfigurationError("STE target must be positive")
    lo, hi = 0.0, c_start
    known = sorted(cache.items())
    below = [(c, s) for c, s in known if s < target]
    above = [(c, s) for c, s in known if s >= target]
    if below:
        lo = max(below)[0]
    if above:
        hi = min(above)[0]
    while f(hi) < target:
        lo = hi
        hi *= 2
        if hi > c_max:
            raise CalibrationError(f"STE never reached {target} for c_treat up to {c_max}")
    best = min(cache.items(), key=lambda kv: abs(kv[1] - target))
    for _ in range(max_iter):
        if abs(best[1] - target) <= tol:
            break
        mid = 0.5 * (lo + hi)
        s = f(mid)
        if s < target:
            lo = mid
        else:
            hi = mid
        best = min(cache.items(), key=lambda kv: abs(kv[1] - target))
    if abs(best[1] - target) > accept:
        raise CalibrationError(f"closest STE {best[1]:.4f} at c={best[0]:.4f} misses target {target}")
    return CalibrationResult(target, best[0], best[1], sorted(cache.items()))
