"""INI experiment configuration.

Sections and keys (all optional; unknown sections or keys are rejected)::

    [population]
    seed = 1
    size = 171
    mediator_multiplier = 1.0
    am_b0 = 1.0, 1.2          ; any generated coefficient as "mean, spread"

    [variant]
    kind = Vanilla            ; Vanilla | NoMediator | DirectDistressEffect | RandomMediator
    c_treat = 1.0
    mediator_sd = 0.3

    [trial]
    algorithms = MultiAgentSurrogate; MultiAgent; SingleAgent
    n_dyads = 25
    n_runs = 200
    master_seed = 0
    ste_targets = 0.15, 0.3, 0.5

    [calibration]
    n_eval = 50
    tol = 0.01
    mediator_gamma = 0.9
    q_trajectories = 2000
    q_max_sweeps = 1000

    [ablation]
    variants = Vanilla, NoMediator

    [collaboration]
    n_dyads = 1000
    n_reps = 8
    probabilities = 0.25, 0.75
    other_probability = 0.5
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .env_model.dynamics import DEFAULT_MEDIATOR_GAMMA
from .env_model.optimal import QLearningConfig
from .env_model.params import DEFAULT_COEFFS, ConfigurationError, PopulationConfig
from .env_model.variants import TestbedVariant, VariantKind
from .harness.experiments import ALGORITHMS
from .harness.trial import Algorithm


@dataclass
class ExperimentConfig:
    population_seed: int = 1
    population_size: int = 171
    population: PopulationConfig = field(default_factory=PopulationConfig)
    variant: TestbedVariant = field(default_factory=TestbedVariant)
    algorithms: tuple = ALGORITHMS
    n_dyads: int = 25
    n_runs: int = 200
    master_seed: int = 0
    ste_targets: tuple = (0.15, 0.3, 0.5)
    n_eval: int = 50
    tol: float = 0.01
    mediator_gamma: float = DEFAULT_MEDIATOR_GAMMA
    q_config: QLearningConfig = field(default_factory=QLearningConfig)
    ablation_variants: tuple = (VariantKind.VANILLA, VariantKind.NO_MEDIATOR)
    collab_dyads: int = 1000
    collab_reps: int = 8
    collab_probabilities: tuple = (0.25, 0.75)
    collab_other: float = 0.5
    text: str = ""

    def variant_of(self, kind) -> TestbedVariant:
        return TestbedVariant(VariantKind(kind), self.variant.c_treat, self.variant.mediator_sd)


def _floats(s: str, sep: str = ",") -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(sep) if x.strip())


_SCALARS = {
    "population": {"seed": ("population_seed", int), "size": ("population_size", int)},
    "trial": {"n_dyads": ("n_dyads", int), "n_runs": ("n_runs", int), "master_seed": ("master_seed", int),
              "ste_targets": ("ste_targets", _floats),
              "algorithms": ("algorithms", lambda s: tuple(Algorithm.parse(a) for a in s.split(";") if a.strip()))},
    "calibration": {"n_eval": ("n_eval", int), "tol": ("tol", float), "mediator_gamma": ("mediator_gamma", float)},
    "ablation": {"variants": ("ablation_variants",
                              lambda s: tuple(VariantKind(v.strip()) for v in s.split(",") if v.strip()))},
    "collaboration": {"n_dyads": ("collab_dyads", int), "n_reps": ("collab_reps", int),
                      "probabilities": ("collab_probabilities", _floats),
                      "other_probability": ("collab_other", float)},
}


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError(f"malformed config: {e}") from None
    known = set(_SCALARS) | {"population", "variant", "calibration"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    cfg = ExperimentConfig(text=text)
    coeffs = dict(DEFAULT_COEFFS)
    variant_kw, q_kw = {}, {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            try:
                if key in _SCALARS.get(section, {}):
                    attr, conv = _SCALARS[section][key]
                    setattr(cfg, attr, conv(raw))
                elif section == "population" and key == "mediator_multiplier":
                    cfg.population.mediator_multiplier = float(raw)
                elif section == "population" and key in DEFAULT_COEFFS:
                    vals = _floats(raw)
                    if len(vals) != 2:
                        raise ConfigurationError(f"[population] {key} needs 'mean, spread'")
                    coeffs[key] = vals
                elif section == "variant" and key in ("kind", "c_treat", "mediator_sd"):
                    variant_kw[key] = raw.strip() if key == "kind" else float(raw)
                elif section == "calibration" and key in ("q_trajectories", "q_max_sweeps"):
                    q_kw[{"q_trajectories": "n_trajectories", "q_max_sweeps": "max_sweeps"}[key]] = int(raw)
                else:
                    raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            except ValueError as e:
                if isinstance(e, ConfigurationError):
                    raise
                raise ConfigurationError(f"[{section}] {key}: {e}") from None
    cfg.population.coeffs = coeffs
    cfg.population.validate()
    try:
        cfg.variant = TestbedVariant(**variant_kw)
    except ValueError as e:
        raise ConfigurationError(f"[variant]: {e}") from None
    cfg.q_config = QLearningConfig(**q_kw)
    if cfg.population_size < 1 or cfg.n_runs < 1 or cfg.n_dyads < 1 or cfg.n_eval < 2:
        raise ConfigurationError("sizes must be positive (n_eval >= 2)")
    if any(not 0 <= p <= 1 for p in cfg.collab_probabilities + (cfg.collab_other,)):
        raise ConfigurationError("collaboration probabilities must lie in [0, 1]")
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e.strerror or e}") from None
    return parse_config(text)
