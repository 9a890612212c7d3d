"""Per-dyad coefficients, the synthetic population generator, and population files.

A dyad's environment is a flat vector of named coefficients. The names are
the column headers of the population file, so they double as the public
schema:

* ``am_*`` / ``pm_*``: adherence GLM per decision window
  (b0 intercept, b1 last adherence, b2 last-week relationship, b3 carepartner
  distress, b4 AYA burden, tau0 treatment, tau1 treatment x relationship,
  tau2 treatment x burden).
* ``care_*``: carepartner distress model, same layout plus ``care_sigma``.
* ``rel_*``: weekly relationship GLM (b0, b1 persistence, b2 weighted
  adherence, b3 weighted distress, tau0 game, tau1 game x burden).
* ``aya_th*`` / ``care_th*`` and ``*_omega``: burden transitions.
* ``aya_mean`` .. ``care_sd``: burden standardization statistics.
* ``mediator_multiplier``: scales am/pm b2 and rel b3.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

POPULATION_FORMAT = "dyadrl-population"
POPULATION_VERSION = 1


class ConfigurationError(ValueError):
    """Invalid population, trial, or variant configuration."""


@dataclass(frozen=True)
class DyadParams:
    am_b0: float = 0.0
    am_b1: float = 0.0
    am_b2: float = 0.0
    am_b3: float = 0.0
    am_b4: float = 0.0
    am_tau0: float = 0.0
    am_tau1: float = 0.0
    am_tau2: float = 0.0
    pm_b0: float = 0.0
    pm_b1: float = 0.0
    pm_b2: float = 0.0
    pm_b3: float = 0.0
    pm_b4: float = 0.0
    pm_tau0: float = 0.0
    pm_tau1: float = 0.0
    pm_tau2: float = 0.0
    care_b0: float = 0.0
    care_b1: float = 0.0
    care_b2: float = 0.0
    care_b3: float = 0.0
    care_b4: float = 0.0
    care_tau0: float = 0.0
    care_tau1: float = 0.0
    care_tau2: float = 0.0
    care_sigma: float = 1.0
    rel_b0: float = 0.0
    rel_b1: float = 0.0
    rel_b2: float = 0.0
    rel_b3: float = 0.0
    rel_tau0: float = 0.0
    rel_tau1: float = 0.0
    aya_th0: float = 0.2
    aya_th1: float = 13 / 14
    aya_th2: float = 1.0
    aya_th3: float = 0.2
    aya_omega: float = 2.4
    care_th0: float = 0.2
    care_th1: float = 6 / 7
    care_th2: float = 1.0
    care_th3: float = 0.2
    care_omega: float = 2.4
    aya_mean: float = 0.0
    aya_sd: float = 1.0
    care_mean: float = 0.0
    care_sd: float = 1.0
    mediator_multiplier: float = 1.0

    def adherence_coeffs(self, window: int) -> tuple[float, ...]:
        """(b0, b1, b2, b3, b4, tau0, tau1, tau2) for window 0 (AM) or 1 (PM)."""
        prefix = "am" if window == 0 else "pm"
        return tuple(getattr(self, f"{prefix}_{k}") for k in ADHERENCE_KEYS)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_FIELDS], dtype=float)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "DyadParams":
        return cls(**{n: float(v) for n, v in zip(PARAM_FIELDS, vec)})


PARAM_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(DyadParams))
FIELD_INDEX = {n: i for i, n in enumerate(PARAM_FIELDS)}
ADHERENCE_KEYS = ("b0", "b1", "b2", "b3", "b4", "tau0", "tau1", "tau2")
TAU_FIELDS = tuple(n for n in PARAM_FIELDS if "_tau" in n)


class ParamBatch:
    """Column view of several dyads' coefficients: ``batch.am_b0`` is an array."""

    def __init__(self, columns: Mapping[str, np.ndarray]):
        self.__dict__.update(columns)

    def __len__(self) -> int:
        return len(self.am_b0)


class Population:
    """An ordered collection of dyads backed by an (n, n_fields) table.

    Behaves as a read-only sequence of :class:`DyadParams`; ``meta`` carries
    free-form string metadata (c_treat, STE target, ...) into the file format.
    """

    def __init__(self, table: np.ndarray, meta: Mapping[str, str] | None = None):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[1] != len(PARAM_FIELDS):
            raise ValueError(f"population table must be (n, {len(PARAM_FIELDS)}), got {table.shape}")
        self.table = table
        self.meta: dict[str, str] = dict(meta or {})

    @classmethod
    def from_params(cls, params: Sequence[DyadParams], meta=None) -> "Population":
        return cls(np.array([p.to_vector() for p in params]).reshape(len(params), -1), meta)

    def __len__(self) -> int:
        return self.table.shape[0]

    def __getitem__(self, i: int) -> DyadParams:
        return DyadParams.from_vector(self.table[i])

    def __iter__(self) -> Iterator[DyadParams]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, Population) and np.array_equal(self.table, other.table)

    def column(self, name: str) -> np.ndarray:
        return self.table[:, FIELD_INDEX[name]]

    def batch(self, idx: np.ndarray | None = None) -> ParamBatch:
        tab = self.table if idx is None else self.table[np.asarray(idx)]
        return ParamBatch({n: tab[:, i] for i, n in enumerate(PARAM_FIELDS)})

    def replace(self, meta: Mapping[str, str] | None = None, **columns) -> "Population":
        """Copy with some columns overwritten (scalars broadcast)."""
        tab = self.table.copy()
        for name, values in columns.items():
            tab[:, FIELD_INDEX[name]] = values
        new_meta = dict(self.meta)
        new_meta.update(meta or {})
        return Population(tab, new_meta)

    def copy(self) -> "Population":
        return Population(self.table.copy(), self.meta)


# Baseline coefficients the generator draws, as (population mean, spread).
# Everything not listed keeps its DyadParams default (treatment effects 0,
# burden main effects 0, mediator multiplier 1).
# The intercept spread is wide so dyads range from poor to near-perfect adherers.
DEFAULT_COEFFS: dict[str, tuple[float, float]] = {
    "am_b0": (1.0, 1.2),
    "am_b1": (0.3, 0.1),
    "am_b2": (0.3, 0.15),
    "am_b3": (0.0, 0.0),
    "pm_b0": (0.9, 1.2),
    "pm_b1": (0.3, 0.1),
    "pm_b2": (0.3, 0.15),
    "pm_b3": (0.0, 0.0),
    "care_b0": (0.3, 0.3),
    "care_b1": (0.5, 0.1),
    "care_b2": (-0.2, 0.1),
    "care_b3": (-0.3, 0.1),
    "care_sigma": (1.0, 0.0),
    "rel_b0": (-1.0, 0.3),
    "rel_b1": (1.0, 0.2),
    "rel_b2": (0.1, 0.03),
    "rel_b3": (-0.3, 0.1),
    "aya_th0": (0.2, 0.0),
    "aya_th1": (13 / 14, 0.0),
    "aya_th2": (1.0, 0.0),
    "aya_th3": (0.2, 0.0),
    "aya_omega": (2.4, 0.0),
    "care_th0": (0.2, 0.0),
    "care_th1": (6 / 7, 0.0),
    "care_th2": (1.0, 0.0),
    "care_th3": (0.2, 0.0),
    "care_omega": (2.4, 0.0),
}

# Fields whose draws must stay strictly positive.
_POSITIVE = ("care_sigma", "aya_omega", "care_omega")
_MEMORY = ("aya_th1", "care_th1")


@dataclass
class PopulationConfig:
    """Population-level mean and spread for every generated coefficient."""

    coeffs: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_COEFFS))
    mediator_multiplier: float = 1.0

    def validate(self) -> None:
        for name, (mean, sd) in self.coeffs.items():
            if name not in FIELD_INDEX or "_tau" in name or name.endswith("_b4"):
                raise ConfigurationError(f"{name!r} is not a generated baseline coefficient")
            if not (math.isfinite(mean) and math.isfinite(sd)):
                raise ConfigurationError(f"{name}: non-finite mean/spread")
            if sd < 0:
                raise ConfigurationError(f"{name}: spread must be non-negative, got {sd}")
        for name in _POSITIVE:
            mean, _ = self.coeffs.get(name, (getattr(DyadParams, name), 0.0))
            if mean <= 0:
                raise ConfigurationError(f"{name}: noise scale must be positive")
        for name in _MEMORY:
            mean, _ = self.coeffs.get(name, (getattr(DyadParams, name), 0.0))
            if not 0.0 <= mean < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {mean}")
        if self.mediator_multiplier < 0:
            raise ConfigurationError("mediator_multiplier must be >= 0")

    def with_coeff(self, name: str, mean: float, sd: float) -> "PopulationConfig":
        coeffs = dict(self.coeffs)
        coeffs[name] = (mean, sd)
        return PopulationConfig(coeffs, self.mediator_multiplier)


def apply_truncation(pop: Population) -> Population:
    """Sign constraints on the mediator and distress coefficients."""
    tab = pop.table.copy()
    for w in ("am", "pm"):
        tab[:, FIELD_INDEX[f"{w}_b2"]] = np.maximum(0.0, tab[:, FIELD_INDEX[f"{w}_b2"]])
        tab[:, FIELD_INDEX[f"{w}_b3"]] = np.minimum(0.0, tab[:, FIELD_INDEX[f"{w}_b3"]])
    tab[:, FIELD_INDEX["rel_b3"]] = np.minimum(0.0, tab[:, FIELD_INDEX["rel_b3"]])
    return Population(tab, pop.meta)


def check_truncation(pop: Population) -> None:
    """Assert the sign and range rules every generated dyad satisfies."""
    for w in ("am", "pm"):
        assert np.all(pop.column(f"{w}_b2") >= 0), f"{w}_b2 negative"
        assert np.all(pop.column(f"{w}_b3") <= 0), f"{w}_b3 positive"
    assert np.all(pop.column("rel_b3") <= 0), "rel_b3 positive"
    for name in _MEMORY:
        col = pop.column(name)
        assert np.all((col >= 0) & (col < 1)), f"{name} outside [0, 1)"


def generate_population(seed: int, n: int, config: PopulationConfig | None = None) -> Population:
    """Draw ``n`` dyads as population mean plus independent Gaussian deviations.

    Treatment effects stay at zero; burden scaling stays at the identity until
    :func:`dyadrl.env_model.calibration.calibrate_population_burden` runs.
    """
    config = config or PopulationConfig()
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    config.validate()
    rng = np.random.default_rng(seed)
    base = DyadParams(mediator_multiplier=config.mediator_multiplier).to_vector()
    tab = np.tile(base, (n, 1))
    # Iterate in schema order so the stream does not depend on dict ordering.
    for name in PARAM_FIELDS:
        if name not in config.coeffs:
            continue
        mean, sd = config.coeffs[name]
        z = rng.standard_normal(n)
        tab[:, FIELD_INDEX[name]] = mean + sd * z
    for name in _MEMORY:
        col = FIELD_INDEX[name]
        tab[:, col] = np.clip(tab[:, col], 0.0, np.nextafter(1.0, 0.0))
    for name in _POSITIVE:
        col = FIELD_INDEX[name]
        tab[:, col] = np.maximum(np.abs(tab[:, col]), 1e-6)
    pop = apply_truncation(Population(tab, {"seed": str(seed)}))
    check_truncation(pop)
    return pop


def write_population(path: str | Path, pop: Population) -> None:
    """Versioned CSV: ``#key=value`` metadata lines, then a header of symbols."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"#format={POPULATION_FORMAT}\n#version={POPULATION_VERSION}\n")
        for key in sorted(pop.meta):
            fh.write(f"#{key}={pop.meta[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("dyad",) + PARAM_FIELDS)
        for i, row in enumerate(pop.table):
            writer.writerow([i] + [repr(float(v)) for v in row])


def read_population(path: str | Path) -> Population:
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    header: list[str] | None = None
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].rstrip("\n").partition("=")
                meta[key] = value
                continue
            values = next(csv.reader([line]))
            if header is None:
                header = values
                continue
            rows.append([float(v) for v in values[1:]])
    if meta.pop("format", None) != POPULATION_FORMAT:
        raise ConfigurationError(f"{path}: not a population file")
    version = int(meta.pop("version", "0"))
    if version != POPULATION_VERSION:
        raise ConfigurationError(f"{path}: unsupported population version {version}")
    if header is None or tuple(header[1:]) != PARAM_FIELDS:
        raise ConfigurationError(f"{path}: column header does not match the schema")
    return Population(np.array(rows).reshape(len(rows), len(PARAM_FIELDS)), meta)
