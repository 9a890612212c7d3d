"""Coefficient surgery that turns a calibrated population into an ablation testbed."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .params import ConfigurationError, Population, check_truncation


class VariantKind(str, enum.Enum):
    VANILLA = "Vanilla"
    NO_MEDIATOR = "NoMediator"
    DIRECT_DISTRESS = "DirectDistressEffect"
    RANDOM_MEDIATOR = "RandomMediator"


@dataclass(frozen=True)
class TestbedVariant:
    """Which causal paths to alter, and by how much.

    ``c_treat`` sizes the injected distress effect; ``mediator_sd`` is the
    spread of the unconstrained mediator draws.
    """

    __test__ = False  # not a pytest class

    kind: VariantKind = VariantKind.VANILLA
    c_treat: float = 1.0
    mediator_sd: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "kind", VariantKind(self.kind))
        if self.c_treat < 0:
            raise ConfigurationError("variant c_treat must be non-negative")
        if self.mediator_sd < 0:
            raise ConfigurationError("variant mediator_sd must be non-negative")


MEDIATOR_FIELDS = ("am_b2", "pm_b2", "rel_b3")


def make_variant(population: Population, variant: TestbedVariant,
                 rng: np.random.Generator | None = None) -> Population:
    kind = variant.kind
    meta = {"variant": kind.value}
    if kind is VariantKind.VANILLA:
        out = population.replace(meta=meta)
    elif kind is VariantKind.NO_MEDIATOR:
        out = population.replace(meta=meta, **{f: 0.0 for f in MEDIATOR_FIELDS})
    elif kind is VariantKind.DIRECT_DISTRESS:
        c = variant.c_treat
        out = population.replace(
            meta=meta,
            am_b3=-c * np.abs(population.column("am_b1")),
            pm_b3=-c * np.abs(population.column("pm_b1")),
        )
    else:
        if rng is None:
            raise ConfigurationError("RandomMediator needs a random generator")
        n = len(population)
        draws = rng.standard_normal((len(MEDIATOR_FIELDS), n)) * variant.mediator_sd
        # +0.0 turns the -0.0 of a zero-spread draw into +0.0.
        out = population.replace(meta=meta, **{f: d + 0.0 for f, d in zip(MEDIATOR_FIELDS, draws)})
        return out
    check_truncation(out)
    return out
