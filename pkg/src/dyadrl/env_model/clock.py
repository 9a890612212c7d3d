"""Decision-time indexing and the clock-dependent action space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

N_WEEKS = 14
N_DAYS = 7
N_SLOTS = 2
SLOTS_PER_WEEK = N_DAYS * N_SLOTS
DECISIONS_PER_DYAD = N_WEEKS * SLOTS_PER_WEEK  # 196


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's precondition."""


@dataclass(frozen=True, order=True)
class ClockIndex:
    """Position (week, day, slot) inside a 14-week trial, all 1-based."""

    week: int
    day: int
    slot: int

    def __post_init__(self) -> None:
        if not (1 <= self.week <= N_WEEKS and 1 <= self.day <= N_DAYS and 1 <= self.slot <= N_SLOTS):
            raise ContractViolation(f"clock out of range: {self}")

    @property
    def window(self) -> int:
        """Decision-window indicator: 0 for AM, 1 for PM."""
        return self.slot - 1

    @property
    def is_week_start(self) -> bool:
        return self.day == 1 and self.slot == 1

    @property
    def is_day_start(self) -> bool:
        return self.slot == 1

    @property
    def is_day_end(self) -> bool:
        return self.slot == N_SLOTS

    @property
    def is_week_end(self) -> bool:
        return self.day == N_DAYS and self.slot == N_SLOTS

    @property
    def index(self) -> int:
        """Zero-based position in the 196 decision times."""
        return (self.week - 1) * SLOTS_PER_WEEK + (self.day - 1) * N_SLOTS + (self.slot - 1)

    @property
    def day_index(self) -> int:
        return (self.week - 1) * N_DAYS + (self.day - 1)

    @classmethod
    def from_index(cls, i: int) -> "ClockIndex":
        if not 0 <= i < DECISIONS_PER_DYAD:
            raise ContractViolation(f"decision index {i} out of range")
        week, rem = divmod(i, SLOTS_PER_WEEK)
        day, slot = divmod(rem, N_SLOTS)
        return cls(week + 1, day + 1, slot + 1)

    def successor(self) -> Optional["ClockIndex"]:
        """Next decision time, or None after (14, 7, 2)."""
        i = self.index + 1
        return ClockIndex.from_index(i) if i < DECISIONS_PER_DYAD else None

    def predecessor(self) -> Optional["ClockIndex"]:
        i = self.index - 1
        return ClockIndex.from_index(i) if i >= 0 else None

    @property
    def n_actions(self) -> int:
        return 3 if self.is_week_start else 2 if self.is_day_start else 1


def iter_clock() -> Iterator[ClockIndex]:
    for i in range(DECISIONS_PER_DYAD):
        yield ClockIndex.from_index(i)


ALL_CLOCKS: tuple[ClockIndex, ...] = tuple(iter_clock())


@dataclass(frozen=True)
class ActionBundle:
    """The binary decisions valid at one decision time.

    Fields hold 0/1 scalars or equal-length 0/1 arrays (one entry per
    simulated dyad). ``a_care`` is present only at day start and ``a_rel``
    only at week start.
    """

    a_aya: np.ndarray | int
    a_care: np.ndarray | int | None = None
    a_rel: np.ndarray | int | None = None

    @classmethod
    def for_clock(cls, clock: ClockIndex, a_aya, a_care=None, a_rel=None) -> "ActionBundle":
        """Keep only the components the clock position allows."""
        return cls(
            a_aya,
            a_care if clock.is_day_start else None,
            a_rel if clock.is_week_start else None,
        )

    def check(self, clock: ClockIndex) -> None:
        if (self.a_care is not None) != clock.is_day_start:
            raise ContractViolation(f"carepartner action presence does not match {clock}")
        if (self.a_rel is not None) != clock.is_week_start:
            raise ContractViolation(f"relationship action presence does not match {clock}")

    @property
    def n_present(self) -> int:
        return 1 + (self.a_care is not None) + (self.a_rel is not None)
