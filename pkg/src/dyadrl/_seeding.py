"""Hierarchical random streams.

Every stream is a ``numpy.random.SeedSequence`` whose entropy is the master
seed and whose spawn key is a tuple of integers naming its purpose:

    (DYADS, run)                              which dyads a run recruits
    (ENV, cell, run, dyad)                    environment noise
    (POLICY, cell, run, dyad)                 policy randomness

``cell`` is a stable 32-bit hash of a text label (algorithm stream key plus
testbed label). Streams are addressed, not split off in sequence, so adding
runs, dyads or cells never changes the draws of existing ones.
"""
from __future__ import annotations

import hashlib

import numpy as np

DYADS, ENV, POLICY, SETUP = 1, 2, 3, 4


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "little")


def stream(master_seed: int, *key: int | str) -> np.random.Generator:
    spawn_key = tuple(label_key(k) if isinstance(k, str) else int(k) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=spawn_key)))


def dyad_sequence(master_seed: int, runs, n_dyads: int, population_size: int) -> np.ndarray:
    """Dyad indices, shape (len(runs), n_dyads), sampled with replacement per run."""
    return np.stack([stream(master_seed, DYADS, r).integers(population_size, size=n_dyads) for r in runs])


def lane_streams(master_seed: int, kind: int, cell: str, runs, dyad: int) -> list[np.random.Generator]:
    c = label_key(cell)
    return [stream(master_seed, kind, c, r, dyad) for r in runs]
