"""State vectors each agent sees at its decision times."""
from __future__ import annotations

import numpy as np

from ..env_model.clock import ClockIndex
from ..env_model.dynamics import DyadState
from ..rl_core import InteractionFeatures

STATE_DIMS = {"aya": 4, "care": 4, "rel": 5, "single": 9}
N_ACTIONS = {"aya": 1, "care": 1, "rel": 1, "single": 3}
FEATURE_MAPS = {k: InteractionFeatures(STATE_DIMS[k], N_ACTIONS[k]) for k in STATE_DIMS}

assert {k: f.dim for k, f in FEATURE_MAPS.items()} == {"aya": 10, "care": 10, "rel": 12, "single": 40}

STATE_NAMES = {
    "aya": ("last_adherence", "b_aya", "rel_prev_week", "a_rel"),
    "care": ("last_distress", "b_care", "rel_prev_week", "a_rel"),
    "rel": ("rel_prev_week", "b_aya_week_start", "b_care_week_start", "rbar_aya_prev", "rbar_care_prev"),
    "single": ("last_distress", "rel_prev_week", "last_adherence", "rbar_aya_prev", "rbar_care_prev",
               "b_aya", "b_care", "a_care", "a_rel"),
}


def build_features(kind: str, state: DyadState, clock: ClockIndex, a_rel=None, a_care=None) -> np.ndarray:
    """Agent state, shape (n_lanes, dim), at decision time ``clock``.

    ``state`` is the environment state just before the decision. The
    relationship quality used during week w is the last one observed (week
    w-1). ``a_rel`` / ``a_care`` override the week's / day's action when an
    agent acting earlier in the same slot has just chosen it; otherwise the
    most recently delivered action is used.
    """
    if a_rel is None:
        a_rel = state.rel_action_this_week
    if a_care is None:
        a_care = state.care_action_today
    rel = state.rel_quality_prev_week
    if kind == "aya":
        cols = (state.last_adherence, state.b_aya, rel, a_rel)
    elif kind == "care":
        cols = (state.last_distress, state.b_care, rel, a_rel)
    elif kind == "rel":
        # At the week-start decision the current burdens are the week-start burdens.
        b_aya = state.b_aya if clock.is_week_start else state.b_aya_week_start
        b_care = state.b_care if clock.is_week_start else state.b_care_week_start
        cols = (rel, b_aya, b_care, state.rbar_aya_prev, state.rbar_care_prev)
    elif kind == "single":
        cols = (state.last_distress, rel, state.last_adherence, state.rbar_aya_prev,
                state.rbar_care_prev, state.b_aya, state.b_care, a_care, a_rel)
    else:
        raise ValueError(f"unknown agent kind {kind!r}")
    n = state.n_lanes
    out = np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in cols])
    assert out.shape[1] == STATE_DIMS[kind]
    return out
