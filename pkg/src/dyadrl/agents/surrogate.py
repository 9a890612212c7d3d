"""Engineered rewards for the slow-timescale agents.

The relationship agent is rewarded with a linear prediction of the week's
adherence plus a one-step greedy lookahead; the carepartner agent with a
linear prediction of the end-of-week relationship quality. Coefficients are
posterior means of Bayesian ridge regressions shrunk towards fixed priors.
"""
from __future__ import annotations

import numpy as np

from ..rl_core import LAMBDA, SIGMA, ridge_posterior

REL_PRIOR = np.array([1.0, 1.0, -1.0, -1.0, 0.5])
CARE_PRIOR = np.array([1.0, -1.0, -1.0, 1.0, -0.5])
N_COVARIATES = 5


def rel_covariates(rel_prev, b_aya_week_start, a_rel) -> np.ndarray:
    """(1, Y_prev, B_aya at week start, A_rel, A_rel * Y_prev) along the last axis."""
    rel_prev, b, a = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (rel_prev, b_aya_week_start, a_rel)))
    return np.stack((np.ones_like(rel_prev), rel_prev, b, a, a * rel_prev), axis=-1)


def care_covariates(distress, b_care_next, rel_prev, a_care) -> np.ndarray:
    """(1, today's distress, tomorrow's carepartner burden, Y_prev, A_care)."""
    d, b, y, a = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (distress, b_care_next, rel_prev, a_care)))
    return np.stack((np.ones_like(d), d, b, y, a), axis=-1)


def surrogate_rel_reward(rel_prev, b_aya_week_start, a_rel, rel_now, b_aya_next_week, beta,
                         lookahead: bool = True):
    """Realized weekly term plus the best next-week term, both linear in ``beta``.

    ``lookahead=False`` drops the second term (the final week has no successor).
    """
    beta = np.asarray(beta, dtype=float)
    realized = np.einsum("...i,...i->...", rel_covariates(rel_prev, b_aya_week_start, a_rel), beta)
    if not lookahead:
        return realized
    nxt0 = np.einsum("...i,...i->...", rel_covariates(rel_now, b_aya_next_week, 0.0), beta)
    nxt1 = np.einsum("...i,...i->...", rel_covariates(rel_now, b_aya_next_week, 1.0), beta)
    return realized + np.maximum(nxt0, nxt1)


def surrogate_care_reward(distress, b_care_next, rel_prev, a_care, beta):
    return np.einsum("...i,...i->...", care_covariates(distress, b_care_next, rel_prev, a_care),
                     np.asarray(beta, dtype=float))


def fit_coefficients(X, y, prior, lam: float = LAMBDA, sigma: float = SIGMA) -> np.ndarray:
    """Posterior mean of one surrogate regression (prior mean when X is empty)."""
    X = np.asarray(X, dtype=float).reshape(-1, N_COVARIATES)
    return ridge_posterior(X, np.asarray(y, dtype=float).reshape(-1), lam, sigma, prior).mean


class SurrogateRewardModel:
    """Both surrogate regressions for ``n_lanes`` independent trials.

    Rows accumulate as running sufficient statistics; :meth:`refit` recomputes
    the coefficients. Until the first refit with data the coefficients equal
    the priors.
    """

    def __init__(self, n_lanes: int = 1, lam: float = LAMBDA, sigma: float = SIGMA):
        self.n_lanes, self.lam, self.sigma = n_lanes, lam, sigma
        self.beta_rel = np.tile(REL_PRIOR, (n_lanes, 1))
        self.beta_care = np.tile(CARE_PRIOR, (n_lanes, 1))
        self._stats = {
            "rel": [np.zeros((n_lanes, 5, 5)), np.zeros((n_lanes, 5))],
            "care": [np.zeros((n_lanes, 5, 5)), np.zeros((n_lanes, 5))],
        }
        self.n_rows = {"rel": 0, "care": 0}

    def add_rows(self, which: str, X: np.ndarray, y: np.ndarray) -> None:
        """``X`` is (n_lanes, m, 5) or (n_lanes, 5); ``y`` matches without the last axis."""
        X = np.asarray(X, dtype=float).reshape(self.n_lanes, -1, N_COVARIATES)
        y = np.asarray(y, dtype=float).reshape(self.n_lanes, -1)
        if y.shape[1] == 1 and X.shape[1] > 1:
            y = np.repeat(y, X.shape[1], axis=1)
        gram, xy = self._stats[which]
        gram += np.einsum("rmi,rmj->rij", X, X)
        xy += np.einsum("rmi,rm->ri", X, y)
        self.n_rows[which] += X.shape[1]

    def refit(self) -> None:
        s2 = self.sigma ** 2
        eye = np.eye(N_COVARIATES)
        for which, prior in (("rel", REL_PRIOR), ("care", CARE_PRIOR)):
            gram, xy = self._stats[which]
            A = gram / s2 + self.lam * eye
            beta = np.linalg.solve(A, (xy / s2 + self.lam * prior)[:, :, None])[:, :, 0]
            if which == "rel":
                self.beta_rel = beta
            else:
                self.beta_care = beta
