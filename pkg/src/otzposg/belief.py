"""Belief-state arithmetic.

The leader's belief over states is updated by Bayes' rule from the public
joint action and the public observation only; the follower's action
*choice* is never used as evidence (its mixing is private information).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameModel

# Observation probabilities at or below this are treated as impossible;
# strictly below any accumulation of the 1e-9 table tolerances.
ZERO_OBSERVATION_PROB = 1e-12


@dataclass(frozen=True)
class BeliefUpdateResult:
    """Posterior belief and the probability of the conditioning observation.

    When ``observation_prob`` is at or below :data:`ZERO_OBSERVATION_PROB`
    the posterior is undefined: ``defined`` is False and ``next_belief``
    is None.  The caller decides how to proceed.
    """

    next_belief: np.ndarray | None
    observation_prob: float
    defined: bool


def successor_matrix(a, o: int, model: GameModel) -> np.ndarray:
    """Linear map sending a belief to the unnormalized posterior.

    ``M[s', s] = observation_fn[s', o] * transition[s, aL, aF, s']``, so
    the update numerator for belief ``b`` is exactly ``M @ b``.
    """
    al, af = a
    return model.observation_fn[:, o][:, None] * model.transition[:, al, af, :].T


def update_belief(b, a, o: int, model: GameModel) -> BeliefUpdateResult:
    """One Bayes step after joint action ``a`` and observation index ``o``."""
    b = np.asarray(b, dtype=float)
    numerator = successor_matrix(a, o, model) @ b
    p = float(numerator.sum())
    if p <= ZERO_OBSERVATION_PROB:
        return BeliefUpdateResult(next_belief=None, observation_prob=p, defined=False)
    return BeliefUpdateResult(next_belief=numerator / p, observation_prob=p, defined=True)


def observation_probabilities(b, a, model: GameModel) -> np.ndarray:
    """Distribution over observations after joint action ``a`` at belief ``b``."""
    b = np.asarray(b, dtype=float)
    al, af = a
    next_state = model.transition[:, al, af, :].T @ b
    return model.observation_fn.T @ next_state
