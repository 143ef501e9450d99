"""Constant reward shifts.

Equilibrium policies are invariant under adding a constant to every
reward entry, so the solver may shift the reward table until it is
bounded below by a positive value (which the stage program requires) and
shift the resulting values back afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameModel, _frozen


@dataclass(frozen=True)
class ShiftRecord:
    """Bookkeeping for one constant reward shift.

    ``c`` is added to every reward entry; ``r_lower``/``f_upper`` are the
    min/max entries of the shifted table.
    """

    c: float
    r_lower: float
    f_upper: float


def shift_rewards(model: GameModel, target_lower: float = 1.0) -> tuple[GameModel, ShiftRecord]:
    """Shift every reward entry so the minimum is at least ``target_lower``.

    The shift constant is ``c = max(0, target_lower - min entry)``; an
    already-compliant table is returned unchanged (``c = 0``).
    """
    if target_lower <= 0:
        raise ValueError(f"target_lower must be positive, got {target_lower}")
    c = max(0.0, target_lower - float(model.reward.min()))
    shifted = model.reward + c
    record = ShiftRecord(c=c, r_lower=float(shifted.min()), f_upper=float(shifted.max()))
    if c == 0.0:
        return model, record
    new_model = GameModel(
        states=model.states,
        observations=model.observations,
        leader_actions=model.leader_actions,
        follower_actions=model.follower_actions,
        transition=model.transition,
        observation_fn=model.observation_fn,
        reward=_frozen(shifted),
        initial_belief=model.initial_belief,
    )
    return new_model, record


def unshift_value(v: float, c: float, stages_remaining: int) -> float:
    """Map a value computed on shifted rewards back to the original scale."""
    if stages_remaining < 0:
        raise ValueError(f"stages_remaining must be nonnegative, got {stages_remaining}")
    return v - c * stages_remaining
