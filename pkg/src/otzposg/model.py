"""Game model container, validation, and the JSON wire format.

A model document is JSON with keys ``states``, ``observations``,
``leader_actions``, ``follower_actions`` (arrays of strings),
``transition`` (state -> leader action -> follower action -> array of
probabilities over next states), ``observation_fn`` (state -> array of
probabilities over observations), ``reward`` (state -> leader action ->
array of follower-reward values over follower actions) and
``initial_belief`` (array over states).  All numbers are decimal.

The declared orderings of states, observations, and actions are
authoritative: every index-based output of the library follows them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Tolerance on stochastic row sums and simplex membership.  Rows whose sum
# is within this tolerance of 1 are renormalized at load time; anything
# further off is rejected as a modeling error.
STOCHASTIC_ATOL = 1e-9


class ModelError(ValueError):
    """A model document failed to parse or validate."""


class JointAction(NamedTuple):
    """Indices of a public joint action (leader first, then follower)."""

    leader: int
    follower: int


@dataclass(frozen=True)
class Violation:
    """One invariant violation reported by :func:`validate_model`."""

    table: str
    index: tuple
    value: float
    message: str

    def __str__(self) -> str:
        where = "".join(f"[{i}]" for i in self.index)
        return f"{self.table}{where}: {self.message} (observed {self.value:.12g})"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GameModel:
    """A validated turn-based one-sided zero-sum game.

    The follower observes the true state; the leader tracks a belief.  The
    reward table is the follower's stage reward, paid by the leader.

    Tables (all dense float arrays):

    * ``transition[s, aL, aF, s']`` -- next-state distribution,
    * ``observation_fn[s', o]``     -- observation distribution at ``s'``,
    * ``reward[s, aL, aF]``         -- follower's stage reward,
    * ``initial_belief[s]``         -- common-knowledge prior over states.
    """

    states: tuple[str, ...]
    observations: tuple[str, ...]
    leader_actions: tuple[str, ...]
    follower_actions: tuple[str, ...]
    transition: np.ndarray
    observation_fn: np.ndarray
    reward: np.ndarray
    initial_belief: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def n_leader_actions(self) -> int:
        return len(self.leader_actions)

    @property
    def n_follower_actions(self) -> int:
        return len(self.follower_actions)

    def joint_actions(self):
        """Iterate over all joint actions in leader-major order."""
        for al in range(self.n_leader_actions):
            for af in range(self.n_follower_actions):
                yield JointAction(al, af)


def build_model(
    transition,
    observation_fn,
    reward,
    initial_belief,
    states=None,
    observations=None,
    leader_actions=None,
    follower_actions=None,
) -> GameModel:
    """Assemble and validate a :class:`GameModel` from raw tables.

    Missing name lists default to ``s1..sn``, ``o1..``, ``aL1..``,
    ``aF1..``.  Raises :class:`ModelError` if any invariant is violated;
    stochastic rows within tolerance are renormalized exactly.
    """
    transition = np.asarray(transition, dtype=float)
    observation_fn = np.asarray(observation_fn, dtype=float)
    reward = np.asarray(reward, dtype=float)
    initial_belief = np.asarray(initial_belief, dtype=float)

    if transition.ndim != 4:
        raise ModelError(f"transition must be 4-d (s, aL, aF, s'), got shape {transition.shape}")
    n, n_al, n_af, n2 = transition.shape
    if n2 != n:
        raise ModelError(f"transition next-state axis has length {n2}, expected {n}")
    if observation_fn.shape[0] != n:
        raise ModelError(f"observation_fn has {observation_fn.shape[0]} state rows, expected {n}")
    n_obs = observation_fn.shape[1]
    if reward.shape != (n, n_al, n_af):
        raise ModelError(f"reward shape {reward.shape} does not match (S, A_L, A_F) = {(n, n_al, n_af)}")
    if initial_belief.shape != (n,):
        raise ModelError(f"initial_belief has length {initial_belief.shape}, expected {n}")

    states = tuple(states) if states is not None else tuple(f"s{i + 1}" for i in range(n))
    observations = (
        tuple(observations) if observations is not None else tuple(f"o{i + 1}" for i in range(n_obs))
    )
    leader_actions = (
        tuple(leader_actions) if leader_actions is not None else tuple(f"aL{i + 1}" for i in range(n_al))
    )
    follower_actions = (
        tuple(follower_actions)
        if follower_actions is not None
        else tuple(f"aF{i + 1}" for i in range(n_af))
    )
    if len(states) != n or len(observations) != n_obs:
        raise ModelError("name lists do not match table dimensions")
    if len(leader_actions) != n_al or len(follower_actions) != n_af:
        raise ModelError("action name lists do not match table dimensions")

    model = GameModel(
        states=states,
        observations=observations,
        leader_actions=leader_actions,
        follower_actions=follower_actions,
        transition=_frozen(transition),
        observation_fn=_frozen(observation_fn),
        reward=_frozen(reward),
        initial_belief=_frozen(initial_belief),
    )
    violations = validate_model(model)
    if violations:
        detail = "; ".join(str(v) for v in violations)
        raise ModelError(f"invalid model: {detail}")
    return _normalized(model)


def _normalized(model: GameModel) -> GameModel:
    """Renormalize stochastic rows (already known to be within tolerance)."""
    t = np.clip(model.transition, 0.0, 1.0)
    t = t / t.sum(axis=3, keepdims=True)
    xi = np.clip(model.observation_fn, 0.0, 1.0)
    xi = xi / xi.sum(axis=1, keepdims=True)
    b0 = np.clip(model.initial_belief, 0.0, 1.0)
    b0 = b0 / b0.sum()
    return GameModel(
        states=model.states,
        observations=model.observations,
        leader_actions=model.leader_actions,
        follower_actions=model.follower_actions,
        transition=_frozen(t),
        observation_fn=_frozen(xi),
        reward=_frozen(model.reward),
        initial_belief=_frozen(b0),
    )


def validate_model(model: GameModel) -> list[Violation]:
    """Check every model invariant; an empty list means the model is valid.

    Violations are data, not exceptions: each one names the table, the
    offending index, and the observed value.
    """
    out: list[Violation] = []
    n = model.n_states

    def check_range(table: str, arr: np.ndarray) -> None:
        bad = np.argwhere((arr < -STOCHASTIC_ATOL) | (arr > 1.0 + STOCHASTIC_ATOL))
        for idx in bad:
            idx = tuple(int(i) for i in idx)
            out.append(Violation(table, idx, float(arr[idx]), "probability outside [0, 1]"))

    check_range("transition", model.transition)
    check_range("observation_fn", model.observation_fn)
    check_range("initial_belief", model.initial_belief)

    sums = model.transition.sum(axis=3)
    for idx in np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_ATOL):
        idx = tuple(int(i) for i in idx)
        out.append(Violation("transition", idx, float(sums[idx]), "row does not sum to 1"))

    osums = model.observation_fn.sum(axis=1)
    for (i,) in np.argwhere(np.abs(osums - 1.0) > STOCHASTIC_ATOL):
        out.append(Violation("observation_fn", (int(i),), float(osums[i]), "row does not sum to 1"))

    bsum = float(model.initial_belief.sum())
    if abs(bsum - 1.0) > STOCHASTIC_ATOL:
        out.append(Violation("initial_belief", (), bsum, f"simplex sum {bsum:.12g}"))

    if n < 1 or model.n_observations < 1 or model.n_leader_actions < 1 or model.n_follower_actions < 1:
        out.append(Violation("model", (), 0.0, "all index sets must be nonempty"))
    return out


def validate_belief(b, n: int | None = None) -> list[Violation]:
    """Simplex-membership check for a single belief vector."""
    b = np.asarray(b, dtype=float)
    out: list[Violation] = []
    if n is not None and b.shape != (n,):
        out.append(Violation("belief", (), float(b.size), f"length {b.size}, expected {n}"))
        return out
    for (i,) in np.argwhere(b < -STOCHASTIC_ATOL):
        out.append(Violation("belief", (int(i),), float(b[i]), "negative entry"))
    s = float(b.sum())
    if abs(s - 1.0) > STOCHASTIC_ATOL:
        out.append(Violation("belief", (), s, f"simplex sum {s:.12g}"))
    return out


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def _require(doc: dict, key: str, where: str) -> object:
    if key not in doc:
        raise ModelError(f"{where}: missing key {key!r}")
    return doc[key]


def load_model(data: bytes | str) -> GameModel:
    """Parse and validate a JSON model document.

    Raises :class:`ModelError` with the offending location on parse
    failures and with the violated invariant on validation failures.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    try:
        return _model_from_document(doc)
    except (TypeError, AttributeError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc


def _model_from_document(doc: dict) -> GameModel:
    states = [str(s) for s in _require(doc, "states", "document")]
    observations = [str(o) for o in _require(doc, "observations", "document")]
    leader_actions = [str(a) for a in _require(doc, "leader_actions", "document")]
    follower_actions = [str(a) for a in _require(doc, "follower_actions", "document")]
    n, n_al, n_af = len(states), len(leader_actions), len(follower_actions)

    t_doc = _require(doc, "transition", "document")
    transition = np.zeros((n, n_al, n_af, n))
    for i, s in enumerate(states):
        s_doc = _require(t_doc, s, "transition")
        for j, al in enumerate(leader_actions):
            al_doc = _require(s_doc, al, f"transition[{s}]")
            for k, af in enumerate(follower_actions):
                row = _require(al_doc, af, f"transition[{s}][{al}]")
                if len(row) != n:
                    raise ModelError(
                        f"transition[{s}][{al}][{af}]: expected {n} entries, got {len(row)}"
                    )
                transition[i, j, k, :] = row

    x_doc = _require(doc, "observation_fn", "document")
    observation_fn = np.zeros((n, len(observations)))
    for i, s in enumerate(states):
        row = _require(x_doc, s, "observation_fn")
        if len(row) != len(observations):
            raise ModelError(f"observation_fn[{s}]: expected {len(observations)} entries, got {len(row)}")
        observation_fn[i, :] = row

    r_doc = _require(doc, "reward", "document")
    reward = np.zeros((n, n_al, n_af))
    for i, s in enumerate(states):
        s_doc = _require(r_doc, s, "reward")
        for j, al in enumerate(leader_actions):
            row = _require(s_doc, al, f"reward[{s}]")
            if len(row) != n_af:
                raise ModelError(f"reward[{s}][{al}]: expected {n_af} entries, got {len(row)}")
            reward[i, j, :] = row

    initial_belief = np.asarray(_require(doc, "initial_belief", "document"), dtype=float)
    if initial_belief.shape != (n,):
        raise ModelError(f"initial_belief: expected {n} entries, got {initial_belief.size}")

    return build_model(
        transition,
        observation_fn,
        reward,
        initial_belief,
        states=states,
        observations=observations,
        leader_actions=leader_actions,
        follower_actions=follower_actions,
    )


def load_model_file(path) -> GameModel:
    with open(path, "rb") as fh:
        return load_model(fh.read())


def serialize_model(model: GameModel) -> str:
    """Render a model back to its canonical JSON document."""
    doc = {
        "states": list(model.states),
        "observations": list(model.observations),
        "leader_actions": list(model.leader_actions),
        "follower_actions": list(model.follower_actions),
        "transition": {
            s: {
                al: {
                    af: [float(x) for x in model.transition[i, j, k, :]]
                    for k, af in enumerate(model.follower_actions)
                }
                for j, al in enumerate(model.leader_actions)
            }
            for i, s in enumerate(model.states)
        },
        "observation_fn": {
            s: [float(x) for x in model.observation_fn[i, :]] for i, s in enumerate(model.states)
        },
        "reward": {
            s: {
                al: [float(x) for x in model.reward[i, j, :]]
                for j, al in enumerate(model.leader_actions)
            }
            for i, s in enumerate(model.states)
        },
        "initial_belief": [float(x) for x in model.initial_belief],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_hash(model: GameModel) -> str:
    """SHA-256 of the canonical document; binds solution bundles to models."""
    return hashlib.sha256(serialize_model(model).encode("utf-8")).hexdigest()
