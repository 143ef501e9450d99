"""Monte Carlo execution of solved policies.

Episodes are reproducible and order-independent.  Every episode consumes
exactly ``1 + 4h`` uniform draws (initial state, then leader action,
follower action, next state, and observation per stage), so the Philox
counter-based stream keyed by the seed splits into fixed per-episode
blocks: episode ``i`` always reads draws ``[i*k, (i+1)*k)`` regardless of
how many episodes run, in what order, or on how many workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .belief import ZERO_OBSERVATION_PROB, successor_matrix
from .model import GameModel
from .partition import CoverageGapError, LOCATE_TOL
from .value_iteration import SolutionBundle

DRAWS_PER_STAGE = 4


@dataclass(frozen=True)
class StageRecord:
    """One stage of an episode, seen from the leader's side."""

    belief: tuple[float, ...]
    region_id: int
    leader_action: int
    follower_action: int
    reward: float
    next_state: int
    observation: int


@dataclass(frozen=True)
class EpisodeTrace:
    initial_state: int
    records: tuple[StageRecord, ...]
    cumulative_reward: float
    undefined_posterior_events: int
    seed: int
    episode: int

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "episode": self.episode,
            "initial_state": self.initial_state,
            "cumulative_reward": self.cumulative_reward,
            "undefined_posterior_events": self.undefined_posterior_events,
            "stages": [
                {
                    "belief": list(r.belief),
                    "region_id": r.region_id,
                    "leader_action": r.leader_action,
                    "follower_action": r.follower_action,
                    "reward": r.reward,
                    "next_state": r.next_state,
                    "observation": r.observation,
                }
                for r in self.records
            ],
        }
        return json.dumps(doc)


@dataclass(frozen=True)
class ValueEstimate:
    """Empirical mean of cumulative follower reward over N episodes."""

    mean: float
    stderr: float | None
    n_episodes: int
    seed: int
    undefined_posterior_events: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean,
                "stderr": self.stderr,
                "n_episodes": self.n_episodes,
                "seed": self.seed,
                "undefined_posterior_events": self.undefined_posterior_events,
            }
        )


def _uniform_blocks(seed: int, n_episodes: int, horizon: int) -> np.ndarray:
    """Per-episode uniform draws: row i is episode i's substream."""
    key = seed & ((1 << 128) - 1)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random((n_episodes, 1 + DRAWS_PER_STAGE * horizon))


def _scan(cumulative, u: float) -> int:
    idx = 0
    last = len(cumulative) - 1
    for c in cumulative:
        if u < c or idx == last:
            return idx
        idx += 1
    return last


def _cumsum(row) -> tuple[float, ...]:
    total = 0.0
    out = []
    for x in row:
        total += float(x)
        out.append(total)
    return tuple(out)


class _CompiledPolicy:
    """Plain-Python sampling tables precomputed once per bundle; the
    per-episode loop avoids array allocations entirely."""

    def __init__(self, model: GameModel, bundle: SolutionBundle):
        self.model = model
        self.bundle = bundle
        self.horizon = bundle.horizon
        self.n = model.n_states
        self.b0 = tuple(float(x) for x in bundle.belief)
        self.cum_b0 = _cumsum(self.b0)
        n, n_al, n_af = model.n_states, model.n_leader_actions, model.n_follower_actions
        self.reward = model.reward.tolist()
        self.successors = {
            (al, af, o): successor_matrix((al, af), o, model).tolist()
            for al in range(n_al)
            for af in range(n_af)
            for o in range(model.n_observations)
        }
        self.cum_transition = [
            [[_cumsum(model.transition[s, al, af]) for af in range(n_af)] for al in range(n_al)]
            for s in range(n)
        ]
        self.cum_observation = [_cumsum(model.observation_fn[s]) for s in range(n)]
        self.stage_pi = []
        self.stage_eta_cum = []
        self.stage_follower_cum = []
        for svf in bundle.stages:
            self.stage_pi.append(
                [[tuple(row) for row in region.Pi.tolist()] for region in svf.partition.regions]
            )
            self.stage_eta_cum.append([_cumsum(row) for row in svf.eta])
            rows = []
            for rid in range(len(svf.partition)):
                per_state = []
                for s in range(n):
                    if svf.sacrifice is not None:
                        per_state.append(_cumsum(svf.sacrifice[rid, s]))
                    else:
                        onehot = [0.0] * n_af
                        onehot[int(svf.follower_br[rid, s])] = 1.0
                        per_state.append(_cumsum(onehot))
                rows.append(per_state)
            self.stage_follower_cum.append(rows)

    def locate(self, t: int, belief) -> int:
        for rid, rows in enumerate(self.stage_pi[t]):
            inside = True
            for row in rows:
                acc = 0.0
                for coef, x in zip(row, belief):
                    acc += coef * x
                if acc > LOCATE_TOL:
                    inside = False
                    break
            if inside:
                return rid
        raise CoverageGapError(
            f"belief {list(belief)} not in any region of stage {t}"
        )


def _run_episode(compiled: _CompiledPolicy, draws, want_trace: bool):
    h = compiled.horizon
    k = 0
    state = _scan(compiled.cum_b0, draws[k])
    k += 1
    initial_state = state
    belief = compiled.b0
    cumulative = 0.0
    undefined = 0
    records = [] if want_trace else None
    for t in range(h):
        rid = compiled.locate(t, belief)
        al = _scan(compiled.stage_eta_cum[t][rid], draws[k])
        af = _scan(compiled.stage_follower_cum[t][rid][state], draws[k + 1])
        reward = compiled.reward[state][al][af]
        cumulative += reward
        next_state = _scan(compiled.cum_transition[state][al][af], draws[k + 2])
        obs = _scan(compiled.cum_observation[next_state], draws[k + 3])
        k += 4
        if want_trace:
            records.append(
                StageRecord(
                    belief=tuple(belief),
                    region_id=rid,
                    leader_action=al,
                    follower_action=af,
                    reward=reward,
                    next_state=next_state,
                    observation=obs,
                )
            )
        if t + 1 < h:
            M = compiled.successors[(al, af, obs)]
            numerator = [
                sum(m * x for m, x in zip(row, belief)) for row in M
            ]
            prob = sum(numerator)
            if prob <= ZERO_OBSERVATION_PROB:
                # public-information posterior undefined: condition on the
                # realized transition instead and count the event
                undefined += 1
                belief = tuple(1.0 if j == next_state else 0.0 for j in range(compiled.n))
            else:
                belief = tuple(x / prob for x in numerator)
        state = next_state
    return cumulative, undefined, records, initial_state


def rollout(model: GameModel, bundle: SolutionBundle, seed: int, episode: int = 0) -> EpisodeTrace:
    """Play one seeded episode of the solved policies against the model."""
    compiled = _CompiledPolicy(model, bundle)
    draws = _uniform_blocks(seed, episode + 1, bundle.horizon)[episode]
    cumulative, undefined, records, initial_state = _run_episode(compiled, draws, True)
    return EpisodeTrace(
        initial_state=initial_state,
        records=tuple(records),
        cumulative_reward=cumulative,
        undefined_posterior_events=undefined,
        seed=seed,
        episode=episode,
    )


def estimate_value(model: GameModel, bundle: SolutionBundle, n_episodes: int, seed: int) -> ValueEstimate:
    """Mean cumulative follower reward over seeded independent episodes."""
    if n_episodes < 1:
        raise ValueError(f"need at least one episode, got {n_episodes}")
    compiled = _CompiledPolicy(model, bundle)
    blocks = _uniform_blocks(seed, n_episodes, bundle.horizon)
    total = 0.0
    total_sq = 0.0
    undefined = 0
    for episode in range(n_episodes):
        cumulative, events, _, _ = _run_episode(compiled, blocks[episode], False)
        total += cumulative
        total_sq += cumulative * cumulative
        undefined += events
    mean = total / n_episodes
    if n_episodes >= 2:
        var = max(0.0, (total_sq - n_episodes * mean * mean) / (n_episodes - 1))
        stderr = math.sqrt(var / n_episodes)
    else:
        stderr = None
    return ValueEstimate(
        mean=mean,
        stderr=stderr,
        n_episodes=n_episodes,
        seed=seed,
        undefined_posterior_events=undefined,
    )


def write_traces(traces, fh) -> None:
    """Write traces as JSON lines, one episode per line."""
    for trace in traces:
        fh.write(trace.to_json())
        fh.write("\n")
