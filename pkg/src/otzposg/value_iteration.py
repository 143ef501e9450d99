"""Finite-horizon dynamic programming over belief-space partitions.

One backup step takes the next stage's value function (piece-wise linear
for the leader, piece-wise constant per state for the follower, both
attached to a partition of the belief simplex) and produces the current
stage's:

1. pull the next partition back through every non-vacuous joint action /
   observation branch,
2. refine the pullbacks into their common partition -- on each refined
   region every branch maps into a single next-stage cell,
3. per region, assemble the future-reward matrices and enumerate the
   stage LP's vertices on reward-plus-future payoffs,
4. split the region by which vertex attains ``min_k b @ theta_k``,
   pruning vertices that are nowhere strictly minimal,
5. attach the surviving vertex data (theta, eta, best responses, and the
   sacrifice-mixed follower policies when a sacrifice budget is set).

The leader's value is exact throughout; a positive total sacrifice
``epsilon`` is split evenly into per-stage budgets ``epsilon/(h+1)`` and
only blunts the follower's played policy, never the computed values.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .belief import update_belief
from .model import GameModel, ModelError, _frozen, model_hash, validate_model
from .partition import (
    ACTIVE_SLACK,
    Partition,
    Region,
    _normalized_rows,
    backpropagate_region,
    branch_is_vacuous,
    locate,
    max_interior_slack,
    reduce_rows,
    refine,
    whole_simplex,
)
from .rewards import ShiftRecord, shift_rewards
from .stage_lp import (
    ExtremePoint,
    SolverInternalError,
    StagePayoffs,
    build_lp,
    enumerate_vertices,
    follower_best_response,
)

DEFAULT_REGION_CAP = 10_000


class RegionCapExceeded(RuntimeError):
    """Partition growth passed the configured cap; the region count grows
    double-exponentially with the horizon, so this guard aborts early."""


def worker_count() -> int:
    """Worker parallelism cap from the POSG_THREADS environment variable."""
    raw = os.environ.get("POSG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class StageValueFunction:
    """Value function and policies for one stage, per leaf region.

    Within region ``k`` the leader's value is ``b @ theta[k]`` and the
    follower's value from state ``i`` is ``theta[k, i]``; ``eta[k]`` is
    the leader's mixed action and ``follower_br[k, i]`` the follower's
    pure best response.  ``sacrifice``/``kappa`` hold the mixed follower
    policy and its mixing weight when a sacrifice budget was applied.
    """

    stage_index: int
    partition: Partition
    theta: np.ndarray
    eta: np.ndarray
    follower_br: np.ndarray | None
    sacrifice: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def leader_value(self, b) -> float:
        b = np.asarray(b, dtype=float)
        return float(self.theta[locate(b, self.partition)] @ b)

    def follower_values(self, b) -> np.ndarray:
        return self.theta[locate(np.asarray(b, dtype=float), self.partition)].copy()


def terminal_value(model: GameModel, horizon: int = 0) -> StageValueFunction:
    """Boundary condition: a single whole-simplex region worth zero."""
    n = model.n_states
    return StageValueFunction(
        stage_index=horizon,
        partition=Partition(regions=(whole_simplex(n),)),
        theta=_frozen(np.zeros((1, n))),
        eta=_frozen(np.full((1, model.n_leader_actions), 1.0 / model.n_leader_actions)),
        follower_br=None,
    )


def compute_phi(region: Region, next_vf: StageValueFunction, model: GameModel) -> np.ndarray:
    """Future-reward matrices on a refined region.

    ``phi[s, aL, aF]`` is the expected next-stage follower value after
    the joint action, resolved through the region's provenance links
    (each observation branch lands in a single next-stage cell there).
    Vacuous branches contribute zero.
    """
    links = {(al, af, o): cid for (al, af, o, cid) in region.provenance}
    n, n_al, n_af = model.n_states, model.n_leader_actions, model.n_follower_actions
    phi = np.zeros((n, n_al, n_af))
    for al in range(n_al):
        for af in range(n_af):
            w = np.zeros(n)
            for o in range(model.n_observations):
                cid = links.get((al, af, o))
                if cid is None:
                    if branch_is_vacuous((al, af), o, model):
                        continue
                    raise SolverInternalError(
                        f"no provenance for non-vacuous branch (aL={al}, aF={af}, o={o})"
                    )
                w += model.observation_fn[:, o] * next_vf.theta[cid]
            phi[:, al, af] = model.transition[:, al, af, :] @ w
    return phi


def _minimal_vertices(
    region_Pi: np.ndarray,
    points: list[ExtremePoint],
    interior_b: np.ndarray,
    tol: float = ACTIVE_SLACK,
) -> list[ExtremePoint]:
    """Vertices whose theta attains ``min_k b @ theta_k`` somewhere with
    interior inside the region.

    Incremental filter: repeatedly look for a witness belief where the
    head candidate strictly beats everything kept so far; if one exists,
    keep whichever candidate is best *there* (deterministic tie-break),
    otherwise discard the head.  The kept envelope matches the full one
    within ``tol`` everywhere while dropping pieces that only ever tie
    on boundaries.
    """
    n = region_Pi.shape[1]
    region_rows = _normalized_rows(region_Pi)
    pending = list(points)
    kept: list[ExtremePoint] = []

    while pending:
        head = pending[0]
        if kept:
            diff = np.array([w.theta - head.theta for w in kept])
            norms = np.linalg.norm(diff, axis=1)
            norms[norms < 1e-15] = 1.0
            diff_n = diff / norms[:, None]
            rows = len(kept) + region_rows.shape[0]
            # variables (b, t): maximize t subject to the region rows and
            # (theta_w - theta_head) . b >= t for every kept w
            A_ub = np.zeros((rows, n + 1))
            A_ub[: len(kept), :n] = -diff_n
            A_ub[: len(kept), n] = 1.0
            if region_rows.shape[0]:
                A_ub[len(kept):, :n] = region_rows
            c = np.zeros(n + 1)
            c[-1] = -1.0
            res = linprog(
                c,
                A_ub=A_ub,
                b_ub=np.zeros(rows),
                A_eq=np.concatenate([np.ones(n), [0.0]])[None, :],
                b_eq=[1.0],
                bounds=[(0.0, 1.0)] * n + [(-1.0, 1.0)],
                method="highs",
            )
            if not res.success or res.x[-1] <= tol:
                pending.pop(0)
                continue
            witness = res.x[:n]
        else:
            witness = interior_b
        values = [float(witness @ p.theta) for p in pending]
        best = min(values)
        chosen = min(
            (p for p, v in zip(pending, values) if v <= best + 1e-9),
            key=ExtremePoint.sort_key,
        )
        pending = [p for p in pending if p is not chosen]
        kept.append(chosen)

    kept.sort(key=ExtremePoint.sort_key)
    return kept


def _sacrifice_mix(delta_hat, eta_hat, payoff, budget: float) -> tuple[np.ndarray, float]:
    """Mix the best response toward uniform without giving up more than
    ``budget`` of current-stage value against ``eta_hat``."""
    delta_hat = np.asarray(delta_hat, dtype=float)
    if budget <= 0.0:
        return delta_hat.copy(), 0.0
    row = np.asarray(eta_hat, dtype=float) @ np.asarray(payoff, dtype=float)
    n_af = delta_hat.shape[0]
    uniform = np.full(n_af, 1.0 / n_af)
    g = float(row @ (delta_hat - uniform))
    kappa = 1.0 if g <= 1e-12 else min(1.0, budget / g)
    return (1.0 - kappa) * delta_hat + kappa * uniform, float(kappa)


def sacrifice_policy(delta_hat, eta_hat, payoff, budget: float) -> np.ndarray:
    """Follower policy sacrificing at most ``budget`` against ``eta_hat``."""
    mixed, _ = _sacrifice_mix(delta_hat, eta_hat, payoff, budget)
    return mixed


def _solve_region(region: Region, next_vf: StageValueFunction, model: GameModel):
    """Future rewards, payoffs, and minimal vertices for one region."""
    phi = compute_phi(region, next_vf, model)
    payoffs = StagePayoffs.from_matrices(model.reward + phi)
    lp = build_lp(np.full(model.n_states, 1.0 / model.n_states), payoffs)
    points = enumerate_vertices(lp)
    if not points:
        raise SolverInternalError(f"stage LP for region {region.id} has no vertex")
    slack, interior = max_interior_slack(region.Pi)
    if interior is None or slack < 0:
        raise SolverInternalError(f"refined region {region.id} has no interior point")
    kept = _minimal_vertices(region.Pi, points, interior)
    if not kept:
        kept = [
            min(points, key=lambda p: (float(interior @ p.theta),) + p.sort_key())
        ]
    return phi, payoffs, points, kept


def backup(
    next_vf: StageValueFunction,
    model: GameModel,
    shift: ShiftRecord,
    budget: float = 0.0,
    region_cap: int = DEFAULT_REGION_CAP,
    workers: int = 1,
    stats: list | None = None,
) -> StageValueFunction:
    """One stage of value iteration against ``next_vf``.

    ``model`` must already carry the shifted (strictly positive) rewards
    described by ``shift``; ``budget`` is the per-stage sacrifice
    allowance mixed into the stored follower policy.  When ``stats`` is a
    list, one record per solved stage LP is appended (vertex counts and
    region ids) for diagnostics.
    """
    n, n_al, n_af = model.n_states, model.n_leader_actions, model.n_follower_actions

    branches = {}
    for al in range(n_al):
        for af in range(n_af):
            for o in range(model.n_observations):
                if branch_is_vacuous((al, af), o, model):
                    continue
                cells = tuple(
                    Region(
                        Pi=_frozen(backpropagate_region(r.Pi, (al, af), o, model)),
                        id=r.id,
                    )
                    for r in next_vf.partition.regions
                )
                branches[(al, af, o)] = Partition(regions=cells)

    refined = refine(branches) if branches else Partition(regions=(whole_simplex(n),))
    if len(refined) > region_cap:
        raise RegionCapExceeded(
            f"stage {next_vf.stage_index - 1}: {len(refined)} refined regions exceed cap {region_cap}"
        )

    if workers > 1 and len(refined) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(lambda r: _solve_region(r, next_vf, model), refined.regions))
    else:
        solved = [_solve_region(r, next_vf, model) for r in refined.regions]

    if stats is not None:
        for region, (_phi, _payoffs, points, kept) in zip(refined.regions, solved):
            stats.append(
                {
                    "stage": next_vf.stage_index - 1,
                    "region": region.id,
                    "vertices": len(points),
                    "kept": len(kept),
                }
            )

    leaf_regions: list[Region] = []
    theta_rows, eta_rows, br_rows, sac_rows, kappa_rows = [], [], [], [], []
    for region, (phi, payoffs, _points, kept) in zip(refined.regions, solved):
        for point in kept:
            split = [point.theta - other.theta for other in kept if other is not point]
            pieces = [region.Pi] + ([np.vstack(split)] if split else [])
            pieces = [p for p in pieces if p.shape[0] > 0]
            stacked = np.vstack(pieces) if pieces else np.zeros((0, n))
            leaf_regions.append(
                Region(
                    Pi=_frozen(reduce_rows(stacked)),
                    id=len(leaf_regions),
                    provenance=region.provenance,
                )
            )
            theta_rows.append(point.theta)
            eta_rows.append(point.eta)
            br = np.zeros(n, dtype=int)
            sac = np.zeros((n, n_af))
            kap = np.zeros(n)
            for i in range(n):
                idx, _ = follower_best_response(point.eta, payoffs.matrices[i])
                br[i] = idx
                delta_hat = np.zeros(n_af)
                delta_hat[idx] = 1.0
                sac[i], kap[i] = _sacrifice_mix(delta_hat, point.eta, payoffs.matrices[i], budget)
            br_rows.append(br)
            sac_rows.append(sac)
            kappa_rows.append(kap)

    if len(leaf_regions) > region_cap:
        raise RegionCapExceeded(
            f"stage {next_vf.stage_index - 1}: {len(leaf_regions)} leaf regions exceed cap {region_cap}"
        )

    keep_sacrifice = budget > 0.0
    return StageValueFunction(
        stage_index=next_vf.stage_index - 1,
        partition=Partition(regions=tuple(leaf_regions)),
        theta=_frozen(np.array(theta_rows)),
        eta=_frozen(np.array(eta_rows)),
        follower_br=np.array(br_rows),
        sacrifice=_frozen(np.array(sac_rows)) if keep_sacrifice else None,
        kappa=_frozen(np.array(kappa_rows)) if keep_sacrifice else None,
    )


@dataclass(frozen=True)
class SolutionBundle:
    """Solved chain of stage value functions plus reporting metadata.

    ``stages[t].theta`` is stored on the *original* reward scale (the
    internal shift has been removed stage by stage); ``belief`` is the
    belief the root values are reported at.
    """

    model_hash: str
    horizon: int
    epsilon: float
    shift: ShiftRecord
    belief: np.ndarray
    stages: tuple[StageValueFunction, ...]

    @property
    def budget_per_stage(self) -> float:
        return self.epsilon / (self.horizon + 1)

    def leader_value(self, b, stage: int = 0) -> float:
        return self.stages[stage].leader_value(b)

    def follower_values(self, b, stage: int = 0) -> np.ndarray:
        return self.stages[stage].follower_values(b)

    def root_values(self) -> tuple[float, np.ndarray]:
        values = self.follower_values(self.belief)
        return float(self.belief @ values), values


def solve_game(
    model: GameModel,
    horizon: int,
    epsilon: float = 0.0,
    target_lower: float = 1.0,
    region_cap: int = DEFAULT_REGION_CAP,
    workers: int | None = None,
    belief=None,
    stats: list | None = None,
) -> SolutionBundle:
    """Solve a model for ``horizon`` stages.

    With ``epsilon == 0`` the bundle is the exact equilibrium chain; a
    positive ``epsilon`` also stores follower policies mixed under a
    per-stage budget of ``epsilon / (horizon + 1)``.  ``belief``
    overrides the model's initial belief for reporting only -- the
    solved partitions cover the whole simplex either way.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    violations = validate_model(model)
    if violations:
        raise ModelError("; ".join(str(v) for v in violations))
    b0 = np.asarray(model.initial_belief if belief is None else belief, dtype=float)
    if workers is None:
        workers = worker_count()

    shifted, record = shift_rewards(model, target_lower)
    budget = epsilon / (horizon + 1)
    vf = terminal_value(model, horizon)
    stages: list[StageValueFunction] = []
    for _ in range(horizon):
        vf = backup(
            vf, shifted, record,
            budget=budget, region_cap=region_cap, workers=workers, stats=stats,
        )
        stages.insert(0, vf)

    unshifted = tuple(
        replace(svf, theta=_frozen(svf.theta - record.c * (horizon - svf.stage_index)))
        for svf in stages
    )
    return SolutionBundle(
        model_hash=model_hash(model),
        horizon=horizon,
        epsilon=epsilon,
        shift=record,
        belief=_frozen(b0),
        stages=unshifted,
    )


# ---------------------------------------------------------------------------
# Exact policy evaluation (expectation recursion, no sampling)
# ---------------------------------------------------------------------------

def evaluate_policy_exact(
    model: GameModel,
    bundle: SolutionBundle,
    belief=None,
    use_sacrifice: bool = True,
) -> tuple[float, np.ndarray]:
    """Expected cumulative follower reward under the stored policies.

    Recurses over every joint action, next state, and observation,
    updating the leader's belief public-information-only along the way.
    With ``use_sacrifice`` the follower plays the stored mixed policy
    (when present); otherwise the pure best responses.  Returns the
    leader-side total and the per-initial-state follower values.
    """
    b0 = np.asarray(bundle.belief if belief is None else belief, dtype=float)
    n, n_al, n_af = model.n_states, model.n_leader_actions, model.n_follower_actions
    h = bundle.horizon

    def follower_policy(svf: StageValueFunction, rid: int, state: int) -> np.ndarray:
        if use_sacrifice and svf.sacrifice is not None:
            return svf.sacrifice[rid, state]
        out = np.zeros(n_af)
        out[int(svf.follower_br[rid, state])] = 1.0
        return out

    def value(t: int, bel: np.ndarray, state: int) -> float:
        if t >= h:
            return 0.0
        svf = bundle.stages[t]
        rid = locate(bel, svf.partition)
        eta = svf.eta[rid]
        total = 0.0
        for al in range(n_al):
            if eta[al] <= 0.0:
                continue
            for af in range(n_af):
                delta = follower_policy(svf, rid, state)
                if delta[af] <= 0.0:
                    continue
                weight = float(eta[al] * delta[af])
                future = 0.0
                posteriors = {}
                for s_next in range(n):
                    p_next = float(model.transition[state, al, af, s_next])
                    if p_next <= 0.0:
                        continue
                    for o in range(model.n_observations):
                        p_obs = float(model.observation_fn[s_next, o])
                        if p_obs <= 0.0:
                            continue
                        if o not in posteriors:
                            posteriors[o] = update_belief(bel, (al, af), o, model)
                        upd = posteriors[o]
                        if upd.defined:
                            next_bel = upd.next_belief
                        else:
                            # the leader's public-information posterior is
                            # undefined; condition on the realized state
                            next_bel = np.eye(n)[s_next]
                        future += p_next * p_obs * value(t + 1, next_bel, s_next)
                total += weight * (float(model.reward[state, al, af]) + future)
        return total

    per_state = np.array([value(0, b0, s) for s in range(n)])
    return float(b0 @ per_state), per_state


# ---------------------------------------------------------------------------
# Bundle (de)serialization
# ---------------------------------------------------------------------------

def bundle_to_json(bundle: SolutionBundle) -> str:
    leader_root, follower_root = bundle.root_values()
    doc = {
        "model_hash": bundle.model_hash,
        "horizon": bundle.horizon,
        "epsilon": bundle.epsilon,
        "shift": {
            "c": bundle.shift.c,
            "r_lower": bundle.shift.r_lower,
            "f_upper": bundle.shift.f_upper,
        },
        "belief": [float(x) for x in bundle.belief],
        "root_values": {
            "leader": leader_root,
            "follower": [float(x) for x in follower_root],
        },
        "stages": [
            {
                "stage": svf.stage_index,
                "regions": [
                    {
                        "id": region.id,
                        "Pi": [[float(x) for x in row] for row in region.Pi],
                        "theta": [float(x) for x in svf.theta[region.id]],
                        "eta": [float(x) for x in svf.eta[region.id]],
                        "follower_br": [int(x) for x in svf.follower_br[region.id]],
                        "sacrifice": (
                            [[float(x) for x in row] for row in svf.sacrifice[region.id]]
                            if svf.sacrifice is not None
                            else None
                        ),
                        "kappa": (
                            [float(x) for x in svf.kappa[region.id]]
                            if svf.kappa is not None
                            else None
                        ),
                        "provenance": [list(link) for link in region.provenance],
                    }
                    for region in svf.partition.regions
                ],
            }
            for svf in bundle.stages
        ],
    }
    return json.dumps(doc, indent=2)


def bundle_from_json(data: bytes | str) -> SolutionBundle:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    doc = json.loads(data)
    belief = np.asarray(doc["belief"], dtype=float)
    n = belief.shape[0]
    stages = []
    for stage_doc in doc["stages"]:
        regions, thetas, etas, brs, sacs, kaps = [], [], [], [], [], []
        has_sacrifice = any(r["sacrifice"] is not None for r in stage_doc["regions"])
        for r in stage_doc["regions"]:
            pi = np.asarray(r["Pi"], dtype=float).reshape(-1, n) if r["Pi"] else np.zeros((0, n))
            regions.append(
                Region(
                    Pi=_frozen(pi),
                    id=int(r["id"]),
                    provenance=tuple(tuple(int(x) for x in link) for link in r["provenance"]),
                )
            )
            thetas.append(r["theta"])
            etas.append(r["eta"])
            brs.append(r["follower_br"])
            if has_sacrifice:
                sacs.append(r["sacrifice"])
                kaps.append(r["kappa"])
        stages.append(
            StageValueFunction(
                stage_index=int(stage_doc["stage"]),
                partition=Partition(regions=tuple(regions)),
                theta=_frozen(np.asarray(thetas, dtype=float)),
                eta=_frozen(np.asarray(etas, dtype=float)),
                follower_br=np.asarray(brs, dtype=int),
                sacrifice=_frozen(np.asarray(sacs, dtype=float)) if has_sacrifice else None,
                kappa=_frozen(np.asarray(kaps, dtype=float)) if has_sacrifice else None,
            )
        )
    stages.sort(key=lambda svf: svf.stage_index)
    return SolutionBundle(
        model_hash=doc["model_hash"],
        horizon=int(doc["horizon"]),
        epsilon=float(doc["epsilon"]),
        shift=ShiftRecord(
            c=float(doc["shift"]["c"]),
            r_lower=float(doc["shift"]["r_lower"]),
            f_upper=float(doc["shift"]["f_upper"]),
        ),
        belief=_frozen(belief),
        stages=tuple(stages),
    )
