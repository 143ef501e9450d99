"""Polyhedral cells of the belief simplex.

A region is the set ``{b : Pi @ b <= 0}`` intersected with the simplex.
The constraint rows are homogeneous, so membership is invariant under
positive scaling of ``b`` and is well defined even for unnormalized
posterior numerators.  Partitions cover the simplex with such cells;
points on shared boundaries belong to the region with the smallest id.

Cells of a next-stage partition pull back through the belief update: with
``M`` the successor matrix of a joint action and observation, the updated
belief lies in ``{Pi b <= 0}`` exactly when the current belief satisfies
``(Pi @ M) b <= 0``, so partitions propagate backwards by a single matrix
product per branch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .belief import successor_matrix
from .model import GameModel, _frozen

# A region is kept only if it has at least this much normalized interior
# slack somewhere on the simplex.
ACTIVE_SLACK = 1e-9
LOCATE_TOL = 1e-9
VACUOUS_TOL = 1e-12


class CoverageGapError(RuntimeError):
    """A belief failed to locate in any region of a partition."""


@dataclass(frozen=True)
class Region:
    """One polyhedral cell.  ``provenance`` records, per public joint
    action and observation, the id of the next-stage cell the updated
    belief lands in: tuples ``(aL, aF, o, next_region_id)``."""

    Pi: np.ndarray
    id: int
    provenance: tuple = ()

    def contains(self, b, tol: float = LOCATE_TOL) -> bool:
        if self.Pi.shape[0] == 0:
            return True
        return float((self.Pi @ np.asarray(b, dtype=float)).max()) <= tol


@dataclass(frozen=True)
class Partition:
    """Disjoint cover of the simplex; region ids equal their positions."""

    regions: tuple[Region, ...]

    def __post_init__(self):
        for pos, region in enumerate(self.regions):
            if region.id != pos:
                raise ValueError(f"region ids must be positional: found id {region.id} at {pos}")

    @property
    def n_states(self) -> int:
        return self.regions[0].Pi.shape[1]

    def __len__(self) -> int:
        return len(self.regions)


def whole_simplex(n: int) -> Region:
    return Region(Pi=_frozen(np.zeros((0, n))), id=0)


def locate(b, partition: Partition, tol: float = LOCATE_TOL) -> int:
    """Id of the region containing ``b`` (smallest id on boundaries)."""
    b = np.asarray(b, dtype=float)
    for region in partition.regions:
        if region.contains(b, tol):
            return region.id
    worst = min(
        float((r.Pi @ b).max()) for r in partition.regions if r.Pi.shape[0] > 0
    )
    raise CoverageGapError(
        f"belief {b.tolist()} not in any of {len(partition)} regions (best violation {worst:.3e})"
    )


def backpropagate_region(Pi_next, a, o: int, model: GameModel) -> np.ndarray:
    """Pull a next-stage constraint matrix back through one branch.

    Returns ``Pi_next @ M``; membership of the current belief in the
    result predicts membership of the updated belief in ``Pi_next``
    whenever the branch's observation has positive probability.
    """
    M = successor_matrix(a, o, model)
    return np.asarray(Pi_next, dtype=float) @ M


def branch_is_vacuous(a, o: int, model: GameModel) -> bool:
    """True when the branch's successor matrix is numerically zero, i.e.
    the (action, observation) pair can never occur."""
    return float(np.abs(successor_matrix(a, o, model)).max()) < VACUOUS_TOL


def _normalized_rows(Pi) -> np.ndarray:
    Pi = np.atleast_2d(np.asarray(Pi, dtype=float))
    if Pi.shape[0] == 0:
        return Pi
    norms = np.linalg.norm(Pi, axis=1)
    keep = norms > VACUOUS_TOL
    return Pi[keep] / norms[keep][:, None]


def max_interior_slack(Pi) -> tuple[float, np.ndarray | None]:
    """Maximize the minimum constraint slack over the simplex.

    Rows are normalized so the slack is scale free; identically-zero rows
    impose nothing and are dropped.  Returns the best slack (capped at 1)
    and the witness belief.
    """
    Pi_n = _normalized_rows(Pi)
    n = np.asarray(Pi).shape[1] if np.asarray(Pi).ndim == 2 else len(Pi[0])
    if Pi_n.shape[0] == 0:
        return 1.0, np.full(n, 1.0 / n)
    rows, n = Pi_n.shape
    # variables (b_1..b_n, t): maximize t s.t. Pi_n b + t <= 0
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([Pi_n, np.ones((rows, 1))])
    b_ub = np.zeros(rows)
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0.0, 1.0)] * n + [(-1.0, 1.0)],
        method="highs",
    )
    if not res.success:
        return -np.inf, None
    return float(res.x[-1]), res.x[:n].copy()


def is_active(region) -> bool:
    """True when the region's cell has full-dimensional interior slack."""
    Pi = region.Pi if isinstance(region, Region) else region
    slack, _ = max_interior_slack(Pi)
    return slack >= ACTIVE_SLACK


def region_interior_point(region) -> np.ndarray:
    Pi = region.Pi if isinstance(region, Region) else region
    slack, b = max_interior_slack(Pi)
    if b is None or slack < 0:
        raise ValueError("region has no interior point on the simplex")
    return b


def _contained_in(candidate_rows: np.ndarray, other_rows: np.ndarray, tol: float = ACTIVE_SLACK) -> bool:
    """True when ``{candidate_rows b <= 0}`` (within the simplex) lies
    inside ``{other_rows b <= 0}``: every row of the second system stays
    nonpositive when maximized over the first."""
    other_n = _normalized_rows(other_rows)
    if other_n.shape[0] == 0:
        return True
    cand_n = _normalized_rows(candidate_rows)
    n = other_n.shape[1]
    for row in other_n:
        res = linprog(
            -row,
            A_ub=cand_n if cand_n.shape[0] else None,
            b_ub=np.zeros(cand_n.shape[0]) if cand_n.shape[0] else None,
            A_eq=np.ones((1, n)),
            b_eq=[1.0],
            bounds=[(0.0, 1.0)] * n,
            method="highs",
        )
        if not res.success or -res.fun > tol:
            return False
    return True


def reduce_rows(Pi, tol: float = ACTIVE_SLACK) -> np.ndarray:
    """Drop constraint rows implied by the others (within the simplex).

    Near-duplicate rows are removed first so mutual implication cannot
    discard both copies; each surviving row is then tested by maximizing
    it subject to the rest, and dropped when the maximum stays nonpositive.
    """
    Pi = np.atleast_2d(np.asarray(Pi, dtype=float))
    n = Pi.shape[1]
    norms = np.linalg.norm(Pi, axis=1)
    keep = [i for i in range(Pi.shape[0]) if norms[i] > VACUOUS_TOL]
    normalized = {i: Pi[i] / norms[i] for i in keep}

    deduped: list[int] = []
    for i in keep:
        if all(np.abs(normalized[i] - normalized[j]).max() > 1e-9 for j in deduped):
            deduped.append(i)

    kept = list(deduped)
    for i in list(kept):
        others = [j for j in kept if j != i]
        if not others:
            continue
        A_ub = np.vstack([normalized[j] for j in others])
        res = linprog(
            -normalized[i],
            A_ub=A_ub,
            b_ub=np.zeros(len(others)),
            A_eq=np.ones((1, n)),
            b_eq=[1.0],
            bounds=[(0.0, 1.0)] * n,
            method="highs",
        )
        if res.success and -res.fun <= tol:
            kept.remove(i)
    return Pi[kept] if kept else np.zeros((0, n))


def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """Regular grid on the (n-1)-simplex: all compositions of
    ``resolution - 1`` parts over ``n`` coordinates, in lexicographic
    order of the leading coordinates."""
    if resolution < 2:
        raise ValueError(f"grid resolution must be at least 2, got {resolution}")
    if n == 1:
        return np.ones((1, 1))
    steps = resolution - 1
    points = []
    for dividers in itertools.combinations(range(steps + n - 1), n - 1):
        counts = []
        prev = -1
        for d in dividers:
            counts.append(d - prev - 1)
            prev = d
        counts.append(steps + n - 2 - prev)
        points.append(counts)
    return np.asarray(points, dtype=float) / steps


def refine(per_branch: dict) -> Partition:
    """Common refinement of one partition per branch.

    ``per_branch`` maps branch keys ``(aL, aF, o)`` to partitions of the
    simplex.  Every output region is an intersection choosing one cell
    per branch; only intersections with interior survive.  Intersections
    are built incrementally, branch by branch in sorted key order, so
    inactive partial products are pruned early; the result is sorted by
    the per-branch cell signature, which fixes the region ids.

    Pullback cells can overlap with full volume when the branch's
    successor matrix is rank deficient (every posterior then sits on a
    boundary of the next-stage cells).  Boundary points belong to the
    lowest-id cell, so a candidate whose intersection is contained in an
    earlier cell of the same branch is skipped.
    """
    keys = sorted(per_branch.keys())
    if not keys:
        raise ValueError("refine needs at least one branch partition")
    n = per_branch[keys[0]].n_states

    frontier: list[tuple[list, tuple, list]] = [([], (), [])]
    for key in keys:
        al, af, o = key
        branch = per_branch[key]
        new_frontier = []
        for rows, signature, links in frontier:
            accepted: list[np.ndarray] = []
            for cell in branch.regions:
                cand_rows = rows if cell.Pi.shape[0] == 0 else rows + [cell.Pi]
                stacked = np.vstack(cand_rows) if cand_rows else np.zeros((0, n))
                if not is_active(stacked):
                    continue
                if any(_contained_in(stacked, earlier) for earlier in accepted):
                    continue
                accepted.append(cell.Pi)
                new_frontier.append(
                    (cand_rows, signature + (cell.id,), links + [(al, af, o, cell.id)])
                )
        frontier = new_frontier

    frontier.sort(key=lambda item: item[1])
    regions = []
    for pos, (rows, _, links) in enumerate(frontier):
        stacked = np.vstack(rows) if rows else np.zeros((0, n))
        regions.append(
            Region(Pi=_frozen(reduce_rows(stacked)), id=pos, provenance=tuple(links))
        )
    return Partition(regions=tuple(regions))
