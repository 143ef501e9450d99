"""One-stage equilibrium via exhaustive vertex enumeration of a small LP.

Fix the leader's mixed action ``eta``.  In each state ``i`` the follower
best-responds with value ``f_i(eta) = max over columns of eta @ U_i`` where
``U_i`` is the stage payoff matrix for that state, and the leader picks
``eta`` minimizing ``sum_i b_i f_i(eta)`` at belief ``b``.  Dividing by
``f_1(eta)`` and applying the Charnes-Cooper substitution turns this
min-max into the linear program

    min   c_obj @ mu + alpha * lambda
    s.t.  Gamma mu <= beta * lambda,   d @ mu = 1,
          0 <= mu <= mu_upper,         lambda_min <= lambda <= f_upper,

whose variables recover the equilibrium: the first ``|A_L|`` entries of
``mu`` are ``eta``, while ``lambda`` and the remaining entries of ``mu``
are the per-state follower values.  Packing those values into
``theta = (lambda, mu_{|A_L|+1}, ...)`` the leader's value at any belief
is the lower envelope ``min_k b @ theta_k`` over all vertices ``k`` of
the feasible polytope.  The payoff entries must be strictly positive
(shift the rewards first) so the substitution and the variable bounds
are valid.

Dimensions stay tiny here, so vertices are enumerated exactly by basis
search: every subset of constraints of the right size is solved as a
square system and kept when the solution is feasible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

FEASIBILITY_TOL = 1e-9
DEDUP_TOL = 1e-7


class SolverInternalError(RuntimeError):
    """An impossible solver state (e.g. a stage LP with no vertex)."""


@dataclass(frozen=True)
class StagePayoffs:
    """Per-state stage payoff matrices with their entry bounds.

    ``matrices[i]`` is the |A_L| x |A_F| payoff for state ``i`` (stage
    reward plus, in multi-stage backups, the future-reward matrix).
    """

    matrices: np.ndarray
    r_lower: float
    f_upper: float

    @classmethod
    def from_matrices(cls, matrices) -> "StagePayoffs":
        matrices = np.asarray(matrices, dtype=float)
        if matrices.ndim != 3:
            raise ValueError(f"expected (n, |A_L|, |A_F|) payoffs, got shape {matrices.shape}")
        return cls(
            matrices=matrices,
            r_lower=float(matrices.min()),
            f_upper=float(matrices.max()),
        )


@dataclass(frozen=True)
class LPInstance:
    """The stage LP in matrix form; the feasible set does not depend on b."""

    Gamma: np.ndarray
    beta: np.ndarray
    c_obj: np.ndarray
    alpha: float
    d: np.ndarray
    mu_upper: np.ndarray
    lambda_bounds: tuple[float, float]
    n_states: int
    n_leader_actions: int


@dataclass(frozen=True)
class ExtremePoint:
    """A vertex of the stage polytope, with its policy/value split.

    ``eta`` is the leader's mixed action (first |A_L| entries of ``mu``);
    ``theta`` collects the per-state follower values ``(lam, mu tail)``.
    """

    mu: np.ndarray
    lam: float
    theta: np.ndarray
    eta: np.ndarray

    def sort_key(self) -> tuple:
        return (tuple(self.theta), tuple(self.eta))


@dataclass(frozen=True)
class StageSolution:
    eta: np.ndarray
    leader_value: float
    follower_values: np.ndarray
    follower_best_responses: tuple[int, ...]
    follower_br_policies: np.ndarray


def vertex_count_bound(n_leader_actions: int, n_states: int, n_follower_actions: int) -> int:
    """Worst-case number of vertices of one stage LP."""
    total = n_leader_actions + n_states + n_follower_actions * n_states
    return math.comb(total, n_leader_actions + n_states - 1)


def build_lp(b, payoffs: StagePayoffs) -> LPInstance:
    """Assemble the stage LP at belief ``b``.

    The first block-column of ``Gamma`` stacks the transposed payoff
    matrices; column ``|A_L| + i - 1`` carries ``-1`` on state ``i``'s
    block so that entry of ``mu`` dominates state ``i``'s response values.
    """
    if payoffs.r_lower <= 0:
        raise ValueError(
            f"stage payoffs must be strictly positive (min entry {payoffs.r_lower}); shift rewards first"
        )
    matrices = payoffs.matrices
    n, n_al, n_af = matrices.shape
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError(f"belief length {b.shape} does not match {n} states")

    Gamma = np.zeros((n * n_af, n_al + n - 1))
    beta = np.zeros(n * n_af)
    beta[:n_af] = 1.0
    for i in range(n):
        rows = slice(i * n_af, (i + 1) * n_af)
        Gamma[rows, :n_al] = matrices[i].T
        if i >= 1:
            Gamma[rows, n_al + i - 1] = -1.0

    c_obj = np.zeros(n_al + n - 1)
    c_obj[n_al:] = b[1:]
    d = np.zeros(n_al + n - 1)
    d[:n_al] = 1.0
    mu_upper = np.concatenate([np.ones(n_al), np.full(n - 1, payoffs.f_upper)])
    return LPInstance(
        Gamma=Gamma,
        beta=beta,
        c_obj=c_obj,
        alpha=float(b[0]),
        d=d,
        mu_upper=mu_upper,
        lambda_bounds=(payoffs.r_lower, payoffs.f_upper),
        n_states=n,
        n_leader_actions=n_al,
    )


def _inequality_system(lp: LPInstance) -> tuple[np.ndarray, np.ndarray]:
    """All inequality rows ``A x <= rhs`` over x = (mu, lambda)."""
    n_mu = lp.Gamma.shape[1]
    m = n_mu + 1
    lam_lo, lam_hi = lp.lambda_bounds
    blocks = [
        np.hstack([lp.Gamma, -lp.beta[:, None]]),
        np.hstack([-np.eye(n_mu), np.zeros((n_mu, 1))]),
        np.hstack([np.eye(n_mu), np.zeros((n_mu, 1))]),
        np.concatenate([np.zeros(n_mu), [-1.0]])[None, :],
        np.concatenate([np.zeros(n_mu), [1.0]])[None, :],
    ]
    rhs = np.concatenate(
        [np.zeros(lp.Gamma.shape[0]), np.zeros(n_mu), lp.mu_upper, [-lam_lo], [lam_hi]]
    )
    A = np.vstack(blocks)
    assert A.shape == (len(rhs), m)
    return A, rhs


def enumerate_vertices(
    lp: LPInstance,
    feas_tol: float = FEASIBILITY_TOL,
    dedup_tol: float = DEDUP_TOL,
) -> list[ExtremePoint]:
    """Every vertex of the stage polytope, deduplicated and sorted.

    Basis search: together with the normalization equality ``d @ mu = 1``,
    each choice of ``|A_L| + n - 1`` inequality rows forms a square
    system; nonsingular systems whose solution satisfies all constraints
    give vertices.  Rank-deficient choices are skipped -- any vertex lost
    that way is recovered through another basis.  Vertices whose theta
    dips below the payoff lower bound are spurious closure artifacts and
    are filtered out.
    """
    A, rhs = _inequality_system(lp)
    m = A.shape[1]
    n_active = m - 1

    norms = np.linalg.norm(A, axis=1)
    A_n = A / norms[:, None]
    rhs_n = rhs / norms

    eq_row = np.concatenate([lp.d, [0.0]])
    eq_norm = np.linalg.norm(eq_row)
    eq_row_n = eq_row / eq_norm
    eq_rhs_n = 1.0 / eq_norm

    combos = np.array(list(itertools.combinations(range(A.shape[0]), n_active)), dtype=int)
    systems = np.empty((len(combos), m, m))
    systems[:, :n_active, :] = A_n[combos]
    systems[:, n_active, :] = eq_row_n
    targets = np.empty((len(combos), m))
    targets[:, :n_active] = rhs_n[combos]
    targets[:, n_active] = eq_rhs_n

    dets = np.abs(np.linalg.det(systems))
    keep = dets > 1e-10
    if not np.any(keep):
        return []
    candidates = np.linalg.solve(systems[keep], targets[keep][:, :, None])[:, :, 0]
    candidates = candidates + 0.0  # normalize -0.0 for stable formatting

    slack = candidates @ A_n.T - rhs_n[None, :]
    feasible = slack.max(axis=1) <= feas_tol
    candidates = candidates[feasible]
    if candidates.size == 0:
        return []

    n_al = lp.n_leader_actions
    theta = np.column_stack([candidates[:, -1], candidates[:, n_al:-1]])
    in_bounds = theta.min(axis=1) >= lp.lambda_bounds[0] - feas_tol
    candidates = candidates[in_bounds]
    theta = theta[in_bounds]
    if candidates.size == 0:
        return []

    order = np.lexsort(candidates.T[::-1])
    candidates = candidates[order]
    theta = theta[order]
    unique = [0]
    for i in range(1, len(candidates)):
        if np.abs(candidates[i] - candidates[unique[-1]]).max() > dedup_tol:
            unique.append(i)
    candidates = candidates[unique]
    theta = theta[unique]

    points = [
        ExtremePoint(
            mu=candidates[i, :-1].copy(),
            lam=float(candidates[i, -1]),
            theta=theta[i].copy(),
            eta=candidates[i, :n_al].copy(),
        )
        for i in range(len(candidates))
    ]
    points.sort(key=ExtremePoint.sort_key)
    return points


def pick_min_vertex(b, points: list[ExtremePoint], tol: float = FEASIBILITY_TOL) -> ExtremePoint:
    """Vertex minimizing ``b @ theta``; ties go to the lexicographically
    smallest theta, then eta, which keeps outputs deterministic."""
    b = np.asarray(b, dtype=float)
    values = np.array([float(b @ p.theta) for p in points])
    best = values.min()
    candidates = [p for p, v in zip(points, values) if v <= best + tol]
    return min(candidates, key=ExtremePoint.sort_key)


def follower_best_response(eta, payoff) -> tuple[int, float]:
    """Best pure follower response to a leader mixed action.

    Pure responses suffice: a linear function on the simplex is maximized
    at a vertex.  Ties (within 1e-9, so exact-arithmetic ties stay ties
    under constant payoff shifts) resolve to the lowest action index.
    """
    values = np.asarray(eta, dtype=float) @ np.asarray(payoff, dtype=float)
    idx = int(np.argmax(values >= values.max() - 1e-9))
    return idx, float(values[idx])


def solve_stage(b, payoffs: StagePayoffs) -> StageSolution:
    """Equilibrium of a single stage at belief ``b``."""
    b = np.asarray(b, dtype=float)
    lp = build_lp(b, payoffs)
    points = enumerate_vertices(lp)
    if not points:
        raise SolverInternalError("stage LP has no vertex; the feasible set should never be empty")
    best = pick_min_vertex(b, points)

    n, _, n_af = payoffs.matrices.shape
    br = []
    br_policies = np.zeros((n, n_af))
    for i in range(n):
        idx, _ = follower_best_response(best.eta, payoffs.matrices[i])
        br.append(idx)
        br_policies[i, idx] = 1.0
    return StageSolution(
        eta=best.eta,
        leader_value=float(b @ best.theta),
        follower_values=best.theta,
        follower_best_responses=tuple(br),
        follower_br_policies=br_policies,
    )
