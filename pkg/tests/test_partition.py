"""Back-propagation, activity checks, refinement, and location."""

import numpy as np
import pytest

import otzposg as oz
from otzposg.model import _frozen

from conftest import (
    PI_CELL_1,
    PI_CELL_2,
    PI_CELL_3,
    make_dynamic_model,
    random_belief,
)
from oracles import membership_signature, membership_signatures_batch


def reference_partition():
    """The three-cell split induced by the static game's extreme points."""
    cells = (
        oz.Region(Pi=_frozen(PI_CELL_1), id=0),
        oz.Region(Pi=_frozen(PI_CELL_2), id=1),
        oz.Region(Pi=_frozen(PI_CELL_3), id=2),
    )
    return oz.Partition(regions=cells)


def rows_match(actual, expected, atol=1e-2):
    """Row-wise match up to positive scaling."""
    actual = np.atleast_2d(actual)
    expected = np.atleast_2d(expected)
    if actual.shape != expected.shape:
        return False
    for ra, re in zip(actual, expected):
        na, ne = np.linalg.norm(ra), np.linalg.norm(re)
        if na < 1e-12 or ne < 1e-12:
            if not (na < 1e-12 and ne < 1e-12):
                return False
            continue
        if np.abs(ra / na - re / ne).max() > atol / max(ne, 1.0):
            return False
    return True


def test_backpropagation_first_observation():
    model = make_dynamic_model()
    bar1 = oz.backpropagate_region(PI_CELL_1, (0, 0), 0, model)
    bar2 = oz.backpropagate_region(PI_CELL_2, (0, 0), 0, model)
    bar3 = oz.backpropagate_region(PI_CELL_3, (0, 0), 0, model)
    assert np.abs(bar1 - np.array([[0.25, 0.89], [0.46, 1.90]])).max() < 1e-2
    assert np.abs(bar2 - np.array([[-0.25, -0.89], [0.21, 1.01]])).max() < 1e-2
    assert np.abs(bar3 - np.array([[-0.46, -1.90], [-0.21, -1.01]])).max() < 1e-2
    assert not oz.is_active(bar1)
    assert not oz.is_active(bar2)
    assert oz.is_active(bar3)


def test_backpropagation_second_observation():
    model = make_dynamic_model()
    bar1 = oz.backpropagate_region(PI_CELL_1, (0, 0), 1, model)
    assert np.abs(bar1 - np.array([[-0.22, 0.54], [-1.19, 1.05]])).max() < 1e-2
    for pi in (PI_CELL_1, PI_CELL_2, PI_CELL_3):
        assert oz.is_active(oz.backpropagate_region(pi, (0, 0), 1, model))


def test_backpropagate_zero_matrix():
    model = make_dynamic_model()
    out = oz.backpropagate_region(np.zeros((2, 2)), (1, 1), 0, model)
    assert np.all(out == 0.0)


def test_activity_edge_cases():
    assert not oz.is_active(np.array([[1.0, 1.0]]))  # requires sum(b) <= 0
    assert oz.is_active(np.zeros((0, 2)))  # whole simplex
    assert oz.is_active(np.zeros((3, 2)))  # zero rows impose nothing
    assert not oz.is_active(np.array([[1.0, -1.0], [-1.0, 1.0]]))  # a single line
    assert not oz.is_active(np.array([[0.0, 1.0]]))  # pinned to a corner


def test_membership_scale_invariance():
    rng = np.random.default_rng(2)
    region = oz.Region(Pi=_frozen(PI_CELL_2), id=0)
    for _ in range(50):
        b = random_belief(rng, 2)
        k = float(rng.uniform(0.05, 20.0))
        assert region.contains(b) == region.contains(k * b)


def test_locate_boundary_tie_break():
    partition = reference_partition()
    # the shared boundary of cells 1 and 2 sits where row 1 of PI_CELL_1
    # vanishes: 1.67 b1 = 0.67 b2
    boundary = np.array([0.67, 1.67]) / 2.34
    assert oz.locate(boundary, partition) == 0
    assert oz.locate(np.array([0.05, 0.95]), partition) == 0
    assert oz.locate(np.array([0.4, 0.6]), partition) == 1
    assert oz.locate(np.array([0.9, 0.1]), partition) == 2


def test_locate_coverage_gap_reported():
    cells = (oz.Region(Pi=_frozen(np.array([[0.0, 1.0]])), id=0),)
    partition = oz.Partition(regions=cells)
    with pytest.raises(oz.CoverageGapError):
        oz.locate(np.array([0.5, 0.5]), partition)


def test_reduce_rows_drops_implied():
    # on the simplex, b1 <= 0.2857... implies b1 <= 0.4186...
    reduced = oz.reduce_rows(PI_CELL_1)
    assert reduced.shape == (1, 2)
    assert np.allclose(reduced[0], PI_CELL_1[0])
    # duplicates (up to positive scale after normalization) collapse
    dup = np.vstack([PI_CELL_1[0], PI_CELL_1[0] * 3.0])
    assert oz.reduce_rows(dup).shape[0] == 1


def test_refine_trivial_branches():
    n = 2
    trivial = oz.Partition(regions=(oz.whole_simplex(n),))
    refined = oz.refine({(0, 0, 0): trivial, (0, 1, 0): trivial})
    assert len(refined) == 1
    assert refined.regions[0].Pi.shape == (0, 2)
    assert refined.regions[0].provenance == ((0, 0, 0, 0), (0, 1, 0, 0))


def test_refine_product_bound():
    half_a = np.array([[1.0, -1.0]])
    cells_a = (
        oz.Region(Pi=_frozen(half_a), id=0),
        oz.Region(Pi=_frozen(-half_a), id=1),
    )
    branch_a = oz.Partition(regions=cells_a)
    third = np.array([[2.0, -1.0]])
    cells_b = (
        oz.Region(Pi=_frozen(third), id=0),
        oz.Region(Pi=_frozen(-third), id=1),
    )
    branch_b = oz.Partition(regions=cells_b)
    refined = oz.refine({(0, 0, 0): branch_a, (0, 0, 1): branch_b})
    # cells: b1 <= 1/3, 1/3 <= b1 <= 1/2, b1 >= 1/2 -- not the full 2x2 product
    assert len(refined) == 3


def test_refine_matches_forward_oracle():
    model = make_dynamic_model()
    next_partition = reference_partition()
    branch_keys = [
        (al, af, o)
        for al in range(2)
        for af in range(2)
        for o in range(2)
    ]
    branches = {
        key: oz.Partition(
            regions=tuple(
                oz.Region(
                    Pi=_frozen(oz.backpropagate_region(r.Pi, (key[0], key[1]), key[2], model)),
                    id=r.id,
                )
                for r in next_partition.regions
            )
        )
        for key in branch_keys
    }
    refined = oz.refine(branches)
    assert len(refined) >= 2

    rng = np.random.default_rng(42)
    samples = rng.random((100_000, 1))
    beliefs = np.hstack([samples, 1.0 - samples])
    matrix = membership_signatures_batch(
        beliefs, branch_keys, next_partition, model, oz.successor_matrix
    )
    signatures = {tuple(row) for row in matrix}
    assert len(signatures) == len(refined)

    # each refined region's provenance agrees with the forward signature
    # of its interior point
    for region in refined.regions:
        b = oz.region_interior_point(region)
        sig = membership_signature(b, branch_keys, next_partition, model, oz.update_belief, oz.locate)
        prov_sig = tuple(cid for (_, _, _, cid) in region.provenance)
        assert prov_sig == sig


def test_backpropagation_soundness_random():
    model = make_dynamic_model()
    next_partition = reference_partition()
    rng = np.random.default_rng(7)
    pullbacks = {
        (al, af, o): [
            oz.backpropagate_region(r.Pi, (al, af), o, model) for r in next_partition.regions
        ]
        for al in range(2)
        for af in range(2)
        for o in range(2)
    }
    checked = 0
    for _ in range(10_000):
        b = random_belief(rng, 2)
        al = int(rng.integers(2))
        af = int(rng.integers(2))
        o = int(rng.integers(2))
        upd = oz.update_belief(b, (al, af), o, model)
        if not upd.defined or upd.observation_prob <= 1e-6:
            continue
        checked += 1
        forward = oz.locate(upd.next_belief, next_partition)
        backward = next(
            rid
            for rid, pi in enumerate(pullbacks[(al, af, o)])
            if float((pi @ b).max()) <= 1e-9
        )
        assert forward == backward
    assert checked > 9000


def test_coverage_and_disjointness_under_tie_break():
    model = make_dynamic_model()
    bundle = oz.solve_game(model, horizon=2)
    partition = bundle.stages[0].partition
    rng = np.random.default_rng(12)
    x = rng.random(100_000)
    beliefs = np.column_stack([x, 1.0 - x])
    member = np.ones((len(beliefs), len(partition)), dtype=bool)
    strict = np.ones_like(member)
    for rid, region in enumerate(partition.regions):
        if region.Pi.shape[0] == 0:
            continue
        worst = (beliefs @ region.Pi.T).max(axis=1)
        member[:, rid] = worst <= 1e-9
        strict[:, rid] = worst < -1e-9
    # coverage: every sample belongs somewhere under the tie-break
    assert member.any(axis=1).all()
    # disjointness: strict-interior membership is never shared
    assert (strict.sum(axis=1) <= 1).all()
    # spot-check that locate returns the smallest matching id
    for i in range(0, len(beliefs), 10_000):
        rid = oz.locate(beliefs[i], partition)
        assert rid == int(np.argmax(member[i]))


def test_simplex_grid():
    g = oz.simplex_grid(2, 101)
    assert g.shape == (101, 2)
    assert g[0] == pytest.approx([0.0, 1.0])
    assert g[-1] == pytest.approx([1.0, 0.0])
    assert oz.simplex_grid(2, 2).tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert oz.simplex_grid(1, 5).tolist() == [[1.0]]
    g3 = oz.simplex_grid(3, 4)
    assert np.allclose(g3.sum(axis=1), 1.0)
    assert len(g3) == 10
    with pytest.raises(ValueError):
        oz.simplex_grid(2, 1)
