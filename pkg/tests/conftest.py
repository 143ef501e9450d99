"""Shared fixtures: the two bundled reference games and a random-model factory.

The static game has two states with payoff matrices [4,2;2,7] and
[8,6;3,4]; its one-stage solution has three equilibrium extreme points
(eta1, eta2, lambda, mu3):

    (0.000, 1.000, 7.000, 4.000)
    (0.333, 0.667, 5.333, 4.667)
    (0.714, 0.286, 3.429, 6.571)

The dynamic game adds two observations and state-dependent transitions on
top of the same payoffs, which exercises the belief-partition machinery.
"""

from __future__ import annotations

import numpy as np
import pytest

import otzposg as oz

REWARD = np.array(
    [
        [[4.0, 2.0], [2.0, 7.0]],
        [[8.0, 6.0], [3.0, 4.0]],
    ]
)

# three equilibrium extreme points of the static game, exact rationals
EXPECTED_POINTS = [
    (np.array([0.0, 1.0]), np.array([7.0, 4.0])),
    (np.array([1 / 3, 2 / 3]), np.array([16 / 3, 14 / 3])),
    (np.array([5 / 7, 2 / 7]), np.array([24 / 7, 46 / 7])),
]

# the one-stage split of the simplex induced by those points, written as
# the rounded constraint matrices used downstream by the dynamic game
PI_CELL_1 = np.array([[1.67, -0.67], [3.57, -2.57]])
PI_CELL_2 = np.array([[-1.67, 0.67], [1.91, -1.91]])
PI_CELL_3 = np.array([[-3.57, 2.57], [-1.91, 1.91]])


def make_static_model(initial_belief=(1.0, 0.0)) -> oz.GameModel:
    transition = np.zeros((2, 2, 2, 2))
    transition[..., :] = [0.5, 0.5]
    observation_fn = np.array([[1.0], [1.0]])
    return oz.build_model(transition, observation_fn, REWARD, initial_belief)


def make_dynamic_model(initial_belief=(0.5, 0.5)) -> oz.GameModel:
    T = np.zeros((2, 2, 2, 2))
    T[0, 0, 0] = [0.3, 0.7]
    T[1, 0, 0] = [0.9, 0.1]
    T[0, 0, 1] = [0.0, 1.0]
    T[1, 0, 1] = [0.8, 0.2]
    T[0, 1, 0] = [0.8, 0.2]
    T[1, 1, 0] = [0.1, 0.9]
    T[0, 1, 1] = [0.5, 0.5]
    T[1, 1, 1] = [0.0, 1.0]
    Xi = np.array([[0.6, 0.4], [0.1, 0.9]])
    return oz.build_model(T, Xi, REWARD, initial_belief)


def random_model(rng: np.random.Generator, n_max=3, al_max=3, af_max=3) -> oz.GameModel:
    """Random valid model with rewards in [1, 10]."""
    n = int(rng.integers(2, n_max + 1))
    n_al = int(rng.integers(2, al_max + 1))
    n_af = int(rng.integers(2, af_max + 1))
    n_obs = int(rng.integers(1, 4))
    transition = rng.random((n, n_al, n_af, n)) + 0.05
    transition /= transition.sum(axis=3, keepdims=True)
    observation_fn = rng.random((n, n_obs)) + 0.05
    observation_fn /= observation_fn.sum(axis=1, keepdims=True)
    reward = rng.uniform(1.0, 10.0, size=(n, n_al, n_af))
    belief = rng.random(n) + 0.05
    belief /= belief.sum()
    return oz.build_model(transition, observation_fn, reward, belief)


def random_belief(rng: np.random.Generator, n: int) -> np.ndarray:
    b = rng.random(n) + 1e-3
    return b / b.sum()


@pytest.fixture
def static_model() -> oz.GameModel:
    return make_static_model()


@pytest.fixture
def dynamic_model() -> oz.GameModel:
    return make_dynamic_model()
