"""Shared generators for randomized tests.

All generators take an explicit numpy Generator so tests stay reproducible;
seeds are fixed per test.
"""

import numpy as np
import pytest

import lecam as lc


def random_experiment(rng, n_params: int, atoms: int) -> lc.FiniteExperiment:
    probs = rng.gamma(1.0, size=(n_params, atoms)) + 1e-12
    probs /= probs.sum(axis=1, keepdims=True)
    return lc.FiniteExperiment(tuple(f"t{i}" for i in range(n_params)), probs)


def random_kernel(rng, from_size: int, to_size: int) -> lc.Kernel:
    mat = rng.gamma(1.0, size=(from_size, to_size)) + 1e-12
    mat /= mat.sum(axis=1, keepdims=True)
    return lc.Kernel(mat)


def random_simplex(rng, size: int) -> np.ndarray:
    w = rng.gamma(1.0, size=size) + 1e-12
    return w / w.sum()


def random_density_law(rng, atoms: int, dim: int, scale: float = 1.0) -> lc.PointDistribution:
    """Law of a nonnegative vector whose coordinates each average to one."""
    weights = random_simplex(rng, atoms)
    points = rng.gamma(1.0, scale, size=(atoms, dim)) + 1e-3
    points /= weights @ points
    return lc.PointDistribution(points, weights)


def coupling_instance(rng, dim: int, q_atoms: int, extra_atoms: int, epsilon: float):
    """Two density laws where the mass-domination condition holds for any
    partition: the target law is a (1 - gamma) copy of the source plus a
    gamma-weighted disjoint remainder, with gamma below epsilon."""
    q = random_density_law(rng, q_atoms, dim)
    extra = random_density_law(rng, extra_atoms, dim, scale=2.0)
    gamma = epsilon * rng.uniform(0.3, 0.9)
    points = np.vstack([q.points, extra.points])
    weights = np.concatenate([(1.0 - gamma) * q.weights, gamma * extra.weights])
    p = lc.PointDistribution.from_atoms(points, weights)
    return p, q, gamma


def random_loss(rng, params, n_actions: int, truncation: float) -> lc.LossSpec:
    table = rng.gamma(1.0, 2.0, size=(len(params), n_actions))
    return lc.LossSpec(
        params=tuple(params),
        actions=tuple(f"z{j}" for j in range(n_actions)),
        table=table,
        truncation=truncation,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)
