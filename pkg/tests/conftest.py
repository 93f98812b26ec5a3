import numpy as np
import pytest

import centerout as co
from centerout.generators import make_generator


def fit(points, grid):
    data = co.Dataset(points)
    plan = co.solve_assignment(data, grid)
    dp, ep = co.build_potentials(plan, data, grid)
    return data, plan, dp, ep


@pytest.fixture(scope="session")
def gauss400():
    """Spherical Gaussian sample, n=400 on a 20 x 20 grid."""
    gen = make_generator({"kind": "gaussian", "params": {}}, 2)
    grid = co.build_grid(400, 2, 20, 20)
    data, plan, dp, ep = fit(gen.sample(400, 11).points, grid)
    return data, grid, plan, dp, ep


@pytest.fixture(scope="session")
def square900():
    """Uniform sample on [-1, 1]^2 with n=903 (three origin copies)."""
    gen = make_generator({"kind": "uniform-box", "params": {"lo": [-1, -1], "hi": [1, 1]}}, 2)
    grid = co.build_grid(903, 2, 30, 30)
    data, plan, dp, ep = fit(gen.sample(903, 5).points, grid)
    return gen, data, grid, plan, dp, ep


@pytest.fixture(scope="session")
def identity_fit():
    """Data equal to the grid atoms (the identity transport), n=30*24+1."""
    grid = co.build_grid(721, 2, 30, 24)
    rng = np.random.default_rng(0)
    pts = grid.atoms[rng.permutation(grid.n)]
    data, plan, dp, ep = fit(pts, grid)
    return data, grid, plan, dp, ep
