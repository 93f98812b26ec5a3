import math

import numpy as np
import pytest
from scipy import stats

import centerout as co
from centerout.generators import GeneratorSpec, l_shape, make_generator

BOX = {"kind": "uniform-box", "params": {"lo": [-1, -1], "hi": [1, 1]}}
TRIANGLE = {"kind": "uniform-convex-polytope", "params": {"vertices": [[0, 0], [2, 0], [0, 1]]}}


def midpoint_mass(density, lo, hi, m=800):
    """Midpoint-rule integral of a 2-d density over a rectangle."""
    xs = np.linspace(lo[0], hi[0], m + 1)
    ys = np.linspace(lo[1], hi[1], m + 1)
    cx, cy = (xs[1:] + xs[:-1]) / 2, (ys[1:] + ys[:-1]) / 2
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    vals = density(np.column_stack([X.ravel(), Y.ravel()]))
    return float(vals.sum() * (xs[1] - xs[0]) * (ys[1] - ys[0]))


def test_uniform_box_moments():
    x = make_generator(BOX, 2).sample(10_000, 1).points
    assert np.all(np.abs(x.mean(0)) <= 0.02)
    assert np.all(np.abs(x) <= 1)
    assert np.allclose(x.var(0), 1 / 3, atol=0.02)


def test_gaussian_radius_distribution():
    x = make_generator({"kind": "gaussian", "params": {}}, 2).sample(10_000, 2).points
    ks = stats.kstest(np.linalg.norm(x, axis=1), stats.chi(2).cdf).statistic
    assert ks <= 0.02


def test_spherical_uniform_matches_reference_sampler():
    gen = make_generator({"kind": "spherical-uniform", "params": {}}, 3)
    x = gen.sample(2000, 3).points
    assert x.shape == (2000, 3)
    assert np.all(np.linalg.norm(x, axis=1) < 1)
    assert stats.kstest(np.linalg.norm(x, axis=1), "uniform").pvalue > 1e-3
    assert gen.density([0.5, 0.0, 0.0])[0] == pytest.approx(co.spherical_uniform_density([0.5, 0.0, 0.0]))


@pytest.mark.parametrize("spec", [
    {"kind": "uniform-ball", "params": {"center": [0.5, -0.2], "radius": 0.7}},
    BOX,
    TRIANGLE,
    {"kind": "mixture", "params": {"shape": "L"}},
])
def test_samples_in_support_and_density_normalized(spec):
    gen = make_generator(spec, 2)
    x = gen.sample(3000, 4).points
    assert np.all(gen.contains(x))
    assert np.all(gen.density(x) > 0)
    assert midpoint_mass(gen.density, [-2.5, -2.5], [2.5, 2.5]) == pytest.approx(1.0, abs=5e-3)


def test_gaussian_density_normalized():
    gen = make_generator({"kind": "gaussian", "params": {"mean": [1, 0], "cov": [[2, 0.5], [0.5, 1]]}}, 2)
    assert midpoint_mass(gen.density, [-9, -8], [11, 8], m=1000) == pytest.approx(1.0, abs=1e-6)


def test_uniform_ball_density_normalized_3d():
    gen = make_generator({"kind": "uniform-ball", "params": {}}, 3)
    assert gen.density([0.1, 0.2, 0.3])[0] == pytest.approx(1 / (4 * math.pi / 3))
    assert gen.density([1.1, 0.0, 0.0])[0] == 0.0


def test_boundary_samples_lie_on_boundary():
    rng = np.random.default_rng(5)
    sq = make_generator(BOX, 2).boundary_sample(500, rng)
    assert np.allclose(np.abs(sq).max(1), 1.0)
    disc = make_generator({"kind": "uniform-ball", "params": {}}, 2).boundary_sample(500, rng)
    assert np.allclose(np.linalg.norm(disc, axis=1), 1.0)
    L = l_shape().boundary_sample(500, rng)
    # no L-boundary point lies strictly inside the shape
    inner = (L[:, 0] > 1e-9) & (L[:, 1] > 1e-9) & (
        ((L[:, 0] < 2 - 1e-9) & (L[:, 1] < 1 - 1e-9)) | ((L[:, 0] < 1 - 1e-9) & (L[:, 1] < 2 - 1e-9)))
    assert len(L) == 500 and not inner.any()
    with pytest.raises(co.Unsupported):
        make_generator({"kind": "gaussian", "params": {}}, 2).boundary_sample(10, rng)


def test_determinism():
    gen = make_generator(TRIANGLE, 2)
    assert np.array_equal(gen.sample(100, 7).points, gen.sample(100, 7).points)
    assert not np.array_equal(gen.sample(100, 7).points, gen.sample(100, 8).points)


def test_validation():
    with pytest.raises(co.InvalidArgument):
        make_generator({"kind": "cauchy", "params": {}}, 2)
    with pytest.raises(co.InvalidArgument):
        make_generator({"kind": "uniform-ball", "params": {"radius": 1, "colour": "red"}}, 2)
    with pytest.raises(co.InvalidArgument):
        make_generator({"kind": "gaussian", "params": {"cov": [[1, 2], [2, 1]]}}, 2)
    with pytest.raises(co.InvalidArgument):
        make_generator({"kind": "uniform-convex-polytope", "params": {"vertices": [[0, 0], [1, 1], [2, 2]]}}, 2)
    with pytest.raises(co.InvalidArgument):
        GeneratorSpec.from_dict({"params": {}})
    with pytest.raises(co.InvalidArgument):
        make_generator(BOX, 2).sample(0, 1)


def test_density_bounds():
    lo, hi = make_generator(BOX, 2).density_bounds(0.5)
    assert lo == hi == pytest.approx(0.25)
    g_lo, g_hi = make_generator({"kind": "gaussian", "params": {}}, 2).density_bounds(1.0)
    assert g_hi == pytest.approx(1 / (2 * math.pi))
    assert g_lo == pytest.approx(math.exp(-0.5) / (2 * math.pi))
    s_lo, s_hi = make_generator({"kind": "spherical-uniform", "params": {}}, 2).density_bounds(0.5)
    assert s_lo == pytest.approx(1 / (2 * math.pi)) and s_hi == math.inf


def test_analytic_potentials():
    assert make_generator({"kind": "gaussian", "params": {}}, 2).analytic_potential() is not None
    assert make_generator({"kind": "gaussian", "params": {"mean": [1, 0]}}, 2).analytic_potential() is None
    disc = make_generator({"kind": "uniform-ball", "params": {}}, 2).analytic_potential()
    f = disc.F(np.array([[0.5, 0.0]]))
    assert np.allclose(f, [[0.25, 0.0]])
