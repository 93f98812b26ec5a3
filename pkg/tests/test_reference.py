import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

import centerout as co
from centerout.reference import density_mass, sphere_directions


@pytest.mark.parametrize("d, expected", [(2, 2 * math.pi), (1, 2.0), (3, 4 * math.pi)])
def test_sphere_area_examples(d, expected):
    assert co.sphere_area(d) == pytest.approx(expected, rel=1e-14)


def test_sphere_area_matches_ball_volume_and_recurrence():
    # independent route: a_{d+2} = 2 pi a_d / d, started from a_1 = 2, a_2 = 2 pi
    area = {1: 2.0, 2: 2 * math.pi}
    for d in range(1, 9):
        area[d + 2] = 2 * math.pi * area[d] / d
    for d in range(1, 11):
        assert co.sphere_area(d) == pytest.approx(d * co.ball_volume(d), rel=1e-12)
        assert co.sphere_area(d) == pytest.approx(area[d], rel=1e-12)


def test_density_examples():
    assert co.spherical_uniform_density([0.5, 0.0]) == pytest.approx(1 / math.pi, rel=1e-12)
    assert co.spherical_uniform_density([0.5]) == pytest.approx(0.5)
    assert co.spherical_uniform_density([1.5, 0.0]) == 0.0
    assert co.spherical_uniform_density([0.0, 0.0]) == 0.0
    vals = co.spherical_uniform_density(np.array([[0.5, 0], [0, 1.0], [0.1, 0.1]]))
    assert vals.shape == (3,)
    assert vals[1] == 0.0


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_density_integrates_to_one(d):
    assert density_mass(d) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_density_integrates_to_one_cartesian_d2():
    # plain Cartesian quadrature, avoiding the polar substitution used in the package
    f = lambda y, x: co.spherical_uniform_density([x, y])
    val, _ = integrate.dblquad(f, -1, 1, lambda x: -math.sqrt(1 - x * x), lambda x: math.sqrt(1 - x * x),
                               epsabs=1e-7)
    assert val == pytest.approx(1.0, abs=1e-5)


def test_sampler_examples():
    x = co.sample_spherical_uniform(100_000, 2, seed=1)
    r = np.linalg.norm(x, axis=1)
    assert abs(r.mean() - 0.5) <= 0.01
    assert np.all(np.abs(x.mean(0)) <= 0.01)
    x3 = co.sample_spherical_uniform(100_000, 3, seed=2)
    assert abs((np.linalg.norm(x3, axis=1) <= 0.25).mean() - 0.25) <= 0.01
    assert np.all(np.linalg.norm(x3, axis=1) < 1)


def test_sampler_deterministic_and_validates():
    a = co.sample_spherical_uniform(50, 3, seed=7)
    b = co.sample_spherical_uniform(50, 3, seed=7)
    assert np.array_equal(a, b)
    with pytest.raises(co.InvalidArgument):
        co.sample_spherical_uniform(0, 2)
    with pytest.raises(co.InvalidArgument):
        co.sample_spherical_uniform(5, 0)


def test_grid_examples():
    g = co.build_grid(12, 2, 3, 4)
    assert g.n == 12 and g.origin_copies == 0
    assert np.allclose(np.unique(np.round(np.linalg.norm(g.atoms, axis=1), 12)), [0.25, 0.5, 0.75])
    angles = np.sort(np.mod(np.arctan2(g.directions[:, 1], g.directions[:, 0]), 2 * np.pi))
    assert np.allclose(np.diff(angles), np.pi / 2)

    g13 = co.build_grid(13, 2, 3, 4)
    assert g13.origin_copies == 1
    assert np.array_equal(g13.atoms[:12], g.atoms)
    assert np.array_equal(g13.atoms[12], [0.0, 0.0])

    with pytest.raises(co.InvalidArgument):
        co.build_grid(12, 2, 5, 4)
    with pytest.raises(co.InvalidArgument):
        co.build_grid(17, 2, 3, 4)  # remainder 5 >= n_S


def test_grid_shells_and_json_roundtrip():
    g = co.build_grid(103, 3, 10, 10, seed=4)
    radii = np.linalg.norm(g.atoms, axis=1)
    for i, r in enumerate(g.radii):
        assert np.sum(np.isclose(radii, r)) == 10
        assert r == pytest.approx((i + 1) / 11)
    assert g.origin_copies == 3
    assert g.max_radius < 1
    h = co.SphericalGrid.from_json(g.to_json())
    assert np.array_equal(h.atoms, g.atoms)
    assert set(json.loads(g.to_json())) == {"dim", "radii", "directions", "origin_copies"}


def test_grid_directions_low_discrepancy():
    # d=3 directions are unit vectors with nearly vanishing mean
    dirs = sphere_directions(500, 3, seed=1)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1)
    assert np.linalg.norm(dirs.mean(0)) < 0.01
    assert np.array_equal(dirs, sphere_directions(500, 3, seed=1))
    with pytest.raises(co.InvalidArgument):
        sphere_directions(3, 1)


def test_grid_discrepancy_shrinks():
    # empirical grid measure vs the reference law on cap x band cells
    rng = np.random.default_rng(3)
    cells = [(rng.normal(size=2), rng.uniform(0, 1)) for _ in range(40)]
    errs = []
    for nr, ns in ((5, 8), (20, 32), (60, 96)):
        g = co.build_grid(nr * ns, 2, nr, ns)
        r = np.linalg.norm(g.atoms, axis=1)
        ang = np.arctan2(g.atoms[:, 1], g.atoms[:, 0])
        worst = 0.0
        for c, t in cells:
            a0 = math.atan2(c[1], c[0])
            in_cap = np.cos(ang - a0) > math.cos(1.0)
            emp = np.mean(in_cap & (r < t))
            exact = (2.0 / (2 * math.pi)) * t
            worst = max(worst, abs(emp - exact))
        errs.append(worst)
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("r, d, expected", [(0.3, 3, 0.3 * 4 * math.pi), (1.0, 2, 2 * math.pi), (0.5, 1, 1.0)])
def test_coarea_examples(r, d, expected):
    assert co.coarea_radial_integral(r, d) == pytest.approx(expected, rel=1e-9)


def test_coarea_domain():
    with pytest.raises(co.InvalidArgument):
        co.coarea_radial_integral(0.0, 2)
    with pytest.raises(co.InvalidArgument):
        co.coarea_radial_integral(1.2, 2)


@settings(max_examples=40, deadline=None)
@given(n_r=st.integers(0, 12), n_s=st.integers(1, 12), extra=st.integers(0, 11), d=st.integers(2, 4))
def test_grid_property(n_r, n_s, extra, d):
    n = n_r * n_s + extra
    if n < 1:
        return
    if extra >= n_s:
        with pytest.raises(co.InvalidArgument):
            co.build_grid(n, d, n_r, n_s)
        return
    g = co.build_grid(n, d, n_r, n_s)
    assert g.n == n
    assert g.origin_copies == extra
    norms = np.linalg.norm(g.atoms, axis=1)
    assert np.all(norms < 1)
    assert np.sum(norms == 0) == extra
    assert np.allclose(g.weights.sum(), 1)
