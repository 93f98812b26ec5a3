import numpy as np
import pytest

import centerout as co
from centerout._maxaffine import MaxAffine

from conftest import fit


def two_atom_potential():
    bases = np.array([[-0.5], [0.5]])
    return co.ExtendedPotential(bases, np.array([[-1.0], [1.0]]), np.zeros(2), max_radius=0.5)


def test_identity_transport_potential_is_half_square():
    # with an origin atom the normalization pins psi = |u|^2 / 2 exactly
    grid = co.build_grid(5, 1)
    _, _, dp, _ = fit(grid.atoms[::-1].copy(), grid)
    assert np.allclose(dp.psi_values, 0.5 * (grid.atoms**2).sum(1), atol=1e-12)
    # without one, psi - |u|^2/2 is constant
    grid4 = co.build_grid(4, 1)
    _, _, dp4, _ = fit(grid4.atoms.copy(), grid4)
    diff = dp4.psi_values - 0.5 * (grid4.atoms**2).sum(1)
    assert np.ptp(diff) <= 1e-12


def test_single_point_dataset():
    grid = co.build_grid(1, 2)
    x0 = np.array([0.3, -1.2])
    _, _, dp, ep = fit(x0[None], grid)
    assert np.array_equal(grid.atoms, [[0.0, 0.0]])
    assert dp.psi_values.tolist() == [0.0]
    u = co.sample_spherical_uniform(50, 2, seed=0)
    q, _ = co.Q_pm(ep, u)
    assert np.array_equal(q, np.tile(x0, (50, 1)))
    f, _ = co.F_pm(ep, np.random.default_rng(0).normal(size=(50, 2)) * 10)
    assert np.array_equal(f, np.zeros((50, 2)))


def test_translation_equivariance(gauss400):
    data, grid, plan, dp, ep = gauss400
    v = np.array([3.0, -2.0])
    data2, plan2, dp2, ep2 = fit(data.points + v, grid)
    assert np.array_equal(plan2.assignment, plan.assignment)
    assert np.allclose(dp2.matched_points, dp.matched_points + v)
    # psi shifts by the affine term <v, u> (plus a constant fixed by normalization)
    resid = dp2.psi_values - dp.psi_values - grid.atoms @ v
    assert np.ptp(resid) <= 1e-8
    # Lipschitz ratios of phi are unchanged: phi2(x + v) = phi(x) + const
    rng = np.random.default_rng(0)
    pairs = rng.normal(size=(200, 2, 2)) * 3
    assert co.lipschitz_audit(ep2, pairs + v) == pytest.approx(co.lipschitz_audit(ep, pairs), rel=1e-8)


def test_legendre_examples():
    ep = two_atom_potential()
    val, idx = co.legendre_transform(ep, [2.0])
    assert val == 1.0 and idx.tolist() == [1]
    val0, idx0 = co.legendre_transform(ep, [0.0])
    assert val0 == 0.0 and idx0.tolist() == [0, 1]
    assert co.lipschitz_audit(ep, [[0.0, 10.0]]) == pytest.approx(0.5)


def test_legendre_of_zero_potential_is_near_norm():
    grid = co.build_grid(40 * 64, 2, 40, 64)
    ep = co.ExtendedPotential(grid.atoms, grid.atoms, np.zeros(grid.n), max_radius=grid.max_radius)
    x = np.random.default_rng(1).normal(size=(500, 2))
    x *= (1 + 4 * np.random.default_rng(2).uniform(size=(500, 1))) / np.linalg.norm(x, axis=1, keepdims=True)
    r = np.linalg.norm(x, axis=1)
    phi = ep.phi(x)
    # sup over atoms of <u, x> lies between r_max cos(half angular gap) |x| and r_max |x|
    lower = grid.max_radius * np.cos(np.pi / 64) * r
    assert np.all(phi <= grid.max_radius * r + 1e-12)
    assert np.all(phi >= lower - 1e-12)


def test_legendre_of_half_square_is_half_square():
    # with psi = |u|^2/2 on atoms, phi(x) = |x|^2/2 - dist(x, atoms)^2/2 exactly
    grid = co.build_grid(30 * 48 + 1, 2, 30, 48)
    ep = co.ExtendedPotential(grid.atoms, grid.atoms, 0.5 * (grid.atoms**2).sum(1))
    x = co.sample_spherical_uniform(300, 2, seed=3) * grid.max_radius
    dist2 = ((x[:, None, :] - grid.atoms[None]) ** 2).sum(-1).min(1)
    assert np.allclose(ep.phi(x), 0.5 * (x**2).sum(1) - 0.5 * dist2, atol=1e-12)
    assert np.abs(ep.phi(x) - 0.5 * (x**2).sum(1)).max() <= 0.5 * (2 * grid.shell_spacing) ** 2


def test_F_at_matched_points(gauss400):
    data, grid, plan, dp, ep = gauss400
    f, multi = co.F_pm(ep, data.points)
    generic = ~grid.origin_mask[plan.assignment]
    assert np.array_equal(f[generic], grid.atoms[plan.assignment][generic])
    assert not multi[generic].any()


def test_Q_at_atoms_returns_matched_points(gauss400):
    data, grid, plan, dp, ep = gauss400
    away = ~grid.origin_mask
    q, _ = co.Q_pm(ep, grid.atoms[away])
    assert np.array_equal(q, dp.matched_points[away])


def test_Q_identity_case_between_atoms(identity_fit):
    data, grid, plan, dp, ep = identity_fit
    u = co.sample_spherical_uniform(2000, 2, seed=4) * grid.max_radius
    q, _ = co.Q_pm(ep, u)
    tol = grid.shell_spacing + grid.angular_spacing
    assert np.linalg.norm(q - u, axis=1).max() <= tol


def test_Q_multiplicity_at_origin(square900):
    _, data, grid, plan, dp, ep = square900
    assert grid.origin_copies == 3
    matched = dp.matched_points[grid.origin_mask]
    assert len(np.unique(matched, axis=0)) == 3
    _, multi = co.Q_pm(ep, np.zeros(2))
    assert multi


def test_Q_domain(gauss400):
    ep = gauss400[4]
    with pytest.raises(co.OutOfDomain):
        co.Q_pm(ep, [1.0, 0.0])


def test_check_inverse_examples(gauss400):
    data, grid, plan, dp, ep = gauss400
    res = co.check_inverse(ep, data.points)
    assert np.all(res[~grid.origin_mask[plan.assignment]] == 0)
    # perturbing one intercept breaks complementary slackness
    j = int(np.flatnonzero(~grid.origin_mask)[17])
    psi = dp.psi_values.copy()
    psi[j] += 0.1
    bad = ep.with_intercepts(psi)
    assert np.max(co.check_inverse(bad, data.points)) > 0


def test_check_inverse_duplicates():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(40, 2))
    pts[7] = pts[3]
    grid = co.build_grid(40, 2, 5, 8)
    data, plan, dp, ep = fit(pts, grid)
    res = co.check_inverse(ep, pts)
    assert min(res[3], res[7]) == 0.0


def test_lipschitz_audit_random_pairs(gauss400):
    ep = gauss400[4]
    pairs = np.random.default_rng(6).normal(size=(10_000, 2, 2)) * 4
    assert co.lipschitz_audit(ep, pairs) <= 1 + 1e-9


def test_discrete_potential_invariants(gauss400, square900):
    for data, grid, plan, dp, ep in (gauss400, square900[1:]):
        assert dp.consistency_error() <= 1e-8
        origin = np.flatnonzero(grid.origin_mask)
        if origin.size:
            assert dp.psi_values[origin[0]] == 0.0
        # slopes are data points, hence in the hull of the data
        assert {tuple(p) for p in ep.slopes} <= {tuple(p) for p in data.points}


def test_gradient_containment(square900):
    _, data, grid, plan, dp, ep = square900
    x = np.random.default_rng(7).normal(size=(5000, 2)) * 5
    f, _ = co.F_pm(ep, x)
    assert np.linalg.norm(f, axis=1).max() <= grid.max_radius + 1e-15


def test_potential_json_roundtrip(gauss400):
    ep = gauss400[4]
    back = co.ExtendedPotential.from_dict(ep.to_dict("abc"))
    x = np.random.default_rng(8).normal(size=(100, 2))
    assert np.array_equal(back.phi(x), ep.phi(x))
    assert set(ep.to_dict()) == {"grid_ref", "psi", "lines"}


def test_build_potentials_rejects_mismatch(gauss400):
    data, grid, plan, _, _ = gauss400
    with pytest.raises(co.InvalidArgument):
        co.build_potentials(plan, data, co.build_grid(401, 2, 20, 20))
    with pytest.raises(co.InvalidArgument):
        co.F_pm("not a potential", [0.0, 0.0])


def test_dense_plan_potentials():
    rng = np.random.default_rng(9)
    grid = co.build_grid(50, 2, 5, 10)
    data = co.Dataset(rng.normal(size=(50, 2)))
    plan = co.solve_sinkhorn(data, grid, 0.05)
    dp, ep = co.build_potentials(plan, data, grid)
    assert not dp.exact
    assert np.allclose(dp.matched_points, 50 * plan.coupling.T @ data.points)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_pruned_evaluation_is_identical(d):
    rng = np.random.default_rng(d)
    n = 12_000
    S = rng.normal(size=(n, d)) * rng.uniform(0, 1, size=(n, 1))
    c = rng.normal(size=n) * 0.1
    ma = MaxAffine(S, c)
    Q = rng.normal(size=(300, d)) * 3
    v1, i1, k1 = ma.evaluate(Q, prune=False)
    v2, i2, k2 = ma.evaluate(Q, prune=True)
    assert np.array_equal(v1, v2)
    assert np.array_equal(k1, k2)
    assert np.array_equal(np.sort(i1, 1), np.sort(i2, 1))
    # brute-force oracle (BLAS summation order differs from the sequential dot product)
    assert np.allclose(v1, (Q @ S.T - c).max(1), rtol=0, atol=1e-12)
