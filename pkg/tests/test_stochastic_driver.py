import numpy as np
import pytest

from rplab.euler_scheme import LinearAffineFamily, euler_increment, get_family
from rplab.rde_lab import ode_solve_reference
from rplab.stochastic_driver import (
    TAG_EBM, azencott_tail_experiment, brownian_increments, dyadic_approximation, ebm_sample, euler_sup_defect,
    gauss_tail_probe, lq_convergence_experiment, path_hoelder, run_chunked, wilson_interval,
)
from rplab.path_signature import PiecewiseLinearPath, hoelder_norm, path_signature
from rplab.tensor_group import homogeneous_norm, is_group_like


def constant_family():
    return LinearAffineFamily(np.zeros((2, 2, 2)), [[1.0, -2.0], [0.5, 3.0]])


def area_by_sums(inc):
    """Level-2 iterated integral S^{12} of a piecewise-linear path, by explicit sums (no package code)."""
    x1 = np.cumsum(inc[..., 0], axis=-1) - inc[..., 0]  # value of x^1 at the start of each step
    return np.sum(x1 * inc[..., 1] + 0.5 * inc[..., 0] * inc[..., 1], axis=-1)


# -- sampling --------------------------------------------------------------------------

def test_reproducible_and_index_addressed():
    a = brownian_increments(2, 64, 1.0, seed=11, indices=[0, 1, 2, 3])
    b = brownian_increments(2, 64, 1.0, seed=11, indices=[2, 3])
    np.testing.assert_array_equal(a[2:], b)
    c = brownian_increments(2, 64, 1.0, seed=12, indices=[2, 3])
    assert not np.array_equal(b, c)
    other_tag = brownian_increments(2, 64, 1.0, seed=11, indices=[2, 3], tag=TAG_EBM + 5)
    assert not np.array_equal(b, other_tag)


def test_run_chunked_preserves_order():
    out = run_chunked(lambda idx: np.asarray(idx) ** 2, range(10), chunk=3)
    np.testing.assert_array_equal(np.concatenate(out), np.arange(10) ** 2)


def test_increment_means_in_clt_band():
    inc = brownian_increments(2, 4, 1.0, seed=3, indices=range(10**4)).sum(axis=1)
    assert np.all(np.abs(inc.mean(axis=0)) <= 4 * 1.0 / np.sqrt(10**4))


def test_ebm_grid_is_group_like_and_chen_consistent():
    s = ebm_sample(2, 10, 2.5, seed=4, grid_level=6, indices=range(3))
    assert s.grid.chen_defect() <= 1e-12
    assert np.all(is_group_like(s.grid.increments))
    # symmetric part of level 2 is forced to v (x) v / 2
    v = s.grid.increments.level(1)
    S2 = s.grid.increments.level(2, unflatten=True)
    sym = 0.5 * (S2 + np.swapaxes(S2, -1, -2))
    np.testing.assert_allclose(sym, 0.5 * v[..., :, None] * v[..., None, :], atol=1e-12)


def test_ebm_rejects_p_outside_range():
    with pytest.raises(ValueError):
        ebm_sample(p=3.0)
    with pytest.raises(ValueError):
        ebm_sample(fine_level=4, grid_level=6)


def test_levy_area_variance():
    # Var of S^{12} over [0, 1] is 1/2; the Levy area (S^{12} - S^{21}) / 2 has variance 1/4
    n = 10**4
    s = ebm_sample(2, 8, 2.5, seed=7, grid_level=0, indices=range(n))
    S2 = s.grid.increments.level(2, unflatten=True)[:, 0]
    s12 = S2[:, 0, 1]
    levy = 0.5 * (S2[:, 0, 1] - S2[:, 1, 0])
    assert s12.var() == pytest.approx(0.5, rel=0.05)
    assert levy.var() == pytest.approx(0.25, rel=0.05)
    # independent simulation at 4x the resolution, area from explicit sums
    fine = np.concatenate([area_by_sums(brownian_increments(2, 1024, 1.0, seed=99, indices=range(k, k + 2500)))
                           for k in range(0, n, 2500)])
    assert fine.var() == pytest.approx(0.5, rel=0.05)
    # two-sample band: standard error of a variance estimate is sd((X - mean)^2) / sqrt(n)
    se = np.hypot(((s12 - s12.mean()) ** 2).std(), ((fine - fine.mean()) ** 2).std()) / np.sqrt(n)
    assert abs(s12.var() - fine.var()) <= 3 * se
    np.testing.assert_allclose(area_by_sums(np.diff(s.fine_skeleton.points[:5], axis=1)), s12[:5], rtol=1e-12)


def test_brownian_scaling_of_grid_statistics():
    n = 2000
    a = ebm_sample(2, 6, 2.5, seed=21, grid_level=3, indices=range(n))
    b = ebm_sample(2, 6, 2.5, seed=22, grid_level=3, indices=range(n), horizon=4.0)
    na = homogeneous_norm(a.grid.total())
    nb = homogeneous_norm(b.grid.total()) / 2.0
    width = 1.96 * np.sqrt(na.var() / n + nb.var() / n)
    assert abs(na.mean() - nb.mean()) <= 3 * width


# -- Gauss tail probe ------------------------------------------------------------------------

def test_gauss_tail_point_mass():
    rep = gauss_tail_probe(np.full(1000, 2.5))
    assert rep.point_mass and rep.passed


def test_gauss_tail_refuses_small_samples():
    with pytest.raises(ValueError):
        gauss_tail_probe(np.ones(10))


def test_gauss_tail_scaling(rng):
    M = np.abs(rng.normal(size=5000))
    base = gauss_tail_probe(M)
    for lam in (0.5, 3.0):
        assert gauss_tail_probe(lam * M).alpha == pytest.approx(base.alpha / lam**2, rel=1e-10)


def test_gauss_tail_on_ebm_norms():
    s = ebm_sample(2, 8, 2.5, seed=1, grid_level=5, indices=range(1000))
    rep = gauss_tail_probe(hoelder_norm(s.grid))
    assert rep.passed and rep.slope_m2 < 0


def test_gauss_tail_rejects_heavy_tails(rng):
    assert not gauss_tail_probe(rng.pareto(1.5, size=5000)).passed


# -- Azencott tails ------------------------------------------------------------------------------

def test_wilson_interval_values():
    centre, hw = wilson_interval(0, 100)
    assert centre - hw == pytest.approx(0.0, abs=1e-15) and centre + hw == pytest.approx(0.03699, abs=1e-4)
    centre, hw = wilson_interval(50, 100)
    assert centre == pytest.approx(0.5) and hw == pytest.approx(0.09617, abs=1e-4)


def test_euler_sup_defect_matches_pointwise_oracle(rng):
    V = get_family("linear2x2")
    inc = rng.normal(size=(2, 16, 2)) * 0.1
    y0 = np.array([0.1, 0.2])
    D = euler_sup_defect(V, 3, inc, 1.0, y0)
    for b in range(2):
        path = PiecewiseLinearPath.from_increments(inc[b], times=np.linspace(0, 1, 17))
        ref = ode_solve_reference(V, y0, path).states
        gaps = [np.linalg.norm(ref[j] - y0 - euler_increment(V, 3, path_signature(path, 0.0, path.times[j], N=3),
                                                              y0).value) for j in range(1, 17)]
        assert D[b] == pytest.approx(max(gaps), rel=1e-10)


def test_azencott_constant_fields_never_exceed():
    rep = azencott_tail_experiment(constant_family(), 3, [2.0**-4], [1.0, 2.0], samples=200, steps=32)
    assert np.all(rep.counts == 0) and np.all(rep.probabilities == 0)
    assert any("zero exceedances" in n for n in rep.notes)


def test_azencott_small_r_gives_probability_one():
    rep = azencott_tail_experiment(get_family("linear2x2"), 3, [2.0**-4], [1e-12, 1e-11], samples=200, steps=32)
    assert np.all(rep.probabilities == 1.0)


def test_azencott_worker_count_does_not_change_results():
    kw = dict(samples=120, steps=16, seed=5, chunk=40)
    a = azencott_tail_experiment(get_family("linear2x2"), 3, [2.0**-4], [0.5, 1.0, 2.0], workers=1, **kw)
    b = azencott_tail_experiment(get_family("linear2x2"), 3, [2.0**-4], [0.5, 1.0, 2.0], workers=2, **kw)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.counts_p_normalised, b.counts_p_normalised)


def test_azencott_validation():
    V = get_family("linear2x2")
    with pytest.raises(ValueError):
        azencott_tail_experiment(V, 2, [0.1], [1.0], samples=10)
    with pytest.raises(ValueError):
        azencott_tail_experiment(V, 3, [0.1], [1.0], samples=10, p=3.5)
    with pytest.raises(ValueError):
        azencott_tail_experiment(V, 3, [0.1], [2.0, 1.0], samples=10)


# -- dyadic approximations and L^q --------------------------------------------------------------

def test_dyadic_approximation_at_finest_level_is_skeleton():
    s = ebm_sample(2, 8, 2.5, seed=2, grid_level=4)
    full = dyadic_approximation(s, 8)
    np.testing.assert_array_equal(full.path.points, s.fine_skeleton.points)
    with pytest.raises(ValueError):
        dyadic_approximation(s, 9)


def test_dyadic_approximation_exact_at_knots():
    s = ebm_sample(2, 8, 2.5, seed=2, grid_level=4)
    for n in (2, 5):
        approx = dyadic_approximation(s, n)
        knots = np.arange(0, 2**8 + 1, 2 ** (8 - n))
        np.testing.assert_array_equal(approx.path.points, s.fine_skeleton.points[knots])
        np.testing.assert_allclose(approx.lifted.increments.level(1), np.diff(approx.path.points, axis=0),
                                   atol=1e-15)
    coarse = dyadic_approximation(s, 3, grid_times=s.grid.times)
    assert coarse.lifted.n_cells == s.grid.n_cells and coarse.lifted.chen_defect() <= 1e-12


def test_path_hoelder_of_straight_line():
    t = np.linspace(0, 1, 17)
    y = np.stack([3 * t, 4 * t], axis=1)
    assert path_hoelder(y, t, 2.0) == pytest.approx(5.0, rel=1e-12)


def test_lq_small_run():
    rep = lq_convergence_experiment(get_family("linear2x2"), [1, 4], [2, 3, 4, 5], samples=1000, seed=0,
                                    y0=[1.0, 0.5])
    # the finest level is the proxy limit
    assert np.all(rep.moments[:, -1] == 0.0)
    assert all(rep.decreasing.values())
    assert np.all(rep.moments[1, :-1] >= rep.moments[0, :-1])
    assert rep.tail.samples == 1000
