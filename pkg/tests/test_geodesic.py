import json
import math

import numpy as np
import pytest

from conftest import random_group
from rplab.geodesic import (
    GeodesicFamilyConfig, cc_norm_lower, cc_norm_upper, chow_decompose, geodesic_family, heisenberg_arc_path,
    heisenberg_cc_norm, lie_monomials,
)
from rplab.path_signature import PiecewiseLinearPath, RoughPathGrid, increments_signature, path_signature
from rplab.stochastic_driver import ebm_sample
from rplab.tensor_group import AlgebraShape, Tensor, dilate, exp, inverse, log, multiply, right_bracketing

TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)


def heis(w, a):
    """exp(w + a [e1, e2]) in G^2(R^2)."""
    return exp(Tensor([[0.0], list(w), [0.0, a, -a, 0.0]], 2))


def sig_gap(path, g):
    return float(np.max(np.abs(path_signature(path, N=g.N).flat() - g.flat())))


# -- Chow construction ---------------------------------------------------------

def test_chow_of_exp_is_single_segment():
    v = np.array([0.4, -1.1, 0.2])
    path = chow_decompose(exp(Tensor.from_vector(v, 3)))
    assert path.n_segments == 1
    np.testing.assert_allclose(path.increments()[0], v)


def test_chow_pure_area_is_closed():
    g = heis([0.0, 0.0], 1.0)
    path = chow_decompose(g)
    assert np.max(np.abs(path.points[-1] - path.points[0])) <= 1e-12
    assert sig_gap(path, g) <= 1e-8


@pytest.mark.parametrize("d,N,count", [(2, 2, 60), (2, 3, 60), (3, 3, 40), (2, 4, 25), (3, 4, 15)])
def test_chow_round_trip(rng, d, N, count):
    for _ in range(count):
        g = random_group(rng, d, N, segments=5, scale=0.6)
        path = chow_decompose(g)
        assert sig_gap(path, g) <= 1e-8


def test_chow_rejects_non_group_like():
    with pytest.raises(ValueError):
        chow_decompose(Tensor([[1.0], [0.0, 0.0], [0.0, 1.0, 1.0, 0.0]], 2))


@pytest.mark.parametrize("d,k", [(2, 2), (2, 3), (3, 3), (2, 4)])
def test_lie_monomials_rebuild_the_element(rng, d, k):
    L = log(random_group(rng, d, k, segments=4)).level(k)
    rebuilt = np.zeros(d**k)
    for word, c in lie_monomials(L, d, k):
        unit = np.zeros(d**k)
        unit[np.ravel_multi_index(word, (d,) * k)] = 1.0
        rebuilt += c * right_bracketing(unit, d, k)
    np.testing.assert_allclose(rebuilt, L, atol=1e-12)


# -- lower bound and the Heisenberg oracle ------------------------------------------

def test_lower_bound_examples():
    assert cc_norm_lower(exp(Tensor.from_vector([3.0, 4.0], 3))) == pytest.approx(5.0, rel=1e-14)
    assert cc_norm_lower(heis([0.0, 0.0], 1.0)) == pytest.approx(2 ** 0.75, rel=1e-14)
    assert cc_norm_lower(Tensor.unit(AlgebraShape(2, 3))) == 0.0


def test_heisenberg_closed_forms():
    assert heisenberg_cc_norm(heis([0.6, -0.8], 0.0)) == pytest.approx(1.0, rel=1e-14)
    assert heisenberg_cc_norm(heis([0.0, 0.0], 1.0)) == pytest.approx(3.544907701811032, rel=1e-14)


@pytest.mark.parametrize("phi", [0.5, 2.0, math.pi, 5.0])
def test_heisenberg_norm_matches_explicit_arc(phi):
    # a circular arc of angle phi over a chord of length 1.3: its signature, taken
    # from a fine inscribed polygon, must have CC norm r * phi
    c = 1.3
    r = c / (2 * math.sin(phi / 2))
    centre = np.array([c / 2, -r * math.cos(phi / 2)])
    ang = math.pi / 2 + phi / 2 - phi * np.linspace(0, 1, 20001)
    pts = centre + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    g = path_signature(PiecewiseLinearPath(np.linspace(0, 1, pts.shape[0]), pts), N=2)
    assert heisenberg_cc_norm(g) == pytest.approx(r * phi, rel=1e-6)


def test_heisenberg_arc_path_has_matching_area(rng):
    for _ in range(10):
        g = heis(rng.normal(size=2), rng.normal())
        arc = heisenberg_arc_path(g, 2000)
        target = log(g).level(2)[1]
        got = log(path_signature(arc, N=2)).level(2)[1]
        assert np.sign(got) == np.sign(target)
        assert got == pytest.approx(target, rel=1e-5)
        assert arc.length() == pytest.approx(heisenberg_cc_norm(g), rel=1e-6)


def test_heisenberg_requires_d2_n2(rng):
    with pytest.raises(ValueError):
        heisenberg_cc_norm(random_group(rng, 2, 3))


# -- upper bounds -------------------------------------------------------------------

def test_upper_bound_of_straight_segment_is_exact():
    b = cc_norm_upper(exp(Tensor.from_vector([0.3, 1.2], 3)))
    assert b.upper == pytest.approx(b.lower, abs=1e-6)
    assert b.upper == pytest.approx(math.hypot(0.3, 1.2), abs=1e-6)


def test_upper_bound_of_unit():
    b = cc_norm_upper(Tensor.unit(AlgebraShape(2, 2)))
    assert b.upper == b.lower == 0.0
    assert b.path.length() == 0.0


def test_pure_area_upper_bound_within_two_percent():
    b = cc_norm_upper(heis([0.0, 0.0], 1.0), GeodesicFamilyConfig(m=32))
    assert TWO_SQRT_PI <= b.upper <= 1.02 * TWO_SQRT_PI
    assert sig_gap(b.path, heis([0.0, 0.0], 1.0)) <= 1e-8


def test_heisenberg_sandwich(rng):
    for _ in range(8):
        g = heis(rng.normal(size=2), rng.normal())
        b = cc_norm_upper(g)
        exact = heisenberg_cc_norm(g)
        assert b.lower <= exact * (1 + 1e-12) <= b.upper * (1 + 2e-12)
        assert sig_gap(b.path, g) <= 1e-8


def test_upper_bound_symmetry_subadditivity_homogeneity(rng):
    g = random_group(rng, 2, 3, segments=4)
    h = random_group(rng, 2, 3, segments=4)
    ug, uh = cc_norm_upper(g).upper, cc_norm_upper(h).upper
    assert abs(cc_norm_upper(inverse(g)).upper - ug) <= 0.02 * ug
    assert cc_norm_upper(multiply(g, h)).upper <= ug + uh + 1e-8
    assert cc_norm_upper(dilate(-1.7, g)).upper <= 1.7 * ug * 1.02


def test_user_seed_is_used(rng):
    # a 3-segment path is feasible with its own length; the bound cannot be worse
    inc = rng.normal(size=(3, 3))
    g = increments_signature(inc, 2)
    seed = PiecewiseLinearPath.from_increments(inc)
    b = cc_norm_upper(g, GeodesicFamilyConfig(optimize=False), seeds=[seed])
    assert b.upper <= seed.length() * (1 + 1e-6)


def test_ccbounds_json(tmp_path):
    b = cc_norm_upper(heis([1.0, 0.0], 0.2))
    b.save(tmp_path / "b.json", tmp_path / "b.csv")
    obj = json.loads((tmp_path / "b.json").read_text())
    assert set(obj) == {"lower", "upper", "m", "path"}
    assert PiecewiseLinearPath.load(tmp_path / obj["path"]).length() == pytest.approx(b.upper)


def test_config_validation():
    for kwargs in ({"K": 0.5}, {"m": 0}, {"tol": 0.0}):
        with pytest.raises(ValueError):
            GeodesicFamilyConfig(**kwargs)


# -- geodesic families ----------------------------------------------------------------

def test_family_on_straight_skeleton():
    x = PiecewiseLinearPath([0.0, 1.0], [[0.0, 0.0], [1.0, 2.0]])
    grid = RoughPathGrid.from_path(x, np.linspace(0, 1, 9), 2, 2.5)
    fam = geodesic_family(grid, GeodesicFamilyConfig(K=1.0, optimize=False))
    assert not fam.flagged.any()
    for i, path in enumerate(fam.paths):
        np.testing.assert_allclose(path.points[-1] - path.points[0], [0.125, 0.25], atol=1e-12)
        assert path.length() == pytest.approx(math.hypot(0.125, 0.25), rel=1e-9)


def test_family_on_ebm_sample_meets_budget():
    s = ebm_sample(2, 12, 2.5, seed=5, grid_level=6, indices=[0])
    sk = PiecewiseLinearPath(s.fine_skeleton.times, s.fine_skeleton.points[0])
    grid = RoughPathGrid.from_path(sk, s.grid.times, 2, 2.5)
    fam = geodesic_family(grid, GeodesicFamilyConfig(K=3.0, optimize=False))
    assert len(fam.paths) == 64
    assert not fam.flagged.any(), fam.warnings
    assert fam.achieved_K <= 3.0
    for i, path in enumerate(fam.paths):
        g = grid.cell(i)
        assert np.max(np.abs(path_signature(path, N=2).flat() - g.flat())) <= 1e-8
        assert path.times[0] == grid.times[i] and path.times[-1] == grid.times[i + 1]
