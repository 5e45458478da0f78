"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with its measurements and runtime,
and fails when the criterion or its runtime budget is missed.
"""
import math
import time

import numpy as np
import pytest

from conftest import random_group, random_lie, random_path
from rplab.euler_scheme import get_family
from rplab.geodesic import GeodesicFamilyConfig, cc_norm_lower, cc_norm_upper, heisenberg_cc_norm
from rplab.path_signature import PiecewiseLinearPath, RoughPathGrid, path_signature
from rplab.rde_lab import (
    DavieRecursion, davie_rate_experiment, euler_scheme_solve, gamma_limit_bound_check, lambda_gamma,
    scheme_agreement_experiment, smooth_driver, smooth_lengths,
)
from rplab.stochastic_driver import azencott_tail_experiment, ebm_sample, lq_convergence_experiment
from rplab.tensor_group import Tensor, dilate, exp, inverse, is_group_like, log, multiply


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(number, title, ok, detail, budget):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}; "
                  f"{elapsed:.1f} s of {budget:g} s")
        assert ok, f"criterion {number} failed: {detail}"

    return emit


def rel_err(a, b):
    """Largest relative coefficient error per batch entry, scaled by max(1, |b|)."""
    diff = np.max(np.abs(a.flat() - b.flat()), axis=-1)
    return np.max(diff / np.maximum(1.0, np.max(np.abs(b.flat()), axis=-1)))


def test_criterion_1_algebra_suite(verdict):
    rng = np.random.default_rng(101)
    combos = [(d, N) for d in (1, 2, 3) for N in (1, 2, 3, 4)]
    per = -(-10**4 // len(combos))
    worst, grouplike_ok, rejected_ok, cases = {}, True, True, 0
    for d, N in combos:
        b = (per,)
        g, h, k = (random_group(rng, d, N, batch=b, segments=4) for _ in range(3))
        L = random_lie(rng, d, N, batch=b)
        lam = rng.uniform(-2, 2)
        e = Tensor.unit(g.shape, b)
        errs = {
            "associativity": rel_err(multiply(multiply(g, h), k), multiply(g, multiply(h, k))),
            "unit": max(rel_err(multiply(g, e), g), rel_err(multiply(e, g), g)),
            "inverse": max(rel_err(multiply(g, inverse(g)), e), rel_err(multiply(inverse(g), g), e)),
            "exp_log": max(rel_err(exp(log(g)), g), rel_err(log(exp(L)), L)),
            "dilation": rel_err(dilate(lam, multiply(g, h)), multiply(dilate(lam, g), dilate(lam, h))),
        }
        for name, v in errs.items():
            worst[name] = max(worst.get(name, 0.0), float(v))
        grouplike_ok &= bool(np.all(is_group_like(g, tol=1e-8)))
        if N >= 2 and d >= 2:
            # a symmetric level-2 perturbation of the log leaves the group
            Lg = log(g)
            sym = rng.normal(size=b + (d, d))
            sym = (sym + np.swapaxes(sym, -1, -2)).reshape(b + (d * d,)) * 1e-4
            bad = exp(Tensor([Lg.levels[0], Lg.levels[1], Lg.levels[2] + sym] + list(Lg.levels[3:]), d))
            rejected_ok &= not bool(np.any(is_group_like(bad, tol=1e-8)))
        cases += per
    ok = max(worst.values()) <= 1e-12 and grouplike_ok and rejected_ok and cases >= 10**4
    detail = (f"{cases} cases, worst relative errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
              + f", group-like {grouplike_ok}, perturbations rejected {rejected_ok}")
    verdict(1, "algebra suite", ok, detail, 30)


def test_criterion_2_chen_identity(verdict):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        d, N = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        x = random_path(rng, d, int(rng.integers(2, 12)))
        s, t, u = np.sort(rng.uniform(0, 1, 3))
        lhs = multiply(path_signature(x, s, t, N=N), path_signature(x, t, u, N=N))
        worst = max(worst, float(rel_err(lhs, path_signature(x, s, u, N=N))))
    verdict(2, "Chen identity", worst <= 1e-12, f"1000 paths, worst defect {worst:.2e}", 10)


def test_criterion_3_heisenberg_sandwich(verdict):
    rng = np.random.default_rng(303)
    cfg = GeodesicFamilyConfig(m=32)
    bad, worst_gap = 0, 0.0
    for _ in range(100):
        w, a = rng.normal(size=2), rng.normal()
        g = exp(Tensor([[0.0], w, [0.0, a, -a, 0.0]], 2))
        b = cc_norm_upper(g, cfg)
        exact = heisenberg_cc_norm(g)
        if not (cc_norm_lower(g) <= exact * (1 + 1e-12) and exact <= b.upper * (1 + 1e-12)):
            bad += 1
        worst_gap = max(worst_gap, b.upper / exact - 1)
    pure = exp(Tensor([[0.0], [0.0, 0.0], [0.0, 1.0, -1.0, 0.0]], 2))
    upper = cc_norm_upper(pure, cfg).upper
    target = 2 * math.sqrt(math.pi)
    ok = bad == 0 and target * (1 - 1e-12) <= upper <= 1.02 * target
    detail = (f"{100 - bad}/100 sandwiched, largest upper/exact - 1 = {worst_gap:.2e}, "
              f"pure-area upper {upper:.6f} vs {target:.6f} ({100 * (upper / target - 1):.3f}%)")
    verdict(3, "Heisenberg CC sandwich", ok, detail, 120)


def test_criterion_4_euler_exponent(verdict):
    slopes, ok = {}, True
    lengths = smooth_lengths()
    for name in ("linear2x2", "polynomial_saturating"):
        V = get_family(name)
        x = smooth_driver(V.d, level=12)
        grid = RoughPathGrid.from_path(x, np.linspace(0, 1, int(round(1 / min(lengths))) + 1), 1, 1.0)
        for N in (1, 2, 3):
            rep = davie_rate_experiment(V, N, 1.0, grid, lengths, y0=[0.5, 0.5])
            slopes[(name, N)] = rep.fitted_slope
            ok &= rep.fitted_slope >= N + 1 - 0.1
    # one step of the exponential: defect against h^3 / 6
    h = 0.1
    one = RoughPathGrid.from_path(PiecewiseLinearPath([0.0, h], [[0.0], [h]]), [0.0, h], 2, 1.0)
    defect = math.exp(h) - euler_scheme_solve(get_family("linear1d"), 2, one, [1.0]).states[-1, 0]
    lead = h**3 / 6
    ok &= abs(defect - 1.70918e-4) <= 1e-9 and abs(defect / lead - 1) <= 0.05
    detail = ", ".join(f"{n} N={N}: {s:.3f}" for (n, N), s in slopes.items())
    detail += f"; one-step defect {defect:.6e} vs h^3/6 = {lead:.6e} ({100 * (defect / lead - 1):.2f}%)"
    verdict(4, "Euler exponent", ok, detail, 60)


def test_criterion_5_rough_rates(verdict):
    V = get_family("linear2x2")
    y0 = [1.0, 0.5]
    p = 2.5
    s = ebm_sample(2, 14, p, seed=1, grid_level=8, indices=range(50))
    a = ebm_sample(2, 16, p, seed=3, grid_level=10, indices=range(16))
    finer = [2.0**-j for j in range(5, 11)]
    cfg = GeodesicFamilyConfig(m=16, optimize=False)
    ok, parts = True, []
    for N in (2, 3):
        rep = davie_rate_experiment(V, N, p, s.grid, y0=y0)
        target = (N + 1) / 2 - 0.2
        ok &= rep.typical_slope >= target
        agr = scheme_agreement_experiment(V, N, p, a.grid, cfg, lengths=finer, y0=y0)
        goal = (N + 1) / p - 0.15
        ok &= agr.fitted_slope >= goal
        parts.append(f"N={N}: Brownian slope {rep.typical_slope:.3f} >= {target:.2f} (sup {rep.fitted_slope:.3f}), "
                     f"Euler/geodesic agreement {agr.fitted_slope:.3f} >= {goal:.2f}")
    verdict(5, "Davie and scheme-agreement rates", ok, "; ".join(parts), 600)


def test_criterion_6_gamma_machinery(verdict):
    ok, parts = True, []
    b_grid = [math.e, 10.0, 1e3, 1e6]
    for p in (2.1, 2.5, 3.0):
        for N in sorted({math.floor(p), math.floor(p) + 1}):
            rec = DavieRecursion(p, N)
            exact = all(lambda_gamma(rec, k, 0, b=0.0)[0] == rec.a**k for k in range(40))
            rep = gamma_limit_bound_check(rec, b_grid)
            ok &= exact and rep.passed and rep.quadratic_coefficient <= 1.6
            parts.append(f"p={p:g} N={N}: bound {'holds' if rep.passed else 'fails'}, "
                         f"quadratic {rep.quadratic_coefficient:.3f}")
    verdict(6, "Gamma recursion bound", ok, "; ".join(parts), 5)


def test_criterion_7_azencott_tails(verdict):
    rep = azencott_tail_experiment(get_family("linear2x2"), 3, [2.0**-6, 2.0**-4], [1.0, 2.0, 4.0, 8.0],
                                   samples=10**4, seed=0, y0=[0.5, 0.5], workers=1)
    detail = (f"counts {rep.counts.tolist()}, monotone {rep.monotone}, collapse {rep.collapse}, "
              f"Castell envelope {rep.castell}")
    verdict(7, "Azencott/Castell tails", rep.passed, detail, 900)


def test_criterion_8_lq_convergence(verdict):
    rep = lq_convergence_experiment(get_family("linear2x2"), [1.0, 2.0, 4.0], [3, 4, 5, 6, 7, 8], samples=1000,
                                    seed=0, p=2.9, y0=[0.5, 0.5], workers=1)
    curves = "; ".join(f"q={q:g}: " + " ".join(f"{m:.3g}" for m in rep.moments[i])
                       for i, q in enumerate(rep.q_list))
    detail = (f"decreasing {all(rep.decreasing.values())} ({curves}), gauss tail {rep.tail.passed} "
              f"(alpha {rep.tail.alpha:.3f})")
    verdict(8, "L^q convergence", rep.passed, detail, 600)
