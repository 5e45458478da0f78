"""Shared oracles and generators for the test suite.

The oracles here deliberately avoid the package's own algebra code: tensors
are dictionaries keyed by words, and iterated integrals are computed by
composite Gauss-Legendre quadrature of the nested integrals.
"""
import itertools
import math

import numpy as np
import pytest

from rplab.path_signature import PiecewiseLinearPath, increments_signature
from rplab.tensor_group import Tensor


# --------------------------------------------------------------------------
# word-dictionary algebra


def to_words(g: Tensor) -> dict:
    out = {(): float(g.levels[0][0])}
    for k in range(1, g.N + 1):
        for flat, w in enumerate(itertools.product(range(g.d), repeat=k)):
            out[w] = float(g.levels[k][flat])
    return out


def from_words(words: dict, d: int, N: int) -> Tensor:
    levels = [np.array([words.get((), 0.0)])]
    for k in range(1, N + 1):
        levels.append(np.array([words.get(w, 0.0) for w in itertools.product(range(d), repeat=k)]))
    return Tensor(levels, d)


def naive_product(a: dict, b: dict, N: int) -> dict:
    out = {}
    for u, x in a.items():
        for v, y in b.items():
            if len(u) + len(v) <= N:
                out[u + v] = out.get(u + v, 0.0) + x * y
    return out


def naive_exp(l: dict, N: int) -> dict:
    """sum_n l^n / n! by repeated naive products."""
    out = {(): 1.0}
    power = {(): 1.0}
    for n in range(1, N + 1):
        power = naive_product(power, l, N)
        for w, c in power.items():
            out[w] = out.get(w, 0.0) + c / math.factorial(n)
    return out


def naive_log(g: dict, N: int) -> dict:
    x = dict(g)
    x[()] = 0.0
    out = {}
    power = {(): 1.0}
    for n in range(1, N + 1):
        power = naive_product(power, x, N)
        for w, c in power.items():
            out[w] = out.get(w, 0.0) + (-1.0) ** (n + 1) * c / n
    out[()] = 0.0
    return out


# --------------------------------------------------------------------------
# quadrature oracle for iterated integrals


def quadrature_signature(points: np.ndarray, N: int, nodes: int = 8) -> dict:
    """Iterated integrals of a piecewise-linear path by nested Gauss-Legendre quadrature.

    On each segment the level-k integrand is a polynomial of degree k-1 in the
    segment parameter, so ``nodes`` >= N makes every rule exact.  Values at
    quadrature nodes are obtained by re-integrating from the segment start.
    """
    points = np.asarray(points, float)
    d = points.shape[1]
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw

    def value(word, seg, u):
        """I_word at parameter u in [0,1] of segment seg (path on [0, seg+u])."""
        if not word:
            return 1.0
        start = sig_at_start[seg][word]
        v = points[seg + 1, word[-1]] - points[seg, word[-1]]
        if v == 0.0:
            return start
        inner = sum(w * value(word[:-1], seg, u * x) for x, w in zip(gx, gw)) * u
        return start + v * inner

    words = [w for k in range(N + 1) for w in itertools.product(range(d), repeat=k)]
    sig_at_start = [{w: (1.0 if not w else 0.0) for w in words}]
    for seg in range(points.shape[0] - 1):
        sig_at_start.append({w: value(w, seg, 1.0) for w in words})
    return sig_at_start[-1]


# --------------------------------------------------------------------------
# generators


def random_group(rng, d, N, batch=(), segments=3, scale=0.5):
    return increments_signature(rng.normal(size=batch + (segments, d)) * scale, N)


def random_lie(rng, d, N, batch=()):
    levels = [np.zeros(batch + (1,))] + [rng.uniform(-1, 1, size=batch + (d**k,)) for k in range(1, N + 1)]
    return Tensor(levels, d)


def random_path(rng, d, segments, scale=1.0):
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, segments - 1)), [1.0]])
    while np.any(np.diff(times) <= 1e-9):
        times = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, segments - 1)), [1.0]])
    return PiecewiseLinearPath(times, np.cumsum(rng.normal(size=(segments + 1, d)) * scale, axis=0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
