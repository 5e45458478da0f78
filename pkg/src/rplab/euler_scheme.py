"""Vector-field families, iterated differential operators V_i1 ... V_ik H, and the step-N Euler increment.

Word convention: for (i1, ..., ik) the operator V_i2 ... V_ik H is computed
first and V_i1 is applied last, so W_(i1..ik)(y) = D W_(i2..ik)(y) . V_i1(y).
For linear-affine fields this gives A_ik ... A_i2 (A_i1 y + b_i1), which is
the coefficient multiplying the iterated integral over u1 < ... < uk of
dx^i1 ... dx^ik.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .tensor_group import Tensor, homogeneous_norm


class UnsupportedOrder(ValueError):
    """The family does not provide enough derivatives for the requested depth."""


LINEAR_AFFINE = "linear-affine"
POLYNOMIAL = "polynomial"
GENERIC = "generic"


class VectorFieldFamily:
    """d vector fields on R^e.

    Subclasses provide ``fields(y)`` with shape (..., d, e) and ``jet(y, r)``:
    the list of derivative tensors D^j V_i(y), j = 0..r, each of shape
    (..., d, e, e, ..., e) with j trailing derivative slots.
    """

    kind: str = ""

    def __init__(self, e: int, d: int, order: int, name: str = ""):
        if e < 1 or d < 1:
            raise ValueError("dimensions must be positive")
        self.e, self.d, self.order, self.name = int(e), int(d), int(order), name

    def fields(self, y) -> np.ndarray:
        raise NotImplementedError

    def jet(self, y, r: int) -> List[np.ndarray]:
        raise NotImplementedError

    def __call__(self, y) -> np.ndarray:
        return self.fields(y)

    def _check_depth(self, N: int):
        if N < 1:
            raise ValueError("depth must be at least 1")
        if N - 1 > self.order:
            raise UnsupportedOrder(f"depth {N} needs derivatives of order {N - 1}, family '{self.name}' "
                                   f"provides {self.order}")

    def iterated(self, y, N: int) -> List[np.ndarray]:
        """[F^1, ..., F^N] with F^k of shape (..., d^k, e): all words of length k, row-major."""
        self._check_depth(N)
        y = np.asarray(y, dtype=float)
        jets = self.jet(y, N - 1)
        lead = y.shape[:-1]
        cur = list(jets)  # level-1 words W_i = V_i, derivatives up to order N - 1
        out = [cur[0]]
        for k in range(2, N + 1):
            cur = [_apply_field(cur, jets, r) for r in range(N - k + 1)]
            cur = [c.reshape(lead + (self.d**k,) + c.shape[len(lead) + 2:]) for c in cur]
            out.append(cur[0])
        return out

    def to_json(self) -> dict:
        if self.name in REGISTRY:
            return {"registry": self.name}
        raise ValueError("this family has no file representation")


def _apply_field(W: List[np.ndarray], V: List[np.ndarray], r: int) -> np.ndarray:
    """r-th derivative of the map y -> D W(y) . V_i(y), for every word of W and every i.

    W[j] has shape (..., nw, e, e^j slots) and V[j] shape (..., d, e, e^j slots).
    Returns shape (..., d, nw, e, r slots).  Leibniz rule: sum over the subsets S
    of derivative slots that fall on W (the rest fall on V).
    """
    total = None
    letters = "klmnopqrstuv"
    for s in range(r + 1):
        slotsW = letters[:s]
        slotsV = letters[s:r]
        spec = f"...wab{slotsW},...ib{slotsV}->...iwa{slotsW}{slotsV}"
        base = np.einsum(spec, W[s + 1], V[r - s])
        for S in itertools.combinations(range(r), s):
            C = [i for i in range(r) if i not in S]
            # base has slots ordered S then C; move them to positions S + C
            order = list(S) + C
            perm = list(range(base.ndim - r)) + [base.ndim - r + order.index(i) for i in range(r)]
            term = np.transpose(base, perm)
            total = term if total is None else total + term
    return total


class LinearAffineFamily(VectorFieldFamily):
    """V_i(y) = A_i y + b_i."""

    kind = LINEAR_AFFINE

    def __init__(self, A, b=None, name: str = ""):
        A = np.asarray(A, dtype=float)
        d, e, e2 = A.shape
        if e != e2:
            raise ValueError("A_i must be square")
        b = np.zeros((d, e)) if b is None else np.asarray(b, dtype=float).reshape(d, e)
        super().__init__(e, d, order=64, name=name)
        self.A, self.b = A, b
        self._words: Dict[int, tuple] = {}

    def fields(self, y):
        y = np.asarray(y, dtype=float)
        return np.einsum("iab,...b->...ia", self.A, y) + self.b

    def jet(self, y, r):
        y = np.asarray(y, dtype=float)
        lead = y.shape[:-1]
        out = [self.fields(y)]
        if r >= 1:
            out.append(np.broadcast_to(self.A, lead + self.A.shape))
        for j in range(2, r + 1):
            out.append(np.zeros(lead + (self.d,) + (self.e,) * (j + 1)))
        return out

    def word_maps(self, N: int):
        """(M_k, c_k), k=1..N, with V_w H(y) = M_k[w] y + c_k[w]."""
        if N not in self._words:
            M, c = [self.A], [self.b]
            for _ in range(2, N + 1):
                # word (i, w): M_w A_i and M_w b_i
                M.append(np.einsum("wab,ibc->iwac", M[-1], self.A).reshape(-1, self.e, self.e))
                c.append(np.einsum("wab,ib->iwa", M[-2], self.b).reshape(-1, self.e))
            self._words[N] = (M, c)
        return self._words[N]

    def iterated(self, y, N):
        self._check_depth(N)
        y = np.asarray(y, dtype=float)
        M, c = self.word_maps(N)
        return [np.einsum("wab,...b->...wa", Mk, y) + ck for Mk, ck in zip(M, c)]

    def to_json(self):
        if self.name in REGISTRY:
            return {"registry": self.name}
        return {"kind": self.kind, "e": self.e, "d": self.d, "A": self.A.tolist(), "b": self.b.tolist()}


class PolynomialFamily(VectorFieldFamily):
    """V_i(y) = sum_n C_{i,n}[y, ..., y] with coefficient tensors of shape (e, e, ..., e) (n input slots)."""

    kind = POLYNOMIAL

    def __init__(self, coefficients: Sequence[Sequence], e: int, name: str = ""):
        d = len(coefficients)
        degree = max(len(c) for c in coefficients) - 1
        super().__init__(e, d, order=64, name=name)
        self.degree = degree
        # symmetrised coefficients, indexed [n] -> (d, e, e^n slots)
        self.C = []
        for n in range(degree + 1):
            blocks = []
            for ci in coefficients:
                T = np.asarray(ci[n], dtype=float).reshape((e,) * (n + 1)) if n < len(ci) else np.zeros((e,) * (n + 1))
                if n > 1:
                    T = sum(np.transpose(T, (0,) + tuple(1 + np.array(p))) for p in itertools.permutations(range(n)))
                    T = T / math.factorial(n)
                blocks.append(T)
            self.C.append(np.stack(blocks))
        self.raw = [[np.asarray(c, dtype=float).tolist() for c in ci] for ci in coefficients]

    def jet(self, y, r):
        y = np.asarray(y, dtype=float)
        lead = y.shape[:-1]
        out = []
        for j in range(r + 1):
            acc = np.zeros(lead + (self.d,) + (self.e,) * (j + 1))
            for n in range(j, self.degree + 1):
                T = np.broadcast_to(self.C[n], lead + self.C[n].shape)
                for _ in range(n - j):
                    T = np.einsum("...b,...b->...", T, y.reshape(lead + (1,) * (T.ndim - len(lead) - 1) + (self.e,)))
                acc = acc + (math.factorial(n) / math.factorial(n - j)) * T
            out.append(acc)
        return out

    def fields(self, y):
        return self.jet(y, 0)[0]

    def to_json(self):
        if self.name in REGISTRY:
            return {"registry": self.name}
        return {"kind": self.kind, "e": self.e, "d": self.d, "coefficients": self.raw}


class GenericFamily(VectorFieldFamily):
    """Black-box fields; derivatives by mixed central differences.

    The step for order r is eps^(1/(r+2)) * (1 + |y|), which balances the
    O(h^2) truncation error of a central r-th difference against round-off.
    """

    kind = GENERIC

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], e: int, d: int, order: int = 4, name: str = ""):
        super().__init__(e, d, order=order, name=name)
        self.func = func

    def fields(self, y):
        return np.asarray(self.func(np.asarray(y, dtype=float)), dtype=float)

    def jet(self, y, r):
        y = np.asarray(y, dtype=float)
        if r > self.order:
            raise UnsupportedOrder(f"family '{self.name}' provides derivatives up to order {self.order}")
        out = [self.fields(y)]
        scale = 1.0 + np.linalg.norm(y, axis=-1)[..., None]
        eye = np.eye(self.e)
        for j in range(1, r + 1):
            h = np.finfo(float).eps ** (1.0 / (j + 2)) * scale
            T = np.zeros(y.shape[:-1] + (self.d, self.e) + (self.e,) * j)
            for idx in itertools.product(range(self.e), repeat=j):
                acc = 0.0
                for signs in itertools.product((1.0, -1.0), repeat=j):
                    shift = sum(s * eye[i] for s, i in zip(signs, idx))
                    acc = acc + np.prod(signs) * self.fields(y + h * shift)
                T[(Ellipsis, slice(None), slice(None)) + idx] = acc / (2.0 * h[..., None]) ** j
            out.append(T)
        return out


# --------------------------------------------------------------------------
# built-in families

_J = np.array([[0.0, -1.0], [1.0, 0.0]])


def _bounded_trig(y):
    y1, y2 = y[..., 0], y[..., 1]
    v1 = np.stack([np.sin(y2), 0.5 * np.cos(y1)], axis=-1)
    v2 = np.stack([0.5 * np.cos(y1 + y2), np.sin(y1)], axis=-1)
    return np.stack([v1, v2], axis=-2)


def _registry():
    poly = [
        # V_1(y) = (1 + 0.5 y2 - 0.2 y1^2, 0.3 y1 - 0.1 y1 y2)
        [[1.0, 0.0], [[0.0, 0.5], [0.3, 0.0]], [[[-0.2, 0.0], [0.0, 0.0]], [[0.0, -0.1], [0.0, 0.0]]]],
        # V_2(y) = (0.4 y2 - 0.1 y1 y2, 1 - 0.5 y1 - 0.2 y2^2)
        [[0.0, 1.0], [[0.0, 0.4], [-0.5, 0.0]], [[[0.0, -0.1], [0.0, 0.0]], [[0.0, 0.0], [0.0, -0.2]]]],
    ]
    return {
        "linear1d": lambda: LinearAffineFamily([[[1.0]]], [[0.0]], name="linear1d"),
        "rotation2d": lambda: LinearAffineFamily([_J, 0.5 * _J], np.zeros((2, 2)), name="rotation2d"),
        "linear2x2": lambda: LinearAffineFamily(
            [[[0.2, 1.0], [-1.0, 0.0]], [[0.0, 0.5], [0.3, -0.2]]], [[0.5, 0.0], [0.0, 0.5]], name="linear2x2"),
        "constant2d": lambda: LinearAffineFamily(np.zeros((2, 2, 2)), [[1.0, 0.0], [0.5, 1.0]], name="constant2d"),
        "polynomial_saturating": lambda: PolynomialFamily(poly, e=2, name="polynomial_saturating"),
        "bounded_trig": lambda: GenericFamily(_bounded_trig, e=2, d=2, order=4, name="bounded_trig"),
    }


REGISTRY = _registry()


def get_family(name: str) -> VectorFieldFamily:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown vector-field family '{name}'; known: {sorted(REGISTRY)}") from None


def family_from_json(obj: dict) -> VectorFieldFamily:
    if "registry" in obj:
        return get_family(obj["registry"])
    kind = obj.get("kind")
    if kind == LINEAR_AFFINE:
        return LinearAffineFamily(obj["A"], obj.get("b"), name=obj.get("name", ""))
    if kind == POLYNOMIAL:
        return PolynomialFamily(obj["coefficients"], int(obj["e"]), name=obj.get("name", ""))
    raise ValueError(f"unknown vector-field kind '{kind}'")


def load_family(spec: str) -> VectorFieldFamily:
    """Registry name or path to a JSON description file."""
    if spec in REGISTRY:
        return get_family(spec)
    return family_from_json(json.loads(Path(spec).read_text()))


# --------------------------------------------------------------------------
# Euler increment


@dataclass
class EulerIncrement:
    value: np.ndarray
    per_level: Optional[List[np.ndarray]] = None


def iterated_apply(V: VectorFieldFamily, indices: Sequence[int], y) -> np.ndarray:
    """V_i1 ... V_ik H(y) for one word (0-based letters)."""
    k = len(indices)
    if k < 1:
        raise ValueError("need at least one index")
    if any(i < 0 or i >= V.d for i in indices):
        raise ValueError(f"indices must lie in 0..{V.d - 1}")
    F = V.iterated(y, k)[k - 1]
    flat = int(np.ravel_multi_index(tuple(indices), (V.d,) * k))
    return F[..., flat, :]


def euler_increment(V: VectorFieldFamily, N: int, g: Tensor, y, breakdown: bool = False) -> EulerIncrement:
    """I[y, N, g] = sum_k sum_w V_w H(y) g^{k,w}; g and y may both carry batch axes."""
    if g.d != V.d:
        raise ValueError(f"driver dimension {g.d} does not match family dimension {V.d}")
    if g.N < N:
        raise UnsupportedOrder(f"element has depth {g.N} < {N}")
    V._check_depth(N)
    y = np.asarray(y, dtype=float)
    if isinstance(V, LinearAffineFamily) and not breakdown:
        M, c = V.word_maps(N)
        GM = sum(np.einsum("...w,wab->...ab", g.levels[k], M[k - 1]) for k in range(1, N + 1))
        Gc = sum(g.levels[k] @ c[k - 1] for k in range(1, N + 1))
        return EulerIncrement(np.einsum("...ab,...b->...a", GM, y) + Gc)
    F = V.iterated(y, N)
    parts = [np.einsum("...w,...wa->...a", g.levels[k], F[k - 1]) for k in range(1, N + 1)]
    return EulerIncrement(sum(parts), parts if breakdown else None)


def lipschitz_constants(V: VectorFieldFamily, N: int, radius: float = 2.0, samples: int = 256, seed: int = 0,
                        extra_pairs: Sequence = ()) -> np.ndarray:
    """Empirical Lipschitz constants of y -> F^k(y) (Frobenius norm over words), k = 1..N.

    Estimated from random pairs in the box [-radius, radius]^e plus any supplied pairs.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-radius, radius, size=(samples, V.e))
    b = a + rng.normal(scale=0.1 * radius, size=a.shape)
    pairs = [(a, b)] + [(np.atleast_2d(p), np.atleast_2d(q)) for p, q in extra_pairs]
    best = np.zeros(N)
    for p, q in pairs:
        Fp, Fq = V.iterated(p, N), V.iterated(q, N)
        dy = np.linalg.norm(p - q, axis=-1)
        ok = dy > 0
        if not ok.any():
            continue
        for k in range(N):
            ratio = np.linalg.norm((Fp[k] - Fq[k]).reshape(len(p), -1), axis=-1)[ok] / dy[ok]
            best[k] = max(best[k], float(ratio.max()))
    return best


def initial_point_sensitivity(V: VectorFieldFamily, N: int, g: Tensor, y, y_tilde, constants=None):
    """(gap, bound) with gap = |I[y] - I[y~]| and bound = C |y - y~| (n + n^N), n = |||g|||.

    C is the sum over levels of the empirical Lipschitz constants of the iterated
    operators; the actual pair is always included so gap <= bound holds.
    """
    y, y_tilde = np.asarray(y, float), np.asarray(y_tilde, float)
    gap = float(np.linalg.norm(euler_increment(V, N, g, y).value - euler_increment(V, N, g, y_tilde).value))
    lips = lipschitz_constants(V, N, extra_pairs=[(y, y_tilde)]) if constants is None else np.maximum(
        constants, lipschitz_constants(V, N, samples=0, extra_pairs=[(y, y_tilde)]))
    n = homogeneous_norm(g)
    bound = float(lips.sum()) * float(np.linalg.norm(y - y_tilde)) * (n + n**N)
    if gap > bound * (1 + 1e-12) + 1e-300:
        raise AssertionError(f"sensitivity bound violated: gap {gap} > bound {bound}")
    return gap, bound
