"""Truncated tensor algebra T^(N)(R^d) and the free nilpotent group inside it.

Elements are stored densely, one flat row-major block per level: level k has
shape ``(*batch, d**k)`` and level 0 has shape ``(*batch, 1)``.  Leading batch
axes broadcast through every operation, which is what the Monte Carlo code
relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands live in different truncated algebras, or a level has the wrong size."""


@dataclass(frozen=True)
class AlgebraShape:
    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ShapeError(f"ambient dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 1:
            raise ShapeError(f"truncation depth must be a positive integer, got {self.N}")

    def level_size(self, k: int) -> int:
        return self.d**k

    @property
    def dim(self) -> int:
        return sum(self.d**k for k in range(self.N + 1))


class Tensor:
    """A (possibly batched) element of T^(N)(R^d).

    The same class carries group elements (level 0 equal to one) and Lie
    series (level 0 equal to zero); the operations below check the level-0
    convention they need.
    """

    __slots__ = ("shape", "levels")

    def __init__(self, levels: Sequence[np.ndarray], d: int):
        N = len(levels) - 1
        self.shape = AlgebraShape(d, N)
        lv = []
        for k, block in enumerate(levels):
            block = np.asarray(block, dtype=float)
            if block.ndim == 0:
                block = block.reshape(1)
            if block.shape[-1] != d**k:
                raise ShapeError(f"level {k} needs {d**k} entries, got {block.shape[-1]}")
            lv.append(block)
        batch = np.broadcast_shapes(*(b.shape[:-1] for b in lv))
        self.levels = tuple(b if b.shape[:-1] == batch else np.broadcast_to(b, batch + b.shape[-1:])
                            for b in lv)

    # -- construction -------------------------------------------------------
    @classmethod
    def zeros(cls, shape: AlgebraShape, batch: tuple = ()) -> "Tensor":
        return cls([np.zeros(batch + (shape.d**k,)) for k in range(shape.N + 1)], shape.d)

    @classmethod
    def unit(cls, shape: AlgebraShape, batch: tuple = ()) -> "Tensor":
        return cls([np.ones(batch + (1,))] + [np.zeros(batch + (shape.d**k,)) for k in range(1, shape.N + 1)],
                   shape.d)

    @classmethod
    def from_vector(cls, v, N: int, level0: float = 0.0) -> "Tensor":
        """Level-1 element with coefficients ``v`` (trailing axis of length d)."""
        v = np.asarray(v, dtype=float)
        d = v.shape[-1]
        batch = v.shape[:-1]
        levels = [np.full(batch + (1,), level0), v]
        levels += [np.zeros(batch + (d**k,)) for k in range(2, N + 1)]
        return cls(levels, d)

    # -- accessors ----------------------------------------------------------
    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def N(self) -> int:
        return self.shape.N

    @property
    def batch_shape(self) -> tuple:
        return self.levels[0].shape[:-1]

    def level(self, k: int, unflatten: bool = False) -> np.ndarray:
        block = self.levels[k]
        if unflatten:
            return block.reshape(self.batch_shape + (self.d,) * k)
        return block

    def __getitem__(self, idx) -> "Tensor":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Tensor([b[idx + (Ellipsis,)] if b.ndim > 1 else b for b in self.levels], self.d)

    def truncate(self, N: int) -> "Tensor":
        if N > self.N:
            raise ShapeError(f"cannot truncate depth {self.N} to deeper {N}")
        return Tensor(self.levels[: N + 1], self.d)

    def copy(self) -> "Tensor":
        return Tensor([np.array(b) for b in self.levels], self.d)

    def flat(self) -> np.ndarray:
        """All coefficients concatenated level by level."""
        return np.concatenate(self.levels, axis=-1)

    def __add__(self, other: "Tensor") -> "Tensor":
        _check_same(self, other)
        return Tensor([a + b for a, b in zip(self.levels, other.levels)], self.d)

    def __sub__(self, other: "Tensor") -> "Tensor":
        _check_same(self, other)
        return Tensor([a - b for a, b in zip(self.levels, other.levels)], self.d)

    def __mul__(self, c) -> "Tensor":
        c = np.asarray(c, dtype=float)[..., None]
        return Tensor([c * b for b in self.levels], self.d)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return Tensor([-b for b in self.levels], self.d)

    def __repr__(self) -> str:
        return f"Tensor(d={self.d}, N={self.N}, batch={self.batch_shape})"

    def max_abs_diff(self, other: "Tensor") -> np.ndarray:
        _check_same(self, other)
        return np.max(np.abs(self.flat() - other.flat()), axis=-1)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        if self.batch_shape:
            raise ShapeError("only unbatched elements are serialized")
        levels = [float(self.levels[0][0])] + [b.tolist() for b in self.levels[1:]]
        return {"d": self.d, "N": self.N, "levels": levels}

    @classmethod
    def from_json(cls, obj: dict) -> "Tensor":
        d, N = int(obj["d"]), int(obj["N"])
        levels = obj["levels"]
        if len(levels) != N + 1:
            raise ShapeError(f"expected {N + 1} levels, got {len(levels)}")
        return cls([np.atleast_1d(np.asarray(levels[0], dtype=float))]
                   + [np.asarray(b, dtype=float) for b in levels[1:]], d)


def _check_same(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a[..., :, None] * b[..., None, :]
    return out.reshape(out.shape[:-2] + (a.shape[-1] * b.shape[-1],))


def _product_levels(a: Sequence[np.ndarray], b: Sequence[np.ndarray], N: int,
                    a_from: int = 0, b_from: int = 0) -> list:
    """Truncated convolution of level lists; ``a_from``/``b_from`` skip levels known to vanish."""
    out = []
    for k in range(N + 1):
        acc = None
        for i in range(a_from, k - b_from + 1):
            j = k - i
            if i == 0:
                term = a[0] * b[j]
            elif j == 0:
                term = a[i] * b[0]
            else:
                term = _outer(a[i], b[j])
            acc = term if acc is None else acc + term
        if acc is None:
            batch = np.broadcast_shapes(a[0].shape[:-1], b[0].shape[:-1])
            acc = np.zeros(batch + (a[k].shape[-1],))
        out.append(acc)
    return out


def multiply(a: Tensor, b: Tensor) -> Tensor:
    """Truncated tensor product: level k is the sum of a^i (x) b^(k-i)."""
    _check_same(a, b)
    return Tensor(_product_levels(a.levels, b.levels, a.N), a.d)


def _nilpotent_part(g: Tensor) -> list:
    return [np.zeros_like(g.levels[0])] + list(g.levels[1:])


def _unit_plus(levels: list, c) -> list:
    out = list(levels)
    out[0] = out[0] + c
    return out


def inverse(g: Tensor) -> Tensor:
    """Inverse in T_1^N via the terminating series 1 - x + x^2 - ...  with x = g - 1."""
    x = _nilpotent_part(g)
    N = g.N
    r = [np.ones_like(x[0])] + [np.zeros_like(b) for b in x[1:]]
    for _ in range(N):
        r = _product_levels(x, r, N, a_from=1)
        r = [-b for b in r]
        r[0] = r[0] + 1.0
    return Tensor(r, g.d)


def exp(l: Tensor) -> Tensor:
    """Exponential of a Lie series (level 0 must vanish), Horner form."""
    N = l.N
    x = _nilpotent_part(l)
    r = [np.ones_like(x[0])] + [b / N for b in x[1:]]
    for n in range(N - 1, 0, -1):
        r = _product_levels(x, r, N, a_from=1)
        r = [b / n for b in r]
        r[0] = r[0] + 1.0
    return Tensor(r, l.d)


def log(g: Tensor) -> Tensor:
    """Logarithm of a group element; the series stops at level N."""
    N = g.N
    x = _nilpotent_part(g)
    coef = lambda n: (-1.0) ** (n + 1) / n
    r = [np.full_like(x[0], coef(N))] + [np.zeros_like(b) for b in x[1:]]
    for n in range(N - 1, 0, -1):
        r = _product_levels(x, r, N, a_from=1)
        r[0] = r[0] + coef(n)
    r = _product_levels(x, r, N, a_from=1)
    r[0] = np.zeros_like(r[0])
    return Tensor(r, g.d)


def dilate(lam, g: Tensor) -> Tensor:
    lam = np.asarray(lam, dtype=float)[..., None]
    return Tensor([b * lam**k if k else b for k, b in enumerate(g.levels)], g.d)


def bracket(a: Tensor, b: Tensor) -> Tensor:
    """Commutator a (x) b - b (x) a in the truncated algebra."""
    return multiply(a, b) - multiply(b, a)


def level_norms(g: Tensor) -> np.ndarray:
    """Frobenius norm of every level 1..N, stacked on the last axis."""
    return np.stack([_frobenius(b) for b in g.levels[1:]], axis=-1)


def _frobenius(b: np.ndarray) -> np.ndarray:
    # rescale by the largest entry so tiny levels do not underflow to zero
    scale = np.max(np.abs(b), axis=-1)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.sqrt(np.sum((b / safe[..., None]) ** 2, axis=-1))


def homogeneous_norm(g: Tensor):
    """max_k |g^k|^(1/k) with the Frobenius norm on each level."""
    norms = level_norms(g)
    powers = 1.0 / np.arange(1, g.N + 1)
    out = np.max(norms**powers, axis=-1)
    return float(out) if out.ndim == 0 else out


def right_bracketing(block: np.ndarray, d: int, k: int) -> np.ndarray:
    """Dynkin map e_{i1..ik} -> [e_i1, [e_i2, ... [e_i(k-1), e_ik]]] on a flat level-k block."""
    if k == 1:
        return block
    lead = block.shape[:-1]
    split = block.reshape(lead + (d, d ** (k - 1)))
    inner = right_bracketing(split, d, k - 1)
    left = inner.reshape(lead + (d**k,))
    right = np.swapaxes(inner, -1, -2).reshape(lead + (d**k,))
    return left - right


def is_group_like(g: Tensor, tol: float = 1e-8):
    """Dynkin-Specht-Wever membership test for exp(free Lie algebra)."""
    if not np.allclose(g.levels[0], 1.0):
        return False if not g.batch_shape else np.zeros(g.batch_shape, bool)
    L = log(g)
    ok = np.ones(g.batch_shape, dtype=bool)
    for k in range(2, g.N + 1):
        block = L.levels[k]
        gap = np.linalg.norm(right_bracketing(block, g.d, k) - k * block, axis=-1)
        ok &= gap <= tol * (1.0 + np.linalg.norm(block, axis=-1))
    return bool(ok) if ok.ndim == 0 else ok


def words(d: int, k: int) -> Iterable[tuple]:
    """Multi-indices of length k in row-major order (0-based letters)."""
    return np.ndindex(*(d,) * k)


def factorial(k: int) -> float:
    return float(math.factorial(k))
