"""Piecewise-linear paths, their truncated signatures, and Hölder quantities of G^N-valued grids.

Signatures are assembled from straight segments by a pairwise (tree)
reduction of Chen products.  Every routine that builds a signature uses the
same reduction, so signatures at different depths agree bit for bit on their
common levels.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .tensor_group import (
    AlgebraShape,
    ShapeError,
    Tensor,
    homogeneous_norm,
    inverse,
    multiply,
)


class UnsupportedLift(ValueError):
    """Raised when a grid has no piecewise-linear skeleton to lift from."""


# --------------------------------------------------------------------------
# paths


class PiecewiseLinearPath:
    """Breakpoints ``points[..., j, :]`` at ``times[j]``; extra leading axes are independent paths."""

    def __init__(self, times, points):
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if points.ndim < 2 or points.shape[-2] != times.size:
            raise ValueError(f"need one point per time: {times.size} times, points {points.shape}")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.times = times
        self.points = points

    @classmethod
    def from_increments(cls, increments, times=None, start=None) -> "PiecewiseLinearPath":
        inc = np.asarray(increments, dtype=float)
        m, d = inc.shape[-2:]
        if times is None:
            times = np.linspace(0.0, 1.0, m + 1)
        origin = np.zeros(inc.shape[:-2] + (1, d)) if start is None else np.broadcast_to(
            np.asarray(start, float)[..., None, :], inc.shape[:-2] + (1, d))
        pts = np.concatenate([origin, origin + np.cumsum(inc, axis=-2)], axis=-2)
        return cls(times, pts)

    @property
    def d(self) -> int:
        return self.points.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.points.shape[:-2]

    @property
    def n_segments(self) -> int:
        return self.times.size - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.points, axis=-2)

    def length(self):
        out = np.linalg.norm(self.increments(), axis=-1).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def at(self, t) -> np.ndarray:
        """Linear interpolation at time(s) ``t``; result has shape (*batch, *t.shape, d)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-15) or np.any(t > self.times[-1] + 1e-15):
            raise ValueError("evaluation time outside the path's time interval")
        if self.times.size == 1:
            return np.broadcast_to(self.points[..., 0, :][..., None, :] if t.ndim else self.points[..., 0, :],
                                   self.batch_shape + t.shape + (self.d,))
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[j], self.times[j + 1]
        w = ((t - t0) / (t1 - t0))[..., None]
        p0 = np.take(self.points, j, axis=-2)
        p1 = np.take(self.points, j + 1, axis=-2)
        return p0 + w * (p1 - p0)

    def restrict(self, s: float, t: float) -> "PiecewiseLinearPath":
        """Sub-path on [s, t], with interpolated end points where s, t are not breakpoints."""
        if s > t:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        inner = (self.times > s) & (self.times < t)
        times = np.concatenate([[s], self.times[inner], [t]]) if t > s else np.array([s])
        ends = self.at(np.array([s, t]))
        pts = [ends[..., :1, :], self.points[..., inner, :]]
        if t > s:
            pts.append(ends[..., 1:, :])
        return PiecewiseLinearPath(times, np.concatenate(pts, axis=-2))

    def reversed(self) -> "PiecewiseLinearPath":
        t0, t1 = self.times[0], self.times[-1]
        return PiecewiseLinearPath((t0 + t1 - self.times)[::-1], self.points[..., ::-1, :])

    def scaled(self, lam: float) -> "PiecewiseLinearPath":
        return PiecewiseLinearPath(self.times, lam * self.points)

    def subsample(self, idx) -> "PiecewiseLinearPath":
        """Path through the breakpoints with the given indices."""
        idx = np.asarray(idx)
        return PiecewiseLinearPath(self.times[idx], self.points[..., idx, :])

    def to_csv(self) -> str:
        if self.batch_shape:
            raise ValueError("only single paths are written to CSV")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(self.d)])
        for t, x in zip(self.times, self.points):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PiecewiseLinearPath":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0].strip() != "t":
            raise ValueError("path CSV must start with a 't' column")
        arr = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
        return cls(arr[:, 0], arr[:, 1:])

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "PiecewiseLinearPath":
        return cls.from_csv(Path(path).read_text())


# --------------------------------------------------------------------------
# signatures


def segment_signature(dx, shape: AlgebraShape) -> Tensor:
    """exp(dx): level k is dx^(x)k / k!.  ``dx`` may carry leading batch axes."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape[-1] != shape.d:
        raise ShapeError(f"increment has dimension {dx.shape[-1]}, algebra has d={shape.d}")
    levels = [np.ones(dx.shape[:-1] + (1,)), dx]
    for k in range(2, shape.N + 1):
        prev = levels[-1]
        nxt = prev[..., :, None] * (dx / k)[..., None, :]
        levels.append(nxt.reshape(dx.shape[:-1] + (prev.shape[-1] * shape.d,)))
    return Tensor(levels, shape.d)


def _take_last(t: Tensor, sl) -> Tensor:
    return Tensor([b[..., sl, :] for b in t.levels], t.d)


def reduce_product(t: Tensor) -> Tensor:
    """Ordered product over the last batch axis by pairwise reduction."""
    n = t.batch_shape[-1]
    if n == 0:
        return Tensor.unit(t.shape, t.batch_shape[:-1])
    while n > 1:
        half = n // 2
        paired = multiply(_take_last(t, slice(0, 2 * half, 2)), _take_last(t, slice(1, 2 * half, 2)))
        if n % 2:
            paired = Tensor([np.concatenate([a, b[..., -1:, :]], axis=-2)
                             for a, b in zip(paired.levels, t.levels)], t.d)
        t = paired
        n = t.batch_shape[-1]
    return _take_last(t, 0)


def increments_signature(increments, N: int) -> Tensor:
    """Signature of consecutive straight pieces ``increments[..., j, :]``."""
    inc = np.asarray(increments, dtype=float)
    shape = AlgebraShape(inc.shape[-1], N)
    return reduce_product(segment_signature(inc, shape))


def path_signature(x: PiecewiseLinearPath, s: Optional[float] = None, t: Optional[float] = None,
                   shape: Optional[AlgebraShape] = None, N: Optional[int] = None) -> Tensor:
    """Step-N signature of ``x`` over [s, t] (defaults: the whole path)."""
    if shape is None:
        if N is None:
            raise ValueError("give either shape or N")
        shape = AlgebraShape(x.d, N)
    elif shape.d != x.d:
        raise ShapeError(f"path dimension {x.d} does not match d={shape.d}")
    s = x.times[0] if s is None else s
    t = x.times[-1] if t is None else t
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s == t:
        return Tensor.unit(shape, x.batch_shape)
    sub = x if (s == x.times[0] and t == x.times[-1]) else x.restrict(s, t)
    return reduce_product(segment_signature(sub.increments(), shape))


# --------------------------------------------------------------------------
# rough path grids


@dataclass
class RoughPathGrid:
    """Group-valued increments over the cells of a dissection, with roughness ``p``.

    ``increments`` is a Tensor whose last batch axis runs over cells; extra
    leading axes hold independent samples.
    """

    times: np.ndarray
    increments: Tensor
    p: float
    skeleton: Optional[PiecewiseLinearPath] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("a grid needs at least two times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        if self.increments.batch_shape[-1:] != (self.times.size - 1,):
            raise ValueError("need one increment per cell")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @classmethod
    def from_path(cls, x: PiecewiseLinearPath, times, N: int, p: float) -> "RoughPathGrid":
        """Grid of step-N signatures of ``x`` over consecutive cells of ``times``."""
        times = np.asarray(times, dtype=float)
        return cls(times, cell_signatures(x, times, N), p, skeleton=x)

    @property
    def shape(self) -> AlgebraShape:
        return self.increments.shape

    @property
    def N(self) -> int:
        return self.increments.N

    @property
    def d(self) -> int:
        return self.increments.d

    @property
    def n_cells(self) -> int:
        return self.times.size - 1

    @property
    def sample_shape(self) -> tuple:
        return self.increments.batch_shape[:-1]

    def cell(self, i: int) -> Tensor:
        return _take_last(self.increments, i)

    def windows(self, max_r: Optional[int] = None):
        """Yield (r, x_{t_i, t_(i+r)} for every start i) for r = 1, 2, ...; built by running Chen products."""
        m = self.n_cells
        max_r = m if max_r is None else min(max_r, m)
        g = self.increments
        for r in range(1, max_r + 1):
            if r > 1:
                g = multiply(_take_last(g, slice(0, m - r + 1)), _take_last(self.increments, slice(r - 1, m)))
            yield r, g

    def window(self, r: int) -> Tensor:
        if r < 1 or r > self.n_cells:
            raise ValueError(f"window span {r} outside 1..{self.n_cells}")
        for span, g in self.windows(r):
            if span == r:
                return g

    def increment(self, i: int, j: int) -> Tensor:
        if j == i:
            return Tensor.unit(self.shape, self.sample_shape)
        return _take_last(self.window(j - i), i)

    def total(self) -> Tensor:
        return reduce_product(self.increments)

    def projected(self, N: int) -> "RoughPathGrid":
        return RoughPathGrid(self.times, self.increments.truncate(N), self.p, self.skeleton)

    def chen_defect(self) -> float:
        """Largest coefficient gap between products of cells and the stored windows."""
        worst = 0.0
        for r, left in self.windows():
            if r == 1:
                continue
            direct = reduce_product(Tensor([np.stack([b[..., i:i + r, :] for i in range(self.n_cells - r + 1)], -3)
                                            for b in self.increments.levels], self.d))
            worst = max(worst, float(np.max(left.max_abs_diff(direct))))
        return worst

    # -- serialization --------------------------------------------------
    def to_json(self, skeleton_ref: Optional[str] = None) -> dict:
        if self.sample_shape:
            raise ValueError("only single grids are serialized")
        out = {"p": self.p, "times": self.times.tolist(),
               "increments": [self.cell(i).to_json() for i in range(self.n_cells)]}
        if skeleton_ref is not None:
            out["skeleton"] = skeleton_ref
        return out

    @classmethod
    def from_json(cls, obj: dict, base_dir=None) -> "RoughPathGrid":
        incs = [Tensor.from_json(g) for g in obj["increments"]]
        stacked = Tensor([np.stack([g.levels[k] for g in incs]) for k in range(incs[0].N + 1)], incs[0].d)
        skeleton = None
        if obj.get("skeleton"):
            ref = Path(obj["skeleton"])
            if base_dir is not None and not ref.is_absolute():
                ref = Path(base_dir) / ref
            skeleton = PiecewiseLinearPath.load(ref)
        return cls(np.asarray(obj["times"], float), stacked, float(obj["p"]), skeleton)

    def save(self, path, skeleton_ref: Optional[str] = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(skeleton_ref), indent=1))

    @classmethod
    def load(cls, path) -> "RoughPathGrid":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), base_dir=path.parent)


def cell_signatures(x: PiecewiseLinearPath, times, N: int) -> Tensor:
    """Signatures of ``x`` over the cells of ``times``; last batch axis runs over cells."""
    times = np.asarray(times, dtype=float)
    shape = AlgebraShape(x.d, N)
    pos = np.searchsorted(x.times, times)
    aligned = np.all(pos < x.times.size) and np.array_equal(x.times[np.minimum(pos, x.times.size - 1)], times)
    if aligned:
        counts = np.diff(pos)
        if np.all(counts == counts[0]) and counts[0] > 0:
            inc = x.increments()[..., pos[0]:pos[-1], :]
            inc = inc.reshape(inc.shape[:-2] + (times.size - 1, counts[0], x.d))
            return reduce_product(segment_signature(inc, shape))
    cells = [path_signature(x, times[i], times[i + 1], shape) for i in range(times.size - 1)]
    return Tensor([np.stack([c.levels[k] for c in cells], axis=-2) for k in range(N + 1)], x.d)


def lift(x: RoughPathGrid, N: int) -> RoughPathGrid:
    """Depth-N extension of a skeleton-backed grid (same cells, same p)."""
    if x.skeleton is None:
        raise UnsupportedLift("lifting needs a piecewise-linear skeleton; general rough paths are not supported")
    if N < x.N:
        raise ValueError(f"target depth {N} is below the grid depth {x.N}")
    return RoughPathGrid(x.times, cell_signatures(x.skeleton, x.times, N), x.p, x.skeleton)


# --------------------------------------------------------------------------
# Hölder quantities; homogeneous_norm stands in for the CC norm throughout


def _window_ratios(x: RoughPathGrid, max_span: Optional[float] = None, other: Optional[RoughPathGrid] = None):
    """Yield (span r, ratios over starts) for each window length allowed by ``max_span``."""
    pairs = zip(x.windows(), other.windows()) if other is not None else ((w, None) for w in x.windows())
    for (r, g), alt in pairs:
        spans = x.times[r:] - x.times[:-r]
        keep = np.ones(spans.size, bool) if max_span is None else spans <= max_span * (1 + 1e-12)
        if not keep.any():
            if max_span is not None and spans.min() > max_span * (1 + 1e-12):
                break
            continue
        if alt is not None:
            g = multiply(inverse(g), alt[1])
        ratio = homogeneous_norm(g) / spans ** (1.0 / x.p)
        yield r, np.where(keep, ratio, 0.0)


def hoelder_norm(x: RoughPathGrid):
    """sup over grid pairs s<t of |||x_{s,t}||| / (t-s)^(1/p)."""
    return _sup(_window_ratios(x), x.sample_shape)


def hoelder_distance(x: RoughPathGrid, y: RoughPathGrid):
    """sup over grid pairs of |||x_{s,t}^(-1) (x) y_{s,t}||| / (t-s)^(1/p)."""
    if x.shape != y.shape or not np.array_equal(x.times, y.times):
        raise ValueError("grids must share shape and times")
    if x.p != y.p:
        raise ValueError("grids must share p")
    return _sup(_window_ratios(x, other=y), np.broadcast_shapes(x.sample_shape, y.sample_shape))


def small_scale_modulus(x: RoughPathGrid, delta: float):
    """Hölder ratio restricted to pairs with t - s <= delta."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return _sup(_window_ratios(x, max_span=delta), x.sample_shape)


def _sup(gen, sample_shape):
    best = np.zeros(sample_shape)
    for _, ratio in gen:
        best = np.maximum(best, ratio.max(axis=-1))
    return float(best) if best.ndim == 0 else best
