"""Short paths with a prescribed signature, and two-sided bounds on the Carnot-Caratheodory norm.

``chow_decompose`` builds some path with signature g out of straight
segments and nested commutator loops.  ``cc_norm_upper`` shortens such a
path by constrained length minimisation (augmented Lagrangian with an
analytic Jacobian of the signature map, followed by a Gauss-Newton
feasibility projection).  ``cc_norm_lower`` is the iterated-integral bound
and ``heisenberg_cc_norm`` the exact norm on the d=2, N=2 group.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .path_signature import PiecewiseLinearPath, RoughPathGrid, hoelder_norm, increments_signature
from .tensor_group import (
    Tensor,
    _product_levels,
    dilate,
    homogeneous_norm,
    inverse,
    is_group_like,
    log,
    multiply,
)


class ConstructionFailure(RuntimeError):
    """A witness path could not be built to the required signature accuracy."""


class ConsistencyError(RuntimeError):
    """Lower bound exceeded upper bound: one of the two routes is wrong."""


@dataclass(frozen=True)
class GeodesicFamilyConfig:
    K: float = 3.0
    m: int = 32
    tol: float = 1e-8
    optimize: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass
class CCBounds:
    lower: float
    upper: float
    path: PiecewiseLinearPath
    segments: int
    violation: float = 0.0

    def to_json(self, path_ref: Optional[str] = None) -> dict:
        out = {"lower": self.lower, "upper": self.upper, "m": self.segments}
        if path_ref is not None:
            out["path"] = path_ref
        return out

    def save(self, json_path, csv_path) -> None:
        self.path.save(csv_path)
        Path(json_path).write_text(json.dumps(self.to_json(Path(csv_path).name), indent=1))


def _is_unit(g: Tensor, eps: float = 1e-15) -> bool:
    return all(np.max(np.abs(b)) <= eps for b in g.levels[1:])


def _path_from_increments(inc: np.ndarray, t0: float = 0.0, t1: float = 1.0) -> PiecewiseLinearPath:
    inc = np.asarray(inc, dtype=float)
    if inc.shape[0] == 0:
        return PiecewiseLinearPath([t0, t1], np.zeros((2, inc.shape[1])))
    return PiecewiseLinearPath.from_increments(inc, times=np.linspace(t0, t1, inc.shape[0] + 1))


# --------------------------------------------------------------------------
# Chow construction


def _gadget(word: Sequence[int], scale: float, sign: float, d: int) -> List[np.ndarray]:
    """Segments whose signature is exp(sign * scale^k [e_w1, [e_w2, ... e_wk]]) + higher order."""
    first = np.zeros(d)
    first[word[0]] = sign * scale
    if len(word) == 1:
        return [first]
    inner = _gadget(word[1:], scale, 1.0, d)
    return [first] + inner + [-first] + [-v for v in reversed(inner)]


def lie_monomials(block: np.ndarray, d: int, k: int):
    """Right-nested bracket expansion (word, coefficient) of a homogeneous Lie element.

    Uses L = r(L)/k with r the Dynkin map; words differing only in the order of
    their last two letters are merged since [x, y] = -[y, x].
    """
    L = block.reshape((d,) * k)
    out = []
    for w in np.ndindex(*(d,) * k):
        x, y = w[-2], w[-1]
        if x >= y:
            continue
        c = (L[w] - L[w[:-2] + (y, x)]) / k
        if c != 0.0:
            out.append((w, c))
    return out


def chow_decompose(g: Tensor, tol: float = 1e-8, max_iter: int = 200) -> PiecewiseLinearPath:
    """Piecewise-linear path on [0, 1] whose step-N signature is g."""
    if g.batch_shape:
        raise ValueError("chow_decompose takes a single element")
    if not is_group_like(g, 1e-8):
        raise ValueError("element is not group-like")
    d, N = g.d, g.N
    segs: List[np.ndarray] = []
    S = Tensor.unit(g.shape)  # signature of segs so far

    def append(new):
        nonlocal S
        segs.extend(new)
        S = multiply(S, increments_signature(np.array(new), N))

    if np.any(g.levels[1] != 0):
        append([np.array(g.levels[1], dtype=float)])

    def defect():
        return log(multiply(inverse(S), g))

    for k in range(2, N + 1):
        for _ in range(max_iter):
            block = defect().levels[k]
            if np.max(np.abs(block)) <= tol * 1e-3:
                break
            new = []
            for word, c in lie_monomials(block, d, k):
                new.extend(_gadget(word, abs(c) ** (1.0 / k), math.copysign(1.0, c), d))
            append(new)
        else:
            raise ConstructionFailure(f"level {k} defect {np.max(np.abs(defect().levels[k])):.3e} "
                                      f"after {max_iter} corrections")
    path = _path_from_increments(np.array(segs).reshape(-1, d))
    gap = float(np.max(np.abs(increments_signature(np.array(segs).reshape(-1, d), N).flat() - g.flat())))
    if gap > tol * max(1.0, float(np.max(np.abs(g.flat())))):
        raise ConstructionFailure(f"signature defect {gap:.3e} exceeds {tol:.1e}")
    return path


# --------------------------------------------------------------------------
# norms


def cc_norm_lower(g: Tensor) -> float:
    """max_k (k! |g^k|)^(1/k): a path of length L has |g^k| <= L^k / k!."""
    best = 0.0
    for k in range(1, g.N + 1):
        best = max(best, (math.factorial(k) * float(np.linalg.norm(g.levels[k]))) ** (1.0 / k))
    return best


def heisenberg_coordinates(g: Tensor):
    """(w, a): level-1 vector and signed area (entry (1,2) of log level 2)."""
    if g.d != 2 or g.N != 2 or g.batch_shape:
        raise ValueError("Heisenberg coordinates need a single element with d=2, N=2")
    L = log(g)
    return np.array(L.levels[1]), float(L.levels[2][1])


def _arc_angle(c: float, a: float) -> float:
    """Arc angle phi in (0, 2 pi) of the circular arc over a chord of length c enclosing area |a|."""
    target = abs(a) / c**2
    f = lambda phi: (phi - math.sin(phi)) / (8.0 * math.sin(phi / 2) ** 2) - target
    lo, hi = 1e-12, 2 * math.pi - 1e-12
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)


def heisenberg_cc_norm(g: Tensor) -> float:
    """Exact CC norm on the Heisenberg group: length of the shortest circular arc with the right area."""
    w, a = heisenberg_coordinates(g)
    c = float(np.linalg.norm(w))
    if a == 0.0:
        return c
    if c == 0.0:
        return 2.0 * math.sqrt(math.pi * abs(a))
    phi = _arc_angle(c, a)
    return c * phi / (2.0 * math.sin(phi / 2))


def heisenberg_arc_path(g: Tensor, m: int) -> PiecewiseLinearPath:
    """m-segment polygon inscribed in the geodesic arc of a Heisenberg element."""
    w, a = heisenberg_coordinates(g)
    c = float(np.linalg.norm(w))
    s = np.linspace(0.0, 1.0, m + 1)
    if a == 0.0:
        return PiecewiseLinearPath(s, s[:, None] * w[None, :])
    if c == 0.0:
        r = math.sqrt(abs(a) / math.pi)
        ang = math.pi / 2 - 2 * math.pi * s
        pts = np.stack([r * np.cos(ang), r * np.sin(ang) - r], axis=1)
        u = np.array([1.0, 0.0])
    else:
        phi = _arc_angle(c, a)
        r = c / (2 * math.sin(phi / 2))
        centre = np.array([c / 2, -r * math.cos(phi / 2)])
        ang = math.pi / 2 + phi / 2 - phi * s
        pts = centre + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts[0], pts[-1] = (0.0, 0.0), (c, 0.0)
        u = w / c
    rot = np.array([[u[0], -u[1]], [u[1], u[0]]])
    pts = pts @ rot.T
    area = float(log(increments_signature(np.diff(pts, axis=0), 2)).levels[2][1])
    if area * a < 0:
        # reflect across the chord direction
        refl = 2 * np.outer(u, u) - np.eye(2)
        pts = pts @ refl.T
    return PiecewiseLinearPath(s, pts)


# --------------------------------------------------------------------------
# constrained length minimisation


class _SignatureMap:
    """Signature of m consecutive segments and its Jacobian, for a fixed (d, N)."""

    def __init__(self, d: int, N: int):
        self.d, self.N = d, N
        self.eye = np.eye(d)

    def _exp_and_grad(self, V):
        d, N = self.d, self.N
        m = V.shape[0]
        E = [np.ones((m, 1)), V]
        dE = [np.zeros((m, d, 1)), np.broadcast_to(self.eye, (m, d, d))]
        for k in range(2, N + 1):
            E.append((E[k - 1][:, :, None] * V[:, None, :]).reshape(m, -1) / k)
            a = dE[k - 1][:, :, :, None] * V[:, None, None, :]
            b = E[k - 1][:, None, :, None] * self.eye[None, :, None, :]
            dE.append((a + b).reshape(m, d, -1) / k)
        return E, dE

    def evaluate(self, V, jacobian: bool = True):
        """Return the flat signature (levels 1..N) and, optionally, its Jacobian (D, m*d)."""
        m, d, N = V.shape[0], self.d, self.N
        E, dE = self._exp_and_grad(V)
        seg = [[blk[j] for blk in E] for j in range(m)]
        prefix = [[np.ones(1)] + [np.zeros(d**k) for k in range(1, N + 1)]]
        for j in range(m):
            prefix.append(_product_levels(prefix[-1], seg[j], N) if j else seg[0])
        S = np.concatenate(prefix[-1][1:])
        if not jacobian:
            return S, None
        suffix = [None] * (m + 1)
        suffix[m] = prefix[0]
        for j in range(m - 1, -1, -1):
            suffix[j] = _product_levels(seg[j], suffix[j + 1], N) if j < m - 1 else seg[m - 1]
        P = [np.stack([prefix[j][k] for j in range(m)])[:, None, :] for k in range(N + 1)]
        Q = [np.stack([suffix[j + 1][k] for j in range(m)])[:, None, :] for k in range(N + 1)]
        mid = _product_levels(P, dE, N, b_from=1)
        full = _product_levels(mid, Q, N, a_from=1)
        J = np.concatenate(full[1:], axis=-1)  # (m, d, D)
        return S, J.reshape(m * d, -1).T


def _subdivide(inc: np.ndarray, m: int) -> np.ndarray:
    """Split segments (longest first) until there are m of them; same signature."""
    q = inc.shape[0]
    if q >= m:
        return inc
    lengths = np.linalg.norm(inc, axis=1)
    pieces = np.ones(q, dtype=int)
    for _ in range(m - q):
        pieces[np.argmax(lengths / pieces)] += 1
    return np.concatenate([np.repeat(v[None, :] / n, n, axis=0) for v, n in zip(inc, pieces)])


def _project(sig: _SignatureMap, V, target, tol, max_iter=40):
    """Gauss-Newton projection onto the signature constraint using minimum-norm steps."""
    viol = np.inf
    for _ in range(max_iter):
        S, J = sig.evaluate(V.reshape(-1, sig.d))
        F = S - target
        viol = float(np.max(np.abs(F)))
        if viol <= tol:
            break
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        V = V + step
    return V, viol


def _minimise_length(sig: _SignatureMap, V0, target, eta=1e-4, rounds=5, mu0=10.0, maxiter=300):
    x = V0.ravel().copy()
    lam = np.zeros_like(target)
    mu = mu0
    d = sig.d

    def fun(x):
        V = x.reshape(-1, d)
        S, J = sig.evaluate(V)
        F = S - target
        sm = np.sqrt(np.sum(V**2, axis=1) + eta**2)
        val = np.sum(sm - eta) + lam @ F + 0.5 * mu * F @ F
        grad = (V / sm[:, None]).ravel() + J.T @ (lam + mu * F)
        return val, grad

    for _ in range(rounds):
        res = minimize(fun, x, jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": 1e-10})
        x = res.x
        S, _ = sig.evaluate(x.reshape(-1, d), jacobian=False)
        lam = lam + mu * (S - target)
        mu *= 10.0
    return x.reshape(-1, d)


def cc_norm_upper(g: Tensor, cfg: GeodesicFamilyConfig = GeodesicFamilyConfig(),
                  seeds: Sequence[PiecewiseLinearPath] = ()) -> CCBounds:
    """Length of a short path with signature g (and the matching lower bound).

    Seeds: the Chow path of g, the reversed Chow path of g^(-1), on the
    Heisenberg group the inscribed geodesic arc, plus any caller-supplied
    witnesses.  Each seed is made feasible, optionally shortened, and the
    shortest feasible result is returned.
    """
    if g.batch_shape:
        raise ValueError("cc_norm_upper takes a single element")
    d, N = g.d, g.N
    lower = cc_norm_lower(g)
    if _is_unit(g):
        return CCBounds(0.0, 0.0, _path_from_increments(np.zeros((0, d))), 0)
    scale = homogeneous_norm(g)
    h = dilate(1.0 / scale, g)
    target = np.concatenate(h.levels[1:])
    sig = _SignatureMap(d, N)

    candidates = [chow_decompose(h).increments(),
                  -chow_decompose(inverse(h)).increments()[::-1]]
    if d == 2 and N == 2:
        candidates.append(heisenberg_arc_path(h, cfg.m).increments())
    for s in seeds:
        candidates.append(s.increments() / scale)

    ptol = cfg.tol * 1e-2 / max(1.0, scale**N)
    best = None
    for inc in candidates:
        V = _subdivide(inc, cfg.m)
        V, viol = _project(sig, V.ravel(), target, ptol)
        V = V.reshape(-1, d)
        results = [(V, viol)]
        if cfg.optimize:
            W = _minimise_length(sig, V, target)
            W, wviol = _project(sig, W.ravel(), target, ptol)
            results.append((W.reshape(-1, d), wviol))
        for W, v in results:
            if v > ptol:
                continue
            L = float(np.linalg.norm(W, axis=1).sum())
            if best is None or L < best[0]:
                best = (L, W)
    if best is None:
        raise ConstructionFailure("no seed could be made feasible to the requested tolerance")

    inc = best[1] * scale
    path = _path_from_increments(inc)
    achieved = increments_signature(inc, N)
    violation = float(np.max(np.abs(achieved.flat() - g.flat())))
    if violation > cfg.tol * max(1.0, float(np.max(np.abs(g.flat())))):
        raise ConstructionFailure(f"constraint violation {violation:.3e} exceeds tol {cfg.tol:.1e}")
    upper = path.length()
    if lower > upper * (1 + 1e-9):
        raise ConsistencyError(f"lower bound {lower} exceeds upper bound {upper}")
    return CCBounds(lower, upper, path, inc.shape[0], violation)


def quick_witness(g: Tensor, cfg: GeodesicFamilyConfig) -> np.ndarray:
    """Feasible short path without length optimisation.

    On the Heisenberg group the inscribed geodesic arc is projected onto the
    constraint; elsewhere the Chow path is used as is.
    """
    if g.d == 2 and g.N == 2:
        scale = homogeneous_norm(g)
        h = dilate(1.0 / scale, g)
        V, viol = _project(_SignatureMap(2, 2), heisenberg_arc_path(h, cfg.m).increments().ravel(),
                           np.concatenate(h.levels[1:]), cfg.tol * 1e-2 / max(1.0, scale**2))
        if viol <= cfg.tol * 1e-2 / max(1.0, scale**2):
            return V.reshape(-1, 2) * scale
    return chow_decompose(g, tol=cfg.tol).increments()


# --------------------------------------------------------------------------
# per-cell witness paths for a rough path grid


@dataclass
class GeodesicFamily:
    paths: List[PiecewiseLinearPath]
    lengths: np.ndarray
    budgets: np.ndarray
    flagged: np.ndarray
    achieved_K: float
    hoelder: float
    warnings: List[str] = field(default_factory=list)


def geodesic_family(x: RoughPathGrid, cfg: GeodesicFamilyConfig = GeodesicFamilyConfig()) -> GeodesicFamily:
    """For every cell [s, t] a path with signature x_{s,t}, time-parametrised on [s, t].

    Cells whose witness exceeds K * ||x||_hoelder * (t-s)^(1/p) are flagged, not rejected.
    """
    if x.sample_shape:
        raise ValueError("geodesic_family takes a single grid")
    M = hoelder_norm(x)
    paths, lengths, budgets = [], [], []
    for i in range(x.n_cells):
        s, t = x.times[i], x.times[i + 1]
        g = x.cell(i)
        if _is_unit(g):
            inc = np.zeros((1, x.d))
        elif cfg.optimize:
            inc = cc_norm_upper(g, cfg).path.increments()
        else:
            inc = quick_witness(g, cfg)
        paths.append(_path_from_increments(inc, s, t))
        lengths.append(float(np.linalg.norm(inc, axis=1).sum()))
        budgets.append(cfg.K * M * (t - s) ** (1.0 / x.p))
    lengths, budgets = np.array(lengths), np.array(budgets)
    flagged = lengths > budgets * (1 + 1e-12)
    unit = M * np.diff(x.times) ** (1.0 / x.p)
    achieved = float(np.max(np.where(unit > 0, lengths / np.where(unit > 0, unit, 1.0), 0.0)))
    warnings = [f"cell {i}: length {lengths[i]:.4g} exceeds budget {budgets[i]:.4g}" for i in np.flatnonzero(flagged)]
    return GeodesicFamily(paths, lengths, budgets, flagged, achieved, M, warnings)
