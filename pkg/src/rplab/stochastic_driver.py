"""Enhanced Brownian motion, dyadic approximations, and Monte Carlo tail / L^q experiments.

Randomness: sample i of an experiment with seed s and stream tag k draws from
Philox seeded by SeedSequence(s, spawn_key=(k, i)).  Every sample therefore
has its own counter-based stream, and results do not depend on how samples
are grouped into chunks or spread over worker processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .euler_scheme import VectorFieldFamily, euler_increment
from .path_signature import PiecewiseLinearPath, RoughPathGrid, hoelder_norm, segment_signature
from .rde_lab import check_depth, ode_solve_reference
from .tensor_group import AlgebraShape, Tensor, multiply

# stream tags, so different experiments never share random numbers
TAG_EBM = 1
TAG_AZENCOTT = 2
TAG_LQ = 3


def sample_rng(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(tag, index))))


def brownian_increments(d: int, steps: int, horizon: float, seed: int, indices: Sequence[int],
                        tag: int = TAG_EBM) -> np.ndarray:
    """Gaussian increments with variance horizon/steps, shape (len(indices), steps, d)."""
    sd = math.sqrt(horizon / steps)
    return np.stack([sample_rng(seed, tag, int(i)).standard_normal((steps, d)) * sd for i in indices])


def default_workers() -> int:
    return os.cpu_count() or 1


def run_chunked(fn: Callable, indices: Sequence[int], chunk: int = 256, workers: int = 1) -> list:
    """Apply ``fn`` to consecutive chunks of sample indices; results come back in index order."""
    indices = list(indices)
    chunks = [indices[i:i + chunk] for i in range(0, len(indices), chunk)]
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


# --------------------------------------------------------------------------
# EBM samples


@dataclass
class EBMSample:
    fine_skeleton: PiecewiseLinearPath
    grid: RoughPathGrid
    seed: int
    p: float
    indices: np.ndarray
    fine_level: int


def ebm_sample(d: int = 2, fine_level: int = 12, p: float = 2.5, seed: int = 0, grid_level: int = 8,
               indices: Optional[Sequence[int]] = None, horizon: float = 1.0) -> EBMSample:
    """Brownian motion on a dyadic grid of 2^fine_level steps, lifted to depth 2 over 2^grid_level cells.

    With ``indices`` a batch of independent samples is drawn (leading axis).
    """
    if not 2 < p < 3:
        raise ValueError(f"enhanced Brownian motion needs p in (2, 3), got {p}")
    if fine_level < grid_level:
        raise ValueError("the fine grid must be at least as fine as the cell grid")
    single = indices is None
    idx = np.array([0] if single else list(indices))
    steps = 2**fine_level
    inc = brownian_increments(d, steps, horizon, seed, idx)
    times = np.linspace(0.0, horizon, steps + 1)
    sk = PiecewiseLinearPath.from_increments(inc[0] if single else inc, times=times)
    grid = RoughPathGrid.from_path(sk, np.linspace(0.0, horizon, 2**grid_level + 1), 2, p)
    return EBMSample(sk, grid, seed, p, idx, fine_level)


# --------------------------------------------------------------------------
# Gauss-tail probe


@dataclass
class GaussTailReport:
    samples: int
    point_mass: bool
    alpha: float  # minus the slope of log P(M > m) against m^2
    slope_m2: float
    curvature: float  # quadratic coefficient of log P(M > m) in m; negative = concave
    moment_orders: List[float]
    moments: List[float]  # E[M^q]^(1/q)
    moment_growth: float  # slope of log moment against log q
    passed: bool
    note: str = ""

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gauss_tail_probe(values, q_max: float = 8.0, min_samples: int = 1000,
                     quantiles: Sequence[float] = tuple(np.linspace(0.5, 0.99, 25))) -> GaussTailReport:
    """Evidence that M has Gauss tails, from i.i.d. samples of M >= 0.

    Fits log P(M > m) against m^2 at empirical quantile levels (slope must be
    negative) and checks that E[M^q]^(1/q), q = 1..q_max, grows no faster than
    q^0.6 (Gaussian: q^0.5).
    """
    M = np.asarray(values, dtype=float).ravel()
    n = M.size
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    if not np.all(np.isfinite(M)):
        raise ValueError("samples must be finite")
    qs = np.arange(1, int(q_max) + 1, dtype=float)
    if np.ptp(M) <= 1e-12 * max(1.0, abs(M.max())):
        mom = [float(abs(M[0]))] * len(qs)
        return GaussTailReport(n, True, float("inf"), float("-inf"), 0.0, qs.tolist(), mom, 0.0, True,
                               "point mass: degenerate tail")
    Ms = np.sort(M)
    m = np.quantile(M, quantiles)
    surv = 1.0 - np.searchsorted(Ms, m, side="right") / n
    keep = surv > 0
    m, surv = m[keep], surv[keep]
    slope_m2 = float(np.polyfit(m**2, np.log(surv), 1)[0])
    curvature = float(np.polyfit(m, np.log(surv), 2)[0])
    scale = Ms[-1]
    mom = np.array([np.mean((M / scale) ** q) ** (1.0 / q) * scale for q in qs])
    growth = float(np.polyfit(np.log(qs), np.log(mom), 1)[0])
    passed = bool(slope_m2 < 0 and np.all(np.isfinite(mom)) and growth <= 0.6)
    return GaussTailReport(n, False, -slope_m2, slope_m2, curvature, qs.tolist(), mom.tolist(), growth, passed)


# --------------------------------------------------------------------------
# Azencott / Castell tail experiment


def wilson_interval(k, n, z: float = 1.959963984540054):
    """Centre and half-width of the Wilson score interval."""
    k = np.asarray(k, float)
    phat = k / n
    denom = 1 + z**2 / n
    centre = (phat + z**2 / (2 * n)) / denom
    hw = z * np.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2)) / denom
    return centre, hw


@dataclass
class TailReport:
    t_grid: np.ndarray
    R_grid: np.ndarray
    counts: np.ndarray  # (len(t), len(R)), normalisation t^((N+1)/2)
    probabilities: np.ndarray
    halfwidths: np.ndarray
    samples: int
    N: int
    p: float
    counts_p_normalised: np.ndarray = None  # normalisation t^((N+1)/p)
    monotone: bool = True
    collapse: bool = True
    castell: bool = True
    castell_c: List[float] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.collapse and self.castell

    def to_json(self) -> dict:
        return {"t_grid": np.asarray(self.t_grid).tolist(), "R_grid": np.asarray(self.R_grid).tolist(),
                "counts": np.asarray(self.counts).tolist(), "probabilities": np.asarray(self.probabilities).tolist(),
                "halfwidths": np.asarray(self.halfwidths).tolist(), "samples": self.samples, "N": self.N,
                "p": self.p, "counts_p_normalised": None if self.counts_p_normalised is None
                else np.asarray(self.counts_p_normalised).tolist(),
                "monotone": self.monotone, "collapse": self.collapse, "castell": self.castell,
                "castell_c": self.castell_c, "notes": self.notes, "passed": self.passed}


def _running_signatures(inc: np.ndarray, N: int) -> Tensor:
    """S_N(x)_{0, t_j} for j = 1..steps; batch (..., steps)."""
    shape = AlgebraShape(inc.shape[-1], N)
    segs = segment_signature(inc, shape)
    cur = Tensor([b[..., 0, :] for b in segs.levels], shape.d)
    out = [cur]
    for j in range(1, inc.shape[-2]):
        cur = multiply(cur, Tensor([b[..., j, :] for b in segs.levels], shape.d))
        out.append(cur)
    return Tensor([np.stack([o.levels[k] for o in out], axis=-2) for k in range(N + 1)], shape.d)


def euler_sup_defect(V: VectorFieldFamily, N: int, inc: np.ndarray, horizon: float, y0) -> np.ndarray:
    """sup_s |y_{0,s} - I[y0, N, S_N(x)_{0,s}]| over the fine points of a batch of piecewise-linear drivers."""
    times = np.linspace(0.0, horizon, inc.shape[-2] + 1)
    path = PiecewiseLinearPath.from_increments(inc, times=times)
    y0 = np.asarray(y0, float)
    ref = ode_solve_reference(V, y0, path, certify=False).states[..., 1:, :]
    sig = _running_signatures(inc, N)
    pred = euler_increment(V, N, sig, y0).value
    return np.linalg.norm(ref - y0 - pred, axis=-1).max(axis=-1)


class _AzencottChunk:
    """Picklable per-chunk worker."""

    def __init__(self, V, N, t, steps, seed, y0, t_index):
        self.V, self.N, self.t, self.steps, self.seed, self.y0, self.t_index = V, N, t, steps, seed, y0, t_index

    def __call__(self, idx):
        inc = np.stack([sample_rng(self.seed, TAG_AZENCOTT, self.t_index * 10**9 + int(i))
                        .standard_normal((self.steps, self.V.d)) * math.sqrt(self.t / self.steps) for i in idx])
        return euler_sup_defect(self.V, self.N, inc, self.t, self.y0)


def _castell_envelope(R, phat, hw, a):
    """Smallest c with c exp(-R^a / c) >= phat - hw at every R but the largest; then test the largest R."""
    need = phat - hw
    cs = []
    for r, v in zip(R[:-1], need[:-1]):
        if v <= 0:
            continue
        f = lambda c: math.log(c) - r**a / c - math.log(v)
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
        cs.append(brentq(f, 1e-12, hi, xtol=1e-14))
    if not cs:
        return True, float("nan")
    c = max(cs)
    env = c * math.exp(-R[-1] ** a / c)
    return bool(phat[-1] - hw[-1] <= env), c


def azencott_tail_experiment(V: VectorFieldFamily, N: int, t_grid: Sequence[float], R_grid: Sequence[float],
                             samples: int = 10000, seed: int = 0, p: float = 2.5, steps: int = 256,
                             y0=None, workers: int = 1, chunk: int = 1000) -> TailReport:
    """Empirical P(sup_{s<=t} |y_{0,s} - I[y0, N, S_N(B)_{0,s}]| > R t^((N+1)/2)) for Brownian drivers.

    Each t uses its own independent Brownian paths with ``steps`` fine steps on
    [0, t]; the reference solution is the ODE solution along that fine path.
    """
    if not 2 < p < 3:
        raise ValueError(f"p must lie in (2, 3), got {p}")
    check_depth(N, p, strict=True)
    t_grid = np.asarray(t_grid, float)
    R_grid = np.asarray(R_grid, float)
    if np.any(np.diff(R_grid) <= 0):
        raise ValueError("R grid must be increasing")
    y0 = np.zeros(V.e) if y0 is None else np.asarray(y0, float)
    counts = np.zeros((t_grid.size, R_grid.size), dtype=int)
    counts_p = np.zeros_like(counts)
    for ti, t in enumerate(t_grid):
        parts = run_chunked(_AzencottChunk(V, N, float(t), steps, seed, y0, ti), range(samples), chunk, workers)
        D = np.concatenate(parts)
        counts[ti] = (D[:, None] > R_grid[None, :] * t ** ((N + 1) / 2)).sum(axis=0)
        counts_p[ti] = (D[:, None] > R_grid[None, :] * t ** ((N + 1) / p)).sum(axis=0)
    phat = counts / samples
    _, hw = wilson_interval(counts, samples)
    notes = []
    # (a) monotone decay in R within confidence
    monotone = bool(np.all(np.diff(phat, axis=1) <= hw[:, 1:] + hw[:, :-1]))
    # (c) near-collapse across t under Brownian scaling
    collapse = True
    for i in range(1, t_grid.size):
        gap = np.abs(phat[i] - phat[0])
        width = 3 * np.sqrt(hw[i] ** 2 + hw[0] ** 2)
        if np.any(gap > width):
            collapse = False
            notes.append(f"t={t_grid[i]:g} departs from t={t_grid[0]:g} by up to {gap.max():.4f} "
                         f"(allowed {width[np.argmax(gap - width)]:.4f})")
    # (b) Castell envelope with a = 2/(N+1)
    a = 2.0 / (N + 1)
    castell, cs = True, []
    for i in range(t_grid.size):
        ok, c = _castell_envelope(R_grid, phat[i], hw[i], a)
        castell &= ok
        cs.append(c)
    if np.all(counts == 0):
        notes.append("zero exceedances at all R: only upper confidence bounds are informative")
    return TailReport(t_grid, R_grid, counts, phat, hw, samples, N, p, counts_p, monotone, collapse,
                      bool(castell), cs, notes)


# --------------------------------------------------------------------------
# dyadic approximations and L^q convergence


@dataclass
class DyadicApproximation:
    level: int
    path: PiecewiseLinearPath
    lifted: RoughPathGrid


def dyadic_approximation(sample: EBMSample, n: int, grid_times=None) -> DyadicApproximation:
    """Interpolation of the skeleton at the dyadic points D_n, with its depth-2 lift.

    The lift is taken over ``grid_times`` (default: D_n itself).
    """
    L = sample.fine_level
    if n > L:
        raise ValueError(f"level {n} is finer than the skeleton level {L}")
    if n < 0:
        raise ValueError("level must be nonnegative")
    step = 2 ** (L - n)
    path = sample.fine_skeleton.subsample(np.arange(0, 2**L + 1, step))
    times = path.times if grid_times is None else np.asarray(grid_times, float)
    if grid_times is not None:
        path_fine = _refine(path, times)
    else:
        path_fine = path
    lifted = RoughPathGrid.from_path(path_fine, times, 2, sample.p)
    return DyadicApproximation(n, path, lifted)


def _refine(path: PiecewiseLinearPath, times) -> PiecewiseLinearPath:
    """Same path with extra (collinear) breakpoints at ``times``."""
    allt = np.union1d(path.times, times)
    pts = path.at(allt)
    return PiecewiseLinearPath(allt, pts)


def path_hoelder(y: np.ndarray, times: np.ndarray, p: float) -> np.ndarray:
    """sup over grid pairs of |y_t - y_s| / (t - s)^(1/p); y has shape (..., len(times), e)."""
    best = np.zeros(y.shape[:-2])
    n = times.size
    for r in range(1, n):
        diff = np.linalg.norm(y[..., r:, :] - y[..., :-r, :], axis=-1)
        best = np.maximum(best, (diff / (times[r:] - times[:-r]) ** (1.0 / p)).max(axis=-1))
    return best


@dataclass
class LqReport:
    n_list: List[int]
    q_list: List[float]
    moments: np.ndarray  # (len(q), len(n)) E[Z_n^q]^(1/q)
    halfwidths: np.ndarray
    decreasing: Dict[float, bool]
    decay_rates: Dict[float, float]
    tail: GaussTailReport
    samples: int
    p: float

    @property
    def passed(self) -> bool:
        return all(self.decreasing.values()) and self.tail.passed

    def to_json(self) -> dict:
        return {"n_list": self.n_list, "q_list": self.q_list, "moments": self.moments.tolist(),
                "halfwidths": self.halfwidths.tolist(), "decreasing": {str(k): v for k, v in self.decreasing.items()},
                "decay_rates": {str(k): v for k, v in self.decay_rates.items()}, "tail": self.tail.to_json(),
                "samples": self.samples, "p": self.p, "passed": self.passed}


class _LqChunk:
    def __init__(self, V, n_list, p, seed, y0, fine_level):
        self.V, self.n_list, self.p, self.seed, self.y0, self.fine_level = V, n_list, p, seed, y0, fine_level

    def __call__(self, idx):
        n_max = max(self.n_list)
        L = self.fine_level
        inc = brownian_increments(self.V.d, 2**L, 1.0, self.seed, idx, tag=TAG_LQ)
        sk = PiecewiseLinearPath.from_increments(inc)
        common = np.linspace(0.0, 1.0, 2**n_max + 1)
        sols, norms = {}, {}
        for n in self.n_list:
            path = sk.subsample(np.arange(0, 2**L + 1, 2 ** (L - n)))
            fine = _refine(path, common)
            sols[n] = ode_solve_reference(self.V, self.y0, fine, certify=False).at_times(common)
            norms[n] = hoelder_norm(RoughPathGrid.from_path(fine, common, 2, self.p))
        Z = np.stack([path_hoelder(sols[n] - sols[n_max], common, self.p) for n in self.n_list], axis=-1)
        H = np.stack([norms[n] for n in self.n_list], axis=-1)
        return Z, H


def lq_convergence_experiment(V: VectorFieldFamily, q_list: Sequence[float], n_list: Sequence[int],
                              samples: int = 1000, seed: int = 0, p: float = 2.9, y0=None,
                              workers: int = 1, chunk: int = 250) -> LqReport:
    """E[Z_n^q]^(1/q) with Z_n the 1/p-Hölder norm of pi(x_n) - pi(x_nmax) on the grid D_nmax.

    x_n is the piecewise-linear interpolation of one Brownian path at D_n; the
    finest level stands in for the limit.  Also probes the Gauss tail of
    sup_n ||S_2(x_n)||_{1/p-Hölder}.
    """
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 2:
        raise ValueError("need at least two levels")
    if not 2 < p < 3:
        raise ValueError(f"p must lie in (2, 3), got {p}")
    y0 = np.zeros(V.e) if y0 is None else np.asarray(y0, float)
    parts = run_chunked(_LqChunk(V, n_list, p, seed, y0, max(n_list)), range(samples), chunk, workers)
    Z = np.concatenate([z for z, _ in parts])
    H = np.concatenate([h for _, h in parts])
    qs = [float(q) for q in q_list]
    mom = np.zeros((len(qs), len(n_list)))
    hws = np.zeros_like(mom)
    z = norm.ppf(0.975)
    for a, q in enumerate(qs):
        Zq = Z**q
        m = Zq.mean(axis=0)
        se = Zq.std(axis=0, ddof=1) / math.sqrt(samples)
        mom[a] = m ** (1.0 / q)
        with np.errstate(divide="ignore", invalid="ignore"):
            hws[a] = np.where(m > 0, z * se * m ** (1.0 / q - 1.0) / q, 0.0)
    decreasing, rates = {}, {}
    for a, q in enumerate(qs):
        # one confidence width of slack between neighbouring levels
        ok = all(mom[a, i + 1] < mom[a, i] + max(hws[a, i], hws[a, i + 1]) for i in range(len(n_list) - 1))
        decreasing[q] = bool(ok)
        pos = mom[a, :-1] > 0
        rates[q] = float(np.polyfit(np.array(n_list[:-1])[pos], np.log2(mom[a, :-1][pos]), 1)[0]) \
            if pos.sum() >= 2 else float("nan")
    tail = gauss_tail_probe(H.max(axis=-1))
    return LqReport(n_list, qs, mom, hws, decreasing, rates, tail, samples, p)
