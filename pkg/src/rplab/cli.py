"""Command line front end: ``rplab <experiment> [--config file.yaml] [flags]``.

Every run writes ``<kind>_summary.json`` (config echo, results, assertions),
``<kind>_plot.csv`` (tidy plot data) and ``<kind>_meta.json`` (timestamps and
versions) into ``--out``.  Exit status: 0 when every asserted property holds,
2 when one fails, 1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .euler_scheme import get_family, load_family
from .geodesic import GeodesicFamilyConfig, cc_norm_upper, heisenberg_cc_norm
from .path_signature import PiecewiseLinearPath, RoughPathGrid, increments_signature, path_signature
from .rde_lab import (DavieRecursion, RateReport, davie_rate_experiment, gamma_limit_bound_check,
                      scheme_agreement_experiment, smooth_driver, smooth_lengths)
from .stochastic_driver import (TailReport, azencott_tail_experiment, default_workers, ebm_sample,
                                lq_convergence_experiment)
from .tensor_group import AlgebraShape, Tensor, dilate, exp, inverse, is_group_like, log, multiply


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class Outcome:
    results: dict
    assertions: List[Assertion] = field(default_factory=list)
    plot: Optional[object] = None
    extra_files: Dict[str, PiecewiseLinearPath] = field(default_factory=dict)


# --------------------------------------------------------------------------
# plot data


def emit_plotdata(report) -> str:
    """Tidy CSV for a RateReport, a TailReport or nothing (header only)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(report, TailReport):
        w.writerow(["t", "R", "p_hat", "ci_halfwidth"])
        for i, t in enumerate(report.t_grid):
            for j, R in enumerate(report.R_grid):
                w.writerow([repr(float(t)), repr(float(R)), repr(float(report.probabilities[i, j])),
                            repr(float(report.halfwidths[i, j]))])
        return buf.getvalue()
    w.writerow(["log_length", "log_error", "fit"])
    if isinstance(report, RateReport):
        errs = report.mean_errors()
        for l, e in zip(report.interval_lengths, errs):
            ll = math.log(l)
            le = math.log(e) if e > 0 else float("-inf")
            w.writerow([repr(ll), repr(le), repr(report.fitted_intercept + report.fitted_slope * ll)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# experiments


def _fields(cfg):
    name = cfg["fields"]
    if Path(str(name)).suffix in (".json", ".yaml", ".yml") or Path(str(name)).exists():
        return load_family(name)
    try:
        return get_family(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None


def _y0(cfg, V):
    y0 = cfg.get("y0")
    if y0 is None:
        return np.full(V.e, 0.5)
    y0 = np.asarray(y0, float)
    if y0.shape != (V.e,):
        raise ConfigError(f"y0 must have {V.e} entries")
    return y0


def run_selfcheck(cfg) -> Outcome:
    d, N, cases = int(cfg["d"]), int(cfg["N"]), int(cfg["cases"])
    shape = AlgebraShape(d, N)
    rng = np.random.default_rng(cfg["seed"])

    def lie(batch):
        levels = [np.zeros(batch + (1,))] + [rng.normal(size=batch + (d**k,)) / 2**k for k in range(1, N + 1)]
        return Tensor(levels, d)

    def group(batch):
        # signatures of random three-segment paths are group-like by construction
        return increments_signature(rng.normal(size=batch + (3, d)) / 2, N)

    b = (cases,)
    g, h, k = group(b), group(b), group(b)
    unit = Tensor.unit(shape, b)
    rel = lambda x, y: float(np.max(np.abs(x.flat() - y.flat())) / max(1.0, np.max(np.abs(y.flat()))))
    checks = [
        ("associativity", rel(multiply(multiply(g, h), k), multiply(g, multiply(h, k))), 1e-12),
        ("inverse", rel(multiply(g, inverse(g)), unit), 1e-12),
        ("exp_log_round_trip", rel(exp(log(g)), g), 1e-12),
        ("dilation_homomorphism", rel(dilate(0.7, multiply(g, h)), multiply(dilate(0.7, g), dilate(0.7, h))), 1e-12),
    ]
    L = lie(b)
    checks.append(("log_exp_round_trip", rel(log(exp(L)), L), 1e-12))
    out = Outcome({"cases": cases, "d": d, "N": N})
    for name, err, tol in checks:
        out.results[name] = err
        out.assertions.append(Assertion(name, err <= tol, f"max relative error {err:.2e}"))
    gl = is_group_like(g)
    out.assertions.append(Assertion("group_like", bool(np.all(gl)), f"{int(np.sum(gl))}/{cases} group-like"))
    # Chen identity on random paths
    x = PiecewiseLinearPath(np.linspace(0, 1, 17), np.cumsum(rng.normal(size=(17, d)), axis=0))
    s, u, t = np.sort(rng.uniform(size=3))
    chen = rel(multiply(path_signature(x, s, u, N=N), path_signature(x, u, t, N=N)), path_signature(x, s, t, N=N))
    out.results["chen"] = chen
    out.assertions.append(Assertion("chen_identity", chen <= 1e-12, f"defect {chen:.2e}"))
    return out


def run_sig(cfg) -> Outcome:
    if not cfg.get("input"):
        raise ConfigError("sig needs --input (path CSV)")
    x = PiecewiseLinearPath.load(cfg["input"])
    s = x.times[0] if cfg.get("s") is None else float(cfg["s"])
    t = x.times[-1] if cfg.get("t") is None else float(cfg["t"])
    g = path_signature(x, s, t, N=int(cfg["N"]))
    ok = bool(is_group_like(g))
    return Outcome({"signature": g.to_json(), "s": s, "t": t}, [Assertion("group_like", ok)])


def run_ccnorm(cfg) -> Outcome:
    if not cfg.get("input"):
        raise ConfigError("ccnorm needs --input (group element JSON)")
    g = Tensor.from_json(json.loads(Path(cfg["input"]).read_text()))
    gcfg = GeodesicFamilyConfig(K=float(cfg["K"]), m=int(cfg["m"]), tol=float(cfg["tol"]))
    bounds = cc_norm_upper(g, gcfg)
    out = Outcome({"ccbounds": bounds.to_json("ccnorm_path.csv")})
    out.extra_files = {"ccnorm_path.csv": bounds.path}
    out.assertions.append(Assertion("lower_le_upper", bounds.lower <= bounds.upper * (1 + 1e-9),
                                    f"{bounds.lower:.6g} <= {bounds.upper:.6g}"))
    if g.d == 2 and g.N == 2:
        exact = heisenberg_cc_norm(g)
        out.results["heisenberg_exact"] = exact
        out.assertions.append(Assertion("heisenberg_sandwich",
                                        bounds.lower <= exact * (1 + 1e-9) and exact <= bounds.upper * (1 + 1e-9),
                                        f"{bounds.lower:.6g} <= {exact:.6g} <= {bounds.upper:.6g}"))
    return out


def run_euler_rate(cfg) -> Outcome:
    V = _fields(cfg)
    N, p = int(cfg["N"]), float(cfg["p"])
    if p != 1.0:
        raise ConfigError("euler-rate uses a smooth driver (p = 1); use davie-rate for rough drivers")
    lengths = cfg.get("lengths") or smooth_lengths()
    mesh = min(lengths)
    x = smooth_driver(V.d, int(cfg["fine_level"]))
    grid = RoughPathGrid.from_path(x, np.linspace(0.0, 1.0, int(round(1 / mesh)) + 1), 1, 1.0)
    rep = davie_rate_experiment(V, N, 1.0, grid, lengths=lengths, y0=_y0(cfg, V))
    target = N + 1 - 0.1
    return Outcome({"report": rep.to_json()},
                   [Assertion("smooth_rate", rep.fitted_slope >= target,
                              f"slope {rep.fitted_slope:.3f} >= {target:.2f}")], rep)


def run_davie_rate(cfg) -> Outcome:
    V = _fields(cfg)
    N, p = int(cfg["N"]), float(cfg["p"])
    samples = int(cfg["samples"])
    s = ebm_sample(V.d, int(cfg["fine_level"]), p, seed=cfg["seed"], grid_level=int(cfg["grid_level"]),
                   indices=range(samples))
    rep = davie_rate_experiment(V, N, p, s.grid, lengths=cfg.get("lengths"), y0=_y0(cfg, V))
    target = (N + 1) / 2 - 0.2
    out = Outcome({"report": rep.to_json()}, [
        Assertion("brownian_rate", rep.typical_slope >= target,
                  f"typical slope {rep.typical_slope:.3f} >= {target:.2f} (sup slope {rep.fitted_slope:.3f})")], rep)
    if cfg.get("agreement_samples"):
        lv = int(cfg["agreement_level"])
        lengths = [2.0**-j for j in range(lv - 5, lv + 1)]
        a = ebm_sample(V.d, lv + 6, p, seed=cfg["seed"], grid_level=lv, indices=range(int(cfg["agreement_samples"])))
        agr = scheme_agreement_experiment(V, N, p, a.grid, GeodesicFamilyConfig(m=16, optimize=False),
                                          lengths=lengths, y0=_y0(cfg, V))
        goal = (N + 1) / p - 0.15
        out.results["agreement"] = agr.to_json()
        out.assertions.append(Assertion("scheme_agreement", agr.fitted_slope >= goal,
                                        f"sup slope {agr.fitted_slope:.3f} >= {goal:.3f}"))
    return out


def run_gamma_bound(cfg) -> Outcome:
    p_list = cfg["p"] if isinstance(cfg["p"], list) else [cfg["p"]]
    out = Outcome({"reports": []})
    for p in p_list:
        p = float(p)
        N = int(cfg["N"]) if cfg.get("N") else int(math.floor(p))
        if not N > p - 1:
            raise ConfigError(f"need N > p - 1, got N={N}, p={p}")
        rep = gamma_limit_bound_check(DavieRecursion(p, N), [float(b) for b in cfg["b"]])
        out.results["reports"].append(rep.to_json())
        out.assertions.append(Assertion(f"gamma_bound[p={p:g},N={N}]", rep.passed))
        out.assertions.append(Assertion(f"quadratic_growth[p={p:g},N={N}]", rep.quadratic_coefficient <= 1.6,
                                        f"coefficient {rep.quadratic_coefficient:.3f} <= 1.6"))
    return out


def run_azencott(cfg) -> Outcome:
    V = _fields(cfg)
    N, p = int(cfg["N"]), float(cfg["p"])
    if not 2 < p < 3:
        raise ConfigError(f"azencott needs p in (2, 3), got {p}")
    if N < math.floor(p) + 1:
        raise ConfigError(f"azencott needs N >= [p] + 1 = {math.floor(p) + 1}, got {N}")
    rep = azencott_tail_experiment(V, N, cfg["t"], cfg["R"], samples=int(cfg["samples"]), seed=cfg["seed"], p=p,
                                   steps=int(cfg["steps"]), y0=_y0(cfg, V), workers=cfg["workers"])
    return Outcome({"report": rep.to_json()}, [
        Assertion("monotone_decay", rep.monotone),
        Assertion("curve_collapse", rep.collapse, "; ".join(rep.notes)),
        Assertion("castell_envelope", rep.castell),
    ], rep)


def run_lq_conv(cfg) -> Outcome:
    V = _fields(cfg)
    rep = lq_convergence_experiment(V, cfg["q"], cfg["n"], samples=int(cfg["samples"]), seed=cfg["seed"],
                                    p=float(cfg["p"]), y0=_y0(cfg, V), workers=cfg["workers"])
    out = Outcome({"report": rep.to_json()})
    for q, ok in rep.decreasing.items():
        out.assertions.append(Assertion(f"decreasing[q={q:g}]", ok))
    out.assertions.append(Assertion("gauss_tail", rep.tail.passed))
    return out


# kind -> (runner, defaults, help)
EXPERIMENTS: Dict[str, tuple] = {
    "selfcheck": (run_selfcheck, {"d": 2, "N": 3, "cases": 1000}, "algebra and Chen identity property checks"),
    "sig": (run_sig, {"input": None, "N": 2, "s": None, "t": None}, "step-N signature of a CSV path"),
    "ccnorm": (run_ccnorm, {"input": None, "m": 32, "K": 3.0, "tol": 1e-8}, "CC norm bounds of a group element"),
    "euler-rate": (run_euler_rate, {"fields": "linear2x2", "N": 2, "p": 1.0, "fine_level": 12, "lengths": None,
                                    "y0": None}, "Euler defect rate for a smooth driver"),
    "davie-rate": (run_davie_rate, {"fields": "linear2x2", "N": 2, "p": 2.5, "samples": 50, "fine_level": 14,
                                    "grid_level": 8, "lengths": None, "y0": None, "agreement_samples": 0,
                                    "agreement_level": 10}, "Euler defect rate for Brownian rough drivers"),
    "gamma-bound": (run_gamma_bound, {"p": [2.1, 2.5, 3.0], "N": None, "b": [math.e, 10.0, 1e3, 1e6]},
                    "limit of the Gamma recursion against its bounds"),
    "azencott": (run_azencott, {"fields": "linear2x2", "N": 3, "p": 2.5, "t": [2.0**-6, 2.0**-4],
                                "R": [1.0, 2.0, 4.0, 8.0], "samples": 10000, "steps": 256, "y0": None},
                 "tail of the Euler sup defect"),
    "lq-conv": (run_lq_conv, {"fields": "linear2x2", "p": 2.9, "q": [1.0, 2.0, 4.0], "n": [3, 4, 5, 6, 7, 8],
                              "samples": 1000, "y0": None}, "L^q convergence of dyadic approximations"),
}

_LIST_KEYS = {"lengths", "t", "R", "q", "n", "b", "y0"}


def _parse_value(text: str):
    return yaml.safe_load(text)


def _parse_list(text: str):
    return [yaml.safe_load(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rplab", description="Rough path numerics experiments")
    ap.add_argument("--version", action="version", version=f"rplab {__version__}")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind, (_, defaults, help_) in EXPERIMENTS.items():
        sp = sub.add_parser(kind, help=help_)
        sp.add_argument("--config", help="YAML file; flags override its values")
        sp.add_argument("--seed", type=int, help="default: $RPLAB_SEED or 0")
        sp.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
        sp.add_argument("--out", help="output directory (default: .)")
        for key in defaults:
            flag = "--" + key.replace("_", "-")
            if key in _LIST_KEYS or isinstance(defaults[key], list):
                sp.add_argument(flag, dest=key, type=_parse_list, help="comma separated")
            else:
                sp.add_argument(flag, dest=key, type=_parse_value)
    return ap


def resolve_config(args: argparse.Namespace, env: Optional[dict] = None) -> dict:
    """defaults < config file < flags; the seed falls back to $RPLAB_SEED."""
    env = os.environ if env is None else env
    _, defaults, _ = EXPERIMENTS[args.kind]
    cfg = dict(defaults)
    cfg.update({"seed": None, "workers": None, "out": "."})
    if args.config:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg) - {"kind"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if loaded.get("kind", args.kind) != args.kind:
            raise ConfigError(f"config is for {loaded['kind']!r}, not {args.kind!r}")
        loaded.pop("kind", None)
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("kind", "config") or value is None:
            continue
        cfg[key] = value
    if cfg["seed"] is None:
        try:
            cfg["seed"] = int(env.get("RPLAB_SEED", 0))
        except ValueError:
            raise ConfigError("RPLAB_SEED must be an integer") from None
    cfg["seed"] = int(cfg["seed"])
    if cfg["workers"] is None:
        cfg["workers"] = default_workers()
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be positive")
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = resolve_config(args)
        out_dir = Path(cfg["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"output directory {out_dir} is not writable")
        runner = EXPERIMENTS[args.kind][0]
        outcome = runner(cfg)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"ERROR {args.kind}: {exc}", file=sys.stderr)
        return 1
    stem = args.kind.replace("-", "_")
    echo = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    summary = {"kind": args.kind, "config": echo, "seed": cfg["seed"], "results": outcome.results,
               "assertions": [{"name": a.name, "passed": a.passed, "detail": a.detail} for a in outcome.assertions]}
    (out_dir / f"{stem}_summary.json").write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    (out_dir / f"{stem}_plot.csv").write_text(emit_plotdata(outcome.plot))
    for name, path in outcome.extra_files.items():
        path.save(out_dir / name)
    meta = {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_s": round(time.time() - started, 3), "rplab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "workers": cfg["workers"]}
    (out_dir / f"{stem}_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    for a in outcome.assertions:
        print(a.line())
    return 0 if all(a.passed for a in outcome.assertions) else 2


if __name__ == "__main__":
    sys.exit(main())
