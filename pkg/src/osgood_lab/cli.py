"""Configuration-driven experiment orchestration and report emission.

    osgood-lab <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N] ...

Subcommands: modulus | acm | flow | interp | euler.  Parameters resolve in
three layers: built-in defaults, then the TOML table named after the
subcommand in the config file, then explicit command-line flags (flags win).
All randomness flows from one counter-based generator (Philox) keyed by
--seed; independent work items fan out to a thread pool and are reduced by
item index, so outputs are bitwise identical for a fixed (config, seed)
regardless of thread count or scheduling.

Every run writes one UTF-8 CSV per result table plus manifest.json holding
the fully resolved configuration, library versions, verdicts, and a single
volatile "timestamp" field (completion time and wall time); reruns with the
same config and seed produce byte-identical files apart from that field.
Nothing is written for configs that fail to parse or validate.

Exit status: 0 all audits pass; 1 an audit failed (outputs still written);
2 config parse error; 3 validation error; 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy
import tomli

from . import euler as euler_mod
from .acm import condition2_bound, make_cells, series_condition
from .fields import GridField, random_band_limited
from .flow import integrate_flow, osgood_1d_exact, separation_audit, standard_field
from .growth import GrowthFunction
from .interp import interpolation_sides
from .modulus import (
    Modulus,
    PropagationContext,
    PropagationRangeError,
    R_of,
    propagated_modulus,
)

EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


class ConfigParseError(Exception):
    pass


class ValidationError(Exception):
    pass


_COMMON_DEFAULTS = {"out": ".", "seed": 0, "threads": 1}

_DEFAULTS: dict[str, dict] = {
    "modulus": {
        "kind": "log_lipschitz",
        "check": "closed-form",
        "alpha": 0.5,
        "points": 100,
        "r_min": 1e-12,
        "J": "0,0.5,1",
    },
    "acm": {
        "theta": "log1",
        "N": 8,
        "d": 2,
        "sigma": 1.0,
        "condition": "sum_lambda",
        "p": 2.0,
        "s": 0.5,
        "t": 0.1,
        "c": 1.0,
        "bound_C": 1.0,
    },
    "flow": {
        "field": "rotation",
        "mode": "trajectory",
        "x0": "0.3,0.4",
        "t1": 1.0,
        "tol": 1e-10,
        "phi": "log_lipschitz",
        "J": 1.0,
        "pairs": 200,
    },
    "interp": {
        "n_grid": 32,
        "k_max": 10,
        "n_fields": 50,
        "epsilons": "0.25,0.0625,0.015625",
        "mus": "identity,sqrt,log_squared",
    },
    "euler": {
        "kind": "smooth_blob",
        "n_grid": 128,
        "amplitude": 20.0,
        "T": 0.5,
        "dt": 0.002,
        "s": 0.5,
        "offset": 1.0 / 128.0,
        "n": 1,
        "C": 1.0,
        "C1": 1.0,
        "C2": 1.0,
        "M": 1.0,
        "gamma": 0.0,
        "record_every": 25,
        "fit": False,
    },
}

_MODULUS_KINDS = ("lipschitz", "log_lipschitz", "log2", "log3", "power")


def _make_modulus(kind: str, alpha: float) -> Modulus:
    if kind == "lipschitz":
        return Modulus.lipschitz()
    if kind == "log_lipschitz":
        return Modulus.log_lipschitz()
    if kind == "log2":
        return Modulus.log_n_lipschitz(2)
    if kind == "log3":
        return Modulus.log_n_lipschitz(3)
    if kind == "power":
        return Modulus.power(alpha)
    raise ValidationError(f"unknown modulus kind {kind!r}; choose from {_MODULUS_KINDS}")


def _make_theta(name: str) -> GrowthFunction:
    if name.startswith("log") and name[3:].isdigit():
        return GrowthFunction.iterated_log(int(name[3:]))
    raise ValidationError(f"growth function must be log1, log2, ... got {name!r}")


# Weight catalog for the interpolation audit; log_squared is the reciprocal
# squared-log weight continued past r = 1/e so it stays positive and
# increasing on all of (0, 1].
_MU_CATALOG: dict[str, Callable[[float], float]] = {
    "identity": lambda r: r,
    "sqrt": lambda r: math.sqrt(r),
    "log_squared": lambda r: 1.0 / math.log(1.0 + 1.0 / r) ** 2,
}


def _float_list(value, name: str) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(tok) for tok in str(value).split(",") if tok.strip() != ""]
    except ValueError as e:
        raise ValidationError(f"{name} must be a comma-separated number list: {e}")


def _str_list(value, name: str) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    toks = [tok.strip() for tok in str(value).split(",") if tok.strip() != ""]
    if not toks:
        raise ValidationError(f"{name} must name at least one entry")
    return toks


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=stream)))


def _fmt(v) -> str:
    """Full-precision scalar formatting; numpy scalars print as plain floats."""
    if isinstance(v, (bool, np.bool_)):
        return repr(bool(v))
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    return repr(float(v))


def _map_indexed(fn: Callable[[int], object], n_items: int, threads: int) -> list:
    """Run fn(0..n_items-1), possibly on a pool; reduction is by item index."""
    if threads <= 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    out: list = [None] * n_items
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, i): i for i in range(n_items)}
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


@dataclass
class RunResult:
    subcommand: str
    resolved: dict
    tables: dict[str, tuple[list[str], list[list]]]  # name -> (header, rows)
    verdicts: dict
    passed: bool
    extra_manifest: dict | None = None


# -- subcommand runners ------------------------------------------------------


def _run_modulus(cfg: dict, seed: int, threads: int) -> RunResult:
    kind, check = cfg["kind"], cfg["check"]
    phi = _make_modulus(kind, float(cfg["alpha"]))
    points = int(cfg["points"])
    r_min = float(cfg["r_min"])
    if points < 2 or not 0.0 < r_min < phi.cutoff / 2.0:
        raise ValidationError("need points >= 2 and 0 < r_min < cutoff/2")
    rs = np.logspace(math.log10(r_min), math.log10(phi.cutoff / 2.0), points)

    if check == "closed-form":
        if phi.closed_R is None:
            raise ValidationError(f"kind {kind!r} has no closed form to compare")
        rows, worst = [], 0.0
        for r in rs:
            pipeline = R_of(phi, float(r))
            closed = phi.closed_R(float(r))
            rel = abs(pipeline - closed) / abs(closed)
            worst = max(worst, rel)
            rows.append([_fmt(r), _fmt(pipeline), _fmt(closed), _fmt(rel)])
        passed = worst <= 1e-6
        return RunResult(
            "modulus",
            cfg,
            {"closed_form": (["r", "R_pipeline", "R_closed", "rel_err"], rows)},
            {"max_rel_err": worst, "closed_form_ok": passed},
            passed,
        )

    if check == "fixed-point":
        js = _float_list(cfg["J"], "J")
        rows, worst = [], 0.0
        for J in js:
            if J < 0.0:
                raise ValidationError(f"J must be >= 0, got {J}")
            ej = math.exp(J)
            for r in rs:
                base = R_of(phi, float(r))
                if ej * base >= 1.0:  # propagated separation leaves (0, m]
                    continue
                try:
                    mu = propagated_modulus(phi, PropagationContext(J), float(r))
                except PropagationRangeError:
                    continue
                lhs = R_of(phi, mu)
                rhs = ej * base
                rel = abs(lhs - rhs) / rhs
                worst = max(worst, rel)
                rows.append([_fmt(J), _fmt(r), _fmt(lhs), _fmt(rhs), _fmt(rel)])
        if not rows:
            raise ValidationError("no evaluable (J, r) pairs for the fixed-point check")
        passed = worst <= 1e-8
        return RunResult(
            "modulus",
            cfg,
            {"fixed_point": (["J", "r", "lhs", "rhs", "rel_err"], rows)},
            {"max_rel_err": worst, "fixed_point_ok": passed},
            passed,
        )

    raise ValidationError(f"unknown check {check!r}; choose closed-form or fixed-point")


def _run_acm(cfg: dict, seed: int, threads: int) -> RunResult:
    theta = _make_theta(str(cfg["theta"]))
    condition = str(cfg["condition"])
    d, p = int(cfg["d"]), float(cfg["p"])

    if condition == "condition2":
        rep = condition2_bound(theta, p, d)
        header = [
            "p",
            "F_max_bound",
            "integral_bound",
            "total_bound",
            "series_sum",
            "maximizer",
            "integrable",
        ]
        rows = [
            [
                _fmt(p),
                _fmt(rep.F_max_bound),
                _fmt(rep.integral_bound),
                _fmt(rep.total_bound),
                _fmt(rep.series_sum),
                _fmt(rep.maximizer),
                _fmt(rep.integrable),
            ]
        ]
        passed = rep.integrable and rep.series_within_bound
        return RunResult(
            "acm",
            cfg,
            {"condition2": (header, rows)},
            {"integrable": rep.integrable, "series_within_bound": rep.series_within_bound},
            passed,
        )

    cells = make_cells(theta, int(cfg["N"]), d, float(cfg["sigma"]))
    rep = series_condition(
        cells,
        condition,
        p=p,
        s=float(cfg["s"]),
        t=float(cfg["t"]),
        c=float(cfg["c"]),
        bound_C=float(cfg["bound_C"]),
    )
    header = ["n", "term", "partial_sum"]
    simplified = bool(rep.simplified_terms)
    if simplified:
        header += ["simplified_term", "simplified_partial_sum"]
    rows = []
    for i, (term, part) in enumerate(zip(rep.terms, rep.partial_sums)):
        row = [_fmt(i + 1), _fmt(term), _fmt(part)]
        if simplified:
            row += [_fmt(rep.simplified_terms[i]), _fmt(rep.simplified_partial_sums[i])]
        rows.append(row)
    expected = "diverging" if condition == "blowup" else "bounded_by"
    passed = rep.verdict == expected
    verdicts = {"verdict": rep.verdict, "expected": expected}
    if rep.bound is not None:
        verdicts["bound"] = rep.bound
    return RunResult("acm", cfg, {condition: (header, rows)}, verdicts, passed)


def _flow_oracle(kind: str, x0: np.ndarray, t: float):
    if kind == "zero":
        return x0
    if kind == "rotation":
        c, s = math.cos(t), math.sin(t)
        return np.array([c * x0[0] - s * x0[1], s * x0[0] + c * x0[1]])
    if kind == "shear":
        return np.array([x0[0] + t * math.sin(2.0 * math.pi * x0[1]), x0[1]])
    if kind == "linear_1d":
        return np.array([x0[0] * math.exp(t)])
    if kind == "osgood_1d":
        return np.array([osgood_1d_exact(float(x0[0]), t)])
    return None


def _run_flow(cfg: dict, seed: int, threads: int) -> RunResult:
    kind, mode = str(cfg["field"]), str(cfg["mode"])
    u = standard_field(kind)
    t1, tol = float(cfg["t1"]), float(cfg["tol"])

    if mode == "trajectory":
        x0 = np.array(_float_list(cfg["x0"], "x0")[: u.d], dtype=float)
        if x0.size != u.d:
            raise ValidationError(f"x0 needs {u.d} coordinates for field {kind!r}")
        trace = integrate_flow(u, x0, t1, tol)
        header = (
            ["t"]
            + [f"x{i+1}" for i in range(u.d)]
            + [f"v{i+1}" for i in range(u.d)]
            + ["err"]
        )
        rows = []
        for i, t in enumerate(trace.times):
            rows.append(
                [_fmt(t)]
                + [_fmt(v) for v in trace.positions[i]]
                + [_fmt(v) for v in trace.velocities[i]]
                + [_fmt(trace.errors[i])]
            )
        oracle = _flow_oracle(kind, x0, t1)
        verdicts: dict = {"accumulated_error": trace.accumulated_error}
        if oracle is not None:
            err = float(np.linalg.norm(trace.final - oracle))
            scale = max(1.0, float(np.linalg.norm(oracle)))
            verdicts["oracle_err"] = err
            passed = err <= 10.0 * tol * scale
        else:
            passed = True
        return RunResult("flow", cfg, {"trajectory": (header, rows)}, verdicts, passed)

    if mode == "separation":
        phi = _make_modulus(str(cfg["phi"]), 0.5)
        rep = separation_audit(
            u, phi, float(cfg["J"]), t1, int(cfg["pairs"]), tol, rng=_rng(seed, 0)
        )
        header = ["pairs", "max_violation", "empirical_J_lower", "passed"]
        rows = [[_fmt(rep.pairs), _fmt(rep.max_violation),
                 _fmt(rep.empirical_J_lower), _fmt(rep.passed)]]
        verdicts = {
            "max_violation": rep.max_violation,
            "empirical_J_lower": rep.empirical_J_lower,
            "separation_ok": rep.passed,
        }
        return RunResult("flow", cfg, {"separation": (header, rows)}, verdicts, rep.passed)

    raise ValidationError(f"unknown mode {mode!r}; choose trajectory or separation")


def _run_interp(cfg: dict, seed: int, threads: int) -> RunResult:
    n_grid, k_max = int(cfg["n_grid"]), int(cfg["k_max"])
    n_fields = int(cfg["n_fields"])
    if n_fields < 1:
        raise ValidationError(f"n_fields must be >= 1, got {n_fields}")
    epsilons = _float_list(cfg["epsilons"], "epsilons")
    mu_names = _str_list(cfg["mus"], "mus")
    for name in mu_names:
        if name not in _MU_CATALOG:
            raise ValidationError(f"unknown mu {name!r}; choose from {sorted(_MU_CATALOG)}")
    if any(not 0.0 < e < 1.0 for e in epsilons):
        raise ValidationError("epsilons must lie in (0, 1)")

    def one_field(idx: int) -> list[list]:
        f = random_band_limited(n_grid, k_max, _rng(seed, idx))
        rows = []
        for name in mu_names:
            mu = _MU_CATALOG[name]
            for eps in epsilons:
                rep = interpolation_sides(f, mu, eps)
                rows.append(
                    [_fmt(idx), name, _fmt(eps), _fmt(rep.lhs),
                     _fmt(rep.term_besov), _fmt(rep.term_log), _fmt(rep.implied_C)]
                )
        return rows

    chunks = _map_indexed(one_field, n_fields, threads)
    rows = [row for chunk in chunks for row in chunk]
    cs = [float(row[6]) for row in rows]
    spread = max(cs) / min(cs) if min(cs) > 0.0 else math.inf
    passed = spread <= 1e3
    header = ["field", "mu", "epsilon", "lhs", "term_besov", "term_log", "implied_C"]
    return RunResult(
        "interp",
        cfg,
        {"interpolation": (header, rows)},
        {"implied_C_min": min(cs), "implied_C_max": max(cs), "spread": spread,
         "uniform_constant_ok": passed},
        passed,
    )


def _run_euler(cfg: dict, seed: int, threads: int) -> RunResult:
    gamma = float(cfg["gamma"])
    params = euler_mod.StabilityParams(
        C=float(cfg["C"]),
        C1=float(cfg["C1"]),
        C2=float(cfg["C2"]),
        M=float(cfg["M"]),
        gamma=None if gamma == 0.0 else gamma,
        n=int(cfg["n"]),
    )
    f0 = euler_mod.make_initial_vorticity(
        str(cfg["kind"]),
        n_grid=int(cfg["n_grid"]),
        amplitude=float(cfg["amplitude"]),
        n=int(cfg["n"]),
    )
    twin = euler_mod.translate_field(f0, (float(cfg["offset"]), 0.0))
    record = euler_mod.stability_experiment(
        f0,
        twin,
        T=float(cfg["T"]),
        dt=float(cfg["dt"]),
        s=float(cfg["s"]),
        params=params,
        record_every=int(cfg["record_every"]),
    )
    header = [
        "t",
        "vorticity_dist_sq",
        "velocity_dist_sq",
        "bound_rhs",
        "energy_1",
        "energy_2",
        "enstrophy_1",
        "enstrophy_2",
    ]
    rows = []
    for i, t in enumerate(record.times):
        rows.append(
            [_fmt(t), _fmt(record.vorticity_dist_sq[i]),
             _fmt(record.velocity_dist_sq[i]), _fmt(record.bound_rhs[i]),
             _fmt(record.energy_1[i]), _fmt(record.energy_2[i]),
             _fmt(record.enstrophy_1[i]), _fmt(record.enstrophy_2[i])]
        )
    fit_mode = bool(cfg["fit"])
    passed = math.isfinite(record.fitted_C) if fit_mode else record.bound_holds
    verdicts = {
        "bound_holds": record.bound_holds,
        "fitted_C": record.fitted_C,
        "fit_mode": fit_mode,
    }
    return RunResult(
        "euler",
        cfg,
        {"stability": (header, rows)},
        verdicts,
        passed,
        extra_manifest={"experiment": record.manifest()},
    )


_RUNNERS = {
    "modulus": _run_modulus,
    "acm": _run_acm,
    "flow": _run_flow,
    "interp": _run_interp,
    "euler": _run_euler,
}


# -- config resolution and report emission -----------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osgood-lab")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, defaults in _DEFAULTS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config", type=Path, default=None)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        for key, default in defaults.items():
            if isinstance(default, bool):
                sp.add_argument(f"--{key}", dest=key, action="store_const", const=True,
                                default=None)
            elif isinstance(default, int):
                sp.add_argument(f"--{key}", dest=key, type=int, default=None)
            elif isinstance(default, float):
                sp.add_argument(f"--{key}", dest=key, type=float, default=None)
            else:
                sp.add_argument(f"--{key}", dest=key, type=str, default=None)
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(f"cannot read config {path}: {e}")
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigParseError(f"invalid TOML in {path}: {e}")


def _resolve(args: argparse.Namespace, conf: dict) -> tuple[dict, dict]:
    """Merge defaults, config file, and flags; flags win.  Returns (params, common)."""
    sub = args.subcommand
    defaults = _DEFAULTS[sub]

    table = conf.get(sub, {})
    if not isinstance(table, dict):
        raise ValidationError(f"config section [{sub}] must be a table")
    unknown = set(table) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown parameters in [{sub}]: {sorted(unknown)}")
    top_unknown = {
        k for k, v in conf.items() if not isinstance(v, dict) and k not in _COMMON_DEFAULTS
    }
    if top_unknown:
        raise ValidationError(f"unknown top-level config keys: {sorted(top_unknown)}")

    params = dict(defaults)
    params.update(table)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            params[key] = flag

    common = dict(_COMMON_DEFAULTS)
    for key in _COMMON_DEFAULTS:
        if key in conf:
            common[key] = conf[key]
        flag = getattr(args, key, None)
        if flag is not None:
            common[key] = flag
    common["out"] = Path(common["out"])
    common["seed"] = int(common["seed"])
    common["threads"] = int(common["threads"])
    if common["threads"] < 1:
        raise ValidationError(f"threads must be >= 1, got {common['threads']}")
    return params, common


def _versions() -> dict:
    try:
        from importlib.metadata import version

        pkg = version("osgood-lab")
    except Exception:
        pkg = "unknown"
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "osgood_lab": pkg,
    }


def emit_report(result: RunResult, out_dir: Path, seed: int, threads: int,
                wall_time: float) -> Path:
    """Write one CSV per table and manifest.json; returns the manifest path.

    The manifest is byte-stable across reruns with the same config and seed
    except for the single volatile "timestamp" field, which holds both the
    completion time and the wall time.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    table_files = {}
    for name, (header, rows) in sorted(result.tables.items()):
        fname = f"{result.subcommand}_{name}.csv"
        with open(out_dir / fname, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        table_files[name] = fname
    manifest = {
        "subcommand": result.subcommand,
        "config": {k: _jsonable(v) for k, v in sorted(result.resolved.items())},
        "seed": seed,
        "threads": threads,
        "versions": _versions(),
        "tables": table_files,
        "verdicts": {k: _jsonable(v) for k, v in result.verdicts.items()},
        "pass": result.passed,
        "timestamp": {
            "completed_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "wall_time_s": wall_time,
        },
    }
    if result.extra_manifest:
        manifest.update({k: _jsonable(v) for k, v in result.extra_manifest.items()})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if e.code is not None else 0
        return EXIT_OK if code == 0 else EXIT_PARSE

    start = time.perf_counter()
    try:
        conf = _load_config(args.config)
    except ConfigParseError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_PARSE

    try:
        params, common = _resolve(args, conf)
        result = _RUNNERS[args.subcommand](params, common["seed"], common["threads"])
    except (ValidationError, ValueError, ArithmeticError, euler_mod.CFLError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        emit_report(result, common["out"], common["seed"], common["threads"],
                    time.perf_counter() - start)
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if result.passed else EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())
