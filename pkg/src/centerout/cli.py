"""Command-line interface: generate data, fit, emit contours, verify properties.

One experiment writes one directory::

    dataset.csv  grid.json  plan.json  potentials.json
    contours.csv  contours.json  report.json  timing.json

``report.json`` is a deterministic function of the configuration; wall-clock
information goes to the ``timing.json`` sidecar. Exit codes: 0 all contracted
checks pass, 1 a contracted check failed, 2 configuration or input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import _seeds
from .errors import CenterOutError, ConfigError, InvalidArgument, ParseError
from .generators import KINDS, Generator, make_generator
from .monge_ampere import ma_backward_density, ma_forward_density, boundary_avoidance_check
from .ot import Dataset, TransportPlan, solve_assignment, solve_sinkhorn
from .potential import build_potentials, grid_digest
from .quantiles import (
    asymptotic_invariance_test,
    contour,
    contours_to_csv,
    contours_to_json,
    hausdorff_distance,
    homeomorphism_audit,
    rank_sign_independence_test,
    ranks_signs,
    ray_escape_test,
    region_points,
)
from .reference import SphericalGrid, build_grid, sphere_directions
from .regions import Annulus, Ball

TESTS = ("inverse", "boundary", "ma", "hausdorff", "ray", "invariance", "independence")

# property tags attached to report entries
TAGS = {
    "inverse": "inverse-homeomorphism: Q(F(x)) = x on the sample, bijection sample <-> grid",
    "boundary": "boundary-avoidance: |F(x)| stays below the outermost grid radius",
    "ma": "monge-ampere-density: subdifferential volume agrees with the density formula",
    "hausdorff": "support-recovery: quantile regions of level near 1 approach the support",
    "ray": "ray-escape: the outward ray from a contour point leaves the quantile region",
    "invariance": "asymptotic-invariance: F(t u) tends to u along rays",
    "independence": "rank-sign-independence: shell x sector counts are exactly uniform",
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "output"],
    "properties": {
        "generator": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"enum": list(KINDS)}, "params": {"type": "object"}},
        },
        "input": {"type": ["string", "null"]},
        "format": {"enum": ["csv", "json", None]},
        "n": {"type": ["integer", "null"], "minimum": 1},
        "d": {"type": ["integer", "null"], "minimum": 1},
        "n_R": {"type": ["integer", "null"], "minimum": 1},
        "n_S": {"type": ["integer", "null"], "minimum": 1},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["exact", "sinkhorn"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "levels": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "tests": {"type": "array", "items": {"enum": list(TESTS)}, "uniqueItems": True},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "n_mc": {"type": "integer", "minimum": 2},
        "n_dirs": {"type": "integer", "minimum": 2},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output: str
    generator: dict | None = None
    input: str | None = None
    format: str | None = None
    n: int | None = None
    d: int | None = None
    n_R: int | None = None
    n_S: int | None = None
    solver: dict = field(default_factory=lambda: {"kind": "exact"})
    levels: tuple = (0.25, 0.5, 0.75, 0.9)
    tests: tuple = TESTS
    n_mc: int = 100_000
    n_dirs: int = 256

    @classmethod
    def from_dict(cls, obj) -> "ExperimentConfig":
        try:
            jsonschema.validate(obj, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        cfg = dict(obj)
        if (cfg.get("generator") is None) == (cfg.get("input") is None):
            raise ConfigError("exactly one of 'generator' and 'input' is required")
        if cfg.get("generator") is not None and cfg.get("n") is None:
            raise ConfigError("'n' is required with a generator")
        if cfg.get("solver", {}).get("kind") == "sinkhorn" and "epsilon" not in cfg["solver"]:
            raise ConfigError("sinkhorn solver needs 'epsilon'")
        for key in ("levels", "tests"):
            if key in cfg:
                cfg[key] = tuple(cfg[key])
        return cls(**cfg)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["levels"] = list(self.levels)
        out["tests"] = list(self.tests)
        return out


# ----------------------------------------------------------------------------- io


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _row_values(row, lineno, width):
    if width is not None and len(row) != width:
        raise ParseError(f"expected {width} values, found {len(row)}", lineno)
    try:
        vals = [float(v) for v in row]
    except (TypeError, ValueError):
        raise ParseError(f"non-numeric value in {row!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", lineno)
    return vals


def ingest(path, fmt: str | None = None) -> Dataset:
    """Read a headerless numeric CSV or a JSON array of arrays.

    Ragged rows and non-finite values raise :class:`ParseError` naming the line
    (for JSON, the 1-based row). Duplicate rows are kept.
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    rows = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            width = None
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                vals = _row_values([c.strip() for c in row], lineno, width)
                width = len(vals)
                rows.append(vals)
    elif fmt == "json":
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno) from None
        if not isinstance(obj, list):
            raise ParseError("expected an array of arrays", 1)
        width = None
        for k, row in enumerate(obj, start=1):
            if not isinstance(row, list):
                row = [row]
            vals = _row_values(row, k, width)
            width = len(vals)
            rows.append(vals)
    else:
        raise ConfigError(f"unknown input format {fmt!r}")
    if not rows:
        raise ParseError("no data rows", 1)
    return Dataset(np.array(rows))


def count_duplicates(points: np.ndarray) -> int:
    return int(len(points) - len(np.unique(points, axis=0)))


def dataset_csv(points: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in points)


# ------------------------------------------------------------------------ pipeline


@dataclass
class Fitted:
    cfg: ExperimentConfig
    data: Dataset
    generator: Generator | None
    grid: SphericalGrid
    plan: TransportPlan
    dp: object
    ep: object
    timing: dict


def _load_data(cfg: ExperimentConfig):
    if cfg.generator is not None:
        gen = make_generator(cfg.generator, cfg.d)
        data = gen.sample(cfg.n, _seeds.stream(cfg.seed, "data"))
        return data, gen
    data = ingest(cfg.input, cfg.format)
    if cfg.n is not None and cfg.n != data.n:
        raise ConfigError(f"config n={cfg.n} but input has {data.n} rows")
    if cfg.d is not None and cfg.d != data.dim:
        raise ConfigError(f"config d={cfg.d} but input has dimension {data.dim}")
    return data, None


def fit(cfg: ExperimentConfig) -> Fitted:
    timing = {}
    t0 = time.perf_counter()
    data, gen = _load_data(cfg)
    if cfg.n_R is not None and cfg.n_S is None or cfg.n_S is not None and cfg.n_R is None:
        raise ConfigError("n_R and n_S must be given together")
    grid = build_grid(data.n, data.dim, cfg.n_R, cfg.n_S, seed=cfg.seed)
    t1 = time.perf_counter()
    s = cfg.solver
    if s["kind"] == "exact":
        plan = solve_assignment(data, grid)
    else:
        plan = solve_sinkhorn(data, grid, s["epsilon"], s.get("tol", 1e-9), s.get("max_iter", 10000))
    t2 = time.perf_counter()
    dp, ep = build_potentials(plan, data, grid)
    timing.update(load=t1 - t0, solve=t2 - t1, potentials=time.perf_counter() - t2)
    out = Path(cfg.output)
    atomic_write(out / "dataset.csv", dataset_csv(data.points))
    atomic_write(out / "grid.json", _dumps(grid.to_dict()))
    atomic_write(out / "plan.json", _dumps(plan.to_dict()))
    atomic_write(out / "potentials.json", _dumps(ep.to_dict(grid_digest(grid))))
    atomic_write(out / "config.json", _dumps(cfg.to_dict()))
    return Fitted(cfg, data, gen, grid, plan, dp, ep, timing)


def write_contours(f: Fitted) -> list:
    t = time.perf_counter()
    cs = [contour(f.dp, r, f.cfg.n_dirs) for r in f.cfg.levels]
    out = Path(f.cfg.output)
    atomic_write(out / "contours.csv", contours_to_csv(cs))
    atomic_write(out / "contours.json", contours_to_json(cs) + "\n")
    f.timing["contours"] = time.perf_counter() - t
    return cs


def _entry(name, passed, contracted, result, note=None):
    e = {"test": name, "tag": TAGS[name], "contracted": bool(contracted), "pass": passed, "result": result}
    if note:
        e["note"] = note
    return e


def _convex_support(gen) -> bool:
    from .generators import ConvexPolytope, Gaussian, SphericalUniform, UniformBall

    return isinstance(gen, (ConvexPolytope, Gaussian, SphericalUniform, UniformBall))


def _test_inverse(f: Fitted):
    if not f.plan.is_exact:
        return _entry("inverse", None, False, {}, "needs an exact plan")
    a = homeomorphism_audit(f.dp, f.data, f.grid, f.plan)
    return _entry("inverse", a["pass"], True, a)


def _test_boundary(f: Fitted):
    rep = boundary_avoidance_check(f.ep, f.data.points)
    return _entry("boundary", rep["pass"], True, rep)


def _test_ma(f: Fitted):
    gen, d, cfg = f.generator, f.data.dim, f.cfg
    B = Annulus(0.25, 0.5, d)
    density = gen.density if gen is not None else None
    analytic = gen.analytic_potential() if gen is not None else None
    result = {}
    if analytic is not None:
        e1 = np.eye(d)[0][None]
        r_in = float(np.linalg.norm(analytic.Q(0.25 * e1)))
        r_out = float(np.linalg.norm(analytic.Q(0.5 * e1)))
        A = Annulus(r_in, r_out, d)
        fw = ma_forward_density(A, density, analytic, cfg.n_mc, _seeds.stream(cfg.seed, "ma.analytic.forward"))
        bw = ma_backward_density(B, density, analytic, cfg.n_mc, _seeds.stream(cfg.seed, "ma.analytic.backward"))
        result["analytic_forward"] = fw.to_report()
        result["analytic_backward"] = bw.to_report()
        passed = bool(result["analytic_forward"]["pass"] and result["analytic_backward"]["pass"])
    else:
        c = f.data.points.mean(0)
        rad = 0.5 * float(np.median(np.linalg.norm(f.data.points - c, axis=1)))
        A = Ball(c, rad)
        passed = None
    fw = ma_forward_density(A, density, f.ep, cfg.n_mc, _seeds.stream(cfg.seed, "ma.empirical.forward"))
    bw = ma_backward_density(B, density, f.ep, cfg.n_mc, _seeds.stream(cfg.seed, "ma.empirical.backward"))
    result["empirical_forward"] = fw.to_report()
    result["empirical_backward"] = bw.to_report()
    note = "contract on closed-form maps; empirical-potential values are report-only (grid discretization bias)"
    if analytic is None:
        note = "no closed-form maps for this source: report-only"
    return _entry("ma", passed, analytic is not None, result, note)


def _test_hausdorff(f: Fitted):
    gen = f.generator
    if gen is None or not gen.compact:
        return _entry("hausdorff", None, False, {}, "needs a generator with compact support")
    rng = _seeds.stream(f.cfg.seed, "hausdorff")
    boundary = gen.boundary_sample(4000, rng)
    support = gen.support_sample(40_000, rng)
    r = 0.99
    cont = contour(f.dp, r, 720).points
    reg = np.vstack([region_points(f.dp, r, 20_000, _seeds.stream(f.cfg.seed, "hausdorff.region")), cont])
    res = {"r": r, "hausdorff_contour": hausdorff_distance(cont, boundary),
           "hausdorff_region": hausdorff_distance(reg, support),
           "sampling": {"boundary": 4000, "support": 40_000, "contour_dirs": 720}}
    return _entry("hausdorff", None, False, res, "single sample size: report-only")


def _test_ray(f: Fitted):
    convex = f.generator is not None and _convex_support(f.generator)
    rows = [ray_escape_test(f.dp, r, 200, seed=_seeds.stream(f.cfg.seed, f"ray.{r}"), report_only=not convex)
            for r in f.cfg.levels]
    passed = all(r["pass"] for r in rows) if convex else None
    note = None if convex else "support not known to be convex: report-only"
    return _entry("ray", passed, convex, {"levels": rows}, note)


def _test_invariance(f: Fitted):
    d = f.data.dim
    dirs = np.array([[-1.0], [1.0]]) if d == 1 else sphere_directions(8, d, seed=0)
    scale = float(np.linalg.norm(f.data.points, axis=1).max())
    ts = scale * 2.0 ** np.arange(0, 7)
    rep = asymptotic_invariance_test(f.dp, dirs, ts, f.grid)
    return _entry("invariance", rep["pass"], True, rep)


def _test_independence(f: Fitted):
    if not f.plan.is_exact:
        return _entry("independence", None, False, {}, "needs an exact plan")
    table = ranks_signs(f.dp, f.data, f.grid, f.plan)
    rep = rank_sign_independence_test(table)
    return _entry("independence", rep["exactly_uniform"], True, rep)


_RUNNERS = {
    "inverse": _test_inverse,
    "boundary": _test_boundary,
    "ma": _test_ma,
    "hausdorff": _test_hausdorff,
    "ray": _test_ray,
    "invariance": _test_invariance,
    "independence": _test_independence,
}


def verify(f: Fitted) -> int:
    entries = []
    for name in TESTS:
        if name not in f.cfg.tests:
            continue
        t = time.perf_counter()
        entries.append(_RUNNERS[name](f))
        f.timing[f"test.{name}"] = time.perf_counter() - t
    contracted = [e for e in entries if e["contracted"]]
    ok = all(e["pass"] is True for e in contracted)
    cfg = f.cfg.to_dict()
    cfg.pop("output")  # where artifacts go does not affect their content
    report = {
        "config": cfg,
        "data": {"n": f.data.n, "d": f.data.dim, "duplicates": count_duplicates(f.data.points)},
        "grid": {"n_R": f.grid.n_radii, "n_S": f.grid.n_directions, "n_0": f.grid.origin_copies,
                 "digest": grid_digest(f.grid)},
        "plan": {"kind": f.plan.kind, "cost": f.plan.cost},
        "tests": entries,
        "pass": ok,
    }
    out = Path(f.cfg.output)
    atomic_write(out / "report.json", _dumps(report))
    timing = {"finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "seconds": f.timing}
    atomic_write(out / "timing.json", _dumps(timing))
    return 0 if ok else 1


def run(cfg: ExperimentConfig) -> int:
    """Fit, write contours, verify; returns the exit code."""
    f = fit(cfg)
    write_contours(f)
    return verify(f)


# --------------------------------------------------------------------------- argv


def _error(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    line = getattr(exc, "line", None)
    if line is not None:
        payload["line"] = line
    print(json.dumps(payload), file=sys.stderr)
    return code


def _config_from_args(args) -> ExperimentConfig:
    obj = {}
    if getattr(args, "config", None):
        try:
            obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
    if getattr(args, "kind", None):
        params = json.loads(args.params) if args.params else {}
        obj["generator"] = {"kind": args.kind, "params": params}
    for key in ("input", "format", "n", "d", "n_R", "n_S", "seed", "output", "n_mc", "n_dirs"):
        val = getattr(args, key, None)
        if val is not None:
            obj[key] = val
    if getattr(args, "levels", None):
        obj["levels"] = [float(v) for v in args.levels.split(",")]
    if getattr(args, "tests", None):
        obj["tests"] = [t for t in args.tests.split(",") if t]
    if getattr(args, "solver", None):
        solver = {"kind": args.solver}
        for key in ("epsilon", "tol", "max_iter"):
            val = getattr(args, key, None)
            if val is not None:
                solver[key] = val
        obj["solver"] = solver
    return ExperimentConfig.from_dict(obj)


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--kind", choices=KINDS, help="synthetic generator kind")
    p.add_argument("--params", help="generator parameters as a JSON object")
    p.add_argument("--input", help="data file (headerless CSV or JSON array of arrays)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n-R", dest="n_R", type=int)
    p.add_argument("--n-S", dest="n_S", type=int)
    p.add_argument("--solver", choices=["exact", "sinkhorn"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--levels", help="comma-separated contour levels in (0, 1)")
    p.add_argument("--tests", help="comma-separated subset of " + ",".join(TESTS))
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="artifact directory")
    p.add_argument("--n-mc", dest="n_mc", type=int)
    p.add_argument("--n-dirs", dest="n_dirs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="centerout", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic dataset")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--params", help="generator parameters as a JSON object")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="output file (.csv or .json)")

    for name, text in (("fit", "solve the assignment and build potentials"),
                       ("contours", "fit and write quantile contours"),
                       ("verify", "fit, write contours and run the property checks")):
        _add_experiment_flags(sub.add_parser(name, help=text))

    r = sub.add_parser("report", help="summarize report.json of an experiment directory")
    r.add_argument("directory")
    return parser


def _cmd_generate(args) -> int:
    params = json.loads(args.params) if args.params else {}
    gen = make_generator({"kind": args.kind, "params": params}, args.d)
    data = gen.sample(args.n, _seeds.stream(args.seed, "data"))
    out = Path(args.out)
    if out.suffix.lower() == ".json":
        atomic_write(out, json.dumps(data.points.tolist()) + "\n")
    else:
        atomic_write(out, dataset_csv(data.points))
    print(json.dumps({"n": data.n, "d": data.dim, "path": str(out)}))
    return 0


def _cmd_report(args) -> int:
    path = Path(args.directory) / "report.json"
    try:
        rep = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    for e in rep["tests"]:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[e["pass"]]
        print(f"{status:4s}  {e['test']:12s}  {e['tag']}")
    print("overall:", "PASS" if rep["pass"] else "FAIL")
    return 0 if rep["pass"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "report":
            return _cmd_report(args)
        cfg = _config_from_args(args)
        if args.command == "fit":
            f = fit(cfg)
            print(json.dumps({"output": cfg.output, "n": f.data.n, "cost": f.plan.cost}))
            return 0
        if args.command == "contours":
            write_contours(fit(cfg))
            return 0
        code = run(cfg)
        print(json.dumps({"output": cfg.output, "pass": code == 0}))
        return code
    except (ConfigError, ParseError, InvalidArgument, json.JSONDecodeError) as exc:
        return _error(2, exc)
    except CenterOutError as exc:
        # numerical failures and any other library error
        return _error(3, exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
