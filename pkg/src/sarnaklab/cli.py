"""Command-line recipes with deterministic CSV output and a run manifest.

Each subcommand runs one recipe. Parameters resolve in three layers, later
ones winning: recipe defaults, then the JSON file given by ``--config``, then
``--param key=value`` flags (values parsed as JSON, falling back to strings).
The top-level keys ``seed``, ``threads``, ``format`` and ``out`` follow the
same order, with their own flags on top.

Outputs go to ``<out>/<table>.csv`` (or ``.tsv``) plus ``<out>/<recipe>.manifest.json``.
Tables depend only on the resolved configuration; the manifest also records
versions and wall time. Exit codes: 0 success, 2 usage error, 3 a recipe's
built-in check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import mpmath
import numpy as np
import scipy

from . import __version__
from .arith import AverageKind, chowla_log_sum, sieve_mobius, weighted_average
from .coding import Arc, complexity_transfer_check
from .complexity import (
    circle_sample,
    complexity_profile,
    disjointness_certificate,
    measure_covering_number,
    power_law_exponent,
    rotation_orbit_sample,
    shift_sample,
    skew_sample,
)
from .construct import BlockSpec, ConstantSignal, minimal_scales, verify_lower_bound_chain
from .fourier import FrequencySet, restricted_uniformity_average
from .nil import HEISENBERG, abelian, poly_covering_number
from .systems import CircleCharacter, CirclePoint, Product, Rotation, Shift, Skew

GOLDEN = (math.sqrt(5) - 1) / 2
EXIT_USAGE = 2
EXIT_CHECK = 3


class UsageError(Exception):
    pass


@dataclass
class Outcome:
    tables: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)


# ---------------------------------------------------------------- parsers


def frequency_set(spec):
    kind = spec.get("type")
    if kind == "cantor":
        return FrequencySet.cantor(float(spec["ratio"]), int(spec["level"]))
    if kind == "finite":
        return FrequencySet.finite(spec["points"])
    if kind == "grid":
        return FrequencySet.grid(float(spec.get("step", 0.001)))
    raise ValueError(f"unknown frequency set type {kind!r}")


def make_system(spec):
    kind = spec.get("type")
    if kind == "rotation":
        return Rotation(float(spec.get("alpha", GOLDEN)))
    if kind == "skew":
        return Skew(frequency_set(spec.get("frequencies", {"type": "cantor", "ratio": 0.1, "level": 6})))
    if kind == "shift":
        return Shift(spec.get("alphabet", "binary"), radius=int(spec.get("radius", 8)))
    if kind == "product":
        return Product(tuple(Rotation(float(a)) for a in spec["alphas"]))
    raise ValueError(f"unknown system type {kind!r}")


def _ints(values):
    return [int(v) for v in values]


def _map(ctx, fn, items):
    """Ordered map; with more than one thread the items run concurrently."""
    if ctx["threads"] <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=ctx["threads"]) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- recipes


def run_sieve(p, ctx):
    lo, N = int(p["lo"]), int(p["N"])
    table = sieve_mobius(lo, N)
    n = np.arange(lo, N + 1)
    rows = list(zip(n.tolist(), table.values.tolist()))
    mertens = int(table.values.sum(dtype=np.int64))
    squarefree = int(np.count_nonzero(table.values))
    return Outcome({"mobius": rows, "sieve_summary": [(lo, N, mertens, squarefree)]})


def run_chowla(p, ctx):
    h1, h2 = int(p["h1"]), int(p["h2"])
    grid = _ints(p["N_grid"])
    table = sieve_mobius(1, max(grid) + h2)
    sums = _map(ctx, lambda N: chowla_log_sum(h1, h2, N, table), grid)
    rows = [(s.h1, s.h2, s.N, s.raw, s.by_log, s.by_harmonic) for s in sums]
    first, last = abs(sums[0].by_log), abs(sums[-1].by_log)
    ok = last < first and last <= p["tolerance"]
    detail = f"|sum| {first:.6g} at N={grid[0]} -> {last:.6g} at N={grid[-1]}, tolerance {p['tolerance']}"
    return Outcome({"chowla": rows}, [("chowla_trend", ok, detail)])


def run_davenport(p, ctx):
    alpha = float(p["alpha"])
    grid = _ints(p["N_grid"])
    N_max = max(grid)
    mu = sieve_mobius(1, N_max).values.astype(np.float64)
    n = np.arange(1, N_max + 1)
    terms = mu * np.exp(2j * np.pi * np.mod(n * alpha, 1.0))
    values = [abs(weighted_average(terms, N, AverageKind.CESARO)) for N in grid]
    rows = [(alpha, N, v) for N, v in zip(grid, values)]
    ok = values[-1] < values[0] and values[-1] <= p["tolerance"]
    detail = f"{values[0]:.6g} at N={grid[0]} -> {values[-1]:.6g} at N={grid[-1]}, tolerance {p['tolerance']}"
    return Outcome({"davenport": rows}, [("davenport_decay", ok, detail)])


def run_complexity_profile(p, ctx):
    system = make_system(p["system"])
    grid = _ints(p["n_grid"])
    eps = float(p["epsilon"])
    size = int(p["sample_size"])
    rng = np.random.default_rng(ctx["seed"])
    if isinstance(system, Shift):
        samples = {n: shift_sample(system, rng, size, n) for n in grid}
    elif isinstance(system, Skew):
        pts = skew_sample(system, rng, size)
        samples = {n: pts for n in grid}
    elif isinstance(system, Rotation) and p["sample"] == "orbit":
        pts = rotation_orbit_sample(system, CirclePoint(0.0), size)
        samples = {n: pts for n in grid}
    elif isinstance(system, Rotation):
        pts = circle_sample(rng, size)
        samples = {n: pts for n in grid}
    else:
        raise ValueError("complexity-profile supports rotation, skew and shift systems")

    if p["measure"]:
        w = 1.0 / size

        def count(n):
            return measure_covering_number(system, [(x, w) for x in samples[n]], n, eps).cardinality

        counts = _map(ctx, count, grid)
        slope, r2 = power_law_exponent(grid, counts)
        fit = (eps, slope, r2, "measure")
    else:
        prof = complexity_profile(system, lambda n: samples[n], eps, grid)
        counts = prof.counts
        fit = (eps, prof.fitted_exponent, prof.fit_r2, prof.classification)
    rows = [(eps, n, int(c), size) for n, c in zip(grid, counts)]
    return Outcome({"profile": rows, "profile_fit": [fit]})


def run_nil_poly_cover(p, ctx):
    G = HEISENBERG if p["group"] == "heisenberg" else abelian()
    grid = _ints(p["n_grid"])
    eps, size = float(p["epsilon"]), int(p["sample_count"])
    reps = _map(ctx, lambda n: poly_covering_number(G, n, eps, size, seed=ctx["seed"]), grid)
    counts = [r.cardinality for r in reps]
    slope, r2 = power_law_exponent(grid, counts)
    rows = [(G.name, n, eps, c, size) for n, c in zip(grid, counts)]
    ok = r2 >= p["min_r2"] and slope <= p["max_slope"]
    detail = f"slope {slope:.4g} (<= {p['max_slope']}), R^2 {r2:.4g} (>= {p['min_r2']})"
    return Outcome({"nil_cover": rows, "nil_cover_fit": [(G.name, eps, slope, r2)]}, [("nil_polynomial_fit", ok, detail)])


def run_coding_transfer(p, ctx):
    system = make_system(p["system"])
    a, b = p["arc"]
    rep = complexity_transfer_check(
        system, Arc(float(a), float(b)), float(p["delta"]), int(p["N"]), sample_size=int(p["sample_size"]), seed=ctx["seed"]
    )
    row = (
        rep.delta, rep.N, rep.L, rep.delta_prime, rep.eps, rep.coded_count, rep.original_count,
        rep.coded_saturated, rep.original_saturated, rep.holds,
    )
    detail = f"coded {rep.coded_count} <= original {rep.original_count}"
    return Outcome({"coding_transfer": [row]}, [("coding_transfer", rep.holds, detail)])


def run_fourier_restricted(p, ctx):
    C = frequency_set(p["frequencies"])
    N = int(p["N"])
    Hs = _ints(p["H_grid"])
    kinds = [AverageKind(k) for k in p["kinds"]]
    table = sieve_mobius(1, N + max(Hs))
    jobs = [(H, k) for k in kinds for H in Hs]
    res = _map(ctx, lambda job: restricted_uniformity_average(N, job[0], C, job[1], table=table), jobs)
    return Outcome({"fourier_restricted": [r.row() for r in res]})


def run_construct_chain(p, ctx):
    tau = float(p["tau"])
    scales, heads = minimal_scales(tau, int(p["scales"]), H1=int(p["H1"]))
    spec = BlockSpec(tau, scales, frequencies=[0.0] * len(scales), heads=heads)
    rep = verify_lower_bound_chain(spec, ConstantSignal(complex(*map(float, p["signal"]))), backend=p["backend"])
    rows = [
        (s, name, rel, float(m), float(b), float(margin), bool(ok))
        for s, name, rel, m, b, margin, ok in rep.rows()
    ]
    scale_rows = [
        (i, mpmath.nstr(mpmath.mpf(H), 25), mpmath.nstr(mpmath.mpf(N), 25), mpmath.nstr(mpmath.mpf(h), 25))
        for i, ((H, N), h) in enumerate(zip(scales, heads))
    ]
    first = rep.first_failure
    detail = "all links pass" if first is None else f"first failure {first[0]} at scale {first[1]}"
    return Outcome(
        {"construct_chain": rows, "construct_scales": scale_rows},
        [("construct_chain", rep.passed, detail)],
    )


def run_certificate(p, ctx):
    system = make_system(p["system"])
    cert = disjointness_certificate(
        system, CirclePoint(float(p["x0"])), CircleCharacter(int(p["frequency"])), float(p["epsilon"]),
        _ints(p["N_grid"]), sample_size=int(p["sample_size"]),
    )
    rows = [
        (r.N, r.mineq, r.es1, r.es2, r.coverage, r.cauchy_schwarz, r.holds_mineq, r.holds_es1, r.holds_es2)
        for r in cert.rows
    ]
    search = [(L, m, bool(sat)) for L, m, sat in cert.trials]
    detail = cert.status + (f": {cert.reason}" if cert.reason else f", L={cert.L}, m={cert.m}")
    return Outcome({"certificate": rows, "certificate_search": search}, [("certificate", cert.passed, detail)])


ROTATION = {"type": "rotation", "alpha": GOLDEN}

RECIPES = {
    "sieve": (run_sieve, {"lo": 1, "N": 10**6}),
    "chowla": (run_chowla, {"h1": 0, "h2": 1, "N_grid": [10**3, 10**4, 10**5, 10**6], "tolerance": 0.05}),
    "davenport": (run_davenport, {"alpha": math.sqrt(2) - 1, "N_grid": [10**4, 10**5, 10**6], "tolerance": 0.02}),
    "complexity-profile": (
        run_complexity_profile,
        {"system": ROTATION, "epsilon": 0.1, "n_grid": [16, 256, 1024, 4096], "sample_size": 512, "sample": "orbit", "measure": False},
    ),
    "nil-poly-cover": (
        run_nil_poly_cover,
        {"group": "heisenberg", "epsilon": 0.25, "n_grid": [8, 16, 32, 64], "sample_count": 10_000, "min_r2": 0.9, "max_slope": 8.0},
    ),
    "coding-transfer": (
        run_coding_transfer,
        {"system": ROTATION, "arc": [0.1, 0.6], "delta": 0.1, "N": 256, "sample_size": 512},
    ),
    "fourier-restricted": (
        run_fourier_restricted,
        {"frequencies": {"type": "cantor", "ratio": 0.1, "level": 6}, "N": 10**6, "H_grid": [5, 50], "kinds": ["logarithmic", "cesaro"]},
    ),
    "construct-chain": (
        run_construct_chain,
        {"tau": 0.5, "scales": 3, "H1": 1, "signal": [1.0, 0.0], "backend": "auto"},
    ),
    "certificate": (
        run_certificate,
        {"system": ROTATION, "x0": 0.0, "frequency": 1, "epsilon": 0.1, "N_grid": [10**6], "sample_size": 8192},
    ),
}


# ----------------------------------------------------------------- output


def load_schemas():
    return json.loads(resources.files("sarnaklab").joinpath("schemas.json").read_text())


_CHECKERS = {
    "int": lambda v: isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_)),
    "float": lambda v: isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_)),
    "bool": lambda v: isinstance(v, (bool, np.bool_)),
    "str": lambda v: isinstance(v, str),
}


def validate(name, rows, schemas):
    """Raise if ``rows`` do not match the documented columns of table ``name``."""
    if name not in schemas:
        raise ValueError(f"table {name!r} has no schema")
    cols = schemas[name]["columns"]
    for i, row in enumerate(rows):
        if len(row) != len(cols):
            raise ValueError(f"{name} row {i}: {len(row)} values for {len(cols)} columns")
        for v, col in zip(row, cols):
            if not _CHECKERS[col["type"]](v):
                raise ValueError(f"{name} row {i}: column {col['name']} expects {col['type']}, got {v!r}")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(name, rows, schemas, delimiter):
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow([c["name"] for c in schemas[name]["columns"]])
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode()


def write_atomic(path, data):
    folder = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ----------------------------------------------------------------- config


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve(recipe, file_config, overrides, flags):
    """Merge defaults, file values and flag values; unknown keys are usage errors."""
    defaults = RECIPES[recipe][1]
    if file_config.get("recipe", recipe) != recipe:
        raise UsageError(f"config is for recipe {file_config['recipe']!r}, not {recipe!r}")
    unknown_top = set(file_config) - {"recipe", "params", "seed", "threads", "format", "out"}
    if unknown_top:
        raise UsageError(f"unknown config key {sorted(unknown_top)[0]!r}")
    params = dict(defaults)
    for source in (file_config.get("params", {}), overrides):
        for k, v in source.items():
            if k not in defaults:
                raise UsageError(f"unknown parameter {k!r} for recipe {recipe}")
            params[k] = v
    config = {
        "recipe": recipe,
        "params": params,
        "seed": file_config.get("seed", 0),
        "threads": file_config.get("threads", os.cpu_count() or 1),
        "format": file_config.get("format", "csv"),
        "out": file_config.get("out", "results"),
    }
    for k, v in flags.items():
        if v is not None:
            config[k] = v
    if not isinstance(config["seed"], int) or config["seed"] < 0:
        raise UsageError(f"invalid value for 'seed': {config['seed']!r}")
    if not isinstance(config["threads"], int) or config["threads"] < 1:
        raise UsageError(f"invalid value for 'threads': {config['threads']!r}")
    if config["format"] not in ("csv", "tsv"):
        raise UsageError(f"invalid value for 'format': {config['format']!r}")
    return config


def _check_param_types(config):
    defaults = RECIPES[config["recipe"]][1]
    for k, v in config["params"].items():
        d = defaults[k]
        if isinstance(d, bool):
            ok = isinstance(v, bool)
        elif isinstance(d, (int, float)):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        else:
            ok = isinstance(v, type(d))
        if not ok:
            raise UsageError(f"invalid value for parameter {k!r}: {v!r}")


def run(config):
    """Run a resolved configuration; returns ``(outcome, manifest)``."""
    _check_param_types(config)
    fn = RECIPES[config["recipe"]][0]
    schemas = load_schemas()
    start = time.perf_counter()
    try:
        outcome = fn(config["params"], config)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid parameters for {config['recipe']}: {exc}") from exc
    wall = time.perf_counter() - start

    out = config["out"]
    os.makedirs(out, exist_ok=True)
    delimiter = "," if config["format"] == "csv" else "\t"
    digests = {}
    for name in sorted(outcome.tables):
        rows = outcome.tables[name]
        validate(name, rows, schemas)
        data = render(name, rows, schemas, delimiter)
        fname = f"{name}.{config['format']}"
        write_atomic(os.path.join(out, fname), data)
        digests[fname] = hashlib.sha256(data).hexdigest()
    manifest = {
        "config": config,
        "outputs": digests,
        "checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in outcome.checks],
        "versions": {
            "sarnaklab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mpmath": mpmath.__version__,
        },
        "wall_time_s": wall,
    }
    data = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    write_atomic(os.path.join(out, f"{config['recipe']}.manifest.json"), data)
    return outcome, manifest


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with recipe, params, seed, threads, format, out")
    common.add_argument("--out", help="output directory (default: results)")
    common.add_argument("--seed", type=int, help="random seed (default: 0)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--format", choices=("csv", "tsv"), help="table format (default: csv)")
    common.add_argument(
        "--param", action="append", default=[], metavar="KEY=VALUE",
        help="override one recipe parameter; VALUE is parsed as JSON when possible",
    )
    parser = argparse.ArgumentParser(prog="sarnaklab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="recipe", required=True)
    for name, (_, defaults) in RECIPES.items():
        sub.add_parser(name, parents=[common], help=f"parameters: {', '.join(defaults)}")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_config = {}
        if args.config:
            with open(args.config) as fh:
                file_config = json.load(fh)
        overrides = {}
        for item in args.param:
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
            overrides[key] = parse_value(value)
        flags = {"out": args.out, "seed": args.seed, "threads": args.threads, "format": args.format}
        config = resolve(args.recipe, file_config, overrides, flags)
        outcome, manifest = run(config)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        print(f"sarnaklab {args.recipe}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, ok, detail in outcome.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    print(f"wrote {', '.join(sorted(manifest['outputs']))} to {config['out']}")
    return 0 if outcome.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
