"""Command line front end: ``blockkern {analyze|approx|build|spectrum}``.

Every command writes CSV (RFC 4180, fixed header, floats with 17 significant
digits). Exit codes: 0 success, 2 bad configuration, 3 I/O or file format
problem, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .container import ContainerError, load as load_model, save as save_model
from .data import DEFAULT_PREPROCESS, DataFormatError, load as load_data, make_blobs, parse_steps, preprocess, subsample
from .kernels import KINDS, KernelSpec, gram
from .meka import STRATEGIES, build
from .model import DENSE_LIMIT, matvec, memory_budget, memory_report, reconstruct_dense, rel_error, rel_error_streamed
from .spectrum import count_negative, exact_spectrum, lanczos_extreme, shift_correct

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

RECORD_VERSION = 1
RECORD_FIELDS = (
    "record_version", "row", "dataset", "n", "d", "kernel", "gamma", "rho", "a", "p", "sigma_w",
    "c", "k", "strategy", "truncation", "seed", "rel_error", "lambda_min", "neg_count",
    "lambda_shift", "rel_error_corrected", "wall_time_ms", "stored_floats",
)
SPECTRUM_FIELDS = (
    "record_version", "model", "n", "lambda_min_est", "lambda_max_est", "iterations",
    "converged", "residual_bound", "matvecs", "restarts",
)
MEMORY_FIELDS = (
    "record_version", "model", "n", "c", "total_rank", "stored_floats", "stored_indices",
    "factor_floats", "link_floats", "cache_floats", "ratio_vs_dense", "budget_floats", "lambda_shift",
)

# ell_1 radius used when --rho is not given, as a multiple of the dimension
TL1_RHO_PER_DIM = 0.7


class ConfigError(ValueError):
    """Invalid flags or flag combinations."""


def fmt(v):
    """CSV cell text: 17 significant digits for floats, empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(fh, fields, records):
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(fields)
    for r in records:
        w.writerow([fmt(r.get(f)) for f in fields])


def parse_grid(text, integer=False):
    """Comma list ``1,2,3`` or geometric range ``start:stop:mult`` (stop included)."""
    if text is None:
        return [None]
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(t) for t in text.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"range {text!r} must have the form start:stop:mult")
            start, stop, mult = parts
            if not (start > 0 and stop >= start and mult > 1):
                raise ConfigError(f"range {text!r} needs 0 < start <= stop and mult > 1")
            vals = []
            v = start
            while v <= stop * (1 + 1e-12):
                vals.append(v)
                v *= mult
        else:
            vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}") from None
    if not vals:
        raise ConfigError(f"empty grid {text!r}")
    if integer:
        if any(v != round(v) for v in vals):
            raise ConfigError(f"grid {text!r} must contain integers")
        vals = [int(round(v)) for v in vals]
    return vals


def open_dataset(source, subsample_n=None, seed=0):
    """Dataset by path, or ``blobs:N,D,C[,SPREAD]`` for synthetic blobs."""
    if source.startswith("blobs:"):
        try:
            parts = [float(t) for t in source[6:].split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse {source!r}; expected blobs:N,D,C[,SPREAD]") from None
        if len(parts) not in (3, 4):
            raise ConfigError(f"cannot parse {source!r}; expected blobs:N,D,C[,SPREAD]")
        n, d, c = (int(v) for v in parts[:3])
        spread = parts[3] if len(parts) == 4 else 1.0
        D = make_blobs(n, d, c, spread=spread, seed=seed)
    else:
        D = load_data(source)
    D = subsample(D, subsample_n, seed=seed)
    if D.n > DENSE_LIMIT:
        raise ConfigError(f"dataset has n={D.n} > {DENSE_LIMIT} rows; pass --subsample to run at desk scale")
    return D


def kernel_specs(args, d):
    """All kernel specs on the parameter grid of the chosen kernel."""
    kind = args.kernel
    if kind == "rbf":
        return [KernelSpec.rbf(g) for g in parse_grid(args.gamma if args.gamma is not None else "1")]
    if kind == "tl1":
        rhos = parse_grid(args.rho) if args.rho is not None else [TL1_RHO_PER_DIM * d]
        return [KernelSpec.tl1(r) for r in rhos]
    if kind == "poly":
        return [KernelSpec.poly(a, p) for a in parse_grid(args.a if args.a is not None else "2")
                for p in parse_grid(args.p if args.p is not None else "1", integer=True)]
    return [KernelSpec.elm(s) for s in parse_grid(args.sigma_w if args.sigma_w is not None else "1")]


def preprocess_steps(args):
    if args.preprocess is None or args.preprocess == "auto":
        return DEFAULT_PREPROCESS[args.kernel]
    return parse_steps(args.preprocess)


def thread_count():
    raw = os.environ.get("BLOCKKERN_THREADS")
    if not raw:
        return 1
    try:
        t = int(raw)
    except ValueError:
        raise ConfigError(f"BLOCKKERN_THREADS must be a positive integer, got {raw!r}") from None
    if t < 1:
        raise ConfigError(f"BLOCKKERN_THREADS must be a positive integer, got {raw!r}")
    return t


def run_cells(fn, cells):
    """Run ``fn`` over ``cells`` on the task pool; results come back in cell order."""
    threads = min(thread_count(), max(len(cells), 1))
    if threads == 1:
        return [fn(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, cells))


def base_record(row, name, D, spec, c, k, args, seed):
    return {
        "record_version": RECORD_VERSION,
        "row": row,
        "dataset": name,
        "n": D.n,
        "d": D.d,
        "kernel": spec.kind,
        **spec.params(),
        "c": c,
        "k": k,
        "strategy": args.strategy,
        "truncation": float(args.truncation),
        "seed": seed,
    }


def _build(X, spec, c, k, args, seed, steps):
    return build(X, spec, c, k, strategy=args.strategy, truncation_fraction=args.truncation, seed=seed,
                 landmarks=args.landmarks, normalize=args.normalize, preprocess=steps)


def grid_cells(args, D):
    specs = kernel_specs(args, D.d)
    cs = parse_grid(args.clusters, integer=True)
    ks = parse_grid(args.rank, integer=True)
    seeds = parse_grid(args.seeds, integer=True)
    return list(itertools.product(specs, cs, ks, seeds))


def cmd_analyze(args, out):
    D = open_dataset(args.dataset, args.subsample, args.seed)
    steps = preprocess_steps(args)
    X = preprocess(D.values, steps)
    cells = grid_cells(args, D)
    grams = {}
    for spec, *_ in cells:
        if spec not in grams:
            grams[spec] = gram(spec, X, normalize=args.normalize)

    def one(cell):
        spec, c, k, seed = cell
        t0 = time.perf_counter()
        model = _build(X, spec, c, k, args, seed, steps)
        A = reconstruct_dense(model)
        eigs = exact_spectrum(A)
        r = base_record("cell", args.dataset, D, spec, c, k, args, seed)
        r.update(rel_error=rel_error(grams[spec], A), lambda_min=float(eigs[0]), neg_count=count_negative(eigs),
                 stored_floats=memory_report(model)["stored_floats"])
        if args.timing:
            r["wall_time_ms"] = 1e3 * (time.perf_counter() - t0)
        return r

    write_csv(out, RECORD_FIELDS, run_cells(one, cells))
    return EXIT_OK


def cmd_approx(args, out):
    D = open_dataset(args.dataset, args.subsample, args.seed)
    steps = preprocess_steps(args)
    X = preprocess(D.values, steps)
    cells = grid_cells(args, D)

    def one(cell):
        spec, c, k, seed = cell
        t0 = time.perf_counter()
        model = _build(X, spec, c, k, args, seed, steps)
        corrected = shift_correct(model, seed=seed)
        r = base_record("cell", args.dataset, D, spec, c, k, args, seed)
        r.update(rel_error=rel_error_streamed(model, X)[0],
                 lambda_min=corrected.config["shift"]["lambda_min_est"],
                 lambda_shift=corrected.lambda_shift,
                 rel_error_corrected=rel_error_streamed(corrected, X)[0],
                 stored_floats=memory_report(model)["stored_floats"])
        if args.timing:
            r["wall_time_ms"] = 1e3 * (time.perf_counter() - t0)
        return r

    records = run_cells(one, cells)
    rows = []
    for key, group in itertools.groupby(records, key=lambda r: (r["kernel"], *[r.get(p) for p in ("gamma", "rho", "a", "p", "sigma_w")], r["c"], r["k"])):
        group = list(group)
        rows.extend(group)
        for stat, f in (("mean", np.mean), ("sd", _sd)):
            s = {kf: group[0].get(kf) for kf in RECORD_FIELDS[:15]}
            s["row"] = stat
            s["seed"] = None
            for col in ("rel_error", "lambda_min", "lambda_shift", "rel_error_corrected", "stored_floats"):
                s[col] = float(f([g[col] for g in group]))
            if args.timing:
                s["wall_time_ms"] = float(f([g["wall_time_ms"] for g in group]))
            rows.append(s)
    write_csv(out, RECORD_FIELDS, rows)
    return EXIT_OK


def _sd(values):
    """Sample standard deviation (0 for a single value)."""
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _single(text, name, integer=False):
    vals = parse_grid(text, integer=integer)
    if len(vals) != 1:
        raise ConfigError(f"{name} takes a single value for this command, got {text!r}")
    return vals[0]


def cmd_build(args, out):
    if not args.out:
        raise ConfigError("build needs --out MODEL.bin")
    D = open_dataset(args.dataset, args.subsample, args.seed)
    steps = preprocess_steps(args)
    X = preprocess(D.values, steps)
    specs = kernel_specs(args, D.d)
    if len(specs) != 1:
        raise ConfigError("build takes a single kernel parameter setting")
    c = _single(args.clusters, "--clusters", integer=True)
    k = _single(args.rank, "--rank", integer=True)
    model = _build(X, specs[0], c, k, args, args.seed, steps)
    if args.shift:
        model = shift_correct(model, seed=args.seed)
    save_model(model, args.out)
    rep = memory_report(model)
    rec = {"record_version": RECORD_VERSION, "model": args.out, "n": model.n, "c": model.c,
           "total_rank": model.total_rank, **rep, "budget_floats": memory_budget(model),
           "lambda_shift": model.lambda_shift}
    write_csv(out, MEMORY_FIELDS, [rec])
    return EXIT_OK


def cmd_spectrum(args, out):
    model = load_model(args.model)
    rep = lanczos_extreme(lambda v: matvec(model, v), model.n, args.max_iter, args.tol, args.seed)
    rec = {"record_version": RECORD_VERSION, "model": args.model, "n": model.n,
           "lambda_min_est": rep.lambda_min_est, "lambda_max_est": rep.lambda_max_est,
           "iterations": rep.iterations, "converged": rep.converged, "residual_bound": rep.residual_bound,
           "matvecs": rep.matvecs, "restarts": rep.restarts}
    write_csv(out, SPECTRUM_FIELDS, [rec])
    return EXIT_OK


def _add_pipeline_flags(p, grids):
    p.add_argument("dataset", help="dataset path (LIBSVM or CSV) or blobs:N,D,C[,SPREAD]")
    p.add_argument("--kernel", choices=KINDS, default="rbf")
    g = "grid: comma list or start:stop:mult" if grids else "value"
    p.add_argument("--gamma", help=f"rbf gamma ({g}, default 1)")
    p.add_argument("--rho", help=f"tl1 radius ({g}, default 0.7 d)")
    p.add_argument("--a", help=f"poly a ({g}, default 2)")
    p.add_argument("--p", help=f"poly degree ({g}, default 1)")
    p.add_argument("--sigma-w", dest="sigma_w", help=f"elm sigma_w ({g}, default 1)")
    p.add_argument("--clusters", default="3", help=f"number of clusters ({g})")
    p.add_argument("--rank", default="16", help=f"target rank ({g})")
    p.add_argument("--strategy", choices=STRATEGIES, default="uniform")
    p.add_argument("--truncation", type=float, default=0.0, help="fraction of cluster pairs to drop")
    p.add_argument("--landmarks", type=int, default=None, help="landmarks per block (default 2k)")
    p.add_argument("--normalize", action="store_true", help="use the unit-diagonal kernel")
    p.add_argument("--preprocess", default="auto",
                   help="comma list of minmax, zscore, l2; 'none'; or 'auto' for the kernel default")
    p.add_argument("--subsample", type=int, default=None, help="keep this many rows")
    p.add_argument("--seed", type=int, default=0, help="data generation and subsampling seed")
    p.add_argument("--out", default=None)


def make_parser():
    ap = argparse.ArgumentParser(prog="blockkern", description="Block low-rank kernel approximation experiments.")
    ap.add_argument("--version", action="version", version=f"blockkern {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="grid of uncorrected builds with dense spectra")
    _add_pipeline_flags(p, grids=True)
    p.add_argument("--seeds", default="0", help="build seeds (grid)")
    p.add_argument("--timing", action="store_true", help="fill wall_time_ms (makes output machine dependent)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("approx", help="approximation error before and after the shift")
    _add_pipeline_flags(p, grids=True)
    p.add_argument("--seeds", default="0", help="build seeds (grid)")
    p.add_argument("--timing", action="store_true", help="fill wall_time_ms (makes output machine dependent)")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("build", help="build one model, save it and print its memory report")
    _add_pipeline_flags(p, grids=False)
    p.add_argument("--shift", action="store_true", help="apply the PSD shift before saving")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("spectrum", help="Lanczos extreme eigenvalues of a saved model")
    p.add_argument("model")
    p.add_argument("--max-iter", type=int, default=None, help="default ceil(2 sqrt(n))")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectrum)
    return ap


def main(argv=None):
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        # build writes the model to --out and its memory report to stdout
        if args.out and args.command != "build":
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                return args.func(args, fh)
        return args.func(args, sys.stdout)
    except (ContainerError, DataFormatError, OSError) as exc:
        print(f"blockkern: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except np.linalg.LinAlgError as exc:
        print(f"blockkern: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, MemoryError) as exc:
        print(f"blockkern: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"blockkern: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
