"""Command-line interface.

    python -m polybary weights   --polytope P.json --points pts.csv [--tol T] [--out sol.json]
    python -m polybary verify    --polytope P.json [--samples N] [--weights sol.json] --report r.json
    python -m polybary lipschitz --polytope P.json --field field.csv --out lip.json
    python -m polybary factorize --model dd2|dd3|file:model.json --field field.csv --out fact.json
    python -m polybary stencil   --model dd2 --point u.json --h H --out stencil.json

Exit status is 0 when every check passes, 1 when a check fails (or a point
cannot be solved) and 2 for unreadable or malformed input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from .barrier import SolverOptions, batch_solve, solve_weights
from .calculus import Report, estimate_sqrt_lipschitz
from .errors import OutsideError, PolybaryError, PolytopeError
from .matrix import dd_trace1_polytope, factorize_field, load_model
from .polytope import load_polytope
from .stencil import operator_matrix, stencil_at
from .suite import verify_polytope

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
DEFAULT_SEED = 0
RECONSTRUCTION_TOL = 1e-9
ROUNDTRIP_TOL = 1e-9


class InputError(Exception):
    """Unreadable or malformed input; the message names the offending field."""


# ---------------------------------------------------------------- input

def read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{what}: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: malformed JSON in {path} "
                         f"(line {exc.lineno}, column {exc.colno}: {exc.msg})") from exc


def read_csv(path: str, what: str) -> np.ndarray:
    """Numeric CSV as a 2-D array.  Blank lines and ``#`` comments are skipped,
    as is a single non-numeric header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise InputError(f"{what}: cannot read {path}: {exc.strerror}") from exc
    out = []
    for i, row in enumerate(rows):
        try:
            out.append([float(v) for v in row])
        except ValueError as exc:
            if i == 0:
                continue
            raise InputError(f"{what}: row {i + 1} of {path} is not numeric ({exc})") from exc
    if not out:
        raise InputError(f"{what}: {path} contains no data rows")
    width = {len(r) for r in out}
    if len(width) != 1:
        raise InputError(f"{what}: rows of {path} have differing lengths {sorted(width)}")
    arr = np.array(out, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what}: {path} contains non-finite values")
    return arr


def load_polytope_file(path: str):
    doc = read_json(path, "--polytope")
    try:
        return load_polytope(doc)
    except PolytopeError as exc:
        raise InputError(f"--polytope {path}: {exc}") from exc


def load_model_source(source: str):
    """``dd2``, ``dd3`` or ``file:model.json``."""
    if source in ("dd2", "dd3"):
        return dd_trace1_polytope(int(source[2]))
    if source.startswith("file:"):
        path = source[5:]
        doc = read_json(path, "--model")
        try:
            return load_model(doc)
        except (PolytopeError, ValueError) as exc:
            raise InputError(f"--model {path}: {exc}") from exc
    raise InputError(f"--model: expected dd2, dd3 or file:PATH, got {source!r}")


def split_field(data: np.ndarray, value_cols: int, what: str):
    """Split field rows into grid coordinates and values, shaping tensor grids.

    One grid column gives a 1-D grid.  Two grid columns must form a full
    tensor grid (any row order); the result then has shape ``(M1, M2, ...)``.
    """
    grid_cols = data.shape[1] - value_cols
    if grid_cols not in (1, 2):
        raise InputError(f"{what}: expected 1 or 2 grid columns followed by {value_cols} "
                         f"value columns, found {data.shape[1]} columns")
    ys, us = data[:, :grid_cols], data[:, grid_cols:]
    if grid_cols == 1:
        order = np.argsort(ys[:, 0], kind="stable")
        return ys[order, 0], us[order]
    a, b = np.unique(ys[:, 0]), np.unique(ys[:, 1])
    if len(a) * len(b) != len(ys):
        raise InputError(f"{what}: two grid columns must form a full tensor grid "
                         f"({len(a)} x {len(b)} != {len(ys)} rows)")
    order = np.lexsort((ys[:, 1], ys[:, 0]))
    return (ys[order].reshape(len(a), len(b), 2),
            us[order].reshape(len(a), len(b), value_cols))


def upper_to_matrix(vals, m: int) -> np.ndarray:
    """Symmetric matrix from its row-major upper triangle (unscaled)."""
    u = np.zeros((m, m))
    u[np.triu_indices(m)] = vals
    return u + np.triu(u, 1).T


# ---------------------------------------------------------------- output

def clean(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _version() -> str:
    try:
        return metadata.version("polybary")
    except metadata.PackageNotFoundError:
        return "unknown"


def document(command: str, seed: int, body: dict) -> dict:
    """Wrap ``body`` with a header; the timestamp lives only in ``header.created``."""
    header = {"program": "polybary", "version": _version(), "command": command,
              "seed": seed, "created": datetime.now(timezone.utc).isoformat()}
    return {"header": header, **body}


def dumps(doc) -> str:
    return json.dumps(clean(doc), indent=2, allow_nan=False) + "\n"


def write_json(path: str, doc) -> None:
    """Write atomically: temporary file in the target directory, then rename."""
    text = dumps(doc)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".json", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, doc, path: str | None) -> None:
    if path:
        write_json(path, doc)
    else:
        sys.stdout.write(dumps(doc))
        args.json_on_stdout = True


def say(args, msg: str) -> None:
    """Human-readable summary; moved to stderr when stdout carries the JSON."""
    if not args.quiet:
        print(msg, file=sys.stderr if getattr(args, "json_on_stdout", False) else sys.stdout)


def summarize(args, rep: Report) -> None:
    for c in rep.checks:
        say(args, f"  {'PASS' if c.passed else 'FAIL'}  {c.name:32s} worst={c.worst:.3e}"
                  f"  tol={c.tol:.1e}")


# ---------------------------------------------------------------- commands

def cmd_weights(args) -> int:
    P = load_polytope_file(args.polytope)
    pts = read_csv(args.points, "--points")
    if pts.shape[1] != P.ambient_dim:
        raise InputError(f"--points: rows have {pts.shape[1]} coordinates, "
                         f"the polytope lives in dimension {P.ambient_dim}")
    opts = SolverOptions(tol=args.tol)
    results = batch_solve(P, pts, opts)
    entries, failed = [], 0
    for i, (x, r) in enumerate(zip(pts, results)):
        if isinstance(r, Exception):
            failed += 1
            entries.append({"index": i, "x": x, "error": {"type": type(r).__name__,
                                                          "message": str(r)}})
        else:
            entries.append(r.as_dict(P))
    doc = document("weights", args.seed, {"polytope": P.name, "points": entries})
    emit(args, doc, args.out)
    say(args, f"weights: {len(pts) - failed} of {len(pts)} points solved")
    return EXIT_FAIL if failed else EXIT_OK


def roundtrip_report(P, doc, opts: SolverOptions | None = None) -> Report:
    """Re-solve every point of a ``weights`` output and compare."""
    entries = doc.get("points") if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise InputError("--weights: missing list field 'points'")
    rep = Report()
    worst_p = worst_part = 0.0
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "x" not in e:
            raise InputError(f"--weights: entry {i} lacks field 'x'")
        if "error" in e:
            continue
        if "p" not in e:
            raise InputError(f"--weights: entry {i} lacks field 'p'")
        p = np.asarray(e["p"], dtype=float)
        if p.shape != (P.n,):
            raise InputError(f"--weights: entry {i} field 'p' must have {P.n} entries")
        sol = solve_weights(P, e["x"], opts)
        worst_p = max(worst_p, float(np.abs(sol.weights - p).max()))
        xc = P.to_chart(np.asarray(e["x"], dtype=float), check=False)
        worst_part = max(worst_part, abs(p.sum() - 1.0),
                         float(np.linalg.norm(p @ P.chart_vertices - xc)) / P.scale)
    rep.add("roundtrip_weights", worst_p, ROUNDTRIP_TOL)
    rep.add("roundtrip_partition", worst_part, ROUNDTRIP_TOL)
    return rep


def cmd_verify(args) -> int:
    P = load_polytope_file(args.polytope)
    if args.samples < 1:
        raise InputError("--samples must be at least 1")
    rep = verify_polytope(P, samples=args.samples, seed=args.seed)
    if args.weights:
        rep.merge(roundtrip_report(P, read_json(args.weights, "--weights")))
    doc = document("verify", args.seed, {"polytope": P.name, "report": rep.as_dict()})
    emit(args, doc, args.report or args.out)
    say(args, f"verify {P.name or args.polytope}: {'PASS' if rep.passed else 'FAIL'}")
    summarize(args, rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def lipschitz_body(P, ys, us, weights=None) -> tuple[dict, bool]:
    est = estimate_sqrt_lipschitz(P, ys, us, weights=weights)
    ok = bool(np.all(np.isfinite(est.constants)))
    return {"constants": est.constants, "curvature": est.curvature,
            "ceiling_shape": est.ceiling_shape, "spacing": est.spacing}, ok


def cmd_lipschitz(args) -> int:
    P = load_polytope_file(args.polytope)
    ys, us = split_field(read_csv(args.field, "--field"), P.ambient_dim, "--field")
    try:
        body, ok = lipschitz_body(P, ys, us)
    except OutsideError as exc:
        emit(args, document("lipschitz", args.seed, {"error": str(exc)}), args.out)
        print(f"lipschitz: {exc}", file=sys.stderr)
        return EXIT_FAIL
    emit(args, document("lipschitz", args.seed, {"polytope": P.name, **body}), args.out)
    say(args, "lipschitz: " + ", ".join(f"{c:.6g}" for c in body["constants"]))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_factorize(args) -> int:
    model = load_model_source(args.model)
    m = model.m
    width = m * (m + 1) // 2
    ys, vals = split_field(read_csv(args.field, "--field"), width, "--field")
    grid = vals.shape[:-1]
    flat_y = ys.reshape(-1, ys.shape[-1]) if ys.ndim > 1 else ys
    mats = [upper_to_matrix(v, m) for v in vals.reshape(-1, width)]
    try:
        fact = factorize_field(model, zip(flat_y, mats))
    except OutsideError as exc:
        emit(args, document("factorize", args.seed, {"error": str(exc)}), args.out)
        print(f"factorize: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep = Report()
    rep.add("reconstruction", float(fact.reconstruction_error.max()), RECONSTRUCTION_TOL)
    rep.add("nonnegative", max(0.0, -float(fact.direction_coeffs.min())), 0.0)
    body = fact.as_dict()
    if len(mats) >= 2:
        us = np.array([model.embedding.vec(u) for u in mats]).reshape(grid + (-1,))
        lip, ok = lipschitz_body(model.polytope, ys, us,
                                 weights=fact.weights.reshape(grid + (model.n,)))
        body["sqrt_lipschitz"] = lip
        rep.add("lipschitz_finite", 0.0 if ok else np.inf, 0.0)
    doc = document("factorize", args.seed, {**body, "report": rep.as_dict()})
    emit(args, doc, args.out)
    say(args, f"factorize: {len(mats)} samples, {len(model.directions)} directions")
    summarize(args, rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_stencil(args) -> int:
    model = load_model_source(args.model)
    doc = read_json(args.point, "--point")
    raw = doc.get("u") if isinstance(doc, dict) else doc
    if raw is None:
        raise InputError("--point: missing field 'u'")
    try:
        u = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError("--point: field 'u' must be a numeric matrix") from exc
    if u.shape != (model.m, model.m):
        raise InputError(f"--point: field 'u' must be a {model.m}x{model.m} matrix")
    if not args.h > 0:
        raise InputError("--h must be positive")
    try:
        spec = stencil_at(model, u, args.h)
    except (OutsideError, ValueError) as exc:
        emit(args, document("stencil", args.seed, {"error": str(exc)}), args.out)
        print(f"stencil: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep = Report()
    rep.add("monotone", max(0.0, -float(spec.coeffs.min())), 0.0)
    rep.add("consistency", float(np.abs(operator_matrix(spec) - u).max()), RECONSTRUCTION_TOL)
    doc = document("stencil", args.seed, {**spec.as_dict(), "report": rep.as_dict()})
    emit(args, doc, args.out)
    say(args, f"stencil: {len(spec.coeffs)} off-centre nodes, center {spec.center:.6g}"
              + ("" if spec.lattice else " (some directions are off the integer lattice)"))
    summarize(args, rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    # The common flags are accepted before or after the subcommand.  They
    # default to SUPPRESS so a subparser does not overwrite a value given
    # before the subcommand; real defaults are filled in by main().
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"seed for randomized checks (default {DEFAULT_SEED})")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output JSON path")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress the human-readable summary")

    parser = argparse.ArgumentParser(prog="polybary", parents=[common],
                                     description="Barrier weights on convex polytopes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", parents=[common], help="solve for weights at points")
    p.add_argument("--polytope", required=True)
    p.add_argument("--points", required=True, help="CSV, one ambient point per row")
    p.add_argument("--tol", type=float, default=None, help="Newton residual tolerance")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("verify", parents=[common], help="run the identity and bound suite")
    p.add_argument("--polytope", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--report", default=None, help="report JSON path")
    p.add_argument("--weights", default=None, help="re-verify a 'weights' output file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lipschitz", parents=[common],
                       help="Lipschitz estimates of square-root weights along a field")
    p.add_argument("--polytope", required=True)
    p.add_argument("--field", required=True,
                   help="CSV: grid columns then ambient value columns")
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("factorize", parents=[common], help="factorize a matrix field")
    p.add_argument("--model", required=True, help="dd2, dd3 or file:model.json")
    p.add_argument("--field", required=True,
                   help="CSV: grid columns then the upper triangle of u (row-major)")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("stencil", parents=[common], help="monotone stencil for one matrix")
    p.add_argument("--model", required=True, help="dd2, dd3 or file:model.json")
    p.add_argument("--point", required=True, help='JSON matrix, or {"u": matrix}')
    p.add_argument("--h", type=float, required=True, help="mesh size")
    p.set_defaults(func=cmd_stencil)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed = getattr(args, "seed", DEFAULT_SEED)
    args.out = getattr(args, "out", None)
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PolybaryError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
