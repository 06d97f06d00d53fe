"""Command-line interface: support queries, vertex queries, reconstruction,
and direct polytope utilities.

One seeded generator drives all randomness per invocation, so identical
invocations produce byte-identical JSON.  Data goes to stdout (or --out);
diagnostics go to stderr.  Exit codes: 0 ok, 2 input error, 3 algorithmic
indeterminacy, 4 internal inconsistency.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from . import eval_oracle as ev
from . import polytope as pt
from . import reconstruct as rc
from . import slp as sp
from . import witness_oracle as wo

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INDETERMINATE = 3
EXIT_INTERNAL = 4


class InputError(ValueError):
    pass


class IndeterminateExit(RuntimeError):
    pass


def _parse_fraction_vector(text: str) -> Tuple[Fraction, ...]:
    try:
        return tuple(Fraction(entry.strip()) for entry in text.split(",") if entry.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"bad direction {text!r}: {exc}") from exc


def _read_direction_file(path: str) -> List[Tuple[Fraction, ...]]:
    directions = []
    for line_no, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            directions.append(tuple(Fraction(f) for f in line.split()))
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"{path}:{line_no}: bad rational vector: {exc}") from exc
    if not directions:
        raise InputError(f"{path}: no directions found")
    return directions


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_polynomial(args) -> Tuple[sp.Slp, int, Optional[sp.SparsePolynomial]]:
    """Returns (program, variable count, sparse form when available)."""
    if getattr(args, "sparse", None):
        try:
            poly = sp.parse_sparse(_read_text(args.sparse))
        except sp.SparseParseError as exc:
            raise InputError(f"{args.sparse}: {exc}") from exc
        if poly.is_zero():
            raise InputError(f"{args.sparse}: the zero polynomial has no Newton polytope")
        return sp.sparse_to_slp(poly), poly.n, poly
    if getattr(args, "slp", None):
        try:
            program = sp.parse_slp(_read_text(args.slp))
        except sp.SlpParseError as exc:
            raise InputError(f"{args.slp}: {exc}") from exc
        return program, program.n, None
    raise InputError("one of --sparse or --slp is required")


def _fraction_str(value: Fraction) -> str:
    return str(value)


def _match_arity(program: sp.Slp, width: int, source: str) -> sp.Slp:
    """Widen a program's ambient arity to the query dimension.

    A program that never reads some trailing variables (a constant, say) can
    still be queried in any larger ambient dimension.
    """
    if width == program.n:
        return program
    if width > program.n:
        return sp.Slp(width, program.instructions, program.output)
    raise InputError(f"direction has {width} entries, but {source} reads {program.n} inputs")


def _emit(args, payload, text_lines=None, csv_rows=None) -> None:
    fmt = getattr(args, "format", "json")
    if fmt == "json":
        body = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        rows = csv_rows if csv_rows is not None else []
        body = "\n".join(",".join(str(x) for x in row) for row in rows)
        body += "\n" if body else ""
    else:
        lines = text_lines if text_lines is not None else [json.dumps(payload, sort_keys=True)]
        body = "\n".join(lines) + "\n"
    out_path = getattr(args, "out", None)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(body)
    else:
        sys.stdout.write(body)


# ---------------------------------------------------------------------------
# support

def cmd_support(args) -> int:
    program, n, _ = _load_polynomial(args)
    directions: List[Tuple[Fraction, ...]] = [_parse_fraction_vector(w) for w in args.w or []]
    if args.directions:
        directions.extend(_read_direction_file(args.directions))
    if not directions:
        raise InputError("supply at least one direction via --w or --directions")
    rng = random.Random(args.seed)
    records = []
    lines = []
    rows = [("w", "h")]
    for w in directions:
        if args.slp:
            program = _match_arity(program, len(w), args.slp)
        elif len(w) != n:
            raise InputError(f"direction {tuple(map(str, w))} has {len(w)} entries, expected {n}")
        try:
            est = ev.support_estimate(program, w, rng=rng)
        except ev.NoConvergenceError as exc:
            raise IndeterminateExit(str(exc)) from exc
        records.append(
            {
                "w": [_fraction_str(x) for x in w],
                "h": _fraction_str(est.h_value),
                "vertex": None,
                "t_used": math.exp(est.samples[-1][0]),
                "estimates": [[tau, value] for tau, value in est.samples],
            }
        )
        lines.append(f"h({', '.join(map(str, w))}) = {est.h_value}")
        rows.append((";".join(map(str, w)), str(est.h_value)))
    _emit(args, records, text_lines=lines, csv_rows=rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# vertex

def _load_witness_setup(args, seed: int):
    try:
        config = json.loads(_read_text(args.witness_config))
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.witness_config}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(args.witness_config))
    backend_info = config.get("backend") or {}
    path = backend_info.get("path")
    if path is None:
        raise InputError("witness config is missing backend.path")
    full = path if os.path.isabs(path) else os.path.join(base, path)
    kind = backend_info.get("type", "sparse")
    poly = None
    if kind == "sparse":
        poly = sp.parse_sparse(_read_text(full))
        backend = wo.SparseLineBackend(poly)
    elif kind == "slp":
        backend = wo.SlpLineBackend(sp.parse_slp(_read_text(full)))
    else:
        raise InputError(f"unknown witness backend type {kind!r}")
    rng = random.Random(config.get("seed", seed))
    line_info = config.get("line")
    a = b = None
    if line_info:
        a = [complex(re, im) for re, im in line_info["a"]]
        b = [complex(re, im) for re, im in line_info["b"]]
    try:
        line = wo.make_line(backend.n, rng, backend, a=a, b=b, degree=config.get("degree"))
    except (wo.GenericityFailure, wo.DegreeMismatchError, wo.RootCoincidenceError) as exc:
        raise IndeterminateExit(str(exc)) from exc
    c_value = config.get("C")
    consts = wo.line_constants(line, C=c_value if c_value is not None else 10.0)
    rate_source = None
    if poly is not None:
        rate_source = lambda w: wo.rate_params_from_sparse(  # noqa: E731
            poly, [float(x) for x in w], consts, C=c_value
        )
    wcfg = wo.WitnessConfig(
        t_max=float(config.get("t_max", 1e8)),
        rng=rng,
        rate_source=rate_source,
        C=c_value,
    )
    return backend, line, consts, wcfg


def cmd_vertex(args) -> int:
    if not args.w:
        raise InputError("--w is required")
    w = _parse_fraction_vector(args.w[0])
    rng = random.Random(args.seed)
    if args.backend == "eval":
        program, n, _ = _load_polynomial(args)
        if args.slp:
            program = _match_arity(program, len(w), args.slp)
            n = program.n
        elif len(w) != n:
            raise InputError(f"direction has {len(w)} entries, expected {n}")
        if args.adaptive:
            oracle = rc.EvalVertexOracle.adaptive(program, n, rng=rng)
            beta = None
            last: Optional[Exception] = None
            for _ in range(8):
                try:
                    beta = oracle.query(w)
                    h = oracle.support(w)
                    break
                except rc.OracleIndeterminate as exc:
                    # an extra support cut prunes box points that shadow the vertex
                    last = exc
                    try:
                        probe = rc.random_direction(n, 3, rng)
                        oracle.support(tuple(Fraction(x) for x in probe))
                    except rc.OracleIndeterminate:
                        pass
            if beta is None:
                raise IndeterminateExit(str(last)) from last
            record = {
                "w": [_fraction_str(x) for x in w],
                "h": _fraction_str(h),
                "vertex": list(beta),
                "t_used": None,
                "estimates": [],
            }
            lines = [f"vertex = {beta}  (support value {h})"]
        else:
            if args.superset is None:
                raise InputError("eval backend needs --superset PATH or --adaptive")
            superset = [tuple(int(x) for x in v) for v in _read_direction_file(args.superset)]
            try:
                bounds = ev.EvalBounds(args.delta, getattr(args, "lambda"), tuple(superset))
            except ValueError as exc:
                raise InputError(str(exc)) from exc
            try:
                answer = ev.vertex_query(program, bounds, w, t=args.t, rng=rng)
            except ev.NotGenericError as exc:
                raise InputError(str(exc)) from exc
            except (ev.NoUniqueCandidateError, ev.EvaluationZeroError) as exc:
                raise IndeterminateExit(str(exc)) from exc
            h = sum(wi * bi for wi, bi in zip(w, answer.beta))
            record = {
                "w": [_fraction_str(x) for x in w],
                "h": _fraction_str(Fraction(h)),
                "vertex": list(answer.beta),
                "t_used": answer.t,
                "estimates": [],
                "ratio": answer.ratio,
            }
            lines = [
                f"vertex = {answer.beta}",
                f"measured log|f(t^w)| / log t = {answer.ratio:.4f} at t = {answer.t:g}",
            ]
        _emit(args, record, text_lines=lines)
        return EXIT_OK

    # witness backend
    if not args.witness_config:
        raise InputError("witness backend needs --witness-config PATH")
    backend, line, consts, wcfg = _load_witness_setup(args, args.seed)
    if len(w) != line.n:
        raise InputError(f"direction has {len(w)} entries, expected {line.n}")
    if args.t_max:
        wcfg.t_max = args.t_max
    try:
        cert = wo.witness_vertex_query(backend, line, consts, list(w), wcfg)
    except (wo.IndeterminateError, wo.RateViolationError, wo.PathCrossingError) as exc:
        raise IndeterminateExit(str(exc)) from exc
    record = {
        "w": [_fraction_str(x) for x in w],
        "h": _fraction_str(sum(wi * bi for wi, bi in zip(w, cert.beta))),
        "vertex": list(cert.beta),
        "t_used": wcfg.t_max,
        "t_entry": cert.t_entry,
        "estimates": [],
    }
    lines = [
        f"vertex = {cert.beta}",
        f"all paths classified from t = {cert.t_entry:g}; bounds checked to t = {wcfg.t_max:g}",
    ]
    rows = None
    if args.format == "csv":  # path traces
        paths = wo.track_paths(backend, line, [float(x) for x in w], wcfg.t_max)
        rows = [("path_id", "t", "re_s", "im_s", "residual")]
        for idx, path in enumerate(paths):
            for t, s, res in path.samples:
                rows.append((idx, f"{t!r}", f"{s.real!r}", f"{s.imag!r}", f"{res:.3e}"))
    _emit(args, record, text_lines=lines, csv_rows=rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct

def cmd_reconstruct(args) -> int:
    rng = random.Random(args.seed)
    if args.backend == "eval":
        program, n, _ = _load_polynomial(args)
        if args.adaptive:
            oracle = rc.EvalVertexOracle.adaptive(program, n, rng=rng)
        else:
            if args.superset is None:
                raise InputError("eval backend needs --superset PATH or --adaptive")
            superset = [tuple(int(x) for x in v) for v in _read_direction_file(args.superset)]
            bounds = ev.EvalBounds(args.delta, getattr(args, "lambda"), tuple(superset))
            oracle = rc.EvalVertexOracle.from_bounds(program, bounds, rng=rng)
    else:
        if not args.witness_config:
            raise InputError("witness backend needs --witness-config PATH")
        backend, line, consts, wcfg = _load_witness_setup(args, args.seed)
        if args.t_max:
            wcfg.t_max = args.t_max
        oracle = rc.WitnessVertexOracle(backend, line, consts, wcfg)
        n = line.n
    config = rc.ReconstructConfig(seed=args.seed, jobs=args.jobs)
    try:
        report = rc.reconstruct(oracle, n, config)
    except rc.OracleExhausted as exc:
        raise IndeterminateExit(str(exc)) from exc

    payload = {
        "polytope": json.loads(pt.to_json(report.polytope)),
        "report": {
            "queries": report.queries,
            "indeterminate": report.indeterminate,
            "confirmed_facets": report.confirmed_facets,
            "unconfirmed": [list(normal) for normal, _ in report.unconfirmed],
            "complete": report.complete,
        },
    }
    lines = [
        f"vertices: {len(report.polytope.vertices)}  facets: {len(report.polytope.facets)}"
        f"  dim: {report.polytope.dim}",
        f"queries: {report.queries}  indeterminate: {report.indeterminate}"
        f"  complete: {report.complete}",
    ]
    for v in report.polytope.vertices:
        lines.append("  " + " ".join(map(str, v)))
    _emit(args, payload, text_lines=lines)
    if not report.complete:
        print("reconstruction incomplete: some facets unconfirmed", file=sys.stderr)
        return EXIT_INDETERMINATE
    return EXIT_OK


# ---------------------------------------------------------------------------
# polytope utilities

def _read_points(path: str) -> List[Tuple[int, ...]]:
    points = []
    for line_no, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            points.append(tuple(int(f) for f in line.split()))
        except ValueError as exc:
            raise InputError(f"{path}:{line_no}: bad integer point: {exc}") from exc
    if not points:
        raise InputError(f"{path}: no points found")
    return points


def cmd_hull(args) -> int:
    points = _read_points(args.points)
    try:
        P = pt.convex_hull(points)
    except pt.PolytopeInputError as exc:
        raise InputError(str(exc)) from exc
    payload = json.loads(pt.to_json(P))
    lines = [f"dim {P.dim}, {len(P.vertices)} vertices, {len(P.facets)} facets"]
    lines += ["  " + " ".join(map(str, v)) for v in P.vertices]
    _emit(args, payload, text_lines=lines)
    return EXIT_OK


def cmd_lattice(args) -> int:
    try:
        P = pt.from_json(_read_text(args.polytope))
        points = pt.lattice_points(P)
    except pt.PolytopeInputError as exc:
        raise InputError(str(exc)) from exc
    payload = {"count": len(points), "points": [list(p) for p in points]}
    lines = [f"{len(points)} lattice points"] + ["  " + " ".join(map(str, p)) for p in points]
    rows = [tuple(p) for p in points]
    _emit(args, payload, text_lines=lines, csv_rows=rows)
    return EXIT_OK


def cmd_isom(args) -> int:
    try:
        P = pt.from_json(_read_text(args.p))
        Q = pt.from_json(_read_text(args.q))
    except pt.PolytopeInputError as exc:
        raise InputError(str(exc)) from exc
    ok, witness = pt.affinely_isomorphic(P, Q)
    payload = {"isomorphic": ok, "transform": None}
    if ok:
        payload["transform"] = {
            "matrix": [[_fraction_str(x) for x in row] for row in witness.matrix],
            "translation": [_fraction_str(x) for x in witness.translation],
        }
    lines = [f"isomorphic: {ok}"]
    _emit(args, payload, text_lines=lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newtonpoly",
        description="Newton polytopes from evaluation or witness-set vertex oracles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, polynomial=True):
        if polynomial:
            p.add_argument("--sparse", help="sparse polynomial file (COEFF : e1 .. en)")
            p.add_argument("--slp", help="straight-line program file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=["json", "csv", "text"], default="json")

    p_support = sub.add_parser("support", help="support-function values from evaluation")
    common(p_support)
    p_support.add_argument("--w", action="append", help="direction, comma-separated rationals")
    p_support.add_argument("--directions", help="file with one rational direction per line")
    p_support.set_defaults(func=cmd_support)

    p_vertex = sub.add_parser("vertex", help="vertex exposed by a direction")
    common(p_vertex)
    p_vertex.add_argument("--backend", choices=["eval", "witness"], required=True)
    p_vertex.add_argument("--w", action="append", required=True)
    p_vertex.add_argument("--t", type=float, help="stretch factor (eval backend)")
    p_vertex.add_argument("--t-max", dest="t_max", type=float, help="tracking horizon (witness)")
    p_vertex.add_argument("--delta", type=float, default=1.0, help="coefficient log-magnitude cap")
    p_vertex.add_argument("--lambda", type=float, default=1.0, help="coefficient log-ratio cap")
    p_vertex.add_argument("--superset", help="file of candidate exponent vectors")
    p_vertex.add_argument("--adaptive", action="store_true")
    p_vertex.add_argument("--witness-config", dest="witness_config")
    p_vertex.set_defaults(func=cmd_vertex)

    p_rec = sub.add_parser("reconstruct", help="full Newton polytope from an oracle")
    common(p_rec)
    p_rec.add_argument("--backend", choices=["eval", "witness"], default="eval")
    p_rec.add_argument("--delta", type=float, default=1.0)
    p_rec.add_argument("--lambda", type=float, default=1.0)
    p_rec.add_argument("--superset")
    p_rec.add_argument("--adaptive", action="store_true")
    p_rec.add_argument("--witness-config", dest="witness_config")
    p_rec.add_argument("--t-max", dest="t_max", type=float)
    p_rec.set_defaults(func=cmd_reconstruct)

    p_hull = sub.add_parser("hull", help="exact convex hull of integer points")
    common(p_hull, polynomial=False)
    p_hull.add_argument("--points", required=True, help="file with one integer point per line")
    p_hull.set_defaults(func=cmd_hull)

    p_lat = sub.add_parser("lattice", help="lattice points of a polytope")
    common(p_lat, polynomial=False)
    p_lat.add_argument("--polytope", required=True, help="polytope JSON file")
    p_lat.set_defaults(func=cmd_lattice)

    p_isom = sub.add_parser("isom", help="lattice-affine isomorphism test")
    common(p_isom, polynomial=False)
    p_isom.add_argument("--p", required=True)
    p_isom.add_argument("--q", required=True)
    p_isom.set_defaults(func=cmd_isom)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IndeterminateExit as exc:
        print(f"indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE
    except (rc.OracleInconsistent, pt.HullError) as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
