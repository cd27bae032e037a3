"""Command-line front end.

    flexsky sky|nd|po --relation R.csv --query Q.yaml [--oracle] [--clamp] [--timing]
    flexsky cdf --lambda L --k K --mode cdf|survival|pmf|quantile [--p P]
    flexsky gen --n N --seed S --out R.csv [--schema name:kind,...]
    flexsky bench --n N --d D [--clamp]

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure,
4 oracle mismatch.  Output is written only after the whole command succeeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import oracle, poisson
from .bench import run_bench
from .engine import SETS, run_query
from .errors import (
    DataError,
    FlexskyError,
    LpStructureError,
    NumericalFailure,
)
from .io import (
    DEFAULT_RATE_RANGE,
    default_schema,
    dumps_document,
    gen_dataset,
    load_relation,
    parse_query,
    parse_schema_flag,
    write_relation,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_ORACLE = 0, 1, 2, 3, 4
ORACLE_LIMIT = 500


class UsageError(Exception):
    pass


class OracleMismatch(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flexsky", description="Flexible skyline queries with Poisson scoring terms.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in (
        ("sky", "classic skyline in transformed attribute space"),
        ("nd", "non-dominated flexible skyline (with sky)"),
        ("po", "potentially optimal flexible skyline (with sky and nd)"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--relation", required=True, type=Path, help="CSV file with an id column")
        p.add_argument("--query", required=True, type=Path, help="query document (YAML or JSON)")
        p.add_argument("--oracle", action="store_true", help="cross-check against brute-force oracles")
        p.add_argument("--clamp", action="store_true", default=None, help="use the clamped Poisson path")
        p.add_argument("--tolerance", type=float, default=None, help="dominance tolerance")
        p.add_argument("--timing", action="store_true", help="include wall-clock timings")

    p = sub.add_parser("cdf", help="evaluate the Poisson distribution")
    p.add_argument("--lambda", dest="lam", required=True, type=float)
    p.add_argument("--k", type=float, default=None, help="event count or threshold")
    p.add_argument("--p", type=float, default=None, help="probability level for quantile")
    p.add_argument("--mode", choices=("cdf", "survival", "pmf", "quantile"), default="cdf")
    p.add_argument("--clamp", action="store_true", help="apply the band clamp (cdf and survival)")
    p.add_argument("--band-multiplier", type=float, default=2.0)
    p.add_argument("--digits", type=int, default=10)

    p = sub.add_parser("gen", help="write a synthetic relation")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--d", type=_positive_int, default=2, help="arity when --schema is not given")
    p.add_argument("--schema", default=None, help="name:kind,... with kind rate or normalized")
    p.add_argument("--lambda-min", type=float, default=DEFAULT_RATE_RANGE[0])
    p.add_argument("--lambda-max", type=float, default=DEFAULT_RATE_RANGE[1])

    p = sub.add_parser("bench", help="exact versus clamped timing and set differences")
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--d", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float, default=25.0)
    p.add_argument("--clamp", action="store_true", help="also run the clamped path and compare")
    p.add_argument("--po", action="store_true", help="also time the PO phase")
    p.add_argument("--band-multiplier", type=float, default=2.0)
    p.add_argument("--lambda-min", type=float, default=DEFAULT_RATE_RANGE[0])
    p.add_argument("--lambda-max", type=float, default=DEFAULT_RATE_RANGE[1])
    return parser


def _query_command(args) -> str:
    spec = parse_query(args.query)
    relation = load_relation(args.relation, spec.schema)
    config = spec.engine_config(use_clamp=args.clamp, tolerance=args.tolerance)
    chain = {"sky": ("sky",), "nd": ("sky", "nd"), "po": SETS}[args.command]
    want = set(chain) | set(spec.outputs)
    result = run_query(relation, spec.family, config, want)
    doc = result.document(timing=args.timing)
    if args.oracle or spec.engine.oracle:
        doc["oracle"] = _cross_check(result, relation, spec.family, config)
    return dumps_document(doc)


def _cross_check(result, relation, family, config) -> dict:
    if len(relation) > ORACLE_LIMIT:
        raise UsageError(f"--oracle supports at most {ORACLE_LIMIT} tuples, got {len(relation)}")
    numerics = config.numerics()
    report, problems = {}, []
    if result.sky is not None:
        ok = set(result.sky) == oracle.sky_naive(relation, family, numerics)
        report["sky"] = "match" if ok else "mismatch"
        if not ok:
            problems.append("sky differs from the all-pairs skyline")
    if result.nd is not None:
        ok = set(result.nd) == oracle.nd_brute(relation, family, config.tolerance, numerics)
        report["nd"] = "match" if ok else "mismatch"
        if not ok:
            problems.append("nd differs from the all-pairs flexible skyline")
    if result.po is not None:
        cert = oracle.po_grid(relation, family, tolerance=config.tolerance, config=numerics)
        engine_po = set(result.po)
        missed = sorted(cert.certified_po - engine_po)
        wrong = sorted(cert.certified_not_po & engine_po)
        report["po"] = {
            "certified_po": len(cert.certified_po),
            "certified_not_po": len(cert.certified_not_po),
            "undecided": len(cert.undecided),
            "status": "consistent" if not (missed or wrong) else "mismatch",
        }
        if missed:
            problems.append(f"po misses certified tuples {', '.join(missed)}")
        if wrong:
            problems.append(f"po keeps certified non-optimal tuples {', '.join(wrong)}")
    if problems:
        raise OracleMismatch("; ".join(problems))
    return report


def _cdf_command(args) -> str:
    params = poisson.PoissonParams(args.lam)
    cfg = poisson.NumericsConfig(band_multiplier=args.band_multiplier)
    if args.mode == "quantile":
        if args.p is None:
            raise UsageError("quantile mode needs --p")
        return f"{poisson.quantile(params, args.p, cfg)}\n"
    if args.k is None:
        raise UsageError(f"{args.mode} mode needs --k")
    if args.mode == "pmf":
        value = poisson.pmf(params, args.k)
    elif args.mode == "cdf":
        value = poisson.clamped_cdf(params, args.k, cfg) if args.clamp else poisson.cdf(params, args.k)
    else:
        fn = poisson.clamped_survival if args.clamp else poisson.survival
        value = fn(params, args.k, cfg)
    return f"{value:.{args.digits}f}\n"


def _gen_command(args) -> str:
    schema = parse_schema_flag(args.schema) if args.schema else default_schema(args.d)
    relation = gen_dataset(args.n, schema, args.seed, (args.lambda_min, args.lambda_max))
    try:
        write_relation(args.out, relation)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc.strerror or exc}") from None
    return dumps_document({"written": str(args.out), "n": len(relation), "schema": list(schema.names)})


def _bench_command(args) -> str:
    report = run_bench(
        n=args.n,
        d=args.d,
        seed=args.seed,
        k=args.k,
        clamp=args.clamp,
        band_multiplier=args.band_multiplier,
        rate_range=(args.lambda_min, args.lambda_max),
        with_po=args.po,
    )
    return dumps_document(report.document())


COMMANDS = {
    "sky": _query_command,
    "nd": _query_command,
    "po": _query_command,
    "cdf": _cdf_command,
    "gen": _gen_command,
    "bench": _bench_command,
}


def run_command(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    """Run one command; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        text = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except OracleMismatch as exc:
        print(f"oracle mismatch: {exc}", file=stderr)
        return EXIT_ORACLE
    except (NumericalFailure, LpStructureError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except (FlexskyError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_DATA
    stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
