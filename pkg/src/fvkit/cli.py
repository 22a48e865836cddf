"""Command-line frontend: decompose, eval, support, witness.

Fully deterministic: byte-identical output for identical inputs and flags.
Exit codes: 0 ok, 2 parse error, 3 ceiling or limit exceeded, 4 oracle
disagreement, 5 precondition violated, 6 replacement budget exhausted.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from .errors import (
    CapError,
    CellCeilingError,
    ConditionBudgetError,
    EnumerationLimitError,
    FvkitError,
    ParseError,
    PreconditionError,
    ProductSizeError,
    ReplacementBudgetError,
    SkolemSpaceError,
)
from .fv import DEFAULT_CELL_CEILING, check_partition, decompose
from .logic import evaluate, product
from .parsing import (
    parse_family,
    parse_formula,
    parse_signature,
    serialize_acceptable_sequence,
    serialize_formula,
)
from .witness import (
    eval_product_via_fv,
    finite_support,
    render_support_report,
    render_witness_report,
    witness_pipeline,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_CEILING = 3
EXIT_ORACLE = 4
EXIT_PRECONDITION = 5
EXIT_BUDGET = 6

_CEILING_ERRORS = (
    CellCeilingError,
    ProductSizeError,
    EnumerationLimitError,
    SkolemSpaceError,
    ConditionBudgetError,
    CapError,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvkit",
        description="Product decomposition, evaluation and finite-support witnesses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, family: bool):
        p.add_argument("--sig", required=True, help="signature file")
        if family:
            p.add_argument("--family", required=True, help="family file")
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--formula", help="formula text")
        group.add_argument("--formula-file", help="file containing the formula")
        p.add_argument(
            "--cell-ceiling",
            type=int,
            default=None,
            help="decomposition cell ceiling (default 4096 or FVKIT_CELL_CEILING)",
        )

    p_dec = sub.add_parser("decompose", help="print the acceptable sequence")
    common(p_dec, family=False)
    p_dec.add_argument("--psi-dump", help="write the full sequence to this path")
    p_dec.add_argument(
        "--check-size",
        type=int,
        default=0,
        help="audit the partition over all structures up to this size",
    )

    p_eval = sub.add_parser("eval", help="evaluate the sentence in the product")
    common(p_eval, family=True)
    p_eval.add_argument(
        "--oracle",
        action="store_true",
        help="also materialize the product and compare verdicts",
    )
    p_eval.add_argument("--cap", type=int, default=None, help="profile cap override")

    p_sup = sub.add_parser("support", help="support bound and witness set")
    common(p_sup, family=True)
    p_sup.add_argument("--report", help="also write the report to this path")

    p_wit = sub.add_parser("witness", help="finite product witnessing the sentence")
    common(p_wit, family=True)
    p_wit.add_argument("--search-size", type=int, default=3)
    p_wit.add_argument("--report", help="also write the report to this path")
    return parser


def _cell_ceiling(args) -> int:
    if args.cell_ceiling is not None:
        return args.cell_ceiling
    env = os.environ.get("FVKIT_CELL_CEILING")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ParseError(f"bad FVKIT_CELL_CEILING value {env!r}") from exc
    return DEFAULT_CELL_CEILING


def _load_inputs(args, want_family: bool):
    sig = parse_signature(Path(args.sig).read_text(encoding="utf-8"))
    if args.formula is not None:
        text = args.formula
    else:
        text = Path(args.formula_file).read_text(encoding="utf-8")
    phi = parse_formula(text, sig)
    fam = None
    if want_family:
        family_path = Path(args.family)

        def resolver(rel: str) -> str:
            return (family_path.parent / rel).read_text(encoding="utf-8")

        fam = parse_family(
            family_path.read_text(encoding="utf-8"), sig, resolver
        )
    return sig, phi, fam


def _cmd_decompose(args, out) -> int:
    sig, phi, _ = _load_inputs(args, want_family=False)
    ceiling = _cell_ceiling(args)
    seq = decompose(phi, ceiling)
    out.write(f"cells: {len(seq.cells)}\n")
    for j, theta in enumerate(seq.cells):
        out.write(f"theta {j}: {serialize_formula(theta)}\n")
    if args.psi_dump:
        Path(args.psi_dump).write_text(
            serialize_acceptable_sequence(seq), encoding="utf-8"
        )
    if args.check_size > 0:
        violations = check_partition(seq.partition, sig, args.check_size)
        if violations:
            out.write(f"partition check: {len(violations)} violations\n")
            return EXIT_ERROR
        out.write(f"partition check: ok (sizes up to {args.check_size})\n")
    return EXIT_OK


def _cmd_eval(args, out) -> int:
    _, phi, fam = _load_inputs(args, want_family=True)
    ceiling = _cell_ceiling(args)
    verdict = eval_product_via_fv(fam, phi, ceiling, cap=args.cap)
    if not args.oracle:
        out.write(f"{'true' if verdict else 'false'}\n")
        return EXIT_OK
    brute = evaluate(product(fam), phi)
    out.write(f"fv: {'true' if verdict else 'false'}\n")
    out.write(f"oracle: {'true' if brute else 'false'}\n")
    if verdict != brute:
        out.write("verdicts disagree\n")
        return EXIT_ORACLE
    return EXIT_OK


def _cmd_support(args, out) -> int:
    _, phi, fam = _load_inputs(args, want_family=True)
    ceiling = _cell_ceiling(args)
    witness = finite_support(fam, phi, ceiling)
    report = render_support_report(phi, witness)
    out.write(report)
    if args.report:
        Path(args.report).write_text(report, encoding="utf-8")
    return EXIT_OK


def _cmd_witness(args, out) -> int:
    _, phi, fam = _load_inputs(args, want_family=True)
    ceiling = _cell_ceiling(args)
    result = witness_pipeline(fam, phi, args.search_size, ceiling)
    report = render_witness_report(phi, result)
    out.write(report)
    if args.report:
        Path(args.report).write_text(report, encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "decompose": _cmd_decompose,
    "eval": _cmd_eval,
    "support": _cmd_support,
    "witness": _cmd_witness,
}


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args, out)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _CEILING_ERRORS as exc:
        print(f"limit exceeded: {exc}", file=sys.stderr)
        return EXIT_CEILING
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ReplacementBudgetError as exc:
        print(f"replacement budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (FvkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
