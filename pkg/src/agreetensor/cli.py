"""Command-line entry point: ``agreetensor <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
numeric error. Failures print a single line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import agreement, estimation, geometry, invariants, models
from ._numbers import coerce, format_number
from .errors import AgreeTensorError, UnsupportedFamily
from .tensor import format_tensor, load_tensor

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def data_path(name):
    """Path of a file shipped in the package's ``data`` directory."""
    return resources.files("agreetensor") / "data" / name


def _family(name):
    try:
        return models.resolve_family(name)
    except UnsupportedFamily as exc:
        raise UsageError(str(exc)) from None


def _marginals(path, n):
    data = json.loads(Path(path).read_text())
    out = []
    for key in ("a", "b", "c"):
        if key not in data:
            raise UsageError(f"marginals file lacks {key!r}")
        vec = tuple(coerce(v) for v in data[key])
        if len(vec) != n:
            raise UsageError(f"marginal {key} has length {len(vec)}, expected n={n}")
        out.append(vec)
    return out


def _write(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- subcommands ----------------------------------------------------------------


def cmd_materialize(args):
    params = models.load_params(args.params)
    P = models.materialize(params, backend="float" if args.float else None)
    _write(format_tensor(P), args.out)
    return EXIT_OK


def cmd_kappa(args):
    P = load_tensor(args.tensor, exact=not args.float)
    triple = agreement.pairwise_kappas(P)
    print(" ".join(format_number(k) for k in triple))
    return EXIT_OK


def cmd_sweep(args):
    family = _family(args.family)
    if family not in ("pQI", "pMix"):
        raise UsageError("sweep supports --family pqi or pmix")
    kwargs = {}
    if args.marginals:
        kwargs.update(zip("abc", _marginals(args.marginals, args.n)))
    if args.alpha_step:
        kwargs["alpha_step"] = Fraction(args.alpha_step)
    grid = agreement.SweepGrid(family, args.n, **kwargs)
    records = agreement.sweep(grid, workers=args.workers)
    _write(agreement.sweep_csv(grid, records), args.out)
    return EXIT_OK


def _polynomials(family, n, generate):
    """The catalog, plus generator output (or degree-3 fiber binomials) when asked."""
    if not generate:
        return invariants.catalog(family, n)
    polys = []
    try:
        polys.extend(invariants.catalog(family, n))
    except UnsupportedFamily:
        pass
    if family == "qI":
        polys.extend(invariants.generate_qin_invariants(n))
    elif family == "mix":
        polys.extend(invariants.generate_mixn_invariants(n))
    elif family == "pQI" and n >= 3:
        polys.extend(invariants.fiber_binomials("pQI", n, 3))
    return invariants.canonical_list(polys)


def cmd_invariants(args):
    family = _family(args.family)
    polys = _polynomials(family, args.n, args.generate)
    _write(invariants.format_polynomials(polys), args.out)
    return EXIT_OK


def cmd_verify(args):
    family = _family(args.family)
    polys = _polynomials(family, args.n, True)
    failures = set()
    for seed in range(args.seeds):
        P = models.materialize(models.sample_params(family, args.n, seed))
        failures.update(invariants.nonvanishing(polys, P))
    print(f"family={family} n={args.n} polynomials={len(polys)} seeds={args.seeds} failures={len(failures)}")
    if failures:
        print(f"first failure: {min(failures, key=invariants.SparsePolynomial.sort_key)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_fiber_dim(args):
    family = _family(args.family)
    print(invariants.fiber_dimension(family, args.n, args.degree))
    return EXIT_OK


def cmd_fit(args):
    family = _family(args.family)
    counts = estimation.load_counts(args.counts)
    result = estimation.fit(counts, family, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    text = json.dumps(result.to_dict(), indent=2) + "\n"
    if args.out:
        estimation.dump_fit(result, args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_counterexample(args):
    P, report = geometry.boundary_counterexample(args.direction, args.n)
    _write(format_tensor(P), args.out)
    for line in report.lines:
        print(f"# {line}", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    if not report.passed(P):
        print("witness check failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="agreetensor", description="Agreement models for three raters.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("materialize", help="parameter JSON -> tensor file")
    p.add_argument("--params", required=True)
    p.add_argument("--out")
    p.add_argument("--float", action="store_true", help="force the float backend")
    p.set_defaults(func=cmd_materialize)

    p = sub.add_parser("kappa", help="pairwise kappas of a tensor file")
    p.add_argument("--tensor", required=True)
    p.add_argument("--float", action="store_true", help="read entries as floats")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("sweep", help="kappa sweep over the default grid, as CSV")
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--marginals", help="JSON with a, b, c (default uniform)")
    p.add_argument("--alpha-step", help="pMix grid step, e.g. 1/10")
    p.add_argument("--workers", type=int, help="process count (default AGREETENSOR_THREADS or 1; 0 = all cores)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("invariants", help="write invariant polynomials, one per line")
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--generate", action="store_true", help="add generator output where available")
    p.add_argument("--out")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("verify", help="check invariants vanish on sampled model points")
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fiber-dim", help="dimension of a graded piece of a toric ideal")
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--degree", type=int, required=True)
    p.set_defaults(func=cmd_fiber_dim)

    p = sub.add_parser("fit", help="fit a model to a counts file")
    p.add_argument("--family", required=True)
    p.add_argument("--counts", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, help=f"default {estimation.IPF_TOL} (IPF) or {estimation.EM_TOL} (EM)")
    p.add_argument("--max-iter", type=int, default=estimation.MAX_ITER)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("counterexample", help="boundary tensor separating QI and Mix")
    p.add_argument("--direction", required=True, choices=[d.value for d in geometry.Direction])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "n", 2) < 2:
            raise UsageError("--n must be at least 2")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedFamily as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (OSError, ValueError, ArithmeticError, AgreeTensorError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
