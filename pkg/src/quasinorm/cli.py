"""``quasinorm`` command line.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure or a
result outside the proven parameter range, 4 property violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import KINDS, OUT_ENV, build, load_file
from .errors import ConfigurationError, ConvergenceError, DomainError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4

log = logging.getLogger("quasinorm")

HELP = {
    "verify-dual": "check the properties of the change of variables f",
    "gn-estimate": "estimate Gagliardo-Nirenberg constants and test them on random fields",
    "landscape": "tabulate the comparison function H_a and the mass thresholds",
    "minimize": "local (q > 4+4/N) or global (q = 4+4/N) constrained minimizer",
    "blowup": "exhibit unboundedness from below along the stretching fiber",
    "mountain-pass": "second critical point by a mountain-pass path",
    "subadditivity": "check m(a2) + m(a1 - a2) >= m(a1)",
    "sweep": "minimizers over a grid of masses and theta values",
}


def _common(p: argparse.ArgumentParser) -> None:
    # every default is None so that only flags actually given override the file
    p.add_argument("--config", help="JSON file with configuration keys")
    p.add_argument("--out", dest="out_dir", help=f"output directory (env {OUT_ENV}, default ./results)")
    p.add_argument("--quick", action="store_const", const=True, help="small grids and budgets")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_const", const=False, help="skip matplotlib figures")
    p.add_argument("-v", "--verbose", action="count", default=0)
    g = p.add_argument_group("problem")
    g.add_argument("--dimension", "-N", type=int)
    g.add_argument("-p", type=float)
    g.add_argument("-q", type=float)
    g.add_argument("-a", type=float, help="mass (default: a_fraction times the relevant threshold)")
    g.add_argument("--a-fraction", type=float)
    g.add_argument("--theta", type=float)
    g = p.add_argument_group("numerics")
    g.add_argument("--radius", type=float)
    g.add_argument("-n", type=int, help="grid intervals")
    g.add_argument("--tol", type=float)
    g.add_argument("--safety-factor", type=float)
    g.add_argument("--gn-cache")
    g.add_argument("--gn-grid-radius", type=float)
    g.add_argument("--gn-grid-n", type=int)
    g.add_argument("--gn-p", type=float, help="user-supplied E-kind constant for p")
    g.add_argument("--gn-q", type=float, help="user-supplied E-kind constant for q")
    g.add_argument("--gn-critical", type=float, help="user-supplied E-kind constant for 4+4/N")
    p.add_argument("--experimental", action="store_const", const=True,
                   help="allow q above the Sobolev exponent in mountain-pass")


def _specific(kind: str, p: argparse.ArgumentParser) -> None:
    if kind == "verify-dual":
        p.add_argument("--samples", type=int)
    elif kind == "gn-estimate":
        p.add_argument("--verify-fields", type=int)
    elif kind == "landscape":
        p.add_argument("--landscape-points", type=int)
    elif kind == "blowup":
        p.add_argument("--depth", type=float)
    elif kind == "mountain-pass":
        p.add_argument("--mp-nodes", type=int)
        p.add_argument("--mp-sweeps", type=int)
        p.add_argument("--mp-thetas", type=float, nargs="+")
    elif kind == "subadditivity":
        p.add_argument("--pair", dest="pairs", type=float, nargs=2, action="append",
                       metavar=("A1", "A2"), help="fractions of the threshold; repeatable")
    elif kind == "sweep":
        p.add_argument("--jobs", "-j", type=int)
        p.add_argument("--fractions", dest="sweep_fractions", type=float, nargs="+")
        p.add_argument("--thetas", dest="sweep_thetas", type=float, nargs="+")


def parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="quasinorm", description="Normalized solutions for the quasilinear "
                                  "Schrodinger equation with combined nonlinearities")
    sub = top.add_subparsers(dest="kind", required=True, metavar="command")
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind], description=HELP[kind])
        _common(p)
        _specific(kind, p)
    return top


_NOT_CONFIG = {"kind", "config", "verbose"}


def main(argv=None) -> int:
    ap = parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches the config-invalid code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    try:
        file_values = load_file(args.config) if args.config else {}
        cfg = build(args.kind, file_values, flags)
        from .experiments import run

        status = run(cfg)
    except (ConfigurationError, DomainError) as exc:
        print(f"quasinorm: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"quasinorm: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary = cfg.output_dir / "summary.txt"
    if summary.exists():
        sys.stdout.write(summary.read_text())
    return status


if __name__ == "__main__":
    sys.exit(main())
