"""Command line entry point.

Exit status: 0 on success, 1 when a growth bound or MMS threshold fails,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..mesh import MeshError, export_mesh, generate_unit_square_mesh
from ..system import SingularSystemError, StepFailure
from .config import ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dppsim", description="Double porosity/permeability flow simulator and verifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a configured simulation")
    run.add_argument("--config", required=True, help="config file, or a bundled name: case1, case2, free_decay")
    run.add_argument("--out", help="output directory (default: the config's output.directory)")

    vb = sub.add_parser("verify-bound", help="re-check a norm CSV against t*fmax + intercept")
    vb.add_argument("--csv", required=True)
    vb.add_argument("--fmax", required=True, type=float)
    vb.add_argument("--intercept", required=True, type=float)
    vb.add_argument("--tolerance", type=float, default=0.0)

    mms = sub.add_parser("mms", help="manufactured-solution convergence study")
    mms.add_argument("--levels", type=_positive_int, default=4, help="number of meshes 4, 8, 16, ... (at least 3)")
    mms.add_argument("--out", help="directory for mms_report.json")

    mesh = sub.add_parser("mesh", help="export a unit-square mesh")
    mesh.add_argument("--nx", required=True, type=_positive_int)
    mesh.add_argument("--ny", required=True, type=_positive_int)
    mesh.add_argument("--out", required=True)
    return parser


def _err(*lines):
    for line in lines:
        print(line, file=sys.stderr)


def _cmd_run(args) -> int:
    from .runner import run_simulation

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(f"dppsim run: invalid configuration {args.config}:", str(exc))
        return EXIT_USAGE
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    try:
        outcome = run_simulation(cfg, out)
    except (StepFailure, SingularSystemError) as exc:
        _err(f"dppsim run: {exc}")
        return EXIT_FAIL
    rep = outcome.report
    print(f"{cfg.name}: {len(outcome.series)} records, f_max={rep.f_max:.9g} ({rep.mode}), "
          f"c={rep.intercept:.9g}, min margin {min(rep.margins):.9g}")
    print(f"outputs written to {out}")
    if not rep.passed:
        _err(f"growth bound violated first at step {rep.first_violation}")
        return EXIT_FAIL
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .output import verify_csv

    try:
        text = Path(args.csv).read_text()
        report = verify_csv(text, args.fmax, args.intercept, args.tolerance)
    except OSError as exc:
        _err(f"dppsim verify-bound: cannot read {args.csv}: {exc.strerror}")
        return EXIT_USAGE
    except ValueError as exc:
        _err(f"dppsim verify-bound: {args.csv}: {exc}")
        return EXIT_USAGE
    if report.passed:
        print(f"bound holds at all {len(report.times)} records (min margin {min(report.margins):.9g})")
        return EXIT_OK
    i = report.steps.index(report.first_violation)
    _err(f"bound violated first at step {report.first_violation}: t={report.times[i]:.9g} "
         f"norm_V={report.norms[i]:.9g} > bound={report.bounds[i]:.9g}")
    return EXIT_FAIL


def _cmd_mms(args) -> int:
    from .runner import run_mms

    if args.levels < 3:
        _err("dppsim mms: --levels must be at least 3")
        return EXIT_USAGE
    levels = [4 * 2**k for k in range(args.levels)]
    outcome = run_mms(levels)
    rep = outcome.trig
    print("n      " + "  ".join(f"{k:>10}" for k in rep.errors))
    for i, n in enumerate(levels):
        print(f"{n:<6} " + "  ".join(f"{rep.errors[k][i]:10.3e}" for k in rep.errors))
    print("order  " + "  ".join(f"{min(rep.orders[k]):10.3f}" for k in rep.orders))
    print(f"polynomial max error {max(outcome.polynomial_errors):.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "mms_report.json").write_text(json.dumps(outcome.to_dict(), indent=2) + "\n")
    if not outcome.passed:
        _err(*(f"mms: {f}" for f in outcome.failures))
        return EXIT_FAIL
    return EXIT_OK


def _cmd_mesh(args) -> int:
    try:
        text = export_mesh(generate_unit_square_mesh(args.nx, args.ny))
        Path(args.out).write_text(text)
    except MeshError as exc:
        _err(f"dppsim mesh: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _err(f"dppsim mesh: cannot write {args.out}: {exc.strerror}")
        return EXIT_FAIL
    print(f"wrote {args.nx}x{args.ny} mesh to {args.out}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "verify-bound": _cmd_verify, "mms": _cmd_mms, "mesh": _cmd_mesh}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
