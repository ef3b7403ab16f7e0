"""Command line entry point: ``crt-records verify``, ``verify-analytics`` and ``sample-tree``.

Exit status is 0 when every check passes, 1 on a statistical failure and 2 on bad
usage or a numerical error. Reports are written atomically (temporary file, then
rename), so a failed run leaves no partial output behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .crt_sampler import Params, sample_excursion_tree, sample_spanned_tree
from .errors import CRTRecordsError, InvalidParameterError
from .randkit import SeedSpec
from .suites import DEFAULT_SEED, SUITES, RunConfig, SuiteResult, run_suite
from .tree_core import dumps_heights, dumps_weighted_tree


def build_id() -> str:
    """Package version plus ``git describe`` of the source checkout when there is one."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here, capture_output=True,
                             text=True, timeout=10, check=True)
        rev = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def summary(result: SuiteResult, cfg: RunConfig) -> dict:
    return _clean({
        "build": build_id(),
        "suite": result.suite,
        "config": cfg.as_dict(),
        "passed": result.passed,
        "checks": [asdict(c) for c in result.checks],
        "tables": result.tables,
    })


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def dumps_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in (row[c] for c in columns)])
    return buf.getvalue()


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(result: SuiteResult, cfg: RunConfig, out: str) -> list[str]:
    """Write the report for ``cfg.format``; returns the paths written."""
    summ = dumps_json(summary(result, cfg))
    if cfg.format == "json":
        write_atomic(out, summ)
        return [out]
    side = f"{out}.summary.json"
    write_atomic(out, dumps_csv(result.columns, result.rows))
    write_atomic(side, summ)
    return [out, side]


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer: {text!r}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_positive_float, default=0.5)
    p.add_argument("--r", type=_positive_float, default=1.0)
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)


def _verify_args(p: argparse.ArgumentParser, with_suite: bool) -> None:
    if with_suite:
        p.add_argument("--suite", choices=SUITES, required=True)
    _common(p)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--grid", type=_positive_int, default=None)
    p.add_argument("--replicates", type=_positive_int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threshold-scale", type=_positive_float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crt-records",
                                     description="Records and removed masses of the cutting process on random trees.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _verify_args(sub.add_parser("verify", help="run a verification suite"), True)
    _verify_args(sub.add_parser("verify-analytics", help="run the analytic identity suite"), False)
    st = sub.add_parser("sample-tree", help="write one sampled tree")
    size = st.add_mutually_exclusive_group(required=True)
    size.add_argument("--n", type=_positive_int, help="leaves of a spanned tree (line-breaking)")
    size.add_argument("--grid", type=_positive_int, help="grid size of a full tree (heights file)")
    _common(st)
    return parser


def _sample_tree(args) -> int:
    p = Params(args.alpha, args.r)
    gen = SeedSpec(args.seed, 0).generator()
    if args.n is not None:
        text = dumps_weighted_tree(sample_spanned_tree(p, args.n, gen).tree)
    else:
        if args.grid < 2:
            raise InvalidParameterError("grid must be at least 2")
        text = dumps_heights(sample_excursion_tree(p, args.grid, gen))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(args.out, text)
    return 0


def _verify(args, suite: str) -> int:
    cfg = RunConfig(suite=suite, alpha=args.alpha, r=args.r, n=args.n, grid=args.grid,
                    replicates=args.replicates, seed=args.seed, out=args.out, format=args.format,
                    threshold_scale=args.threshold_scale)
    out = cfg.out or f"crt_records_{suite}.{cfg.format}"
    result = run_suite(cfg)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g} target={c.target:.6g} "
              f"tol={c.tolerance:.3g}" + (f" ({c.detail})" if c.detail else ""))
    paths = write_report(result, cfg, out)
    print(f"{suite}: {'passed' if result.passed else 'FAILED'}; report in {', '.join(paths)}")
    return 0 if result.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        if args.command == "sample-tree":
            return _sample_tree(args)
        return _verify(args, "analytics" if args.command == "verify-analytics" else args.suite)
    except (CRTRecordsError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"crt-records: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
