"""``spinfd`` command line.

Subcommands::

    spinfd spinner verify   [--kind K] [--n N] [--k K] [--seed S]
    spinfd grad bench       (--config PATH | --preset NAME) [--out PATH]
    spinfd trajopt run      (--config PATH | --preset NAME) [--out PATH]
    spinfd sweep delta      (--config PATH | --preset NAME) [--out PATH]
    spinfd qn run           (--config PATH | --preset NAME) [--out PATH]
    spinfd report summarize CSV [CSV ...] [--out PATH]

Run subcommands also accept ``--seed-offset`` and ``--jobs``. Exit codes:
0 success, 2 configuration error, 3 some cells or checks failed.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .. import spinner as sp
from .config import ConfigError, ExperimentConfig
from .presets import get_preset, preset_names
from .records import read_csv, records_to_csv
from .runner import run, summarize, summary_to_csv

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3

_ALLOWED = {
    ("grad", "bench"): ("GradAccuracy", "TheoremBound"),
    ("trajopt", "run"): ("TrajOpt", "Timing"),
    ("sweep", "delta"): ("StepSizeSweep",),
    ("qn", "run"): ("QuasiNewton",),
}


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _load(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    cfg = ExperimentConfig.load(args.config) if args.config else get_preset(args.preset)
    return cfg.with_seed_offset(args.seed_offset)


def _cmd_run(args) -> int:
    cfg = _load(args)
    allowed = _ALLOWED[(args.group, args.action)]
    if cfg.experiment not in allowed:
        raise ConfigError(f"'{args.group} {args.action}' runs {'/'.join(allowed)}, "
                          f"not {cfg.experiment}")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    out = args.out or cfg.output
    records = run(cfg, jobs=args.jobs)
    _write(records_to_csv(records, timing=cfg.timing == "inline"), out)
    if cfg.timing == "sidecar":
        if out in (None, "-"):
            print("note: timing sidecar needs --out; skipped", file=sys.stderr)
        else:
            _write(records_to_csv(records, timing=True), f"{out}.timing.csv")
    return EXIT_OK if all(r.ok for r in records) else EXIT_PARTIAL


def _spinner_cases(args):
    if args.n is not None:
        yield args.kind, args.n, args.k
        return
    for l in range(1, 11):
        for k in (1, 2, 3):
            yield "hadamard", 2**l, k
    for p in (3, 7, 11, 19, 23):
        for k in (1, 2, 3):
            yield "quadratic_residue", p, k


def _cmd_verify(args) -> int:
    rows = []
    ok_all = True
    for kind, size, k in _spinner_cases(args):
        if kind == "hadamard":
            if size < 2 or size & (size - 1):
                raise ConfigError("--n must be a power of two >= 2 for hadamard")
        elif not (sp.is_prime(size) and size % 4 == 3):
            raise ConfigError("--n must be a prime p = 3 mod 4 for quadratic_residue")
        s = sp.build_multispinner(kind, k, args.seed, size)
        M = s.dense()
        err = float(np.max(np.abs(M @ M.T - s.n * np.eye(s.n))))
        rep = sp.verify_balanced(M)
        ok = err <= 1e-10 and rep.invertible and (k > 1 or (
            abs(rep.alpha_achieved - 1) <= 1e-12 and abs(rep.beta_achieved - 1) <= 1e-12))
        ok_all &= ok
        rows.append({"kind": kind, "size": size, "n": s.n, "k": k, "seed": args.seed,
                     "orthogonality_error": err, "alpha": float(rep.alpha_achieved),
                     "beta": float(rep.beta_achieved), "ok": bool(ok)})
    text = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    _write(text, args.out)
    return EXIT_OK if ok_all else EXIT_PARTIAL


def _cmd_summarize(args) -> int:
    records = []
    try:
        for path in args.csv:
            records.extend(read_csv(path))
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        rows = summarize(records)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write(summary_to_csv(rows), args.out)
    return EXIT_OK if all(r.failed == 0 for r in rows) else EXIT_PARTIAL


def _add_run_flags(p):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--preset", help=f"named preset: {', '.join(preset_names())}")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinfd", description=__doc__.split("\n")[0])
    groups = parser.add_subparsers(dest="group", required=True)

    spin = groups.add_parser("spinner", help="spinner construction checks")
    spin_sub = spin.add_subparsers(dest="action", required=True)
    v = spin_sub.add_parser("verify", help="check orthogonality and balance")
    v.add_argument("--kind", choices=("hadamard", "quadratic_residue"), default="hadamard")
    v.add_argument("--n", type=int, help="Hadamard order or prime p (default: full suite)")
    v.add_argument("--k", type=int, default=1, help="multispinner chain length")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=_cmd_verify)

    for group, action, text in (("grad", "bench", "gradient accuracy experiments"),
                                ("trajopt", "run", "iLQR experiments"),
                                ("sweep", "delta", "step-size sweeps"),
                                ("qn", "run", "quasi-Newton experiments")):
        g = groups.add_parser(group, help=text)
        sub = g.add_subparsers(dest="action", required=True)
        p = sub.add_parser(action, help=text)
        _add_run_flags(p)
        p.set_defaults(func=_cmd_run)

    rep = groups.add_parser("report", help="aggregate CSV output")
    rep_sub = rep.add_subparsers(dest="action", required=True)
    s = rep_sub.add_parser("summarize", help="median/IQR per estimator")
    s.add_argument("csv", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, matching EXIT_CONFIG
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
