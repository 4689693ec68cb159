"""Command-line interface.

Subcommands:

* ``run <config>``       -- execute a sweep from a YAML config or a named
                            preset (``fig3a``, ``blobs-noisy``)
* ``kernels [spec...]``  -- conformance table (``--all`` for the full set)
* ``landscape A B``      -- interpolated 1-D loss curve between two runs
* ``version``

Exit codes: 0 success, 1 usage or config error, 2 internal error.
``ROBUSTKERNELS_OUTDIR`` and ``ROBUSTKERNELS_WORKERS`` override the output
directory and worker count from the environment.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from ._core import BACKEND
from .config import ConfigError, load_config, preset_path
from .diagnostics import landscape_1d
from .experiment import (
    LANDSCAPE_COLUMNS,
    LANDSCAPE_SCHEMA_HASH,
    make_problem,
    run_experiment,
    schema_hash,
)
from .kernels import ParameterError, conformance_check, default_kernels, kernel_from_string


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve 2 for bugs
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="robustkernels", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep from a YAML config or preset name")
    p_run.add_argument("config", help="path to a YAML config, or a preset name")
    p_run.add_argument("--outdir", default=None, help="override the output directory")
    p_run.add_argument("--workers", type=int, default=None, help="concurrent runs")

    p_k = sub.add_parser("kernels", help="numerical conformance report")
    p_k.add_argument("specs", nargs="*", help="kernel specs like geman_mcclure:c=2")
    p_k.add_argument("--all", action="store_true", help="report every kind at default parameters")
    p_k.add_argument("--json", dest="json_path", default=None, help="also write a JSON report")

    p_l = sub.add_parser("landscape", help="1-D interpolated loss between two run results")
    p_l.add_argument("run_a", help="run summary JSON (kappa = 0 endpoint)")
    p_l.add_argument("run_b", help="run summary JSON (kappa = 1 endpoint)")
    p_l.add_argument("--grid", type=int, default=101, help="number of kappa points")
    p_l.add_argument("--kmin", type=float, default=0.0)
    p_l.add_argument("--kmax", type=float, default=1.0)
    p_l.add_argument("--out", default="landscape.csv", help="output CSV path")

    sub.add_parser("version", help="print version and active backend")
    return parser


def cmd_run(args) -> int:
    source = Path(args.config) if Path(args.config).is_file() else preset_path(args.config)
    if source is None:
        raise UsageError(f"{args.config!r} is neither a config file nor a known preset")
    config = load_config(source)
    outdir = args.outdir or os.environ.get("ROBUSTKERNELS_OUTDIR")
    workers = args.workers
    if workers is None and os.environ.get("ROBUSTKERNELS_WORKERS"):
        workers = int(os.environ["ROBUSTKERNELS_WORKERS"])
    result = run_experiment(config, outdir=outdir, workers=workers)
    print(f"wrote {result / 'summary.csv'}")
    return 0


def cmd_kernels(args) -> int:
    if args.all:
        kernels = default_kernels()
    elif args.specs:
        try:
            kernels = [kernel_from_string(s) for s in args.specs]
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
    else:
        raise UsageError("give kernel specs or --all")

    reports = [conformance_check(k) for k in kernels]
    header = f"{'kernel':40s} {'cond_i':>10s} {'cond_ii':>10s} {'cond_iii':>10s}  status"
    print(header)
    print("-" * len(header))
    for rep in reports:
        status = "pass" if rep.passes else "FLAGGED"
        print(
            f"{rep.kernel_id:40s} "
            f"{rep.cond_i_error:10.2e} {rep.cond_ii_value:10.2e} "
            f"{rep.cond_iii_max_increase:10.2e}  {status}"
        )
        for note in rep.notes:
            print(f"{'':40s}   note: {note}")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump([rep.to_dict() for rep in reports], fh, indent=2, sort_keys=True)
        print(f"wrote {args.json_path}")
    return 0


def _load_run(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("final_w") is None or "problem" not in data.get("meta", {}):
        raise UsageError(f"{path}: not a run summary JSON (missing final_w / problem meta)")
    return data


def cmd_landscape(args) -> int:
    run_a = _load_run(args.run_a)
    run_b = _load_run(args.run_b)
    w_a = np.array([float(v) for v in run_a["final_w"]])
    w_b = np.array([float(v) for v in run_b["final_w"]])
    if w_a.shape != w_b.shape:
        raise UsageError(f"weight dimensions differ: {w_a.shape} vs {w_b.shape}")
    prob_a, prob_b = run_a["meta"]["problem"], run_b["meta"]["problem"]
    if prob_a != prob_b or run_a["meta"]["instance_seed"] != run_b["meta"]["instance_seed"]:
        raise UsageError("runs were trained on different instances; landscapes are not comparable")

    lam = prob_a["lambda"]
    problem = make_problem(prob_a, lam, run_a["meta"]["instance_seed"])
    grid = np.linspace(args.kmin, args.kmax, args.grid)
    observed = landscape_1d(problem, w_a, w_b, grid, loss_kind="observed")
    clean = landscape_1d(problem, w_a, w_b, grid, loss_kind="clean")

    assert schema_hash(LANDSCAPE_COLUMNS) == LANDSCAPE_SCHEMA_HASH, "landscape schema drifted"
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LANDSCAPE_COLUMNS)
        for (kappa, obs), (_, cln) in zip(observed, clean):
            writer.writerow([repr(float(lam)), repr(float(kappa)), repr(float(obs)), repr(float(cln))])
    print(f"wrote {args.out} ({args.grid} rows)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "kernels":
            return cmd_kernels(args)
        if args.command == "landscape":
            return cmd_landscape(args)
        if args.command == "version":
            print(f"robustkernels {__version__} (backend: {BACKEND})")
            return 0
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
