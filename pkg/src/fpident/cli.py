"""Command-line interface.

    fpident gen-data  --config C --out D [--seed S]
    fpident fit       --out D [--config C] [--nystrom m] [--no-constraints]
    fpident simulate  --out D [--config C]
    fpident evaluate  --out D [--config C] [--alpha A ...] [--pair TRUE EST]
    fpident reproduce NAME --out D [--config C] [--seed S] [--nystrom m] [--no-constraints]
    fpident show-config NAME

Exit codes: 0 success, 1 numeric or fit failure, 2 usage, 3 I/O.
``FP_SDE_THREADS`` caps the BLAS thread pool.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import experiments as ex
from . import io
from .density import DensityFitError
from .fp import FPFitError
from .qp import DualNotConverged
from .selection import SelectionError
from .simulate import SimulationDiverged

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

NUMERIC_ERRORS = (FPFitError, DensityFitError, DualNotConverged, SelectionError,
                  SimulationDiverged, np.linalg.LinAlgError, FloatingPointError)

log = logging.getLogger("fpident")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {v}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _alpha(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1], got {v}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="fpident", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False, fit_flags=False, seed=False):
        sp.add_argument("--config", type=Path, required=config_required,
                        help="experiment config JSON (default: OUT/config.json)")
        sp.add_argument("--out", type=Path, required=True, help="run directory")
        if seed:
            sp.add_argument("--seed", type=_u64, help="override the config seed")
        if fit_flags:
            sp.add_argument("--nystrom", type=_positive_int, metavar="m",
                            help="Nystrom approximation with m anchors")
            sp.add_argument("--no-constraints", action="store_true",
                            help="drop the sigma^2 >= 0 shape constraint")

    common(sub.add_parser("gen-data", help="simulate training/validation data"),
           config_required=True, seed=True)
    common(sub.add_parser("fit", help="fit density and FP models"), fit_flags=True, seed=True)
    common(sub.add_parser("simulate", help="paired true/estimated ensembles"))
    ev = sub.add_parser("evaluate", help="moment and CVaR gaps")
    common(ev)
    ev.add_argument("--alpha", type=_alpha, nargs="+", help="CVaR levels")
    ev.add_argument("--pair", nargs=2, action="append", type=Path, metavar=("TRUE", "EST"),
                    help="evaluate explicit path files instead of OUT/sim")
    rp = sub.add_parser("reproduce", help="run gen-data, fit, simulate and evaluate")
    rp.add_argument("name", choices=ex.EXPERIMENTS)
    common(rp, fit_flags=True, seed=True)
    sc = sub.add_parser("show-config", help="print a reproduction config")
    sc.add_argument("name", choices=ex.EXPERIMENTS)
    return p


def _resolve_config(args, name=None):
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"config file {args.config} not found")
        cfg = io.read_json(args.config)
    elif name is not None:
        cfg = ex.default_config(name)
    else:
        cfg = ex.load_run_config(args.out)
    return ex.apply_overrides(cfg, seed=getattr(args, "seed", None),
                              nystrom=getattr(args, "nystrom", None),
                              no_constraints=getattr(args, "no_constraints", False))


def _threads():
    raw = os.environ.get("FP_SDE_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ex.ConfigError(f"FP_SDE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ex.ConfigError(f"FP_SDE_THREADS must be a positive integer, got {raw!r}")
    return n


def _evaluate_pairs(args, cfg):
    proc = ex.validate_config(cfg)
    pairs = []
    for k, (t, e) in enumerate(args.pair):
        true, est, side = ex.load_pair(t, e)
        u = side.get("control")
        pairs.append((side.get("control_id", k), None if u is None else
                      ex.ControlSpec.from_record(u), true, est))
    alphas = args.alpha or cfg.get("evaluate", {}).get("alphas", [0.1])
    return ex.evaluate_pairs(pairs, proc, alphas, io.ensure_writable_dir(args.out))


def run(args):
    if args.command == "show-config":
        print(json.dumps(ex.default_config(args.name), indent=1, sort_keys=True))
        return None
    cfg = _resolve_config(args, getattr(args, "name", None))
    ex.validate_config(cfg)
    if args.command == "gen-data":
        return ex.gen_data(cfg, args.out)
    if args.command == "fit":
        return ex.fit(cfg, args.out)
    if args.command == "simulate":
        return {"pairs": ex.simulate_run(cfg, args.out)}
    if args.command == "evaluate":
        if args.pair:
            return _evaluate_pairs(args, cfg)
        return ex.evaluate_run(cfg, args.out, args.alpha)
    return ex.reproduce(cfg, args.out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_threads()):
            result = run(args)
    except (ex.ConfigError, ex.MixedRunError) as exc:
        print(f"fpident: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"fpident: usage error: config is missing key {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"fpident: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataFormatError, OSError) as exc:
        print(f"fpident: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if isinstance(result, dict) and args.command in ("evaluate", "reproduce"):
        keys = [k for k in result if k.startswith("max_")]
        print(json.dumps({k: result[k] for k in keys}, indent=1, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
