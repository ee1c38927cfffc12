"""``dualrail`` command-line entry point.

Exit status: 0 success, 2 configuration or input-format error, 3 numerical
diagnostics failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import DiagnosticsError, UnwrapAmbiguityError
from .config import DEFAULTS, ConfigError, ExperimentConfig, load_config
from .fock import DegenerateInputError, InvalidStateError
from .homodyne import AmbiguousModeError, GridError
from .io import FormatError
from . import pipeline, reproduce

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (DegenerateInputError, InvalidStateError, GridError, AmbiguousModeError,
                  DiagnosticsError, UnwrapAmbiguityError)


def _ns(text: str) -> float:
    return float(text) * 1e-9


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(",")
        return _ns(a), _ns(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected T1,T2 in ns, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    common.add_argument("--theta", type=float, help="relative phase of the heralded state [rad]")
    common.add_argument("--bs-ratio", type=float, dest="bs_reflectivity",
                        help="reflectivity of the heralding splitter")
    common.add_argument("--workers", type=int, help="worker threads for sampling and bootstrap")

    p = argparse.ArgumentParser(prog="dualrail", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("config", parents=[common], help="print the effective configuration")
    sub.add_parser("generate", parents=[common], help="heralded, fake-count-mixed state")

    s = sub.add_parser("store", parents=[common], help="storage and timed release")
    s.add_argument("state", type=Path)
    s.add_argument("--t1", type=_ns, help="release time of mode 1 [ns]")
    s.add_argument("--t2", type=_ns, help="release time of mode 2 [ns]")
    s.add_argument("--pair", type=_pair, action="append", default=[], metavar="T1,T2",
                   help="release pair in ns; repeat for a batch")

    m = sub.add_parser("measure", parents=[common], help="two-mode homodyne sampling")
    m.add_argument("state", type=Path)
    m.add_argument("--stream", type=int, default=0, help="substream index for independent repeats")

    r = sub.add_parser("reconstruct", parents=[common], help="maximum-likelihood tomography")
    r.add_argument("samples", type=Path)

    a = sub.add_parser("analyze", parents=[common], help="figures of merit for one or more matrices")
    a.add_argument("matrices", type=Path, nargs="+")
    a.add_argument("--delays", type=lambda s: [_ns(v) for v in s.split(",")],
                   help="comma-separated release delays t1-t2 [ns], one per matrix")
    a.add_argument("--samples", type=Path, help="samples behind the first matrix, for bootstrap errors")
    a.add_argument("--name", help="report file stem")

    pl = sub.add_parser("pipeline", parents=[common], help="generate through analyze in one run")
    pl.add_argument("--t1", type=_ns, help="release time of mode 1 [ns]")
    pl.add_argument("--t2", type=_ns, help="release time of mode 2 [ns]")

    rp = sub.add_parser("reproduce", parents=[common], help="calibrated plot-ready tables")
    rp.add_argument("--sampled", action="store_true", help="add sampled tomography per storage time")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else DEFAULTS
    cfg = cfg.with_overrides(
        seed=args.seed,
        out_dir=str(args.out) if args.out else None,
        theta=args.theta,
        bs_reflectivity=args.bs_reflectivity,
        workers=args.workers,
        t1=getattr(args, "t1", None),
        t2=getattr(args, "t2", None),
    )
    return cfg.validate()


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    out = Path(cfg.out_dir)
    cmd = args.command
    if cmd == "config":
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    if cmd == "generate":
        res = pipeline.cmd_generate(cfg, out)
    elif cmd == "store":
        pairs = args.pair or [(cfg.t1, cfg.t2)]
        res = pipeline.cmd_store(args.state, cfg, out, pairs)
    elif cmd == "measure":
        res = pipeline.cmd_measure(args.state, cfg, out, args.stream)
    elif cmd == "reconstruct":
        res = pipeline.cmd_reconstruct(args.samples, cfg, out)
    elif cmd == "analyze":
        res = pipeline.cmd_analyze(args.matrices, cfg, out, args.delays, args.samples, args.name)
    elif cmd == "pipeline":
        stages = pipeline.cmd_pipeline(cfg, out)
        for stage in stages.values():
            _print_outputs(stage.outputs.values())
        return EXIT_OK
    else:
        res = reproduce.cmd_reproduce(cfg, out, sampled=args.sampled)
    _print_outputs(res.outputs.values())
    return EXIT_OK


def _print_outputs(paths) -> None:
    for p in paths:
        print(p)


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ConfigError, FormatError) as exc:
        print(f"dualrail: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"dualrail: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"dualrail: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
