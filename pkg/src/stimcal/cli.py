"""Command-line front end.

Subcommands: ``simulate`` (full pipeline), ``analyze`` (two trace files),
``theory`` (flux statistics only) and ``selftest`` (oracle checks).
Exit status is 0 on success, 2 on invalid input or configuration and 1
on runtime failures.  ``STIMCAL_OUT`` sets the default output directory.
"""

import argparse
from dataclasses import replace
import logging
import os
import sys
import warnings

from . import __version__
from .config import load_config
from .errors import (
    DegenerateInputError,
    StageError,
    StimcalError,
    TraceFormatError,
    UsageError,
)
from .photocurrent import read_trace
from .pipeline import AnalysisOptions, analysis_options, analyze_traces, default_trim, edge_trim, run_calibration, theory_statistics

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
ENV_OUT = "STIMCAL_OUT"

log = logging.getLogger("stimcal")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} must be > 0")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="stimcal", description="Analog-detector calibration by stimulated down-conversion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="run configuration (YAML)")
        sp.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or the config's outputs.directory)")
        sp.add_argument("--quiet", action="store_true", help="print nothing but errors")

    sim = sub.add_parser("simulate", help="run the full self-calibration pipeline")
    common(sim, True)
    sim.add_argument("--seed", type=_u64, help="override plan.rng_seed")
    sim.add_argument("--duration-s", type=_positive, help="override plan.duration_s")

    an = sub.add_parser("analyze", help="estimate efficiencies from two trace files")
    an.add_argument("trace1")
    an.add_argument("trace2")
    common(an, False)
    an.add_argument("--pulse-width1-s", type=_positive, help="arm-1 pulse width (if no --config)")
    an.add_argument("--pulse-width2-s", type=_positive, help="arm-2 pulse width (if no --config)")
    an.add_argument("--max-lag-s", type=_positive)
    an.add_argument("--trim-samples", type=int, help="samples dropped at each end (default: one pulse support)")

    th = sub.add_parser("theory", help="print theory-side flux statistics")
    common(th, True)

    st = sub.add_parser("selftest", help="run the built-in oracle checks")
    st.add_argument("--quiet", action="store_true")
    return p


def _out_dir(args, cfg=None):
    if args.out:
        return args.out
    if os.environ.get(ENV_OUT):
        return os.environ[ENV_OUT]
    return cfg.outputs.directory if cfg is not None else "stimcal-out"


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, (UsageError, DegenerateInputError, TraceFormatError)):
        return EXIT_INVALID
    return EXIT_RUNTIME


def _cmd_simulate(args, echo):
    cfg = load_config(args.config).with_overrides(rng_seed=args.seed, duration_s=args.duration_s)
    out = _out_dir(args, cfg)
    report, _, manifest = run_calibration(cfg, out)
    echo(report.to_text())
    echo(f"artifacts written to {out}: {', '.join(manifest.artifacts + ['manifest.json'])}")


def _cmd_analyze(args, echo):
    if args.config:
        cfg = load_config(args.config)
        fs = read_trace(args.trace1).sample_rate
        trim = edge_trim(cfg.detector1, cfg.detector2, fs) if args.trim_samples is None else args.trim_samples
        opts = analysis_options(cfg, trim)
        opts = replace(opts, sample_rate=fs, max_lag=args.max_lag_s or opts.max_lag)
    else:
        if args.pulse_width1_s is None or args.pulse_width2_s is None:
            raise UsageError("analyze needs --config or both --pulse-width1-s and --pulse-width2-s")
        fs = read_trace(args.trace1).sample_rate
        trim = args.trim_samples
        if trim is None:
            trim = default_trim(max(args.pulse_width1_s, args.pulse_width2_s), fs)
        opts = AnalysisOptions(args.pulse_width1_s, args.pulse_width2_s, fs, max_lag=args.max_lag_s, trim=trim)
    out = _out_dir(args)
    report, _ = analyze_traces(args.trace1, args.trace2, opts, out)
    echo(report.to_text())
    echo(f"report written to {out}")


def _cmd_theory(args, echo):
    cfg = load_config(args.config)
    stats = theory_statistics(cfg)
    lines = [f"{k} = {float(v)!r}" for k, v in stats.items()]
    echo("\n".join(lines))
    if args.out or os.environ.get(ENV_OUT):
        out = _out_dir(args, cfg)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "theory.kv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.ERROR if quiet else logging.INFO, format="%(levelname)s: %(message)s")
    echo = (lambda *a, **k: None) if quiet else print
    if quiet:
        warnings.simplefilter("ignore")
    try:
        if args.command == "selftest":
            from .selftest import run_selftest

            return EXIT_OK if run_selftest(echo) else EXIT_RUNTIME
        {"simulate": _cmd_simulate, "analyze": _cmd_analyze, "theory": _cmd_theory}[args.command](args, echo)
    except (StimcalError, OSError, ValueError, ArithmeticError) as exc:
        log.error("%s", exc)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
