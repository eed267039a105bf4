"""``flowshadow`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import warnings
from dataclasses import replace

from . import formats
from .errors import ConfigurationError, FlowShadowError
from .estimate import estimate_single_flow, method1, method2
from .evaluate import EvalConfig, evaluate_grid, occlusion_sweep, standard_grid, trial_seed
from .geometry import MIN_CONTACT_SPACING_MM, PRESETS, LayoutWarning
from .signal import DEFAULT_WINDOW, process_window
from .simulate import NoiseModel, ResponseModel, simulate_trial

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

log = logging.getLogger("flowshadow")


class UsageError(Exception):
    pass


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _headings(text: str) -> list[float]:
    """``-30:30:5`` (inclusive range) or a comma list ``0,10,20``.

    Values starting with ``-`` must be attached: ``--headings=-30:30:5``.
    """
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(round((stop - start) / step))
            return [start + k * step for k in range(n + 1)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad heading list {text!r}; use start:stop:step or a,b,c") from None


def _scenario_or_none(path):
    return formats.load_scenario(path) if path else None


def cmd_simulate(args) -> int:
    sc = formats.load_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    noise = replace(sc.noise, seed=trial_seed(seed, args.trial))
    samples = simulate_trial(sc.layout, sc.flows, sc.response, noise, sc.n_samples, sc.rate_hz)
    with _output(args.out) as fh:
        formats.write_samples(fh, samples)
    log.info("wrote %d samples (%d whiskers x %d)", len(samples), len(sc.layout), sc.n_samples)
    return EXIT_OK


def cmd_process(args) -> int:
    samples = formats.read_samples(args.log)
    cal = formats.read_calibration(args.calibration) if args.calibration else None
    readings = process_window(samples, cal, args.window)
    with _output(args.out) as fh:
        formats.write_processed(fh, readings)
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.method == "1" and args.phi1 is None:
        raise UsageError("--phi1 is required with --method 1")
    if args.method != "1" and args.phi1 is not None:
        raise UsageError("--phi1 only applies to --method 1")
    readings = formats.read_processed(args.processed)
    sc = _scenario_or_none(args.scenario)
    layout = sc.layout if sc else PRESETS[args.layout]()
    response = sc.response if sc else ResponseModel()

    if args.method == "single":
        phi = estimate_single_flow(readings)
        row = formats.ReportRow("single", None, phi, phi, single_flow=True)
        text = f"single flow heading: {phi:.2f} deg"
    elif args.method == "1":
        rep = method1(readings, layout, args.phi1, response)
        row = formats.ReportRow("1", args.phi1, None, rep.phi2_hat, rep.iterations, rep.low_confidence)
        text = f"method 1 (phi1 = {args.phi1:.2f} deg known): phi2 = {rep.phi2_hat:.2f} deg"
        if rep.low_confidence:
            text += "  [low confidence: residual is small, second flow may be absent]"
    else:
        rep = method2(readings, layout, response, refine_iters=args.refine_iters, refine=args.refine)
        row = formats.ReportRow("2", None, rep.phi1_hat, rep.phi2_hat, rep.iterations, rep.low_confidence,
                                rep.single_flow)
        text = f"method 2: phi1 = {rep.phi1_hat:.2f} deg, phi2 = {rep.phi2_hat:.2f} deg"
        if rep.single_flow:
            text += "  [all whiskers agree: single flow]"
    if args.out in (None, "-"):
        formats.write_report(sys.stdout, row)
        print(text, file=sys.stderr)
    else:
        formats.write_report(args.out, row)
        print(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    points = standard_grid() if args.grid == "standard" else formats.read_grid(args.grid)
    if not points:
        raise UsageError(f"grid {args.grid!r} has no points")
    sc = _scenario_or_none(args.scenario)
    cfg = EvalConfig(layout=sc.layout if sc else PRESETS["grid2x2"]())
    if sc:
        cfg = replace(cfg, response=sc.response, noise=sc.noise, n_samples=sc.n_samples)
    if args.noiseless:
        cfg = replace(cfg, noise=NoiseModel.noiseless())
    if args.n_samples is not None:
        cfg = replace(cfg, n_samples=args.n_samples)
    cfg = replace(cfg, refine=args.refine, refine_iters=args.refine_iters)
    trials = args.trials if args.trials is not None else (sc.trials if sc else 2)
    seed = args.seed if args.seed is not None else (sc.seed if sc else 0)
    rows, results = evaluate_grid(points, cfg, trials=trials, seed=seed, jobs=args.jobs)
    with _output(args.out) as fh:
        formats.write_summary(fh, rows)
    if args.detail:
        formats.write_trials(args.detail, results)
    table = ["alpha  v1/v2  M1 phi2  M2 phi1  M2 phi2  trials"]
    for r in rows:
        table.append(f"{r.alpha:5.0f}  {r.ratio:5.2f}  {r.m1_phi2_rmse:7.1f}  {r.m2_phi1_rmse:7.1f}  "
                     f"{r.m2_phi2_rmse:7.1f}  {r.n_trials:6d}")
    print("\n".join(table), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_sweep_occlusion(args) -> int:
    if args.spacing < MIN_CONTACT_SPACING_MM:
        warnings.warn(f"spacing {args.spacing} mm is below the {MIN_CONTACT_SPACING_MM:.0f} mm contact limit",
                      LayoutWarning, stacklevel=1)
    noise = NoiseModel(seed=args.seed) if args.noisy else NoiseModel.noiseless(args.seed)
    rows, fit = occlusion_sweep(args.spacing, args.headings, diameter=args.diameter, speed=args.speed, noise=noise)
    with _output(args.out) as fh:
        formats.write_sweep(fh, rows)
    print(f"fit: {fit}", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_grid(args) -> int:
    with _output(args.out) as fh:
        formats.write_grid(fh, standard_grid())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowshadow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a sample log from a scenario file")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", help="output CSV (default stdout)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--trial", type=int, default=0, help="trial index (default 0)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="reduce a sample log to one reading per whisker")
    p.add_argument("log")
    p.add_argument("--calibration", help="calibration CSV (default identity)")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("estimate", help="estimate flow headings from processed readings")
    p.add_argument("processed")
    p.add_argument("--method", choices=["1", "2", "single"], required=True)
    p.add_argument("--phi1", type=float, help="known first heading, degrees (method 1)")
    p.add_argument("--layout", choices=sorted(PRESETS), default="grid2x2")
    p.add_argument("--scenario", help="take layout and response model from this scenario file")
    p.add_argument("--refine", choices=["joint", "alternate"], default="joint")
    p.add_argument("--refine-iters", type=int, default=1)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="run a two-flow grid and write an RMSE summary")
    p.add_argument("grid", help="grid CSV (phi1_deg,alpha_deg,v1_mps,v2_mps) or 'standard' for the built-in grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--scenario", help="layout, response and noise settings")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--refine", choices=["joint", "alternate"], default="joint")
    p.add_argument("--refine-iters", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--detail", help="per-trial CSV")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-occlusion", help="two-whisker occlusion sweep and ratio-law fit")
    p.add_argument("--spacing", type=float, default=35.0, help="mm")
    p.add_argument("--diameter", type=float, default=15.0, help="mm")
    p.add_argument("--headings", type=_headings, default=_headings("-30:30:5"))
    p.add_argument("--speed", type=float, default=6.5)
    p.add_argument("--noisy", action="store_true", help="apply the default noise model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_sweep_occlusion)

    p = sub.add_parser("grid", help="write the built-in two-flow grid as CSV")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"flowshadow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"flowshadow {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FlowShadowError as exc:
        print(f"flowshadow {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"flowshadow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
