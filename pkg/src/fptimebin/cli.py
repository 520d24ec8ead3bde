"""Command-line front end.

Subcommands map onto the computation modules: ``closed-form`` emits the
normalized two-channel curves, ``exact`` runs the finite-dimension engine,
``scan`` sweeps the phase sum, ``degrade`` adds experimental imperfections,
``simulate`` produces TDC event streams, ``analyze`` reduces streams to
histograms/net rates/scans, and ``compare`` cross-checks the exact engine
against the closed forms with tolerances (CI-friendly exit code).

Every run writes ``manifest.txt`` and ``config.resolved.cfg`` beside its
artifacts; re-running the recorded command on the resolved config reproduces
every file byte for byte.  Manifests deliberately omit wall time and worker
counts.  Each CSV artifact gets a companion PNG unless ``--no-plots``.

Exit codes: 0 success, 1 validation/runtime error (one machine-readable
``error: <kind>: <message>`` line on stderr), 2 usage error, 3 tolerance
exceeded in ``compare``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .amplitudes import (evolve_state, peak_distribution, peaks_to_csv,
                         phase_scan_exact)
from .analysis import (assemble_scan, build_histogram, points_to_csv,
                       net_normalize, window_bin_count, window_counts)
from .closedform import (airy_metrics, curve_fwhm, normalized_curves,
                         params_from_config, peak_weight, control_peak_weight)
from .csvio import write_csv
from .imperfections import degraded_phase_scan
from .model import (CHANNEL_CONTROL, CHANNEL_MAIN, ConfigError,
                    ExperimentConfig, apply_overrides, config_hash,
                    config_to_text, load_config, parse_config_text)
from .montecarlo import TdcEventStream, empirical_vs_exact, simulate_run
from .presets import PRESET_NAMES, preset_text

_WINDOW_CHOICES = ("central", "central3", "full")


def _phase_grid(points: int) -> np.ndarray:
    return np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)


def _load_config(args) -> tuple[ExperimentConfig, str]:
    if args.preset:
        text = preset_text(args.preset)
        origin = f"preset:{args.preset}"
    elif args.config:
        text = Path(args.config).read_text("utf-8")
        origin = str(args.config)
    else:
        raise ConfigError("config", "provide --config PATH or --preset NAME")
    config, warnings = parse_config_text(text)
    if args.set:
        config, warnings = apply_overrides(config, args.set)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    return config, origin


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, config: ExperimentConfig, origin: str,
                    outputs: list[str], extra: dict | None = None) -> None:
    resolved = out / "config.resolved.cfg"
    resolved.write_text(config_to_text(config), encoding="utf-8")
    lines = [
        f"subcommand = {args.command}",
        f"package_version = {__version__}",
        f"config_hash = {config_hash(config)}",
        f"config_origin = {origin}",
        f"resolved_config = config.resolved.cfg",
        f"seed = {getattr(args, 'seed', 0)}",
    ]
    for item in (args.set or []):
        lines.append(f"override = {item}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    regen = [args.command, "--config", "config.resolved.cfg",
             "--seed", str(getattr(args, "seed", 0))]
    for key, value in (extra or {}).items():
        regen += [f"--{key.replace('_', '-')}", str(value)]
    lines.append("regenerate = fptimebin " + " ".join(regen))
    for name in outputs:
        lines.append(f"output = {name}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_closed_form(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    params = params_from_config(config)
    grid = _phase_grid(args.points)
    main_curve, control_curve = normalized_curves(params, grid)

    digest = config_hash(config)
    curves_csv = out / "closed_form_curves.csv"
    write_csv(curves_csv, ["phase_sum_rad", "main_normalized", "control_normalized"],
              zip(grid.tolist(), main_curve.value.tolist(), control_curve.value.tolist()),
              comments={"config_hash": digest, "loop_gain": params.loop_gain,
                        "normalization": "per-curve max"})

    metrics = airy_metrics(params)
    measured_contrast = float(np.max(main_curve.value) / np.min(main_curve.value))
    measured_fwhm = float(curve_fwhm(grid, main_curve.value))
    metrics_txt = out / "metrics.txt"
    metrics_txt.write_text(
        f"loop_gain = {params.loop_gain!r}\n"
        f"fringe_contrast = {metrics.fringe_contrast!r}\n"
        f"coefficient_of_finesse = {metrics.coefficient_of_finesse!r}\n"
        f"fwhm_phase_rad = {metrics.fwhm_phase!r}\n"
        f"curve_contrast = {measured_contrast!r}\n"
        f"curve_fwhm_rad = {measured_fwhm!r}\n", encoding="utf-8")

    outputs = [curves_csv.name, metrics_txt.name]
    if not args.no_plots:
        from .plotting import save_curves
        fig = out / "closed_form_curves.png"
        save_curves(fig, [("main stops", "-", grid, main_curve.value, None),
                          ("control stops", "--", grid, control_curve.value, None)],
                    title="normalized coincidences vs phase sum")
        outputs.append(fig.name)
    _write_manifest(out, args, config, origin, outputs, {"points": args.points})
    print(f"closed-form curves written to {out}")
    return 0


def _cmd_exact(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    table = evolve_state(config, phase_a=args.phase_a, phase_b=args.phase_b)
    digest = config_hash(config)
    comments = {"config_hash": digest, "phase_a": table.phase_a,
                "phase_b": table.phase_b}

    outputs = []
    if not args.no_table:
        table_csv = out / "joint_table.csv"
        table.to_csv(table_csv)
        outputs.append(table_csv.name)

    dists = {}
    for channel in (CHANNEL_MAIN, CHANNEL_CONTROL):
        dist_in = peak_distribution(table, channel, edges="in")
        dist_out = peak_distribution(table, channel, edges="out")
        dists[channel] = dist_in
        peaks_csv = out / f"peaks_{channel}.csv"
        peaks_to_csv(peaks_csv, dist_in, dist_out,
                     {**comments, "channel": channel})
        outputs.append(peaks_csv.name)

    summary = out / "summary.txt"
    summary.write_text(
        f"total_probability = {table.total_probability()!r}\n"
        f"back_reflection_probability = {table.back_probability!r}\n"
        f"truncation_bound = {table.truncation_bound!r}\n"
        f"max_turns = {table.max_turns}\n"
        f"dimension = {table.dimension}\n", encoding="utf-8")
    outputs.append(summary.name)

    if not args.no_plots:
        from .plotting import save_peaks
        fig = out / "peaks.png"
        save_peaks(fig, [(ch, dists[ch].peaks) for ch in dists],
                   title="arrival-difference peak distribution")
        outputs.append(fig.name)
    extra = {}
    if args.phase_a is not None:
        extra["phase_a"] = args.phase_a
    if args.phase_b is not None:
        extra["phase_b"] = args.phase_b
    _write_manifest(out, args, config, origin, outputs, extra)
    print(f"exact-engine artifacts written to {out}")
    return 0


def _cmd_scan(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    grid = _phase_grid(args.points)
    curve = phase_scan_exact(config, grid, args.window, channel=args.channel)
    scan_csv = out / "scan_exact.csv"
    curve.to_csv(scan_csv, {"config_hash": config_hash(config)})
    outputs = [scan_csv.name]
    if not args.no_plots:
        from .plotting import save_curves
        fig = out / "scan_exact.png"
        save_curves(fig, [(f"{args.window} window", "-", grid, curve.value, None)],
                    ylabel="coincidence probability",
                    title=f"exact phase scan ({args.channel})")
        outputs.append(fig.name)
    _write_manifest(out, args, config, origin, outputs,
                    {"points": args.points, "window": args.window,
                     "channel": args.channel})
    print(f"exact scan written to {out}")
    return 0


def _cmd_degrade(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    grid = _phase_grid(args.points)
    degraded = degraded_phase_scan(config, phase_grid=grid, window=args.window,
                                   mc_phase_draws=args.draws, seed=args.seed,
                                   channel=args.channel)
    ideal = phase_scan_exact(config, grid, args.window, channel=args.channel)

    scan_csv = out / "degraded_scan.csv"
    write_csv(scan_csv, ["phase_sum_rad", "degraded", "stderr", "ideal"],
              zip(grid.tolist(), degraded.value.tolist(), degraded.stderr.tolist(),
                  ideal.value.tolist()),
              comments={"config_hash": config_hash(config),
                        "noise_hash": degraded.meta.get("noise_hash", ""),
                        "window": str(args.window), "channel": args.channel,
                        "draws": args.draws, "seed": args.seed})
    outputs = [scan_csv.name]
    if not args.no_plots:
        from .plotting import save_curves
        fig = out / "degraded_scan.png"
        save_curves(fig, [("ideal", "-", grid, ideal.value, None),
                          ("degraded", "o", grid, degraded.value, degraded.stderr)],
                    ylabel="coincidence probability",
                    title=f"degraded phase scan ({args.window} window)")
        outputs.append(fig.name)
    _write_manifest(out, args, config, origin, outputs,
                    {"points": args.points, "window": args.window,
                     "channel": args.channel, "draws": args.draws})
    print(f"degraded scan written to {out}")
    return 0


def _has_imperfections(config: ExperimentConfig) -> bool:
    return (config.noise.phase_noise_fwhm > 0.0
            or config.noise.turn_loss_a > 0.0 or config.noise.turn_loss_b > 0.0
            or config.noise.pol_contrast_per_turn < 1.0
            or config.spectral.quadrature_points > 1
            or config.interferometer_a.turn_loss > 0.0
            or config.interferometer_b.turn_loss > 0.0
            or config.interferometer_a.pol_contrast_per_turn < 1.0
            or config.interferometer_b.pol_contrast_per_turn < 1.0)


def _cmd_simulate(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    if args.gates is not None:
        trigger_rate = config.rates.trigger_rate
        if trigger_rate <= 0:
            raise ConfigError("run.pair_rate_into_fibers",
                              "trigger rate is zero; cannot target a gate count")
        duration = args.gates / trigger_rate
    else:
        duration = args.duration
    use_imperfections = _has_imperfections(config) and not args.ideal_sampling
    coordinate = (args.scan_coordinate if args.scan_coordinate is not None
                  else config.interferometer_a.phase + config.interferometer_b.phase)
    stream, summary = simulate_run(config, duration=duration, seed=args.seed,
                                   workers=args.workers,
                                   use_imperfections=use_imperfections,
                                   scan_coordinate=coordinate)
    events_path = out / "events.txt"
    stream.write(events_path)
    summary_path = out / "summary.txt"
    summary_path.write_text(summary.to_text(), encoding="utf-8")
    _write_manifest(out, args, config, origin,
                    [events_path.name, summary_path.name],
                    {"duration": duration})
    print(f"simulated {summary.singles_trigger} gates "
          f"({summary.gate_rate:.1f} Hz) into {out}")
    return 0


def _collect_streams(inputs: list[str]) -> list[TdcEventStream]:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("**/events*.txt")))
        else:
            paths.append(p)
    if not paths:
        raise ConfigError("analyze.events", "no event files found")
    return [TdcEventStream.read(p) for p in paths]


def _cmd_analyze(args) -> int:
    config, origin = _load_config(args)
    out = _out_dir(args)
    streams = _collect_streams(args.events)
    digest = config_hash(config)
    outputs: list[str] = []

    merged = TdcEventStream(events=[ev for s in streams for ev in s.events],
                            meta=dict(streams[0].meta))
    merged.meta["gates"] = sum(int(s.meta.get("gates", len(s.events))) for s in streams)

    window_lines = []
    for channel in (CHANNEL_MAIN, CHANNEL_CONTROL):
        hist = build_histogram(merged, channel, config)
        hist_csv = out / f"histogram_{channel}.csv"
        hist.to_csv(hist_csv, {"config_hash": digest})
        outputs.append(hist_csv.name)
        if not args.no_plots:
            from .plotting import save_histogram
            fig = out / f"histogram_{channel}.png"
            save_histogram(fig, hist, title=f"arrival differences ({channel})")
            outputs.append(fig.name)
        dark = (config.stop_main.dark_rate if channel == CHANNEL_MAIN
                else config.stop_control.dark_rate)
        for window in _WINDOW_CHOICES:
            counts = window_counts(hist, window)
            point = net_normalize(0.0, counts, hist.total_gates,
                                  window_bin_count(hist, window), dark,
                                  config.source.repetition_period)
            window_lines.append(
                f"{channel} {window}: counts={counts} net={point.net!r} "
                f"stderr={point.stderr!r}")
    windows_txt = out / "window_counts.txt"
    windows_txt.write_text("\n".join(window_lines) + "\n", encoding="utf-8")
    outputs.append(windows_txt.name)

    coordinates = {s.meta.get("scan_coordinate") for s in streams}
    if len(coordinates) > 1 and None not in coordinates:
        tagged = [(float(s.meta["scan_coordinate"]), s) for s in streams]
        scan = assemble_scan(tagged, args.window, args.channel, config,
                             bootstrap_draws=args.bootstrap, seed=args.seed)
        scan_csv = out / f"scan_{args.window}.csv"
        points_to_csv(scan_csv, scan.points,
                      {"config_hash": digest, "window": args.window,
                       "channel": args.channel,
                       "visibility": scan.visibility,
                       "visibility_err": scan.visibility_err,
                       "visibility_source": scan.visibility_source,
                       "loop_gain_fit": scan.loop_gain,
                       "loop_gain_fit_err": scan.loop_gain_err})
        outputs.append(scan_csv.name)
        if not args.no_plots:
            from .plotting import save_curves
            fig = out / f"scan_{args.window}.png"
            save_curves(fig, [(f"{args.window} net", "o-", scan.curve.phase,
                               scan.curve.value, scan.curve.stderr)],
                        ylabel="net normalized coincidences",
                        title=f"assembled scan ({args.channel})")
            outputs.append(fig.name)

    _write_manifest(out, args, config, origin, outputs,
                    {"window": args.window, "channel": args.channel})
    print(f"analysis artifacts written to {out}")
    return 0


def _cmd_compare(args) -> int:
    config, origin = _load_config(args)
    if config.source.dimension < args.dimension:
        config, _ = apply_overrides(config, [f"source.dimension={args.dimension}"])
    out = _out_dir(args)
    table = evolve_state(config, phase_a=args.phase_sum, phase_b=0.0)
    params = params_from_config(config, phase_sum=args.phase_sum)

    rows = []
    failures = 0

    for channel, weight in ((CHANNEL_MAIN, peak_weight),
                            (CHANNEL_CONTROL, control_peak_weight)):
        dist = peak_distribution(table, channel, edges="out")
        for n in range(-5, 6):
            if n == 0:
                continue
            engine = dist.ratio(n, 0)
            closed = weight(n, params) / weight(0, params)
            diff = abs(engine / closed - 1.0)
            ok = diff <= args.tolerance
            failures += 0 if ok else 1
            rows.append((f"ratio_{channel}", n, engine, closed, diff,
                         args.tolerance, ok))

    shape_grid = _phase_grid(33)
    engine_shape = np.array([
        peak_distribution(evolve_state(config, phase_a=phi, phase_b=0.0),
                          CHANNEL_MAIN, edges="out").probability(0)
        for phi in shape_grid.tolist()])
    closed_shape = np.array([peak_weight(0, params.at_phase(phi))
                             for phi in shape_grid.tolist()])
    engine_shape /= engine_shape.max()
    closed_shape /= closed_shape.max()
    for phi, eng, clo in zip(shape_grid.tolist(), engine_shape.tolist(),
                             closed_shape.tolist()):
        diff = abs(eng - clo)
        ok = diff <= args.shape_tolerance
        failures += 0 if ok else 1
        rows.append(("shape_main_n0", phi, eng, clo, diff, args.shape_tolerance, ok))

    compare_csv = out / "compare.csv"
    write_csv(compare_csv, ["check", "where", "engine", "closed_form", "diff",
                            "tolerance", "ok"], rows,
              comments={"config_hash": config_hash(config),
                        "dimension": config.source.dimension,
                        "phase_sum": args.phase_sum})
    _write_manifest(out, args, config, origin, [compare_csv.name],
                    {"dimension": args.dimension, "tolerance": args.tolerance,
                     "shape_tolerance": args.shape_tolerance,
                     "phase_sum": args.phase_sum})
    n_checks = len(rows)
    print(f"compare: {n_checks - failures}/{n_checks} checks within tolerance")
    if failures:
        print(f"error: ToleranceExceeded: {failures} comparison(s) out of tolerance",
              file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fptimebin",
        description="Two-photon Fabry-Perot time-bin interferometry toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seeded: bool = True) -> None:
        p.add_argument("--config", metavar="PATH", help="config file")
        p.add_argument("--preset", choices=PRESET_NAMES, help="named built-in config")
        p.add_argument("--out", required=True, metavar="DIR", help="output directory")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--no-plots", action="store_true",
                       help="skip PNG rendering, keep CSV output only")
        p.add_argument("--workers", type=int, default=1,
                       help="worker count; results do not depend on it")
        if seeded:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("closed-form", help="normalized two-channel curves and "
                                           "lineshape metrics")
    common(p)
    p.add_argument("--points", type=int, default=512)
    p.set_defaults(func=_cmd_closed_form)

    p = sub.add_parser("exact", help="finite-dimension joint table and peak "
                                     "distributions")
    common(p)
    p.add_argument("--phase-a", type=float, default=None)
    p.add_argument("--phase-b", type=float, default=None)
    p.add_argument("--no-table", action="store_true",
                   help="skip the (large) joint amplitude table CSV")
    p.set_defaults(func=_cmd_exact)

    p = sub.add_parser("scan", help="exact windowed phase scan")
    common(p)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--window", default="full",
                   help="central | central3 | full (default full)")
    p.add_argument("--channel", choices=(CHANNEL_MAIN, CHANNEL_CONTROL),
                   default=CHANNEL_MAIN)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("degrade", help="phase scan under configured imperfections")
    common(p)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--window", default="full")
    p.add_argument("--channel", choices=(CHANNEL_MAIN, CHANNEL_CONTROL),
                   default=CHANNEL_MAIN)
    p.add_argument("--draws", type=int, default=200,
                   help="Monte Carlo phase draws")
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("simulate", help="stochastic gated acquisition run")
    common(p)
    p.add_argument("--duration", type=float, default=10.0, metavar="SECONDS")
    p.add_argument("--gates", type=int, default=None,
                   help="target expected gate count instead of a duration")
    p.add_argument("--scan-coordinate", type=float, default=None,
                   help="coordinate stamped into the stream header "
                        "(default: configured phase sum)")
    p.add_argument("--ideal-sampling", action="store_true",
                   help="sample from the ideal distribution even when the "
                        "config carries imperfections")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="histograms, net rates and scan assembly "
                                       "from event streams")
    common(p)
    p.add_argument("events", nargs="+", metavar="FILE_OR_DIR",
                   help="event stream files or directories containing them")
    p.add_argument("--window", default="full",
                   help="scan window: central | central3 | full")
    p.add_argument("--channel", choices=(CHANNEL_MAIN, CHANNEL_CONTROL),
                   default=CHANNEL_MAIN)
    p.add_argument("--bootstrap", type=int, default=200,
                   help="bootstrap draws for the visibility error")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("compare", help="exact engine vs closed forms, with "
                                       "tolerances")
    common(p)
    p.add_argument("--dimension", type=int, default=200,
                   help="train length used for the oracle comparison")
    p.add_argument("--phase-sum", type=float, default=0.0)
    p.add_argument("--tolerance", type=float, default=1e-6,
                   help="relative tolerance on peak ratios")
    p.add_argument("--shape-tolerance", type=float, default=1e-3,
                   help="pointwise tolerance on the normalized central-peak "
                        "lineshape")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
