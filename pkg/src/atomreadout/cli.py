"""Command-line pipeline: simulate, analyze, fit, spectrum, distribution, report.

Rates on the command line are in kcps, times in µs and frequencies in MHz.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, io
from .atomic import peak_and_fwhm, spectrum_scan
from .atomic.levels import GROUND
from .counting import BrightModel, CountPMF, TAIL_TOL, p_bright_closed, truncation_n_max
from .exceptions import (AnalysisError, ConfigError, DataError, DomainError, FitError,
                         IntegrationError, QuadratureError)
from .fitting import DEFAULT_ETA, confidence_band, fit_bright_error, fit_report
from .simulation import simulate_dataset


def _config(args):
    return io.RunConfig.load(args.config) if args.config else io.RunConfig()


def _merge(cfg, key, flag_value):
    """Config with an optional command-line value applied, and the resulting value."""
    if flag_value is not None:
        cfg = cfg.override(key, flag_value)
    return cfg, cfg.get(key)


def _outdir(cfg, args):
    out = Path(args.out_dir or cfg["output.directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = _config(args)
    cfg, _ = _merge(cfg, "sim.seed", args.seed)
    sim = cfg.sim_config()
    cfg, workers = _merge(cfg, "sim.workers", args.workers)
    records = simulate_dataset(sim, workers=int(workers))
    meta = {"config_hash": cfg.hash, "seed": sim.seed}
    io.save_trials(records, args.out, readout_duration=sim.readout_duration, meta=meta)
    print(f"wrote {len(records)} trials ({sim.n_bright_trials} bright, "
          f"{sim.n_dark_trials} dark) to {args.out}")
    return 0


def cmd_analyze(args):
    cfg = _config(args)
    header = io.read_trial_header(args.trials)
    horizon = float(header.get("readout_duration_us", cfg["sim.readout_duration_us"]))
    cfg, bin_width = _merge(cfg, "analysis.bin_width_us", args.bin_width)
    flag = [int(k) for k in args.thresholds.split(",")] if args.thresholds else None
    cfg, thresholds = _merge(cfg, "analysis.thresholds", flag)
    cfg, post_select = _merge(cfg, "analysis.post_select",
                              False if args.no_post_select else None)
    curve = analysis.error_curves_from_stream(io.iter_trials(args.trials), thresholds,
                                              float(bin_width), horizon, post_select)
    cfg, hist_time = _merge(cfg, "analysis.histogram_time_us", args.histogram_time)
    hist_time = min(float(hist_time), horizon)
    hist = analysis.histogram_at(io.iter_trials(args.trials), hist_time, horizon, post_select)
    retention, (r_lo, r_hi) = analysis.retention_rate(io.iter_trials(args.trials))
    best = analysis.optimal_operating_point(curve)

    out = _outdir(cfg, args)
    meta = {"config_hash": header.get("config_hash", cfg.hash), "seed": header.get("seed", "na"),
            "source": Path(args.trials).name}
    io.write_table(out / "curve.csv", io.curve_columns(curve), meta)
    io.write_table(out / "histogram.csv", {
        "photons_count": hist.photon_numbers, "bright_trials_count": hist.counts_bright,
        "dark_trials_count": hist.counts_dark}, {**meta, "at_time_us": f"{hist_time:.3f}"})
    io.write_table(out / "summary.csv", {
        "best_n_thresh_count": [best.n_thresh], "best_time_us": [best.time],
        "best_fidelity_prob": [best.fidelity], "best_fidelity_ci_low_prob": [best.ci[0]],
        "best_fidelity_ci_high_prob": [best.ci[1]], "retention_prob": [retention],
        "retention_ci_low_prob": [r_lo], "retention_ci_high_prob": [r_hi]}, meta)
    print(f"{curve.n_bright} bright / {curve.n_dark} dark trials after post-selection")
    for k in curve.thresholds:
        i = curve.row(k)
        j = int(np.argmax(curve.fidelity[i]))
        print(f"  n_thresh={k}: peak fidelity {curve.fidelity[i, j]:.4f} "
              f"at {curve.times[j]:.1f} us")
    print(f"best: n_thresh={best.n_thresh}, t={best.time:.1f} us, F={best.fidelity:.4f} "
          f"[{best.ci[0]:.4f}, {best.ci[1]:.4f}]")
    print(f"retention {retention:.4f} [{r_lo:.4f}, {r_hi:.4f}]")
    print(f"tables written to {out}")
    return 0


def cmd_fit(args):
    cfg = _config(args)
    cfg, r_bg = _merge(cfg, "fit.r_bg_kcps", args.rbg)
    if r_bg is None:
        raise ConfigError("fit needs the background rate: --rbg or fit.r_bg_kcps")
    cfg, n_thresh = _merge(cfg, "fit.n_thresh", args.nthresh)
    cfg, eta = _merge(cfg, "fit.eta", args.eta)
    n_thresh, eta = int(n_thresh), float(eta)
    meta, cols = io.read_table(args.curve)
    key = f"eps_bright_n{n_thresh}_prob"
    if key not in cols or "time_us" not in cols or "n_bright_count" not in cols:
        raise DataError(f"{args.curve}: needs columns time_us, n_bright_count and {key}")
    n_trials = int(cols["n_bright_count"][0])
    cfg, se_method = _merge(cfg, "fit.se_method", args.se_method)
    fit = fit_bright_error(cols["time_us"], cols[key], n_trials, float(r_bg), n_thresh, eta,
                           se_method=se_method, seed=int(cfg["sim.seed"]))
    band = confidence_band(fit, cols["time_us"])
    label = args.label or Path(args.curve).stem
    out = _outdir(cfg, args)
    io.save_fit(fit, out / f"fit_{label}.conf", label)
    io.write_table(out / f"band_{label}.csv", {
        "time_us": band.times, "eps_bright_fit_prob": band.centre,
        "band_low_prob": band.low, "band_high_prob": band.high},
        {"config_hash": cfg.hash, "source": Path(args.curve).name, "band_method": band.method,
         "n_thresh": n_thresh})
    print(fit_report([fit], [label]).format())
    print(f"objective {fit.objective_value:.6g} (initial guess {fit.initial_objective:.6g}), "
          f"standard errors: {fit.se_method}")
    return 0


def cmd_spectrum(args):
    cfg = _config(args)
    cfg, start = _merge(cfg, "spectrum.start_mhz", args.start)
    cfg, stop = _merge(cfg, "spectrum.stop_mhz", args.stop)
    cfg, points = _merge(cfg, "spectrum.points", args.points)
    cfg, duration = _merge(cfg, "spectrum.duration_us", args.duration)
    cfg, _ = _merge(cfg, "probe.saturation", args.saturation)
    duration = float(duration)
    detunings = np.linspace(float(start), float(stop), int(points))
    rates, pops, orp = spectrum_scan(detunings, cfg.probe(), cfg.scheme(), duration,
                                     workers=args.workers)
    out = _outdir(cfg, args)
    meta = {"config_hash": cfg.hash, "saturation": cfg["probe.saturation"],
            "duration_us": duration}
    io.write_table(out / "spectrum.csv", {
        "detuning_mhz": detunings, "scattering_rate_per_s": rates,
        "orp_via_f1_per_s": orp[:, 0], "orp_via_f2_per_s": orp[:, 1]}, meta)
    cols = {"detuning_mhz": detunings}
    for i, g in enumerate(GROUND):
        cols[f"pop_f{g.F}_m{g.m:+d}_prob"] = pops[:, i]
    cols["pop_f1_total_prob"] = pops[:, :3].sum(axis=1)
    io.write_table(out / "populations.csv", cols, meta)
    peak, fwhm = peak_and_fwhm(detunings, rates)
    print(f"fluorescence peak {peak:.2f} MHz, FWHM {fwhm:.2f} MHz")
    print(f"F=1 population largest at {detunings[np.argmax(cols['pop_f1_total_prob'])]:.2f} MHz")
    return 0


def cmd_distribution(args):
    eta = args.eta or DEFAULT_ETA
    model = BrightModel.from_detected(args.eta_r0 * 1e3, args.rbg * 1e3, args.rl * 1e3, eta=eta)
    t = args.t * 1e-6
    n_max = args.nmax if args.nmax is not None else truncation_n_max(
        (model.eta_r0 + model.r_bg) * t)
    pmf = CountPMF(np.array([p_bright_closed(n, t, model) for n in range(n_max + 1)]), t)
    cols = {"photons_count": np.arange(n_max + 1), "probability_prob": pmf.probabilities}
    meta = {"eta_r0_kcps": args.eta_r0, "r_loss_kcps": args.rl, "r_bg_kcps": args.rbg,
            "t_us": args.t, "tail_tol": TAIL_TOL}
    if args.out:
        io.write_table(args.out, cols, meta)
    for key in sorted(meta):
        print(f"# {key}={meta[key]}")
    print("photons_count,probability_prob")
    for n, p in enumerate(pmf.probabilities):
        print(f"{n},{io.format_number(p)}")
    print(f"# total={pmf.total():.15f} mean_count={pmf.mean():.6f}")
    return 0


def cmd_report(args):
    fits, labels = [], []
    for path in args.fits:
        fit, label = io.load_fit(path)
        fits.append(fit)
        labels.append(label)
    if args.labels:
        labels = args.labels.split(",")
    print(fit_report(fits, labels).format())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="atomreadout", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a trial-record file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="fidelity curves, histogram and retention from trials")
    p.add_argument("trials")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--bin-width", type=float)
    p.add_argument("--thresholds")
    p.add_argument("--histogram-time", type=float)
    p.add_argument("--no-post-select", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", help="fit etaR0 and R_l to a bright-error curve")
    p.add_argument("curve")
    p.add_argument("--rbg", type=float, help="background rate, kcps")
    p.add_argument("--nthresh", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--label")
    p.add_argument("--se-method", choices=("sandwich", "bootstrap"))
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("spectrum", help="rate-equation fluorescence and population scan")
    p.add_argument("--config")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--saturation", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("distribution", help="bright-state photon-count distribution")
    p.add_argument("--eta-r0", type=float, required=True, help="kcps")
    p.add_argument("--rl", type=float, required=True, help="kcps")
    p.add_argument("--rbg", type=float, required=True, help="kcps")
    p.add_argument("--t", type=float, required=True, help="us")
    p.add_argument("--eta", type=float)
    p.add_argument("--nmax", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("report", help="compare fit records")
    p.add_argument("fits", nargs="+")
    p.add_argument("--labels")
    p.set_defaults(func=cmd_report)
    return parser


def run_command(argv=None):
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ConfigError, DataError, DomainError, AnalysisError, FitError, QuadratureError,
            IntegrationError, OSError) as exc:
        print(f"atomreadout {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
