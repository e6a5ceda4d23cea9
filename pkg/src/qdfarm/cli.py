"""Command-line front end binding simulation, analysis, and reporting.

Subcommands:
    simulate         synthesize a farm: CSM maps + ground truth + layout
    analyze          run the extraction pipeline over maps, write results
    classify         like analyze, but emit only device classes
    fit-correlation  Bayesian linear fit of V_1e against V_th (HMC)
    rf               resonator reflection, SNR fits, readout budgets
    scan             wall-clock budget of a multiplexer scan plan
    place            common-centroid placement of instance sets
    report           merge results (and truth, if given) into tables + figures

Exit codes: 0 success, 1 usage error, 2 data or file error.
"""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import extract, io as qio, layout as qlayout, mux, pipeline, report as qreport
from . import rfchain, sim, stats
from .core import DeviceClass


class _Parser(argparse.ArgumentParser):
    """argparse defaults to status 2 on usage errors; we reserve 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# simulate

def _add_simulate(sub):
    p = sub.add_parser("simulate", help="synthesize a farm of stability maps")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--farm", choices=["default"], default="default",
                   help="population preset (8 instance sets x 128 devices)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0125,
                   help="additive readout noise, fraction of full response")
    p.add_argument("--drift-amplitude", type=float, default=0.002)
    p.add_argument("--n-averages", type=int, default=1)
    p.add_argument("--only-good", action="store_true",
                   help="force every device to the Good class")
    p.add_argument("--limit", type=int, default=None,
                   help="only materialize the first N devices")
    p.set_defaults(func=cmd_simulate)


def cmd_simulate(args) -> int:
    import os

    farm = sim.default_farm(noise_sigma=args.noise_sigma,
                            drift_amplitude=args.drift_amplitude,
                            n_averages=args.n_averages)
    lay = qlayout.place_farm([p.n_devices for p in farm.sets], seed=args.seed)
    force = DeviceClass.GOOD if args.only_good else None
    # draw every spec first (population statistics stay layout-complete),
    # then materialize maps only for the devices we keep
    devices = sim.synth_farm(farm, lay, seed=args.seed, force_class=force,
                             materialize_maps=False)
    if args.limit is not None:
        devices = devices[: args.limit]
    for dev in devices:
        dev.stability_map = sim.synth_map(dev.spec,
                                          seed=[args.seed, dev.device_id, 1],
                                          device_id=dev.device_id)

    os.makedirs(args.out, exist_ok=True)
    qio.write_layout(os.path.join(args.out, "layout.tsv"), lay)
    qio.write_truth(os.path.join(args.out, "truth.tsv"), devices)
    paths = qio.write_map_directory(os.path.join(args.out, "maps"),
                                    [d.stability_map for d in devices])
    counts = {}
    for d in devices:
        counts[d.true_class.value] = counts.get(d.true_class.value, 0) + 1
    print(f"wrote {len(paths)} maps to {os.path.join(args.out, 'maps')}")
    print(f"classes: {counts}")
    print(f"ground truth: {os.path.join(args.out, 'truth.tsv')}")
    return 0


# ---------------------------------------------------------------------------
# analyze / classify

def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline knobs")
    g.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${pipeline.WORKERS_ENV_VAR} "
                        "or the CPU count)")
    g.add_argument("--drift-window", type=int, default=100)
    g.add_argument("--gaussian-sigma", type=float, default=1.0)
    g.add_argument("--low-fraction", type=float, default=0.08)
    g.add_argument("--high-fraction", type=float, default=0.20)
    g.add_argument("--min-length", type=int, default=None)
    g.add_argument("--max-gap", type=int, default=3)
    g.add_argument("--max-segments", type=int, default=10)
    g.add_argument("--companion-reach", type=int, default=4)
    g.add_argument("--peak-prominence", type=float, default=0.05)
    g.add_argument("--peak-band", type=float, default=0.0015)
    g.add_argument("--clahe-clip", type=float, default=0.01)
    g.add_argument("--clahe-tiles", type=int, nargs=2, default=(8, 8),
                   metavar=("ROWS", "COLS"))
    g.add_argument("--no-drift-removal", action="store_true")
    g.add_argument("--no-equalize", action="store_true")
    g = p.add_argument_group("classifier knobs")
    g.add_argument("--vds-tolerance", type=float, default=0.002)
    g.add_argument("--peak-tolerance", type=float, default=0.008)
    g.add_argument("--blockade-fraction", type=float, default=0.2)
    g.add_argument("--conduction-fraction", type=float, default=0.5)
    g.add_argument("--high-bias-band", type=float, default=0.15)


def _pipeline_config(args) -> pipeline.PipelineConfig:
    classifier = extract.ClassifierConfig(
        vds_tolerance=args.vds_tolerance,
        peak_tolerance=args.peak_tolerance,
        blockade_fraction=args.blockade_fraction,
        conduction_fraction=args.conduction_fraction,
        high_bias_band=args.high_bias_band,
    )
    return pipeline.PipelineConfig(
        drift_window=args.drift_window,
        clahe_tile_grid=tuple(args.clahe_tiles),
        clahe_clip_limit=args.clahe_clip,
        gaussian_sigma=args.gaussian_sigma,
        low_fraction=args.low_fraction,
        high_fraction=args.high_fraction,
        min_length=args.min_length,
        max_gap=args.max_gap,
        max_segments=args.max_segments,
        companion_reach=args.companion_reach,
        peak_prominence=args.peak_prominence,
        peak_band=args.peak_band,
        classifier=classifier,
        remove_drift=not args.no_drift_removal,
        equalize=not args.no_equalize,
    )


def _read_maps(target):
    """Read every CSM under target; returns (maps, [(path, error), ...])."""
    maps, errors = [], []
    for path in qio.csm_paths(target):
        try:
            maps.append(qio.read_csm(path))
        except qio.FormatError as exc:
            errors.append((path, str(exc)))
    return maps, errors


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="extract classes and dot parameters from maps")
    p.add_argument("--maps", required=True, help="a .csm file or a directory of them")
    p.add_argument("--out", default="results.tsv")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_analyze)


def cmd_analyze(args) -> int:
    maps, read_errors = _read_maps(args.maps)
    status = 0
    if read_errors:
        for path, msg in read_errors:
            print(f"unreadable map: {msg}", file=sys.stderr)
        status = 2
    if not maps:
        print("no readable maps; nothing to analyze", file=sys.stderr)
        return 2
    analysis = pipeline.analyze_farm(maps, _pipeline_config(args), workers=args.workers)
    qio.write_results(args.out, analysis.results)
    counts = {}
    for r in analysis.results:
        name = "failed" if r.device_class is None else r.device_class.value
        counts[name] = counts.get(name, 0) + 1
    print(f"analyzed {len(analysis.results)} maps in {analysis.elapsed_seconds:.1f} s "
          f"({1e3 * analysis.elapsed_seconds / len(analysis.results):.1f} ms/map)")
    print(f"classes: {counts}")
    print(f"results: {args.out}")
    return status


def _add_classify(sub):
    p = sub.add_parser("classify", help="classify maps (Good/Bad/Multi) only")
    p.add_argument("--maps", required=True)
    p.add_argument("--out", default="classes.tsv")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_classify)


def cmd_classify(args) -> int:
    maps, read_errors = _read_maps(args.maps)
    status = 0
    if read_errors:
        for path, msg in read_errors:
            print(f"unreadable map: {msg}", file=sys.stderr)
        status = 2
    if not maps:
        print("no readable maps; nothing to classify", file=sys.stderr)
        return 2
    analysis = pipeline.analyze_farm(maps, _pipeline_config(args), workers=args.workers)
    rows = [(r.device_id, "failed" if r.device_class is None else r.device_class.value)
            for r in analysis.results]
    qio.write_table(args.out, ("device_id", "class"), rows)
    counts = {}
    for _, name in rows:
        counts[name] = counts.get(name, 0) + 1
    print(f"classes: {counts}")
    print(f"classes table: {args.out}")
    return status


# ---------------------------------------------------------------------------
# fit-correlation

def _add_fit(sub):
    p = sub.add_parser("fit-correlation",
                       help="HMC fit of v_1e = alpha*v_th + beta + noise")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="two-column table of (v_th, v_1e) in volts")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="generate N synthetic pairs instead of reading a file")
    p.add_argument("--gen-alpha", type=float, default=1.01)
    p.add_argument("--gen-beta", type=float, default=0.21)
    p.add_argument("--gen-sigma", type=float, default=0.016)
    p.add_argument("--vth-mean", type=float, default=0.173)
    p.add_argument("--vth-std", type=float, default=0.015)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--warmup", type=int, default=500)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--leapfrog", type=int, default=32)
    p.add_argument("--fixed-sigma", type=float, default=None,
                   help="freeze the noise scale (conjugate-checkable model)")
    p.add_argument("--predict-at", type=float, default=None,
                   help="posterior-predictive v_1e interval at this v_th")
    p.add_argument("--out", default=None, help="write the posterior summary table here")
    p.set_defaults(func=cmd_fit)


def cmd_fit(args) -> int:
    if args.data is not None:
        v_th, v_1e = qio.read_xy(args.data)
    else:
        v_th, v_1e = stats.synth_correlation_data(
            args.synthetic, alpha=args.gen_alpha, beta=args.gen_beta,
            sigma=args.gen_sigma, vth_mean=args.vth_mean, vth_std=args.vth_std,
            seed=args.seed)
    model = stats.RegressionModel(fixed_sigma=args.fixed_sigma)
    config = stats.HmcConfig(step_size=args.step_size, leapfrog_steps=args.leapfrog,
                             n_samples=args.samples, n_warmup=args.warmup,
                             seed=args.seed, n_chains=args.chains)
    fit = stats.hmc_fit((v_th, v_1e), model, config)
    summary = stats.posterior_summary(fit.samples, predict_at=args.predict_at)

    ess = stats.effective_sample_size(fit.chains)
    print(f"n = {v_th.size} pairs; {args.chains} chains x {args.samples} samples; "
          f"acceptance {fit.acceptance_rate:.2f}; divergences {fit.divergences}; "
          f"min ESS {ess.min():.0f}")
    for name, mean, std, lo, hi in summary.as_rows():
        rhat = fit.rhat.get("log_sigma" if name == "sigma" else name)
        rhat_txt = f"  rhat={rhat:.3f}" if rhat is not None else ""
        print(f"  {name:<6s} {mean: .5f} +- {std:.5f}   [{lo: .5f}, {hi: .5f}]{rhat_txt}")
    alpha_mean, sigma_mean = summary.mean[0], summary.mean[2]
    spread = stats.propagated_spread(alpha_mean, sigma_mean, float(np.std(v_th, ddof=1)))
    print(f"  implied v_1e spread: {1e3 * spread:.1f} mV")
    print(f"  predictive log-score: {stats.loo_score(fit.samples, (v_th, v_1e)):.1f}")
    if summary.predictive_interval is not None:
        lo, hi = summary.predictive_interval
        print(f"  v_1e at v_th={args.predict_at:.3f} V: {summary.predictive_mean:.4f} "
              f"[{lo:.4f}, {hi:.4f}]")
    if args.out:
        qio.write_table(args.out, ("param", "mean", "std", "ci_low", "ci_high"),
                        summary.as_rows())
        print(f"posterior summary: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# rf

def _add_rf(sub):
    p = sub.add_parser("rf", help="resonator model and readout SNR fits")
    p.add_argument("--inductance-nh", type=float, default=32.7)
    p.add_argument("--coupling-pf", type=float, default=0.8)
    p.add_argument("--chip-pf", type=float, default=0.8)
    p.add_argument("--pcb-pf", type=float, default=3.06)
    p.add_argument("--line-impedance", type=float, default=50.0)
    p.add_argument("--beta", type=float, default=rfchain.DESIGN_MATCHING,
                   help="matching coefficient the internal loss is calibrated to")
    p.add_argument("--device-resistance", type=float, default=None,
                   help="also evaluate the dip with this device resistance (ohm)")
    p.add_argument("--tmin-data", default=None,
                   help="two-column (integration time s, SNR) table; fits t_min")
    p.add_argument("--fwhm-data", default=None,
                   help="two-column (frequency Hz, SNR^2) table; fits bandwidth")
    p.add_argument("--span", type=float, default=0.2,
                   help="fractional frequency span of the reflection curve")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--out", default=None,
                   help="directory for reflection.tsv and reflection.png")
    p.set_defaults(func=cmd_rf)


def cmd_rf(args) -> int:
    bare = rfchain.ResonatorModel(
        inductance=args.inductance_nh * 1e-9,
        coupling_capacitance=args.coupling_pf * 1e-12,
        parasitic_chip=args.chip_pf * 1e-12,
        parasitic_pcb=args.pcb_pf * 1e-12,
        line_impedance=args.line_impedance,
    )
    model = rfchain.calibrate_internal_loss(bare, beta=args.beta)
    f_r = model.natural_frequency
    f_dip, dip = rfchain.minimum_reflection(model)
    q_l = rfchain.loaded_q(model)
    print(f"resonant frequency: {f_r / 1e6:.3f} MHz "
          f"(total capacitance {model.total_capacitance * 1e12:.3f} pF)")
    print(f"internal loss (calibrated to beta={args.beta}): "
          f"{model.internal_loss_resistance:.0f} ohm")
    print(f"reflection dip: |Gamma| = {dip:.4f} at {f_dip / 1e6:.3f} MHz "
          f"(matched target {rfchain.matching_dip(args.beta):.4f})")
    print(f"loaded Q: {q_l:.1f}")
    if args.device_resistance is not None:
        f_d, dip_d = rfchain.minimum_reflection(model, args.device_resistance)
        print(f"with device R = {args.device_resistance:.0f} ohm: "
              f"|Gamma| = {dip_d:.4f} at {f_d / 1e6:.3f} MHz")

    if args.tmin_data:
        t, s = qio.read_xy(args.tmin_data)
        t_min = rfchain.fit_t_min(t, s)
        print(f"fitted t_min: {t_min * 1e12:.1f} ps")
    if args.fwhm_data:
        f, s2 = qio.read_xy(args.fwhm_data)
        bw = rfchain.bandwidth_fwhm(f, s2)
        print(f"SNR^2 bandwidth (FWHM): {bw / 1e6:.2f} MHz")

    if args.out:
        import os

        os.makedirs(args.out, exist_ok=True)
        freqs = np.linspace((1 - args.span) * f_r, (1 + args.span) * f_r, args.points)
        gamma = np.abs(rfchain.reflection(model, freqs))
        curve_path = os.path.join(args.out, "reflection.tsv")
        qio.write_xy(curve_path, freqs, gamma, names=("frequency_hz", "reflection_mag"))

        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(freqs / 1e6, gamma, label="no device")
        if args.device_resistance is not None:
            gamma_d = np.abs(rfchain.reflection(model, freqs, args.device_resistance))
            ax.plot(freqs / 1e6, gamma_d,
                    label=f"R = {args.device_resistance:.0f} ohm")
            ax.legend(fontsize=8)
        ax.set_xlabel("frequency (MHz)")
        ax.set_ylabel("|reflection|")
        ax.set_title("tank-circuit reflection")
        fig.tight_layout()
        png_path = os.path.join(args.out, "reflection.png")
        fig.savefig(png_path, dpi=120)
        plt.close(fig)
        print(f"curve: {curve_path}, figure: {png_path}")
    return 0


# ---------------------------------------------------------------------------
# scan

def _add_scan(sub):
    p = sub.add_parser("scan", help="time budget of a multiplexer scan plan")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--plan", help="scan-plan table "
                     "(device_id, points, tau, averages, settle)")
    src.add_argument("--default-plan", action="store_true",
                     help="use the built-in full-farm plan")
    p.add_argument("--devices", type=int, default=mux.N_DEVICES)
    p.add_argument("--points", type=int, default=28600)
    p.add_argument("--tau", type=float, default=10e-6)
    p.add_argument("--averages", type=int, default=1)
    p.add_argument("--settle", type=float, default=7e-3)
    p.add_argument("--budget", type=float, default=None, help="flag totals above this (s)")
    p.add_argument("--out", default=None, help="write the per-device breakdown here")
    p.set_defaults(func=cmd_scan)


def cmd_scan(args) -> int:
    if args.plan:
        plan = qio.read_scan_plan(args.plan)
    else:
        plan = mux.default_plan(n_devices=args.devices, points=args.points,
                                tau=args.tau, averages=args.averages,
                                settle=args.settle)
    rep = mux.scan_time(plan, budget=args.budget)
    per = rep.per_device
    print(f"{per.size} devices, total {rep.total_seconds:.3f} s "
          f"({rep.total_seconds / 60:.2f} min)")
    print(f"per device: min {1e3 * per.min():.3f} ms, "
          f"mean {1e3 * per.mean():.3f} ms, max {1e3 * per.max():.3f} ms")
    if args.budget is not None:
        verdict = "OVER BUDGET" if rep.over_budget else "within budget"
        print(f"budget {args.budget:.3f} s: {verdict}")
    if args.out:
        qio.write_table(args.out, ("device_id", "seconds"),
                        zip(rep.device_ids.tolist(), per))
        print(f"breakdown: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# place

def _add_place(sub):
    p = sub.add_parser("place", help="common-centroid placement of instance sets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=qlayout.GRID_SIZE)
    p.add_argument("--set-sizes", default=None,
                   help="comma-separated cell counts (default: 8 equal sets)")
    p.add_argument("--out", default=None, help="write the layout table here")
    p.add_argument("--check", action="store_true",
                   help="verify every set centroid sits at the grid center")
    p.set_defaults(func=cmd_place)


def cmd_place(args) -> int:
    n_cells = args.grid * args.grid
    if args.set_sizes:
        sizes = [int(s) for s in args.set_sizes.split(",")]
    else:
        sizes = [n_cells // 8] * 8
    lay = qlayout.place_farm(sizes, seed=args.seed, grid_size=args.grid)
    print(f"placed {len(sizes)} sets on a {args.grid}x{args.grid} grid (seed {args.seed})")
    if args.check:
        center = (args.grid - 1) / 2.0
        bad = []
        for set_id in lay.set_ids:
            c = qlayout.centroid(lay, int(set_id))
            if c != (center, center):
                bad.append((int(set_id), c))
        if bad:
            print(f"centroid check FAILED: {bad}", file=sys.stderr)
            return 2
        print(f"centroid check passed: all {len(lay.set_ids)} sets at "
              f"({center}, {center})")
    if args.out:
        qio.write_layout(args.out, lay)
        print(f"layout: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# report

def _add_report(sub):
    p = sub.add_parser("report", help="aggregate results into tables and figures")
    p.add_argument("--results", required=True, help="results table from `analyze`")
    p.add_argument("--layout", default=None, help="layout table (for set grouping)")
    p.add_argument("--truth", default=None, help="ground-truth table from `simulate`")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)


def cmd_report(args) -> int:
    results = qio.read_results(args.results)
    lay = qio.read_layout(args.layout) if args.layout else None
    truth = qio.read_truth(args.truth) if args.truth else None
    if lay is not None:
        set_ids = lay
    elif truth is not None:
        set_ids = {t.device_id: t.set_id for t in truth}
    else:
        set_ids = None
    rep = qreport.build_report(results, set_ids)
    paths = qreport.write_report(args.out, rep, truth=truth,
                                 figures=not args.no_figures)
    sys.stdout.write(open(paths["summary"]).read())
    print(f"report written to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="qdfarm",
                     description="quantum-dot device farm simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_simulate(sub)
    _add_analyze(sub)
    _add_classify(sub)
    _add_fit(sub)
    _add_rf(sub)
    _add_scan(sub)
    _add_place(sub)
    _add_report(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (qio.FormatError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"qdfarm {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
