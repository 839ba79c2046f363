"""Command-line surface tying the modules into reproducible pipelines.

Every run writes a ``manifest.json`` echoing the fully-resolved
configuration and tool version into the output directory.  Numeric results
go to stdout as JSON (rounded to 12 significant digits) and to files in the
output directory.  Exit codes: 0 success, 1 fit non-convergence, 2 input
error.

The ``EMITTERLAB_THREADS`` environment variable caps internal parallelism.
Config schema: see docs/config.md.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, correlator, exciton, fitlab, kinetics, optics, photostream
from .correlator import CorrelationHistogram
from .fitlab import IRFModel, PowerSeriesPoint
from .kinetics import RateSet, SaturationParams
from .photostream import BackgroundModel, DetectorModel, PulseTrain
from .ptsfile import read_pts, write_pts

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_INPUT_ERROR = 2


class InputError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EMITTERLAB_THREADS", "1")))
    except ValueError:
        return 1


def _round_sig(x, sig=12):
    if isinstance(x, dict):
        return {k: _round_sig(v, sig) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round_sig(v, sig) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if x == 0.0 or not np.isfinite(x):
            return x
        return float(f"{x:.{sig - 1}e}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _round_sig(x.tolist(), sig)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _emit(result: dict, outdir: Path | None, name: str):
    payload = json.dumps(_round_sig(result), indent=2, sort_keys=True)
    print(payload)
    if outdir is not None:
        (outdir / name).write_text(payload + "\n")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"unreadable config file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed config {path}: {exc}") from exc


def _prepare_outdir(args, config) -> Path | None:
    out = getattr(args, "out", None)
    if out is None:
        return None
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "emitterlab",
        "version": __version__,
        "subcommand": args.subcommand,
        "config": config,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(_round_sig(manifest), indent=2, sort_keys=True) + "\n"
    )
    return outdir


def _read_channel(path, label):
    try:
        return read_pts(path, label=label)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _read_csv(path, n_cols_min):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"unreadable input file {path}: {exc}") from exc
    if data.shape[1] < n_cols_min:
        raise InputError(f"{path}: expected >= {n_cols_min} CSV columns")
    return data


def _rates_from_config(cfg) -> RateSet:
    try:
        r = cfg["rates"]
        return RateSet(k12=r["k12"], k21=r["k21"], k23=r["k23"], k31=r["k31"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed rates config: {exc}") from exc


def _detector_from_config(cfg) -> DetectorModel:
    return DetectorModel(
        efficiency=cfg.get("efficiency", 1.0),
        jitter_sigma=cfg.get("jitter_sigma_ps", 30.0),
        dead_time=cfg.get("dead_time_ps", 20_000.0),
        dark_rate=cfg.get("dark_rate_cps", 100.0),
    )


def _try_plot(fn):
    # Figures are conveniences; the numbers are the contract.
    try:
        import matplotlib

        matplotlib.use("Agg")
        fn()
    except Exception as exc:  # noqa: BLE001 - plotting must never fail a run
        print(f"plotting skipped: {exc}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    config = _load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    seed = config.get("seed", 0)
    outdir = _prepare_outdir(args, config)
    rates = _rates_from_config(config)
    duration = config.get("duration_ps")
    if duration is None:
        raise InputError("config requires duration_ps")
    background = BackgroundModel(rate=config.get("background_cps", 0.0))
    mode = config.get("mode", "cw")
    if mode == "cw":
        photons = photostream.simulate_cw(rates, duration, background, seed)
    elif mode == "pulsed":
        tr = config.get("pulse", {})
        train = PulseTrain(
            rep_rate=tr.get("rep_rate_mhz", 80.0),
            pulse_width=tr.get("pulse_width_ps", 1.0),
            excitation_prob=tr.get("excitation_prob", 1.0),
        )
        photons = photostream.simulate_pulsed(rates, train, duration,
                                              background, seed)
    else:
        raise InputError(f"unknown simulate mode: {mode}")
    det_a = _detector_from_config(config.get("detector_a", {}))
    det_b = _detector_from_config(config.get("detector_b", {}))
    ch_a, ch_b = photostream.detect_hbt(
        photons, config.get("splitter_ratio", 0.5), det_a, det_b,
        seed=seed + 1, duration_ps=duration,
    )
    if outdir is not None:
        write_pts(outdir / "ch_a.pts", ch_a)
        write_pts(outdir / "ch_b.pts", ch_b)
    _emit(
        {
            "mode": mode,
            "seed": seed,
            "duration_ps": duration,
            "emitted_photons": int(len(photons)),
            "counts_a": len(ch_a),
            "counts_b": len(ch_b),
        },
        outdir,
        "simulate.json",
    )
    return EXIT_OK


def cmd_correlate(args):
    config = {"a": args.a, "b": args.b, "bin_ps": args.bin_ps,
              "window_ns": args.window_ns}
    outdir = _prepare_outdir(args, config)
    ch_a = _read_channel(args.a, "A")
    ch_b = _read_channel(args.b, "B")
    try:
        hist = correlator.correlate(ch_a, ch_b, args.bin_ps,
                                    int(args.window_ns * 1000))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if outdir is not None:
        hist.to_csv(outdir / "histogram.csv")

        def plot():
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots()
            ax.step(hist.taus / 1000.0, hist.g2, where="mid")
            ax.set_xlabel("tau (ns)")
            ax.set_ylabel("g2")
            fig.savefig(outdir / "g2.svg")
            plt.close(fig)

        _try_plot(plot)
    _emit(
        {
            "bins": int(hist.taus.size),
            "bin_width_ps": hist.bin_width,
            "total_pairs": int(hist.counts.sum()),
            "normalization": hist.normalization,
            "g2_min": float(hist.g2.min()),
        },
        outdir,
        "correlate.json",
    )
    return EXIT_OK


def _finish_fit(res, outdir, name, extra=None):
    d = res.to_json_dict()
    if extra:
        d.update(extra)
    _emit(d, outdir, name)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_fit_g2(args):
    config = {"hist": args.hist, "mode": args.mode}
    outdir = _prepare_outdir(args, config)
    try:
        hist = CorrelationHistogram.from_csv(args.hist)
    except (OSError, ValueError) as exc:
        raise InputError(f"unreadable histogram {args.hist}: {exc}") from exc
    res = fitlab.fit_g2_cw(hist, mode=args.mode)
    if outdir is not None and res.converged:

        def plot():
            import matplotlib.pyplot as plt

            params = fitlab.g2_params_from_fit(res)
            tau_ns = hist.taus / 1000.0
            fig, ax = plt.subplots()
            ax.step(tau_ns, hist.g2, where="mid", label="data")
            ax.plot(tau_ns, kinetics.g2_eval(params, tau_ns), label="fit")
            ax.set_xlabel("tau (ns)")
            ax.set_ylabel("g2")
            ax.legend()
            fig.savefig(outdir / "g2_fit.svg")
            plt.close(fig)

        _try_plot(plot)
    return _finish_fit(res, outdir, "fit_g2.json")


def cmd_fit_saturation(args):
    config = {"data": args.data}
    outdir = _prepare_outdir(args, config)
    data = _read_csv(args.data, 2)
    sigma = data[:, 2] if data.shape[1] > 2 else None
    res = fitlab.fit_saturation(list(zip(data[:, 0], data[:, 1])), sigma=sigma)
    if outdir is not None and res.converged:

        def plot():
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots()
            ax.plot(data[:, 0], data[:, 1], "o", label="data")
            pp = np.linspace(0, data[:, 0].max() * 1.1, 200)
            sat = SaturationParams(p_sat=res["p_sat"], i_inf=res["i_inf"])
            ax.plot(pp, sat.eval(pp), label="fit")
            ax.set_xlabel("power (mW)")
            ax.set_ylabel("counts/s")
            ax.legend()
            fig.savefig(outdir / "saturation.svg")
            plt.close(fig)

        _try_plot(plot)
    return _finish_fit(res, outdir, "fit_saturation.json")


def cmd_fit_lifetime(args):
    config = {"data": args.data, "irf_sigma_ps": args.irf_sigma_ps,
              "irf_file": args.irf_file}
    outdir = _prepare_outdir(args, config)
    data = _read_csv(args.data, 2)
    if args.irf_file is not None:
        irf = IRFModel.from_file(args.irf_file)
    else:
        irf = IRFModel.gaussian(args.irf_sigma_ps)
    res = fitlab.fit_lifetime((data[:, 0], data[:, 1]), irf)
    return _finish_fit(res, outdir, "fit_lifetime.json")


def cmd_fit_polarization(args):
    config = {"data": args.data}
    outdir = _prepare_outdir(args, config)
    data = _read_csv(args.data, 2)
    res = fitlab.fit_polarization(list(zip(data[:, 0], data[:, 1])))
    return _finish_fit(res, outdir, "fit_polarization.json")


def cmd_rates(args):
    config = {"series": args.series}
    outdir = _prepare_outdir(args, config)
    data = _read_csv(args.series, 4)
    pts = []
    for row in data:
        kw = {}
        if data.shape[1] >= 7:
            kw = dict(tau1_err=row[4], tau2_err=row[5], beta_err=row[6])
        pts.append(PowerSeriesPoint(power=row[0], tau1=row[1], tau2=row[2],
                                    beta=row[3], **kw))
    try:
        ext = fitlab.extract_rates(pts)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = {
        "k21_per_ns": {"value": ext.k21, "sigma": ext.k21_err},
        "k23_per_ns": {"value": ext.k23, "sigma": ext.k23_err},
        "eta_per_ns_mw": {"value": ext.eta, "sigma": ext.eta_err},
        "k31_per_power": [{"power_mw": p, "k31_per_ns": k}
                          for p, k in ext.k31_per_power],
        "lifetime_ps": {"value": ext.lifetime_ns * 1000.0,
                        "sigma": ext.lifetime_err_ns * 1000.0},
        "k31_identifiable": ext.k31_identifiable,
        "converged": ext.fit.converged,
    }
    _emit(result, outdir, "rates.json")
    return EXIT_OK if ext.fit.converged else EXIT_NONCONVERGED


def cmd_pulsed_g2(args):
    config = {"a": args.a, "b": args.b, "rep_mhz": args.rep_mhz,
              "n_peaks": args.n_peaks}
    outdir = _prepare_outdir(args, config)
    ch_a = _read_channel(args.a, "A")
    ch_b = _read_channel(args.b, "B")
    try:
        res = correlator.pulsed_g2(ch_a, ch_b, args.rep_mhz, args.n_peaks)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(
        {
            "g2_zero": res.g2_zero,
            "g2_zero_err": res.g2_zero_err,
            "rep_period_ps": res.rep_period_ps,
            "peak_offsets": res.peak_offsets,
            "peak_areas": res.peak_areas,
        },
        outdir,
        "pulsed_g2.json",
    )
    return EXIT_OK


def cmd_trace(args):
    config = {"a": args.a, "bin_ms": args.bin_ms}
    outdir = _prepare_outdir(args, config)
    ch = _read_channel(args.a, "A")
    tr = correlator.intensity_trace(ch, args.bin_ms)
    if outdir is not None:
        data = np.column_stack([np.arange(tr.counts.size) * args.bin_ms,
                                tr.counts])
        np.savetxt(outdir / "trace.csv", data, delimiter=",",
                   header="t_ms,counts", comments="", fmt=["%.3f", "%d"])
    _emit(
        {
            "bin_ms": args.bin_ms,
            "n_bins": int(tr.counts.size),
            "mean": tr.mean,
            "std": tr.std,
            "max_min_ratio": tr.max_min_ratio if np.isfinite(tr.max_min_ratio)
            else None,
        },
        outdir,
        "trace.json",
    )
    return EXIT_OK


def cmd_zpl(args):
    config = _load_config(args.config)
    outdir = _prepare_outdir(args, config)
    try:
        stack = exciton.StackProfile.from_string(
            config["stack"], config.get("bilayer_thickness_nm", 0.259)
        )
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed stack config: {exc}") from exc
    pcfg = config.get("params", {})
    params = exciton.ExcitonParams(
        m_eff=pcfg.get("m_eff", 0.2),
        eps_r=pcfg.get("eps_r", 9.5),
        coulomb_softening=pcfg.get("coulomb_softening_nm", 0.3),
        e0=pcfg.get("e0_ev", exciton.EV_NM / 1350.0),
        de_cbm=pcfg.get("de_cbm_ev", -0.25),
        de_vbm=pcfg.get("de_vbm_ev", 0.05),
        interface_field=pcfg.get("interface_field_mv_cm", 2.9),
    )
    domain = config.get("domain_half_width_nm", 20.0)
    step = config.get("grid_step_nm", 0.02)
    if config.get("calibrate", False):
        params = exciton.calibrate(stack, params,
                                   domain_half_width=domain, grid_step=step)
    positions = config.get("positions")
    if positions == "interfaces" or positions is None:
        positions = exciton.interface_bilayers(stack)
    spectrum = exciton.zpl_distribution(
        stack, positions, params, domain_half_width=domain, grid_step=step,
        threads=_threads(),
    )
    if outdir is not None:
        spectrum.to_csv(outdir / "spectrum.csv")
        spectrum.hist_to_csv(outdir / "spectrum_hist.csv")

        def plot():
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots()
            centers = 0.5 * (spectrum.hist_edges_nm[:-1]
                             + spectrum.hist_edges_nm[1:])
            ax.bar(centers, spectrum.hist_counts, width=9.0)
            ax.set_xlabel("ZPL (nm)")
            ax.set_ylabel("count")
            fig.savefig(outdir / "zpl_hist.svg")
            plt.close(fig)

        _try_plot(plot)
    _emit(
        {
            "de_cbm_ev": params.de_cbm,
            "e0_ev": params.e0,
            "positions": spectrum.defect_indices,
            "zpl_nm": spectrum.zpl_nm,
            "binding_ev": spectrum.binding_ev,
        },
        outdir,
        "zpl.json",
    )
    return EXIT_OK


def cmd_budget(args):
    config = _load_config(args.config)
    outdir = _prepare_outdir(args, config)
    try:
        budget = optics.EfficiencyBudget(
            eta_c=config["eta_c"], eta_f=config["eta_f"],
            eta_o=config["eta_o"], eta_d=config["eta_d"],
        )
        i_inf = config["i_inf_cps"]
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed budget config: {exc}") from exc
    if "i_total_cps" in config:
        i_total = config["i_total_cps"]
    elif "lifetime_ps" in config:
        i_total = optics.total_rate_from_lifetime(config["lifetime_ps"])
    else:
        raise InputError("budget config requires i_total_cps or lifetime_ps")
    eta_q, chain = optics.quantum_efficiency(i_inf, i_total, budget)
    result = {"eta_q": eta_q, "chain": chain, "i_total_cps": i_total}
    if "na" in config and "n_medium" in config:
        result["half_angle_deg"] = optics.collection_half_angle(
            config["na"], config["n_medium"]
        )
    _emit(result, outdir, "budget.json")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emitterlab",
        description="Three-level single-photon-emitter simulation and analysis",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate HBT timestamp channels")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="cw g2 histogram from two channels")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--bin-ps", type=int, default=100, dest="bin_ps")
    p.add_argument("--window-ns", type=float, default=400.0, dest="window_ns")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit-g2", help="fit the three-level g2 model")
    p.add_argument("--hist", required=True)
    p.add_argument("--mode", choices=["free", "constrained"], default="free")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit_g2)

    p = sub.add_parser("fit-saturation", help="fit I(P) = I_inf*P/(P+P_s)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit_saturation)

    p = sub.add_parser("fit-lifetime", help="IRF-convolved lifetime fit")
    p.add_argument("--data", required=True)
    p.add_argument("--irf-sigma-ps", type=float, default=30.0,
                   dest="irf_sigma_ps")
    p.add_argument("--irf-file", default=None, dest="irf_file")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit_lifetime)

    p = sub.add_parser("fit-polarization", help="fit y0 + A*cos^2(a*x+phi)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit_polarization)

    p = sub.add_parser("rates", help="extract transition rates from a power series")
    p.add_argument("--series", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("pulsed-g2", help="per-pulse coincidence peak areas")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--rep-mhz", type=float, default=80.0, dest="rep_mhz")
    p.add_argument("--n-peaks", type=int, default=10, dest="n_peaks")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pulsed_g2)

    p = sub.add_parser("trace", help="intensity time trace")
    p.add_argument("--a", required=True)
    p.add_argument("--bin-ms", type=float, default=100.0, dest="bin_ms")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("zpl", help="ZPL distribution from the exciton model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_zpl)

    p = sub.add_parser("budget", help="efficiency-budget arithmetic")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_budget)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 for unknown subcommands / bad flags, which
        # matches the input-error contract; --version/--help exit 0.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
