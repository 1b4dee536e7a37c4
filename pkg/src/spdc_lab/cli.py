"""
``spdc-lab`` command-line entry point.

Every subcommand reads one JSON config, takes its seed from ``--seed``, then
``SPDC_LAB_SEED``, then the config, and writes deterministic artifacts into
``--out`` (default: the config's ``output_dir``). Each artifact carries the
config hash and the seed.

Exit codes: 0 success, 1 operation error, 2 usage or configuration error,
3 completed with per-row solver errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, angles_from_text, load_config, default_config_path
from .errors import ConfigurationError, SpdcLabError
from .montecarlo import (
    analyzer_scan_experiment,
    bandwidth_scan_experiment,
    chsh_experiment,
    measure,
    pzt_fringe_experiment,
    rate_budget_report,
    simulate_timetags,
)
from .phasematch import (
    RingGrid,
    collinear_pm_wavelength,
    emission_angles,
    pm_bandwidth,
    ring_image,
    ring_radius,
    tuning_slope,
)
from .polarization import fringe_visibility
from .spectral import bandwidth_from_scan

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    return {"config_hash": cfg.hash, "seed": cfg.seed, **extra}


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- subcommands -----------------------------------------------------------------


def cmd_phasematch(cfg: ExperimentConfig, args) -> int:
    ex = cfg.experiments.get("phasematch", {})
    lo, hi = _floats(args.temp_range) if args.temp_range else ex.get("temp_range_c", [173.6, 193.6])
    step = args.step if args.step is not None else ex.get("step_c", 0.5)
    if step <= 0 or hi < lo:
        raise ConfigurationError("temperature range must be increasing with a positive step")
    temps = lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
    cols = {"temperature": [], "lambda_cpm": [], "tuning_slope": [], "pm_bandwidth": [], "error": []}
    failures = 0
    for T in temps:
        T = round(float(T), 10)
        row = [math.nan, math.nan, math.nan]
        err = ""
        try:
            row[0] = collinear_pm_wavelength(T, cfg.crystal)
            row[1] = tuning_slope(T, cfg.crystal)
            row[2] = pm_bandwidth(T, cfg.crystal)
        except SpdcLabError as exc:
            err = f"{type(exc).__name__}: {exc}"
            failures += 1
        cols["temperature"].append(T)
        cols["lambda_cpm"].append(row[0])
        cols["tuning_slope"].append(row[1])
        cols["pm_bandwidth"].append(row[2])
        cols["error"].append(err)
    units = {"temperature": "C", "lambda_cpm": "nm", "tuning_slope": "GHz/C", "pm_bandwidth": "GHz", "error": ""}
    p = io.write_csv(args.out / "phasematch.csv", cols, units, _meta(cfg, kind="phasematch"))
    _say(f"wrote {p} ({temps.size} rows, {failures} failed)")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_rings(cfg: ExperimentConfig, args) -> int:
    ex = cfg.experiments.get("rings", {})
    temps = _floats(args.temps) if args.temps is not None else ex.get("temps_c", [])
    if not temps:
        _say("no temperatures requested; nothing written")
        return EXIT_OK
    fname = args.filter or ex.get("filter", "if_1nm")
    flt = cfg.filter(fname)
    grid = RingGrid(ex.get("n_pixels", 201), ex.get("half_width_mrad", 40.0))
    summary = {"temperature": [], "ring_radius_y": [], "ring_radius_z": [], "emission_angle": []}
    for T in temps:
        img = ring_image(T, cfg.crystal, filter_center_nm=flt.center, filter_fwhm_nm=flt.fwhm_nm,
                         grid=grid, filter_shape=flt.shape)
        path = args.out / f"ring_{T:.2f}C.txt"
        io.write_matrix(path, img.intensity, {**img.header(), **_meta(cfg, filter=fname)})
        try:
            ang = emission_angles(flt.center, T, cfg.crystal).signal_angle_external
        except SpdcLabError:
            ang = math.nan
        summary["temperature"].append(T)
        summary["ring_radius_y"].append(ring_radius(img, "y"))
        summary["ring_radius_z"].append(ring_radius(img, "z"))
        summary["emission_angle"].append(ang)
        _say(f"wrote {path}")
    io.write_csv(args.out / "rings.csv", summary,
                 {"temperature": "C", "ring_radius_y": "mrad", "ring_radius_z": "mrad", "emission_angle": "mrad"},
                 _meta(cfg, kind="rings", filter=fname))
    return EXIT_OK


def cmd_fringe(cfg: ExperimentConfig, args) -> int:
    sweep = None
    if args.sweep:
        a, b, n = _floats(args.sweep)
        sweep = np.linspace(a, b, int(n))
    scan = pzt_fringe_experiment(cfg, sweep, args.bin_ms, analytic=args.analytic,
                                 subtract_background=not args.raw)
    io.write_scan(args.out / "fringe.csv", scan, cfg.hash, cfg.seed)
    out = _meta(cfg, visibility=fringe_visibility(scan), background_subtracted=not args.raw)
    io.write_json(args.out / "fringe_summary.json", out)
    print(f"visibility {out['visibility']:.4f}")
    return EXIT_OK


def cmd_polscan(cfg: ExperimentConfig, args) -> int:
    ex = cfg.experiments["polscan"]
    thetas = angles_from_text(args.theta_s) if args.theta_s else ex["theta_s"]
    results = []
    for k, ts in enumerate(thetas):
        for label, phi in (("singlet", 0.0), ("triplet", math.pi)):
            # same seed offset scheme for every run keeps artifacts independent of run order
            scan = analyzer_scan_experiment(cfg, theta_s=ts, seed=cfg.seed + 2 * k + (phi > 0), phi=phi,
                                            analytic=args.analytic)
            tag = f"polscan_{label}_thetaS_{ts:+.4f}"
            io.write_scan(args.out / f"{tag}.csv", scan, cfg.hash, cfg.seed)
            v = fringe_visibility(scan)
            results.append({"theta_s": ts, "state": label, "visibility": v})
            print(f"theta_S={ts:+.4f} {label}: visibility {v:.4f}")
    io.write_json(args.out / "polscan_summary.json", _meta(cfg, scans=results))
    return EXIT_OK


def cmd_chsh(cfg: ExperimentConfig, args) -> int:
    angles = angles_from_text(args.angles) if args.angles else None
    if angles is not None and len(angles) != 4:
        raise ConfigurationError("--angles needs exactly four values a,a',b,b'")
    res = chsh_experiment(cfg, angles, args.counts, ideal=args.ideal, analytic=args.analytic,
                          subtract_background=args.subtract_background or args.ideal)
    io.write_json(args.out / ("chsh_ideal.json" if args.ideal else "chsh.json"),
                  _meta(cfg, ideal=args.ideal, **res.to_dict()))
    print(f"S = {res.S:.4f} +/- {res.sigma_S:.4f} ({res.violation_sigmas:.1f} sigma above 2)")
    return EXIT_OK


def cmd_bandwidth(cfg: ExperimentConfig, args) -> int:
    offsets = None
    if args.scan_range:
        a, b, step = _floats(args.scan_range)
        offsets = a + step * np.arange(int(round((b - a) / step)) + 1)
    scan = bandwidth_scan_experiment(cfg, offsets, analytic=args.analytic)
    io.write_scan(args.out / "bandwidth.csv", scan, cfg.hash, cfg.seed)
    fit = bandwidth_from_scan(scan)
    io.write_json(args.out / "bandwidth_fit.json",
                  _meta(cfg, model_pair_bandwidth_ghz=scan.metadata["pair_bandwidth_ghz"], **fit.to_dict()))
    print(f"FWHM {fit.fwhm_mm:.3f} mm ({fit.fwhm_ps:.2f} ps), pulse {fit.pulse_width_ps:.2f} ps, "
          f"bandwidth {fit.bandwidth_ghz:.1f} GHz")
    return EXIT_OK


def cmd_budget(cfg: ExperimentConfig, args) -> int:
    ex = cfg.experiments.get("budget", {})
    names = ex.get("budgets", list(cfg.budgets))
    duration = args.duration if args.duration is not None else ex.get("duration_s", 10.0)
    reports = {}
    for k, name in enumerate(names):
        b = cfg.budget(name)
        rep = rate_budget_report(b, cfg.detectors, cfg.timing).to_dict()
        seed = cfg.seed + k
        streams = simulate_timetags(b, cfg.detectors, None, None, duration, seed)
        io.write_timetags(args.out / f"timetags_{name}.bin", streams, cfg.hash)
        c = measure(b, cfg.detectors, cfg.timing, None, None, duration, seed)
        rep["monte_carlo"] = {**c.to_dict(), "run_seed": seed,
                              "conditional_probability": max(c.net, 0) / c.signal_singles if c.signal_singles else 0.0}
        reports[name] = rep
        pm = rep["per_mw"]
        print(f"{name}: singles {pm['coupled_signal_rate']:.4g}/s/mW coupled, "
              f"{pm['coincidences']:.4g} coinc/s/mW, conditional {rep['conditional_probability']:.4f}, "
              f"pair flux {pm['inferred_pair_flux']:.4g}/s/mW")
    io.write_json(args.out / "budget.json", _meta(cfg, duration_s=duration, reports=reports))
    return EXIT_OK


COMMANDS = {
    "phasematch": cmd_phasematch,
    "rings": cmd_rings,
    "fringe": cmd_fringe,
    "polscan": cmd_polscan,
    "chsh": cmd_chsh,
    "bandwidth": cmd_bandwidth,
    "budget": cmd_budget,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment JSON (default: shipped default config)")
    common.add_argument("--seed", type=int, default=None, help="overrides SPDC_LAB_SEED and the config seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")

    p = argparse.ArgumentParser(prog="spdc-lab", description="Dual-pumped PPLN pair-source simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phasematch", parents=[common], help="collinear wavelength, tuning slope and bandwidth vs T")
    s.add_argument("--temp-range", help="Tmin,Tmax in C")
    s.add_argument("--step", type=float, help="temperature step in C")

    s = sub.add_parser("rings", parents=[common], help="far-field ring images")
    s.add_argument("--temps", help="comma-separated temperatures in C (empty string for none)")
    s.add_argument("--filter", help="filter name from the config")

    s = sub.add_parser("fringe", parents=[common], help="coincidences vs interferometer phase")
    s.add_argument("--sweep", help="start,stop,points in rad")
    s.add_argument("--bin-ms", type=float, help="bin time in ms")
    s.add_argument("--analytic", action="store_true", help="expectation values instead of sampled counts")
    s.add_argument("--raw", action="store_true", help="do not subtract accidentals")

    s = sub.add_parser("polscan", parents=[common], help="coincidences vs idler analyzer angle")
    s.add_argument("--theta-s", help="comma-separated signal analyzer angles, e.g. 0,-pi/4,pi/4")
    s.add_argument("--analytic", action="store_true")

    s = sub.add_parser("chsh", parents=[common], help="CHSH parameter from sixteen settings")
    s.add_argument("--angles", help="a,a',b,b' in rad, e.g. 0,pi/4,pi/8,3pi/8")
    s.add_argument("--ideal", action="store_true", help="pure singlet, high statistics, background subtracted")
    s.add_argument("--counts", type=float, help="target coincidences per correlator")
    s.add_argument("--subtract-background", action="store_true")
    s.add_argument("--analytic", action="store_true")

    s = sub.add_parser("bandwidth", parents=[common], help="visibility vs mirror displacement and bandwidth fit")
    s.add_argument("--scan-range", help="start,stop,step in mm")
    s.add_argument("--analytic", action="store_true")

    s = sub.add_parser("budget", parents=[common], help="rate budget reports and time-tag files")
    s.add_argument("--duration", type=float, help="Monte Carlo run length in s per budget")
    return p


def resolve_seed(flag: int | None, cfg: ExperimentConfig) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SPDC_LAB_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"SPDC_LAB_SEED={env!r} is not an integer") from None
    return cfg.seed


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config or default_config_path())
        cfg = cfg.with_seed(resolve_seed(args.seed, cfg))
        args.out = Path(args.out) if args.out is not None else cfg.output_dir
        args.out.mkdir(parents=True, exist_ok=True)
    except (ConfigurationError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        _say(f"configuration error: {exc}")
        return EXIT_USAGE
    except (SpdcLabError, ValueError) as exc:
        _say(f"error: {type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
