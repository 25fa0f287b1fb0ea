"""Command-line interface.

Subcommands wrap the library modules: ``rates`` (single operating point),
``shoulder`` (loss/pump sweep), ``simulate`` (tag-stream synthesis),
``coincidences`` (tag post-processing) and ``overpass`` (pass integration
and optimization).  Exit codes: 0 success, 1 no valid result (e.g.
insufficient statistics), 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import coincidence, overpass, rates, timetags
from .params import LinkParams, load_link, reference_link

N_DET_PER_PARTY = 4


def _add_link_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("link parameters")
    g.add_argument("--params", metavar="FILE", help="JSON link parameter file")
    g.add_argument("--pump-mw", type=float, help="pump power (mW)")
    g.add_argument("--loss-db", type=float, help="added up-link loss (dB)")
    g.add_argument("--fiber-km", type=float, help="fibre length (km)")
    g.add_argument("--window-ps", type=float, help="coincidence window (ps)")
    g.add_argument("--dark-sat-cps-per-det", type=float,
                   help="up-link dark rate per detector (cps)")
    g.add_argument("--dark-fib-cps-per-det", type=float,
                   help="fibre-arm dark rate per detector (cps)")


def _build_link(args: argparse.Namespace) -> LinkParams:
    if args.params is not None:
        link = load_link(args.params)
    else:
        link = reference_link()
    src, ch = link.source, link.channel
    det_sat, det_fib = link.det_sat, link.det_fib
    if args.pump_mw is not None:
        src = replace(src, pump_power=args.pump_mw)
    if args.loss_db is not None:
        ch = replace(ch, freespace_loss_db=args.loss_db)
    if args.fiber_km is not None:
        ch = replace(ch, fiber_length_km=args.fiber_km)
    if args.window_ps is not None:
        ch = replace(ch, coincidence_window=args.window_ps * 1e-12)
    if args.dark_sat_cps_per_det is not None:
        det_sat = replace(det_sat, dark_rate=N_DET_PER_PARTY * args.dark_sat_cps_per_det)
    if args.dark_fib_cps_per_det is not None:
        det_fib = replace(det_fib, dark_rate=N_DET_PER_PARTY * args.dark_fib_cps_per_det)
    return LinkParams(source=src, det_sat=det_sat, det_fib=det_fib, channel=ch)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_range(text: str, name: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"{name} must be LO:HI:STEP, got {text!r}")
    lo, hi, step = (float(v) for v in parts)
    if step <= 0 or hi < lo:
        raise ValueError(f"{name}: need LO <= HI and STEP > 0")
    return lo, hi, step


def _parse_bounds(text: str, name: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"{name} must be LO:HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_rates(args: argparse.Namespace) -> int:
    link = _build_link(args)
    est = rates.estimate(link)
    _emit(json.dumps(est.to_json_dict(), indent=2) + "\n", args.out)
    return 0


def cmd_shoulder(args: argparse.Namespace) -> int:
    link = _build_link(args)
    lo, hi, step = _parse_range(args.loss_range, "--loss-range")
    losses = np.arange(lo, hi + step * 1e-9, step)
    pumps = args.pumps_mw or [link.source.pump_power]
    rows = rates.loss_shoulder_sweep(link, losses, sorted(pumps))
    lines = ["loss_db,pump_mw,skr_bps,qber,qx"]
    for loss, pump, est in rows:
        lines.append(f"{loss:.6g},{pump:.6g},{est.skr:.6g},{est.qber:.6g},{est.qx:.6g}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    link = _build_link(args)
    if args.duration_s <= 0:
        raise ValueError("--duration-s must be > 0")
    state = timetags.link_state(link)
    sat, fib = timetags.synthesize(link, state, args.duration_s, args.seed)
    suffix = "csv" if args.format == "csv" else "qtag"
    paths = {}
    for stream, tag in ((sat, "sat"), (fib, "fib")):
        path = f"{args.out_prefix}_{tag}.{suffix}"
        if args.format == "csv":
            timetags.write_tags_csv(stream, path)
        else:
            timetags.write_qtag(stream, path)
        paths[tag] = path
    sys.stdout.write(
        json.dumps(
            {
                "satellite": paths["sat"],
                "fiber": paths["fib"],
                "events_sat": len(sat),
                "events_fib": len(fib),
                "duration_s": args.duration_s,
                "seed": args.seed,
            },
            indent=2,
        )
        + "\n"
    )
    return 0


def _read_tags(path: str, party: str, duration: float | None) -> timetags.TagStream:
    if path.endswith(".csv"):
        return timetags.read_tags_csv(path, party=party, duration=duration)
    return timetags.read_qtag(path, duration=duration)


def cmd_coincidences(args: argparse.Namespace) -> int:
    sat = _read_tags(args.sat, timetags.PARTY_SATELLITE, args.duration_s)
    fib = _read_tags(args.fib, timetags.PARTY_FIBER, args.duration_s)
    if args.windows:
        lo, hi, step = _parse_range(args.windows, "--windows")
        windows_ps = np.arange(lo, hi + step * 1e-9, step)
    else:
        windows_ps = np.array([args.window_ps])
    stats = coincidence.rescan_windows(sat, fib, windows_ps * 1e-12)

    records = []
    n_valid = 0
    for st in stats:
        try:
            records.append(coincidence.stats_to_rates(st).to_json_dict())
            n_valid += 1
        except coincidence.InsufficientStatisticsError:
            rec = {
                "window_ps": st.window * 1e12,
                "cc": st.pairs_total / st.duration if st.duration > 0 else 0.0,
                "qber": None,
                "qx": None,
                "skr_bps": None,
                "heralding": st.heralding,
                "duration_s": st.duration,
            }
            records.append(rec)
    _emit(json.dumps(records, indent=2) + "\n", args.out)
    if n_valid == 0:
        sys.stderr.write("error: insufficient statistics in every window\n")
        return 1
    return 0


def cmd_overpass(args: argparse.Namespace) -> int:
    link = _build_link(args)
    if args.profile:
        profile = overpass.load_profile(args.profile, correction_db=args.correction_db)
    else:
        profile = overpass.synthetic_pass_profile(correction_db=args.correction_db)

    if args.optimize:
        pump_bounds = _parse_bounds(args.pump_bounds, "--pump-bounds")
        w_lo, w_hi = _parse_bounds(args.window_bounds_ps, "--window-bounds-ps")
        result = overpass.optimize_pass(profile, link, pump_bounds, (w_lo * 1e-12, w_hi * 1e-12))
        pumps = result.pump_mw
        windows = result.window_s
    else:
        result = overpass.integrate_pass(profile, link)
        pumps = np.full(len(profile), link.source.pump_power)
        windows = np.full(len(profile), link.channel.coincidence_window)

    payload = {
        "t_s": result.times.tolist(),
        "skr_bps": result.skr.tolist(),
        "pump_mw": pumps.tolist(),
        "window_ps": (np.asarray(windows) * 1e12).tolist(),
        "total_key_bits": result.total_key_bits,
        "peak_skr_bps": result.peak_skr,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    if args.out_csv:
        lines = ["t_s,loss_db,skr_bps,pump_mw,window_ps"]
        corrected = profile.corrected_loss_db()
        for k in range(len(profile)):
            lines.append(
                f"{result.times[k]:.6g},{corrected[k]:.6g},{result.skr[k]:.6g},"
                f"{pumps[k]:.6g},{windows[k] * 1e12:.6g}"
            )
        Path(args.out_csv).write_text("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uplink-qkd",
        description="Entanglement-based QKD emulator for a satellite up-link "
                    "with a terrestrial fibre arm.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("rates", help="Analytic rate estimate for one operating point.")
    _add_link_args(r)
    r.add_argument("--out", metavar="FILE", help="write JSON here instead of stdout")
    r.set_defaults(func=cmd_rates)

    s = sub.add_parser("shoulder", help="SKR sweep over added loss and pump power (CSV).")
    _add_link_args(s)
    s.add_argument("--loss-range", default="0:50:1", metavar="LO:HI:STEP",
                   help="added loss grid in dB (default 0:50:1)")
    s.add_argument("--pumps-mw", type=float, action="append", metavar="MW",
                   help="pump power grid point (repeatable; default: link value)")
    s.add_argument("--out", metavar="FILE")
    s.set_defaults(func=cmd_shoulder)

    m = sub.add_parser("simulate", help="Synthesize tag streams for both parties.")
    _add_link_args(m)
    m.add_argument("--duration-s", type=float, required=True)
    m.add_argument("--seed", type=int, default=1)
    m.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_sat and <prefix>_fib tag files")
    m.add_argument("--format", choices=("qtag", "csv"), default="qtag")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("coincidences", help="Coincidence statistics from tag files.")
    c.add_argument("--sat", required=True, metavar="FILE", help="satellite tag file")
    c.add_argument("--fib", required=True, metavar="FILE", help="fibre tag file")
    c.add_argument("--window-ps", type=float, default=1000.0)
    c.add_argument("--windows", metavar="LO:HI:STEP",
                   help="rescan a window grid in ps instead of a single window")
    c.add_argument("--duration-s", type=float, default=None,
                   help="acquisition time override (default: inferred from tags)")
    c.add_argument("--out", metavar="FILE")
    c.set_defaults(func=cmd_coincidences)

    o = sub.add_parser("overpass", help="Integrate (optionally optimize) a pass.")
    _add_link_args(o)
    o.add_argument("--profile", metavar="FILE",
                   help="t_s,loss_db CSV (default: synthetic 52->41 dB pass)")
    o.add_argument("--correction-db", type=float, default=0.0,
                   help="uniform dB subtracted from the profile (e.g. 3 or 8.9)")
    o.add_argument("--optimize", action="store_true",
                   help="optimize pump power and window per time step")
    o.add_argument("--pump-bounds", default="0.1:100", metavar="LO:HI",
                   help="pump search range in mW (with --optimize)")
    o.add_argument("--window-bounds-ps", default="50:2000", metavar="LO:HI",
                   help="window search range in ps (with --optimize)")
    o.add_argument("--out", metavar="FILE", help="result JSON (default stdout)")
    o.add_argument("--out-csv", metavar="FILE", help="also write per-step CSV")
    o.set_defaults(func=cmd_overpass)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
