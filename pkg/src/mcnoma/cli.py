"""Command-line front end: frame design, BER sweeps, detector comparison.

Results go to CSV (one row per SNR point and detector) with a manifest file
written next to every output, recording the resolved configuration so the
run can be reproduced exactly. CSV content is deterministic; reruns with the
same arguments are byte-identical for any --workers value.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone

from . import __version__
from .detectors import DetectorConfig
from .frames import frame_report, generate_incoherent_tight_frame, \
    write_frame_file
from .sim import SimConfig, build_frame, run_sweep

CSV_HEADER = "snr_db,trials,bit_errors,bits_total,ber,detector,m,k,mod,seed"

_DETECTOR_KINDS = {
    "ml": "ml_exhaustive",
    "gsd": "gsd",
    "gsd-stoch": "gsd_stochastic",
    "mmse": "mmse",
}


def _parse_snr(text: str) -> tuple:
    """Inclusive start:step:stop sweep, e.g. 0:4:20 or 10:5:10."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"--snr must be start:step:stop, got {text!r}")
    start, step, stop = (float(p) for p in parts)
    if step <= 0:
        raise ValueError("--snr step must be > 0")
    if stop < start:
        raise ValueError("--snr stop must be >= start")
    count = int((stop - start) / step + 1e-9) + 1
    return tuple(start + i * step for i in range(count))


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mcnoma",
        description="Overloaded-access link simulator: incoherent tight "
                    "frame design, sphere-decoder detection, BER sweeps.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="optimize and save a spreading frame")
    d.add_argument("--m", type=int, default=4, help="resources (rows)")
    d.add_argument("--k", type=int, default=8, help="users (columns)")
    d.add_argument("--seed", type=int, default=0, help="design seed")
    d.add_argument("--restarts", type=int, default=8,
                   help="independent optimizer restarts")
    d.add_argument("--iters", type=int, default=100,
                   help="clip/re-tighten iterations per restart")
    d.add_argument("--out", default=None,
                   help="frame file path (default frame_m{M}_k{K}.txt)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--m", type=int, default=4, help="resources (rows)")
    common.add_argument("--k", type=int, default=8, help="users (columns)")
    common.add_argument("--mod", default="qpsk",
                        choices=["bpsk", "qpsk", "16qam"],
                        help="constellation")
    common.add_argument("--frame", default="incoherent",
                        help="identity | random-tight | incoherent | "
                             "file:<path>")
    common.add_argument("--snr", default="0:4:20",
                        help="SNR sweep in dB, inclusive start:step:stop")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for all trial streams")
    common.add_argument("--target-errors", type=int, default=400,
                        help="stop an SNR point after this many bit errors")
    common.add_argument("--max-trials", type=int, default=10 ** 6,
                        help="hard trial cap per SNR point")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes (results identical for any "
                             "value)")
    common.add_argument("--alpha", type=float, default=1.0,
                        help="Tikhonov weight for the sphere decoder")
    common.add_argument("--radius-scale", type=float, default=1.0,
                        help="initial sphere radius inflation")
    common.add_argument("--budget", type=int, default=512,
                        help="visited-node budget per restart (gsd-stoch)")
    common.add_argument("--gsd-restarts", type=int, default=4,
                        help="random column-order restarts (gsd-stoch)")
    common.add_argument("--order-seed", type=int, default=None,
                        help="column-permutation seed (default: --seed)")
    common.add_argument("--fresh-frame", action="store_true",
                        help="redraw the frame inside every trial")
    common.add_argument("--frame-restarts", type=int, default=8,
                        help="optimizer restarts for --frame incoherent")
    common.add_argument("--frame-iters", type=int, default=100,
                        help="optimizer iterations for --frame incoherent")
    common.add_argument("--out", default="results.csv", help="CSV path")

    b = sub.add_parser("ber", parents=[common],
                       help="BER sweep for one detector")
    b.add_argument("--detector", default="gsd",
                   choices=sorted(_DETECTOR_KINDS),
                   help="detection algorithm")

    cp = sub.add_parser("compare", parents=[common],
                        help="paired BER sweep over several detectors")
    cp.add_argument("--detectors", default="gsd,mmse",
                    help="comma-separated list (at least two), e.g. ml,gsd")
    return p


def _detector_config(args, name: str) -> DetectorConfig:
    if name not in _DETECTOR_KINDS:
        raise ValueError(f"unknown detector {name!r}, "
                         f"have {sorted(_DETECTOR_KINDS)}")
    order_seed = args.seed if args.order_seed is None else args.order_seed
    return DetectorConfig(
        kind=_DETECTOR_KINDS[name],
        alpha=args.alpha,
        initial_radius_scale=args.radius_scale,
        max_visited_nodes=args.budget,
        restarts=args.gsd_restarts,
        column_order_seed=order_seed,
    )


def _sim_config(args, detector_name: str) -> SimConfig:
    cfg = SimConfig(
        m=args.m,
        k=args.k,
        mod=args.mod,
        frame=args.frame,
        detector=_detector_config(args, detector_name),
        snr_db=_parse_snr(args.snr),
        target_bit_errors=args.target_errors,
        max_trials=args.max_trials,
        master_seed=args.seed,
        fresh_frame_per_trial=args.fresh_frame,
        frame_restarts=args.frame_restarts,
        frame_iters=args.frame_iters,
    )
    if cfg.frame.startswith("file:"):
        build_frame(cfg)  # surface missing/mismatched files as usage errors
    return cfg


def _csv_rows(curve, detector_name: str) -> list[str]:
    cfg = curve.config
    rows = []
    for pt in curve.points:
        rows.append(",".join([
            _g17(pt.snr_db), str(pt.trials), str(pt.bit_errors),
            str(pt.bits_total), _g17(pt.ber), detector_name,
            str(cfg.m), str(cfg.k), cfg.mod, str(cfg.master_seed),
        ]))
    return rows


def _write_csv(path: str, rows: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write("\n".join(rows) + "\n")


def _write_manifest(path: str, entries: list[tuple[str, str]]) -> None:
    with open(path + ".manifest.txt", "w") as fh:
        for key, val in entries:
            fh.write(f"{key}={val}\n")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _common_manifest(args, command: str) -> list[tuple[str, str]]:
    return [
        ("tool", "mcnoma"),
        ("tool_version", __version__),
        ("command", command),
        ("m", str(args.m)),
        ("k", str(args.k)),
        ("mod", args.mod),
        ("frame", args.frame),
        ("snr", args.snr),
        ("seed", str(args.seed)),
        ("target_errors", str(args.target_errors)),
        ("max_trials", str(args.max_trials)),
        ("workers", str(args.workers)),
        ("alpha", _g17(args.alpha)),
        ("radius_scale", _g17(args.radius_scale)),
        ("budget", str(args.budget)),
        ("gsd_restarts", str(args.gsd_restarts)),
        ("order_seed", str(args.seed if args.order_seed is None
                           else args.order_seed)),
        ("fresh_frame", str(args.fresh_frame)),
        ("out", args.out),
    ]


def cmd_design(args) -> int:
    try:
        if args.m < 1 or args.k < args.m:
            raise ValueError(f"need 1 <= m <= k, got m={args.m} k={args.k}")
        if args.restarts < 1 or args.iters < 0:
            raise ValueError("--restarts >= 1 and --iters >= 0 required")
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = args.out or f"frame_m{args.m}_k{args.k}.txt"
    started = _utcnow()
    try:
        frame, report = generate_incoherent_tight_frame(
            args.m, args.k, args.seed, args.restarts, args.iters)
        write_frame_file(frame, out)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"frame {args.m}x{args.k} written to {out}")
    print(f"coherence {report.coherence:.8f}")
    print(f"welch_bound {report.welch_bound:.8f}")
    print(f"tightness_residual {report.tightness_residual:.3e}")
    print(f"frame_potential {report.frame_potential:.8f}")
    _write_manifest(out, [
        ("tool", "mcnoma"),
        ("tool_version", __version__),
        ("command", "design"),
        ("m", str(args.m)),
        ("k", str(args.k)),
        ("seed", str(args.seed)),
        ("restarts", str(args.restarts)),
        ("iters", str(args.iters)),
        ("out", out),
        ("coherence", _g17(report.coherence)),
        ("welch_bound", _g17(report.welch_bound)),
        ("tightness_residual", _g17(report.tightness_residual)),
        ("started_utc", started),
        ("finished_utc", _utcnow()),
    ])
    return 0


def cmd_ber(args) -> int:
    started = _utcnow()
    try:
        cfg = _sim_config(args, args.detector)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        curve = run_sweep(cfg, workers=args.workers)
        _write_csv(args.out, _csv_rows(curve, args.detector))
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    _write_manifest(args.out, _common_manifest(args, "ber")
                    + [("detector", args.detector),
                       ("started_utc", started),
                       ("finished_utc", _utcnow())])
    print(f"wrote {len(curve.points)} rows to {args.out}")
    return 0


def cmd_compare(args) -> int:
    started = _utcnow()
    try:
        names = [n.strip() for n in args.detectors.split(",") if n.strip()]
        if len(names) < 2:
            raise ValueError("--detectors needs at least two entries")
        configs = [(n, _sim_config(args, n)) for n in names]
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        rows = []
        for name, cfg in configs:
            # same master seed everywhere: detectors see identical trials
            curve = run_sweep(cfg, workers=args.workers)
            rows.extend(_csv_rows(curve, name))
        _write_csv(args.out, rows)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    _write_manifest(args.out, _common_manifest(args, "compare")
                    + [("detectors", ",".join(names)),
                       ("started_utc", started),
                       ("finished_utc", _utcnow())])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "design":
        return cmd_design(args)
    if args.command == "ber":
        return cmd_ber(args)
    return cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
