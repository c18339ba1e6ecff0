"""Command line entry point.

    leoedge validate CONFIG [--allow-overprovision]
    leoedge run CONFIG [--realtime | --fast] [--trace-dir DIR] [--seed-epoch S]
    leoedge inspect CONFIG SRC DST [--epoch T] [--seed-epoch S]
    leoedge export TRACE_DIR [--format csv|jsonl] [--out FILE]

Exit codes: 0 success, 1 invalid input or failure, 2 insufficient host
resources (``validate`` only).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .bbox import estimate_peak_resources
from .config import load_config
from .coordinator import assign_machines, compute_snapshot
from .errors import AssignmentError, ConfigError, EmulationError
from .naming import parse_node
from .netgraph import dijkstra

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INSUFFICIENT = 2

EXPORT_FIELDS = [
    "epoch_s", "kind", "shell", "id", "name", "lat_deg", "lon_deg", "alt_m", "active",
    "a", "b", "latency_us", "bandwidth_kbps", "blocked",
]


def _load(path, out):
    try:
        return load_config(path)
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=out)
    except ConfigError as e:
        print(f"invalid configuration {path}:", file=out)
        for msg in e.errors:
            print(f"  - {msg}", file=out)
    return None


def cmd_validate(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _load(args.config, out)
    if cfg is None:
        return EXIT_INVALID
    con = cfg.constellation
    print(f"configuration ok: {con.n_sats} satellites in {len(cfg.shells)} shell(s), "
          f"{len(cfg.gsts)} ground station(s), {cfg.epochs} epochs", file=out)
    est = estimate_peak_resources(cfg)
    print(f"estimate: peak {est.peak_active_machines} active machines, "
          f"{est.required_vcpus} vcpus, {est.required_memory_mb} MB "
          f"(safety factor {est.safety_factor:g}, {est.samples} samples)", file=out)
    if not cfg.hosts:
        print("no [[host]] declared; runs use a single local host", file=out)
        return EXIT_OK
    cpu = sum(h.vcpus for h in cfg.hosts)
    mem = sum(h.memory_mb for h in cfg.hosts)
    print(f"hosts: {len(cfg.hosts)} with {cpu} vcpus, {mem} MB", file=out)

    short = []
    if est.required_vcpus > cpu:
        short.append(f"vcpus: need {est.required_vcpus}, have {cpu}")
    if est.required_memory_mb > mem:
        short.append(f"memory: need {est.required_memory_mb} MB, have {mem} MB")
    try:
        assign_machines(cfg, allow_overprovision=args.allow_overprovision)
    except AssignmentError as e:
        short.append(str(e))
    if short and not args.allow_overprovision:
        print("insufficient resources:", file=out)
        for msg in short:
            print(f"  - {msg}", file=out)
        return EXIT_INSUFFICIENT
    for msg in short:
        print(f"over-provisioned: {msg}", file=out)
    return EXIT_OK


def cmd_run(args, out=None) -> int:
    out = out or sys.stdout
    from .runtime import Testbed

    cfg = _load(args.config, out)
    if cfg is None:
        return EXIT_INVALID
    try:
        bed = Testbed(cfg, clock_offset=args.seed_epoch, trace_dir=args.trace_dir)
        report = bed.run(realtime=args.realtime)
    except EmulationError as e:
        print(f"error: {e}", file=out)
        return EXIT_INVALID
    print(f"ran {report.epochs} epochs in {report.wall_time_s:.2f}s, "
          f"peak {report.peak_active_machines} active machines", file=out)
    if args.trace_dir:
        print(f"trace written to {args.trace_dir}", file=out)
    return EXIT_OK


def cmd_inspect(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _load(args.config, out)
    if cfg is None:
        return EXIT_INVALID
    con = cfg.constellation
    try:
        src = parse_node(args.src, con)
        dst = parse_node(args.dst, con)
    except (ValueError, EmulationError) as e:
        print(f"error: {e}", file=out)
        return EXIT_INVALID
    snap = compute_snapshot(cfg, args.epoch, args.seed_epoch)
    path = dijkstra(snap, src, dst)
    print(f"epoch {args.epoch:g}s {src.render()} -> {dst.render()}", file=out)
    if not path.reachable:
        print("unreachable", file=out)
        return EXIT_OK
    print("hops: " + " ".join(h.render() for h in path.hops), file=out)
    print(f"latency_us: {path.latency_us}", file=out)
    bw = "-" if path.bandwidth_kbps is None else f"{path.bandwidth_kbps}"
    print(f"bandwidth_kbps: {bw}", file=out)
    return EXIT_OK


def export_records(trace_dir: Path):
    """Yield one flat record per (epoch, node) and per (epoch, link)."""
    files = sorted((trace_dir / "snapshots").glob("epoch-*.json")) if (trace_dir / "snapshots").is_dir() else []
    if not files:
        raise FileNotFoundError(f"no snapshot files under {trace_dir}")
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        e = doc["epoch_s"]
        for n in doc["nodes"]:
            yield {
                "epoch_s": e, "kind": n["kind"], "shell": n["shell"], "id": n["id"], "name": n["name"],
                "lat_deg": n["lat_deg"], "lon_deg": n["lon_deg"], "alt_m": n["alt_m"], "active": n["active"],
            }
        for l in doc["links"]:
            yield {
                "epoch_s": e, "kind": "link", "a": l["a"], "b": l["b"], "latency_us": l["latency_us"],
                "bandwidth_kbps": l["bandwidth_kbps"], "blocked": l["blocked"],
            }


def cmd_export(args, out=None) -> int:
    out = out or sys.stdout
    trace = Path(args.trace_dir)
    dest = Path(args.out) if args.out else trace / f"export.{args.format}"
    try:
        records = list(export_records(trace))
    except FileNotFoundError as e:
        print(f"error: {e}", file=out)
        return EXIT_INVALID
    buf = io.StringIO(newline="")
    if args.format == "jsonl":
        for r in records:
            buf.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")
    else:
        w = csv.DictWriter(buf, fieldnames=EXPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(records)
    dest.write_text(buf.getvalue(), encoding="utf-8", newline="")
    print(f"wrote {len(records)} records to {dest}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leoedge", description="LEO edge constellation emulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a configuration and its resource demand")
    v.add_argument("config")
    v.add_argument("--allow-overprovision", action="store_true")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run the epoch loop with trace backends")
    r.add_argument("config")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--realtime", action="store_true", help="pace epochs to the wall clock")
    mode.add_argument("--fast", action="store_true", help="run as fast as possible (default)")
    r.add_argument("--trace-dir")
    r.add_argument("--seed-epoch", type=float, default=0.0, help="constellation phase at t=0, seconds")
    r.set_defaults(func=cmd_run)

    i = sub.add_parser("inspect", help="print the shortest path between two nodes")
    i.add_argument("config")
    i.add_argument("src")
    i.add_argument("dst")
    i.add_argument("--epoch", type=float, default=0.0)
    i.add_argument("--seed-epoch", type=float, default=0.0)
    i.set_defaults(func=cmd_inspect)

    e = sub.add_parser("export", help="flatten snapshot files for plotting")
    e.add_argument("trace_dir")
    e.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
