"""Command-line entry point.

    meshdetect run --config run.cfg [--nodes 10] [--snr-db 12] [--roc] ...
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .harness import RunConfig, apply_settings, load_config, parse_detectors, run_experiment
from .outputs import emit_outputs

log = logging.getLogger("meshdetect")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshdetect",
                                description="Monte Carlo comparison of streaming event detectors")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment and write CSV tables")
    r.add_argument("--config", help="key = value configuration file")
    r.add_argument("--nodes", help="network size(s), e.g. 10 or 10,50")
    r.add_argument("--snr-db", help="nominal SNR(s), e.g. 12 or 18,12")
    r.add_argument("--duration-hr", type=float)
    r.add_argument("--replicates", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--detectors", help="comma list from tsnfa,lipski,ca,os,cusum")
    r.add_argument("--roc", action="store_true", help="record strengths and sweep thresholds")
    r.add_argument("--k-sweep", help="Lipski k values, e.g. 3,5,8")
    r.add_argument("--traces", action="store_true", help="dump per-frame strength traces")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any config key, e.g. signal.strong_burst_rate_per_hr=30")
    r.add_argument("--out", help="output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    items = {}
    for kv in args.set:
        if "=" not in kv:
            raise ValueError(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        items[k.strip()] = v.strip()
    flag_map = {"nodes": args.nodes, "snr_db": args.snr_db, "duration_hr": args.duration_hr,
                "replicates": args.replicates, "seed": args.seed, "detectors": args.detectors,
                "k_sweep": args.k_sweep, "out": args.out}
    for k, v in flag_map.items():
        if v is not None:
            items[k] = str(v)
    if args.roc:
        items["roc"] = "true"
    if args.traces:
        items["traces"] = "true"
    cfg = apply_settings(cfg, items)
    for n in cfg.nodes:
        if n < 2:
            raise ValueError("networks need at least two nodes")
    if cfg.replicates < 1 or cfg.duration_hr <= 0:
        raise ValueError("replicates and duration must be positive")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError) as exc:
        print(f"meshdetect: configuration error: {exc}", file=sys.stderr)
        return 2
    if cfg.n_frames <= cfg.signal.warmup_frames:
        print("meshdetect: run is shorter than the warmup window", file=sys.stderr)
        return 2
    t0 = time.time()

    def progress(res):
        log.info("n=%d snr=%g replicate %d finished", res.n_nodes, res.snr_db, res.replicate)

    try:
        results = run_experiment(cfg, keep_traces=cfg.traces, progress=progress)
        files = emit_outputs(results, cfg)
    except (RuntimeError, OSError) as exc:
        print(f"meshdetect: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(files)} files to {cfg.out} in {time.time() - t0:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
