"""CSV emission for experiment results."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from . import detectors as D
from .harness import ReplicateResult, RunConfig, config_lines, lipski_name
from .metrics import aggregate

REPORT_FIELDS = ["detection_rate_pct", "event_precision_pct", "fp_cluster_count",
                 "far_clusters_per_hr_per_node", "per_node_load_bytes_per_hr",
                 "mean_latency_s", "events_scheduled", "events_detected",
                 "trigger_count", "duration_hr", "n_nodes"]


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{float(v):.6g}"
    return v


def group_aggregates(results: Sequence[ReplicateResult]):
    """{(n_nodes, snr, detector): {field: {mean, std}}}."""
    by = defaultdict(list)
    for res in results:
        for det, rep in res.reports.items():
            by[(res.n_nodes, res.snr_db, det)].append(rep)
    return {k: aggregate(v) for k, v in by.items()}


def _mean(agg, key, field):
    a = agg.get(key)
    return None if a is None else a[field]["mean"]


def emit_outputs(results: Sequence[ReplicateResult], cfg: RunConfig, out_dir: str = None) -> List[str]:
    """Write every table for a finished run; returns the file paths."""
    out = out_dir or cfg.out
    os.makedirs(out, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out, name)
        written.append(p)
        return p

    dets = list(results[0].reports) if results else []
    agg = group_aggregates(results)
    configs = sorted({(r.n_nodes, r.snr_db) for r in results}, key=lambda c: (c[0], -c[1]))

    # per replicate
    _write(path("reports.csv"), ["n_nodes", "snr_db", "replicate", "detector"] + REPORT_FIELDS[:-1],
           [[r.n_nodes, r.snr_db, r.replicate, d] + [getattr(rep, f) for f in REPORT_FIELDS[:-1]]
            for r in results for d, rep in r.reports.items()])

    # mean and std, long form
    _write(path("aggregate.csv"), ["n_nodes", "snr_db", "detector", "metric", "mean", "std"],
           [[n, s, d, f, a[f]["mean"], a[f]["std"]]
            for (n, s, d), a in sorted(agg.items()) for f in REPORT_FIELDS[:-1]])

    # headline table: canonical detectors only
    head = ["n_nodes", "snr_db", "detector", "dr_pct", "dr_std", "precision_pct", "precision_std",
            "far_per_hr_node", "far_std", "fp_clusters", "load_B_per_hr", "latency_ms"]
    rows = []
    for n, s in configs:
        for d in dets:
            if d not in D.DETECTOR_IDS:
                continue
            a = agg[(n, s, d)]
            lat = a["mean_latency_s"]["mean"]
            rows.append([n, s, d, a["detection_rate_pct"]["mean"], a["detection_rate_pct"]["std"],
                         a["event_precision_pct"]["mean"], a["event_precision_pct"]["std"],
                         a["far_clusters_per_hr_per_node"]["mean"],
                         a["far_clusters_per_hr_per_node"]["std"],
                         a["fp_cluster_count"]["mean"], a["per_node_load_bytes_per_hr"]["mean"],
                         lat * 1e3 if lat == lat else None])
    _write(path("headline.csv"), head, rows)

    # bandwidth
    rows = []
    for n, s in configs:
        ref = _mean(agg, (n, s, D.TSNFA), "per_node_load_bytes_per_hr")
        for d in dets:
            if d not in D.DETECTOR_IDS:
                continue
            per = _mean(agg, (n, s, d), "per_node_load_bytes_per_hr")
            ratio = per / ref if ref else None
            rows.append([n, s, d, per, per * n / 1e6, ratio])
    _write(path("bandwidth.csv"),
           ["n_nodes", "snr_db", "detector", "per_node_B_per_hr", "total_MB_per_hr", "ratio_vs_tsnfa"],
           rows)

    # SNR drop
    snrs = sorted({s for _, s in configs})
    if len(snrs) >= 2:
        hi, lo = max(snrs), min(snrs)
        rows = []
        for n in sorted({n for n, _ in configs}):
            for d in dets:
                if d not in D.DETECTOR_IDS:
                    continue
                a, b = _mean(agg, (n, hi, d), "detection_rate_pct"), _mean(agg, (n, lo, d), "detection_rate_pct")
                if a is not None and b is not None:
                    rows.append([n, d, a, b, a - b])
        _write(path("snr_drop.csv"),
               ["n_nodes", "detector", f"dr_{hi:g}db", f"dr_{lo:g}db", "drop_pp"], rows)

    # scaling between the smallest and largest network
    sizes = sorted({n for n, _ in configs})
    if len(sizes) >= 2:
        small, big = sizes[0], sizes[-1]
        metrics = [("per_node_load_bytes_per_hr", "load_B_per_hr"), ("mean_latency_s", "latency_s"),
                   ("detection_rate_pct", "dr_pct"), ("event_precision_pct", "precision_pct")]
        rows = []
        for s in snrs:
            for d in dets:
                if d not in D.DETECTOR_IDS:
                    continue
                for f, label in metrics:
                    a, b = _mean(agg, (small, s, d), f), _mean(agg, (big, s, d), f)
                    if a is None or b is None:
                        continue
                    rows.append([s, d, label, a, b, b / a if a else None])
        _write(path("scaling.csv"),
               ["snr_db", "detector", "metric", f"value_{small}n", f"value_{big}n", "ratio"], rows)

    # Lipski k sweep with the TSNFA reference row
    if D.LIPSKI in dets:
        canon = float(cfg.detector_params.get(D.LIPSKI, {}).get("k", 3.0))
        rows = []
        for n, s in configs:
            for k in sorted(set(cfg.k_sweep) | {canon}):
                name = D.LIPSKI if k == canon else lipski_name(k)
                if (n, s, name) not in agg:
                    continue
                a = agg[(n, s, name)]
                rows.append([n, s, "LIPSKI", k] + [a[f]["mean"] for f in
                            ("detection_rate_pct", "event_precision_pct",
                             "far_clusters_per_hr_per_node", "fp_cluster_count",
                             "per_node_load_bytes_per_hr")])
            if (n, s, D.TSNFA) in agg:
                a = agg[(n, s, D.TSNFA)]
                zeta = cfg.detector_params.get(D.TSNFA, {}).get("zeta", 6.0)
                rows.append([n, s, "TSNFA", zeta] + [a[f]["mean"] for f in
                            ("detection_rate_pct", "event_precision_pct",
                             "far_clusters_per_hr_per_node", "fp_cluster_count",
                             "per_node_load_bytes_per_hr")])
        _write(path("k_sweep.csv"), ["n_nodes", "snr_db", "detector", "threshold", "dr_pct",
                                     "precision_pct", "far_per_hr_node", "fp_clusters",
                                     "load_B_per_hr"], rows)

    # ROC, averaged over replicates
    if any(r.roc for r in results):
        acc = defaultdict(list)
        for r in results:
            for d, pts in r.roc.items():
                for p in pts:
                    acc[(r.n_nodes, r.snr_db, d, p.multiplier)].append(p)
        rows = []
        for (n, s, d, tau), pts in sorted(acc.items()):
            drs = [p.detection_rate_pct for p in pts if p.detection_rate_pct is not None]
            rows.append([d, n, s, tau, np.mean(drs) if drs else None,
                         np.mean([p.far_clusters_per_hr_per_node for p in pts])])
        _write(path("roc.csv"), ["detector", "n_nodes", "snr_db", "multiplier", "dr_pct",
                                 "far_per_hr_node"], rows)

    # topologies and delivery logs
    for r in results:
        t = r.topology
        _write(path(f"topology_n{r.n_nodes}_r{r.replicate}.csv"), ["node_id", "x", "y", "hops"],
               [[i, t.positions[i, 0], t.positions[i, 1], int(t.hops[i])] for i in range(t.n_nodes)]
               + [["sink", t.sink[0], t.sink[1], 0]])
        _write(path(f"deliveries_n{r.n_nodes}_snr{r.snr_db:g}_r{r.replicate}.csv"),
               ["time_s", "origin", "detector", "delivered", "latency_s", "bytes"],
               [[d.time_s, d.origin, d.detector, int(d.delivered), d.latency_s, d.bytes]
                for log in r.deliveries.values() for d in log])
        if r.strengths is not None:
            write_traces(path(f"traces_n{r.n_nodes}_snr{r.snr_db:g}_r{r.replicate}.csv"), r.strengths)

    with open(path("config_echo.txt"), "w") as fh:
        fh.write("\n".join(config_lines(cfg)) + "\n")
        for r in results:
            fh.write(f"# frames n={r.n_nodes} snr={r.snr_db:g} rep={r.replicate} "
                     f"sha256={','.join(h[:16] for h in r.frame_hashes)}\n")
    return written


def write_traces(path: str, strengths: Dict[str, List[np.ndarray]]):
    """Per-frame conformance dump: node_id, frame_index, detector, strength, trigger."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "frame_index", "detector", "strength", "trigger"])
        for det, per_node in strengths.items():
            for node, s in enumerate(per_node):
                for m, v in enumerate(s):
                    w.writerow([node, m, det, repr(float(v)), int(v >= 1.0)])
