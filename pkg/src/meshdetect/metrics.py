"""Scoring of trigger streams against ground truth, plus ROC re-thresholding."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .signal import FRAME_PERIOD_S

CLUSTER_WINDOW_S = 5.0
WARMUP_FRAMES = 512


@dataclass(frozen=True)
class TriggerRecord:
    node_id: int
    detector: str
    frame_index: int
    strength: float
    delivered: bool = True
    sink_arrival_s: Optional[float] = None

    @property
    def time_s(self) -> float:
        # the decision is available at the end of the frame
        return (self.frame_index + 1) * FRAME_PERIOD_S


@dataclass
class MetricsReport:
    detection_rate_pct: Optional[float]
    event_precision_pct: Optional[float]
    fp_cluster_count: int
    far_clusters_per_hr_per_node: float
    per_node_load_bytes_per_hr: float
    mean_latency_s: Optional[float]
    events_scheduled: int
    events_detected: int
    duration_hr: float
    n_nodes: int
    trigger_count: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RocPoint:
    multiplier: float
    detection_rate_pct: Optional[float]
    far_clusters_per_hr_per_node: float
    fp_cluster_count: int = 0


def classify_triggers(frame_index: np.ndarray, windows: np.ndarray):
    """Label triggers of one node.

    Parameters
    ----------
    frame_index : int array, sorted
    windows : (n, 2) array of [onset, end] for that node's events, sorted

    Returns
    -------
    is_tp : bool array per trigger
    detected : bool array per event
    """
    m = np.asarray(frame_index, dtype=np.int64)
    windows = np.asarray(windows, dtype=float).reshape(-1, 2)
    t0 = m * FRAME_PERIOD_S
    t1 = t0 + FRAME_PERIOD_S
    is_tp = np.zeros(len(m), dtype=bool)
    detected = np.zeros(len(windows), dtype=bool)
    if len(windows) == 0 or len(m) == 0:
        return is_tp, detected
    on, off = windows[:, 0], windows[:, 1]
    # events do not overlap, so only the last event starting before the frame
    # ends can overlap it
    j = np.searchsorted(on, t1, side="left") - 1
    ok = j >= 0
    is_tp[ok] = off[j[ok]] > t0[ok]
    detected[j[is_tp]] = True
    return is_tp, detected


def cluster_fp(times_s: Sequence[float], window_s: float = CLUSTER_WINDOW_S) -> int:
    """Greedy chaining: a trigger within ``window_s`` of the previous one joins its cluster."""
    t = np.asarray(times_s, dtype=float)
    if len(t) == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(t) > window_s))


@dataclass
class NodeScore:
    detected: int
    scheduled: int
    clusters: int
    triggers: int
    tp_frames: np.ndarray


def score_node(strength: np.ndarray, windows: np.ndarray, threshold: float = 1.0,
               warmup_frames: int = WARMUP_FRAMES) -> NodeScore:
    """Score one node's strength trace at a given threshold."""
    trig = np.nonzero(np.asarray(strength) >= threshold)[0]
    trig = trig[trig >= warmup_frames]
    is_tp, det = classify_triggers(trig, windows)
    fp_t = (trig[~is_tp] + 1) * FRAME_PERIOD_S
    return NodeScore(int(det.sum()), len(det), cluster_fp(fp_t), len(trig), trig[is_tp])


def precision_pct(detected: int, clusters: int) -> Optional[float]:
    if detected + clusters == 0:
        return None
    return 100.0 * detected / (detected + clusters)


def compute_report(scores: Sequence[NodeScore], duration_hr: float, n_nodes: int,
                   node_bytes: Optional[np.ndarray] = None,
                   latencies: Optional[Sequence[float]] = None) -> MetricsReport:
    """Combine per-node scores and network accounting into the headline metrics.

    ``duration_hr`` is the scored span (run length minus warmup).
    """
    det = sum(s.detected for s in scores)
    sched = sum(s.scheduled for s in scores)
    clusters = sum(s.clusters for s in scores)
    trig = sum(s.triggers for s in scores)
    dr = 100.0 * det / sched if sched else None
    load = float(np.sum(node_bytes)) / (n_nodes * duration_hr) if node_bytes is not None else 0.0
    lat = float(np.mean(latencies)) if latencies is not None and len(latencies) else None
    return MetricsReport(dr, precision_pct(det, clusters), clusters,
                         clusters / (duration_hr * n_nodes), load, lat, sched, det,
                         duration_hr, n_nodes, trig)


def roc_grid(n: int = 25, lo: float = 0.25, hi: float = 4.0) -> np.ndarray:
    """Log-spaced multipliers. With the defaults the middle point is exactly 1.0."""
    if lo == 0.25 and hi == 4.0 and n == 25:
        return 2.0 ** (np.arange(-12, 13) / 6.0)
    return np.geomspace(lo, hi, n)


def roc_sweep(strengths: Sequence[np.ndarray], windows: Sequence[np.ndarray],
              duration_hr: float, multipliers: Optional[Iterable[float]] = None,
              warmup_frames: int = WARMUP_FRAMES) -> List[RocPoint]:
    """Re-threshold recorded strength traces (one per node) at each multiplier."""
    mult = roc_grid() if multipliers is None else np.asarray(list(multipliers), dtype=float)
    n_nodes = len(strengths)
    pts = []
    for tau in mult:
        sc = [score_node(s, w, tau, warmup_frames) for s, w in zip(strengths, windows)]
        r = compute_report(sc, duration_hr, n_nodes)
        pts.append(RocPoint(float(tau), r.detection_rate_pct,
                            r.far_clusters_per_hr_per_node, r.fp_cluster_count))
    return pts


def aggregate(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, float]]:
    """Mean and sample std of every numeric field over replicates."""
    out: Dict[str, Dict[str, float]] = {}
    if not reports:
        return out
    for key in reports[0].as_dict():
        vals = [getattr(r, key) for r in reports]
        vals = [v for v in vals if v is not None]
        if not vals:
            out[key] = {"mean": float("nan"), "std": float("nan")}
            continue
        a = np.asarray(vals, dtype=float)
        out[key] = {"mean": float(a.mean()),
                    "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0}
    return out
