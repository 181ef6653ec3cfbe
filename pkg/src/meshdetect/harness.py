"""Monte Carlo experiment runner.

One replicate of one configuration builds a topology, synthesises every
node's series once, runs all enabled detectors over the identical frames,
scores them, and routes their triggers through the mesh.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import detectors as D
from .mesh import MacParams, MeshNetwork, Topology, build_topology, side_for
from .metrics import (MetricsReport, RocPoint, compute_report, roc_sweep,
                      score_node)
from .signal import FRAME_PERIOD_S, NodeSignal, SignalParams, event_windows

log = logging.getLogger(__name__)

SHORT_NAMES = {"tsnfa": D.TSNFA, "lipski": D.LIPSKI, "ca": D.CA_CFAR,
               "os": D.OS_CFAR, "cusum": D.CUSUM}


def lipski_name(k: float) -> str:
    return f"{D.LIPSKI}_k{k:g}"


@dataclass
class RunConfig:
    nodes: List[int] = field(default_factory=lambda: [10])
    snr_db: List[float] = field(default_factory=lambda: [18.0, 12.0])
    duration_hr: float = 24.0
    replicates: int = 5
    seed: int = 20240917
    detectors: List[str] = field(default_factory=lambda: list(D.DETECTOR_IDS))
    roc: bool = False
    k_sweep: List[float] = field(default_factory=lambda: [3.0, 5.0, 8.0])
    out: str = "results"
    traces: bool = False
    radio_range_m: float = 200.0
    signal: SignalParams = field(default_factory=SignalParams)
    mac: MacParams = field(default_factory=MacParams)
    detector_params: Dict[str, dict] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_hr * 3600.0 / FRAME_PERIOD_S))

    @property
    def scored_hr(self) -> float:
        return (self.n_frames - self.signal.warmup_frames) * FRAME_PERIOD_S / 3600.0

    def configurations(self) -> List[Tuple[int, float]]:
        return [(n, s) for n in self.nodes for s in self.snr_db]

    def make_detectors(self) -> Dict[str, D.Detector]:
        dets = {}
        for name in self.detectors:
            dets[name] = D.make_detector(name, **self.detector_params.get(name, {}))
        if D.LIPSKI in self.detectors:
            base = dict(self.detector_params.get(D.LIPSKI, {}))
            canon = float(base.get("k", 3.0))
            for k in self.k_sweep:
                if float(k) != canon:
                    dets[lipski_name(k)] = D.Lipski(**{**base, "k": float(k)})
        return dets


# ---------------------------------------------------------------- config I/O

def _coerce(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(float(v) for v in text.split(","))
    return text


def _number_or_tuple(text: str):
    if "," in text:
        return tuple(_number_or_tuple(v) for v in text.split(","))
    v = float(text)
    return int(v) if v.is_integer() and "." not in text else v


def _parse_list(text: str, kind):
    return [kind(v.strip()) for v in text.split(",") if v.strip()]


def parse_detectors(text) -> List[str]:
    names = _parse_list(text, str) if isinstance(text, str) else list(text)
    out = []
    for n in names:
        key = n.lower()
        if key in SHORT_NAMES:
            out.append(SHORT_NAMES[key])
        elif n.upper() in D.DETECTOR_IDS:
            out.append(n.upper())
        else:
            raise ValueError(f"unknown detector {n!r}")
    return out


def apply_settings(cfg: RunConfig, items: Dict[str, str]) -> RunConfig:
    """Apply ``key = value`` settings. Dotted keys reach nested parameters:
    ``signal.<field>``, ``mac.<field>`` and ``<detector>.<argument>``."""
    sig_kw, mac_kw = {}, {}
    det_kw = {k: dict(v) for k, v in cfg.detector_params.items()}
    top = {}
    sig_defaults = {f.name: getattr(cfg.signal, f.name) for f in fields(SignalParams)}
    mac_defaults = {f.name: getattr(cfg.mac, f.name) for f in fields(MacParams)}
    for key, val in items.items():
        key = key.strip().lower()
        if key.startswith("signal."):
            name = key.split(".", 1)[1]
            if name not in sig_defaults:
                raise ValueError(f"unknown signal parameter {name!r}")
            sig_kw[name] = _coerce(val, sig_defaults[name])
        elif key.startswith("mac."):
            name = key.split(".", 1)[1]
            if name not in mac_defaults:
                raise ValueError(f"unknown mac parameter {name!r}")
            mac_kw[name] = _coerce(val, mac_defaults[name])
        elif "." in key:
            det, name = key.split(".", 1)
            det = parse_detectors(det)[0]
            det_kw.setdefault(det, {})[name] = _number_or_tuple(val)
        else:
            top[key] = val
    kw = {}
    for key, val in top.items():
        if key == "nodes":
            kw[key] = _parse_list(val, int)
        elif key in ("snr_db", "k_sweep"):
            kw[key] = _parse_list(val, float)
        elif key == "detectors":
            kw[key] = parse_detectors(val)
        elif key in ("duration_hr", "radio_range_m"):
            kw[key] = float(val)
        elif key in ("replicates", "seed"):
            kw[key] = int(val)
        elif key in ("roc", "traces"):
            kw[key] = _coerce(val, True)
        elif key == "out":
            kw[key] = val.strip()
        else:
            raise ValueError(f"unknown setting {key!r}")
    return replace(cfg, signal=replace(cfg.signal, **sig_kw), mac=replace(cfg.mac, **mac_kw),
                   detector_params=det_kw, **kw)


def load_config(path: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Read a ``key = value`` file (``#`` comments, no sections needed)."""
    with open(path) as fh:
        text = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    items = dict(cp.items("run"))
    return apply_settings(base or RunConfig(), items)


def config_lines(cfg: RunConfig) -> List[str]:
    """Every resolved parameter as ``key = value`` (loadable by :func:`load_config`)."""
    fmt = lambda v: ", ".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v) \
        if isinstance(v, (list, tuple)) else (f"{v!r}" if isinstance(v, float) else str(v))
    lines = [f"nodes = {fmt(cfg.nodes)}", f"snr_db = {fmt(cfg.snr_db)}",
             f"duration_hr = {fmt(cfg.duration_hr)}", f"replicates = {cfg.replicates}",
             f"seed = {cfg.seed}", f"detectors = {', '.join(cfg.detectors)}",
             f"roc = {cfg.roc}", f"k_sweep = {fmt(cfg.k_sweep)}", f"out = {cfg.out}",
             f"traces = {cfg.traces}", f"radio_range_m = {fmt(cfg.radio_range_m)}"]
    for f in fields(SignalParams):
        lines.append(f"signal.{f.name} = {fmt(getattr(cfg.signal, f.name))}")
    for f in fields(MacParams):
        lines.append(f"mac.{f.name} = {fmt(getattr(cfg.mac, f.name))}")
    for det, kw in sorted(cfg.detector_params.items()):
        for k, v in sorted(kw.items()):
            lines.append(f"{det.lower()}.{k} = {v!r}")
    return lines


# ------------------------------------------------------------------- running

def stream_seed(master: int, *key: int) -> np.random.SeedSequence:
    """Named sub-stream of the master seed."""
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


# sub-stream tags
_TOPO, _NODE, _MESH = 1, 2, 3


@dataclass
class ReplicateResult:
    n_nodes: int
    snr_db: float
    replicate: int
    reports: Dict[str, MetricsReport]
    topology: Topology
    deliveries: Dict[str, list]
    frame_hashes: List[str]
    roc: Dict[str, List[RocPoint]] = field(default_factory=dict)
    strengths: Optional[Dict[str, List[np.ndarray]]] = None
    windows: Optional[List[np.ndarray]] = None


def run_configuration(cfg: RunConfig, n_nodes: int, snr_db: float, replicate: int,
                      keep_traces: bool = False) -> ReplicateResult:
    """One replicate of one (network size, SNR) configuration."""
    t_start = time.time()
    topo_rng = np.random.default_rng(stream_seed(cfg.seed, _TOPO, n_nodes, replicate))
    try:
        topo = build_topology(n_nodes, side_for(n_nodes), cfg.radio_range_m, topo_rng)
    except RuntimeError as exc:
        raise RuntimeError(f"{exc} (seed {cfg.seed}, replicate {replicate})") from exc

    n_frames = cfg.n_frames
    warm = cfg.signal.warmup_frames
    names = None
    strengths: Dict[str, List[np.ndarray]] = {}
    windows, hashes = [], []
    for node in range(n_nodes):
        sig = NodeSignal(node, n_frames, snr_db, cfg.signal,
                         seed=stream_seed(cfg.seed, _NODE, n_nodes, replicate, node))
        frames = sig.frames()
        hashes.append(hashlib.sha256(frames.tobytes()).hexdigest())
        dets = cfg.make_detectors()
        names = list(dets)
        res = D.run_all(frames, dets)
        for name in names:
            strengths.setdefault(name, []).append(res[name])
        windows.append(event_windows(sig.events))
        del frames

    reports, deliveries, roc = {}, {}, {}
    for di, name in enumerate(names):
        scores = [score_node(s, w, 1.0, warm) for s, w in zip(strengths[name], windows)]
        mesh = MeshNetwork(topo, cfg.mac,
                           np.random.default_rng(stream_seed(cfg.seed, _MESH, n_nodes,
                                                             int(round(snr_db * 10)), replicate, di)))
        # all post-warmup triggers of the mesh in time order (node id breaks ties)
        trig = []
        for node, s in enumerate(strengths[name]):
            m = np.nonzero(s >= 1.0)[0]
            m = m[m >= warm]
            trig.append(np.stack([m, np.full(len(m), node)], axis=1))
        trig = np.concatenate(trig) if trig else np.zeros((0, 2), int)
        trig = trig[np.lexsort((trig[:, 1], trig[:, 0]))]
        tp_sets = [set(sc.tp_frames.tolist()) for sc in scores]
        lat = []
        for m, node in trig:
            d = mesh.send(int(node), (m + 1) * FRAME_PERIOD_S, name)
            if d.delivered and m in tp_sets[node]:
                lat.append(d.latency_s)
        reports[name] = compute_report(scores, cfg.scored_hr, n_nodes, mesh.bytes_per_node, lat)
        deliveries[name] = mesh.log
        if cfg.roc:
            roc[name] = roc_sweep(strengths[name], windows, cfg.scored_hr, warmup_frames=warm)
    log.info("n=%d snr=%g rep=%d done in %.1f s", n_nodes, snr_db, replicate, time.time() - t_start)
    return ReplicateResult(n_nodes, snr_db, replicate, reports, topo, deliveries, hashes, roc,
                           strengths if keep_traces else None, windows if keep_traces else None)


def run_experiment(cfg: RunConfig, keep_traces: bool = False, progress=None) -> List[ReplicateResult]:
    results = []
    for n_nodes, snr in cfg.configurations():
        for r in range(cfg.replicates):
            res = run_configuration(cfg, n_nodes, snr, r, keep_traces)
            results.append(res)
            if progress is not None:
                progress(res)
    return results
