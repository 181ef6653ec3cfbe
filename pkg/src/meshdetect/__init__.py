"""Streaming event detectors for low-power mesh sensor nodes, with a Monte
Carlo harness that compares them on a shared synthetic signal."""

from .detectors import (CA_CFAR, CUSUM, DETECTOR_IDS, LIPSKI, OS_CFAR, TSNFA, CaCfar,
                        Cusum, DetectorOutput, Lipski, OsCfar, Tsnfa, cfar_alpha_ca, fft128,
                        make_detector)
from .mesh import MacParams, MeshNetwork, Topology, build_topology, route_hops, transmit
from .metrics import (MetricsReport, RocPoint, classify_triggers, cluster_fp, compute_report,
                      roc_sweep)
from .signal import Frame, GroundTruthEvent, NodeSignal, SignalParams, drift_power, schedule_events

__version__ = "0.1.0"
