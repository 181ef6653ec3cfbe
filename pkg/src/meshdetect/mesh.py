"""Unit-disk mesh topology and a light CSMA/CA delivery model."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass
class Topology:
    """Sensor positions plus a sink. The sink has index ``n_nodes`` in ``adjacency``."""

    positions: np.ndarray
    sink: np.ndarray
    range_m: float
    adjacency: np.ndarray
    hops: np.ndarray
    next_hop: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def sink_id(self) -> int:
        return self.n_nodes

    def path(self, origin: int) -> List[int]:
        """Transmitting nodes from origin towards the sink (sink excluded)."""
        if not np.isfinite(self.hops[origin]):
            raise ValueError(f"node {origin} has no route to the sink")
        p = []
        v = origin
        while v != self.sink_id:
            p.append(v)
            v = int(self.next_hop[v])
        return p

    def two_hop(self, node: int) -> np.ndarray:
        """Sensor nodes within two radio hops of ``node`` (itself included)."""
        a = self.adjacency[: self.n_nodes, : self.n_nodes]
        one = a[node] | (np.arange(self.n_nodes) == node)
        two = one | a[one].any(axis=0)
        return np.nonzero(two)[0]


@dataclass(frozen=True)
class MacParams:
    cw_min: int = 8
    cw_max: int = 64
    slot_s: float = 320e-6
    max_retries: int = 4
    phy_bitrate_bps: float = 250_000.0
    payload_bytes: int = 24
    header_bytes: int = 8
    max_collision_prob: float = 0.3

    @property
    def message_bytes(self) -> int:
        return self.payload_bytes + self.header_bytes

    @property
    def tx_time_s(self) -> float:
        return self.message_bytes * 8 / self.phy_bitrate_bps

    def contention_windows(self) -> List[int]:
        """CW used on each attempt: initial try plus every retry."""
        cws, cw = [], self.cw_min
        for _ in range(self.max_retries + 1):
            cws.append(cw)
            cw = min(2 * cw, self.cw_max)
        return cws


@dataclass
class DeliveryResult:
    delivered: bool
    latency_s: float
    bytes_tx_per_node: Dict[int, int] = field(default_factory=dict)

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_tx_per_node.values())


def adjacency_matrix(points: np.ndarray, range_m: float) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    a = d <= range_m
    np.fill_diagonal(a, False)
    return a


def route_hops(adjacency: np.ndarray, sink: int):
    """Breadth-first hop counts to ``sink`` and next hops.

    Neighbours are visited in id order, so among equally short routes the
    lowest-id next hop wins. Unreachable nodes get ``inf`` hops and -1.
    """
    n = len(adjacency)
    hops = np.full(n, np.inf)
    nxt = np.full(n, -1, dtype=int)
    hops[sink] = 0
    q = deque([sink])
    while q:
        u = q.popleft()
        for v in np.nonzero(adjacency[u])[0]:
            if not np.isfinite(hops[v]):
                hops[v] = hops[u] + 1
                q.append(v)
    for v in range(n):
        if v == sink or not np.isfinite(hops[v]):
            continue
        nb = np.nonzero(adjacency[v])[0]
        nxt[v] = int(nb[hops[nb] == hops[v] - 1].min())
    return hops, nxt


def topology_from_positions(positions, sink, range_m: float) -> Topology:
    positions = np.asarray(positions, dtype=float)
    sink = np.asarray(sink, dtype=float)
    pts = np.vstack([positions, sink[None, :]])
    adj = adjacency_matrix(pts, range_m)
    hops, nxt = route_hops(adj, len(positions))
    return Topology(positions, sink, range_m, adj, hops[:-1], nxt[:-1])


def build_topology(n_nodes: int, side_m: float, range_m: float,
                   rng: np.random.Generator, max_attempts: int = 1000) -> Topology:
    """Uniform random placement in a square with the sink at its centre.

    Placement is redrawn until every node reaches the sink.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    sink = np.array([side_m / 2, side_m / 2])
    for _ in range(max_attempts):
        pos = rng.uniform(0, side_m, size=(n_nodes, 2))
        topo = topology_from_positions(pos, sink, range_m)
        if np.all(np.isfinite(topo.hops)):
            return topo
    raise RuntimeError(f"no connected placement of {n_nodes} nodes in {side_m} m "
                       f"with range {range_m} m after {max_attempts} attempts")


def side_for(n_nodes: int) -> float:
    """Deployment square side used for the two studied network sizes."""
    return {10: 350.0, 50: 750.0}.get(n_nodes, 350.0 * np.sqrt(n_nodes / 10))


def transmit(origin: int, topology: Topology, mac: MacParams,
             rng: np.random.Generator, p_collision: float = 0.0) -> DeliveryResult:
    """Send one message hop by hop to the sink.

    Every attempt costs a uniform backoff in [0, CW) slots plus the air time
    and is charged to the transmitter. A hop fails with ``p_collision`` per
    attempt; after the last retry the message is dropped.
    """
    latency = 0.0
    ledger: Dict[int, int] = {}
    cws = mac.contention_windows()
    for node in topology.path(origin):
        ok = False
        for cw in cws:
            latency += rng.integers(0, cw) * mac.slot_s + mac.tx_time_s
            ledger[node] = ledger.get(node, 0) + mac.message_bytes
            if rng.random() >= p_collision:
                ok = True
                break
        if not ok:
            return DeliveryResult(False, latency, ledger)
    return DeliveryResult(True, latency, ledger)


@dataclass
class Delivery:
    time_s: float
    origin: int
    detector: str
    delivered: bool
    latency_s: float
    bytes: int


class MeshNetwork:
    """Routes trigger messages and keeps per-node byte ledgers.

    Contention is summarised per emission: the collision probability is the
    busy fraction of the origin's two-hop neighbourhood, capped at
    ``mac.max_collision_prob``. A node is busy while a message it transmits
    is in flight.
    """

    def __init__(self, topology: Topology, mac: MacParams, rng: np.random.Generator):
        self.topology = topology
        self.mac = mac
        self.rng = rng
        self.bytes_per_node = np.zeros(topology.n_nodes, dtype=np.int64)
        self.busy_until = np.full(topology.n_nodes, -np.inf)
        self.log: List[Delivery] = []
        self._hood = [topology.two_hop(i) for i in range(topology.n_nodes)]

    def send(self, origin: int, time_s: float, detector: str = "") -> Delivery:
        hood = self._hood[origin]
        rho = float(np.mean(self.busy_until[hood] > time_s))
        p_c = min(self.mac.max_collision_prob, rho)
        res = transmit(origin, self.topology, self.mac, self.rng, p_c)
        for node, b in res.bytes_tx_per_node.items():
            self.bytes_per_node[node] += b
            self.busy_until[node] = max(self.busy_until[node], time_s + res.latency_s)
        d = Delivery(time_s, origin, detector, res.delivered, res.latency_s, res.total_bytes)
        self.log.append(d)
        return d
