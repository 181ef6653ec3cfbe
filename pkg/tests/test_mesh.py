import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshdetect.mesh import (MacParams, MeshNetwork, adjacency_matrix, build_topology,
                             route_hops, side_for, topology_from_positions, transmit)


class ZeroBackoff:
    """Generator stand-in: minimal backoff, never collides."""

    def integers(self, lo, hi):
        return lo

    def random(self):
        return 0.99


def chain(n=3, gap=150.0):
    pos = np.array([[gap * (i + 1), 0.0] for i in range(n)])
    return topology_from_positions(pos, [0.0, 0.0], 200.0)


def test_unit_disk_boundary():
    pts = np.array([[0, 0], [150, 0], [400, 0], [400, 250]], dtype=float)
    a = adjacency_matrix(pts, 200.0)
    assert a[0, 1] and a[1, 0]
    assert not a[0, 2] and not a[2, 3]
    assert not a.diagonal().any()
    assert (a == a.T).all()


def test_chain_hops_and_paths():
    t = chain()
    np.testing.assert_array_equal(t.hops, [1, 2, 3])
    assert t.path(2) == [2, 1, 0]
    assert t.path(0) == [0]


def test_lowest_id_next_hop_wins():
    pos = np.array([[100.0, 50], [100.0, -50], [250.0, 0]])
    t = topology_from_positions(pos, [0.0, 0.0], 200.0)
    assert t.hops[2] == 2
    assert t.next_hop[2] == 0


def test_unreachable_node():
    t = topology_from_positions(np.array([[100.0, 0], [900.0, 0]]), [0.0, 0.0], 200.0)
    assert np.isinf(t.hops[1])
    with pytest.raises(ValueError):
        t.path(1)


def test_route_hops_from_bfs():
    a = np.zeros((4, 4), bool)
    for i, j in ((0, 1), (1, 2), (2, 3)):
        a[i, j] = a[j, i] = True
    hops, nxt = route_hops(a, 0)
    np.testing.assert_array_equal(hops, [0, 1, 2, 3])
    np.testing.assert_array_equal(nxt[1:], [0, 1, 2])


@pytest.mark.parametrize("n", [10, 50])
def test_random_topology_connected(n):
    t = build_topology(n, side_for(n), 200.0, np.random.default_rng(n))
    assert np.all(np.isfinite(t.hops)) and np.all(t.hops >= 1)
    np.testing.assert_allclose(t.sink, [side_for(n) / 2] * 2)
    for v in range(n):
        assert len(t.path(v)) == t.hops[v]


def test_larger_network_has_longer_routes():
    rng = np.random.default_rng(5)
    h10 = np.mean([build_topology(10, 350, 200, rng).hops.mean() for _ in range(100)])
    h50 = np.mean([build_topology(50, 750, 200, rng).hops.mean() for _ in range(100)])
    assert h50 > h10


def test_topology_failure_is_reported():
    with pytest.raises(RuntimeError):
        build_topology(10, 1e5, 200.0, np.random.default_rng(0), max_attempts=5)


def test_mac_constants():
    mac = MacParams()
    assert mac.contention_windows() == [8, 16, 32, 64, 64]
    assert mac.tx_time_s == pytest.approx(1.024e-3)
    assert mac.message_bytes == 32


def test_one_hop_latency_is_airtime():
    res = transmit(0, chain(), MacParams(), ZeroBackoff())
    assert res.delivered
    assert res.latency_s == pytest.approx(1.024e-3)
    assert res.bytes_tx_per_node == {0: 32}


def test_three_hop_bytes_and_latency():
    res = transmit(2, chain(), MacParams(), ZeroBackoff())
    assert res.latency_s == pytest.approx(3 * 1.024e-3)
    assert res.bytes_tx_per_node == {2: 32, 1: 32, 0: 32}


def test_always_colliding_hop_drops_after_retries():
    rng = np.random.default_rng(0)
    res = transmit(0, chain(), MacParams(), rng, p_collision=1.0)
    assert not res.delivered
    assert res.bytes_tx_per_node == {0: 5 * 32}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.3))
def test_delivery_accounting(seed, pc):
    t = chain(4)
    mac = MacParams()
    rng = np.random.default_rng(seed)
    res = transmit(3, t, mac, rng, pc)
    # every attempt costs at least the air time and at most CW-1 slots more
    attempts = res.total_bytes // 32
    assert res.total_bytes % 32 == 0
    assert res.latency_s >= attempts * mac.tx_time_s - 1e-12
    assert res.latency_s <= attempts * (mac.tx_time_s + 63 * mac.slot_s) + 1e-12
    if res.delivered:
        assert set(res.bytes_tx_per_node) == {0, 1, 2, 3}


def test_network_ledger_conservation():
    t = build_topology(10, 350, 200, np.random.default_rng(1))
    net = MeshNetwork(t, MacParams(), np.random.default_rng(2))
    rng = np.random.default_rng(3)
    times = np.sort(rng.uniform(0, 3600, 500))
    for tm in times:
        net.send(int(rng.integers(0, 10)), float(tm))
    assert net.bytes_per_node.sum() == sum(d.bytes for d in net.log)
    assert all(d.bytes >= 32 * t.hops[d.origin] or not d.delivered for d in net.log)


def test_simultaneous_sends_see_contention():
    t = chain(3)
    net = MeshNetwork(t, MacParams(), np.random.default_rng(0))
    net.send(2, 10.0)
    assert np.all(net.busy_until[[0, 1, 2]] > 10.0)
    # an isolated later send sees an idle neighbourhood
    net2 = MeshNetwork(t, MacParams(), np.random.default_rng(0))
    a = net2.send(0, 10.0)
    b = net2.send(0, 100.0)
    assert a.delivered and b.delivered


def test_mesh_is_deterministic():
    t = build_topology(10, 350, 200, np.random.default_rng(1))
    logs = []
    for _ in range(2):
        net = MeshNetwork(t, MacParams(), np.random.default_rng(9))
        for i in range(50):
            net.send(i % 10, i * 0.001)
        logs.append([(d.latency_s, d.bytes, d.delivered) for d in net.log])
    assert logs[0] == logs[1]
