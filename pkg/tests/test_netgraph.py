import numpy as np
import pytest

from dlrgrid import netgraph
from dlrgrid.errors import DisconnectedNetwork, SelfLoop, UnknownBus


def mkbus(i):
    return {"bus_id": str(i), "latitude_deg": 30.0 + 0.1 * i, "longitude_deg": -97.0 + 0.1 * i}


def mkline(lid, a, b, sus=1.0, length=10.0, cond="c1"):
    return {
        "line_id": lid,
        "from_bus": str(a),
        "to_bus": str(b),
        "susceptance_pu": sus,
        "length_km": length,
        "conductor_ref": cond,
    }


def random_connected_network(rng, max_buses=12):
    """Random spanning tree plus extra edges; always connected and simple."""
    n = int(rng.integers(2, max_buses + 1))
    buses = [mkbus(i) for i in range(n)]
    pairs = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        pairs.add((j, i))
    n_extra = int(rng.integers(0, n))
    for _ in range(n_extra):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.add((min(i, j), max(i, j)))
    lines = [mkline(f"L{k:03d}", a, b) for k, (a, b) in enumerate(sorted(pairs))]
    return netgraph.build_network(buses, lines)


# -- build_network ------------------------------------------------------------

def test_path_graph_builds():
    net = netgraph.build_network([mkbus(1), mkbus(2), mkbus(3)], [mkline("a", 1, 2), mkline("b", 2, 3)])
    assert net.n_lines == 2
    assert net.n_buses == 3


def test_parallel_lines_merge_susceptance_sum():
    net = netgraph.build_network(
        [mkbus(1), mkbus(2), mkbus(3)],
        [mkline("a", 1, 2, sus=0.5), mkline("b", 1, 2, sus=0.5), mkline("c", 2, 3, sus=1.0)],
    )
    assert net.n_lines == 2
    merged = [ln for ln in net.lines if ln.endpoints() == ("1", "2")][0]
    assert merged.susceptance_pu == pytest.approx(1.0)


def test_merge_keeps_higher_rated_conductor():
    lines = [
        mkline("a", 1, 2, sus=0.5, length=12.0, cond="small"),
        mkline("b", 1, 2, sus=0.4, length=15.0, cond="big"),
    ]
    net = netgraph.build_network(
        [mkbus(1), mkbus(2)], lines, conductor_ratings={"small": 80.0, "big": 200.0}
    )
    (ln,) = net.lines
    assert ln.conductor_ref == "big"
    assert ln.line_id == "b"
    assert ln.length_km == 15.0
    # without ratings the larger susceptance wins
    net2 = netgraph.build_network([mkbus(1), mkbus(2)], lines)
    assert net2.lines[0].conductor_ref == "small"


def test_disconnected_rejected():
    with pytest.raises(DisconnectedNetwork):
        netgraph.build_network(
            [mkbus(1), mkbus(2), mkbus(3), mkbus(4)], [mkline("a", 1, 2), mkline("b", 3, 4)]
        )


def test_self_loop_rejected():
    with pytest.raises(SelfLoop):
        netgraph.build_network([mkbus(1), mkbus(2)], [mkline("a", 1, 1), mkline("b", 1, 2)])


def test_unknown_bus_rejected():
    with pytest.raises(UnknownBus):
        netgraph.build_network([mkbus(1), mkbus(2)], [mkline("a", 1, 7)])


# -- line_graph ----------------------------------------------------------------

def brute_force_line_graph_edges(network):
    """Independent O(|E|^2) oracle: adjacency by pairwise endpoint intersection."""
    edges = set()
    lines = network.lines
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            si = {lines[i].from_bus, lines[i].to_bus}
            sj = {lines[j].from_bus, lines[j].to_bus}
            if si & sj:
                edges.add((i, j))
    return edges


def test_path_p3_line_graph():
    net = netgraph.build_network([mkbus(1), mkbus(2), mkbus(3)], [mkline("a", 1, 2), mkline("b", 2, 3)])
    topo = netgraph.line_graph(net)
    assert topo.node_count == 2
    assert topo.edges == ((0, 1),)


def test_star_line_graph_is_triangle():
    net = netgraph.build_network(
        [mkbus(0), mkbus(1), mkbus(2), mkbus(3)],
        [mkline("a", 0, 1), mkline("b", 0, 2), mkline("c", 0, 3)],
    )
    topo = netgraph.line_graph(net)
    assert topo.node_count == 3
    assert set(topo.edges) == {(0, 1), (0, 2), (1, 2)}


def test_line_graph_matches_pairwise_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        net = random_connected_network(rng)
        topo = netgraph.line_graph(net)
        assert topo.node_count == net.n_lines
        assert set(topo.edges) == brute_force_line_graph_edges(net)


# -- khop_adjacency ----------------------------------------------------------------

def matrix_power_reachability(adj_dense, k):
    """Oracle: boolean pattern of sum_{m=0..k} A^m via dense matrix powers."""
    n = adj_dense.shape[0]
    total = np.eye(n)
    power = np.eye(n)
    for _ in range(k):
        power = power @ adj_dense
        total = total + power
    return total > 0


def test_single_edge_k1_hand_value():
    net = netgraph.build_network([mkbus(1), mkbus(2), mkbus(3)], [mkline("a", 1, 2), mkline("b", 2, 3)])
    topo = netgraph.line_graph(net)
    adj = netgraph.khop_adjacency(topo, 1)
    # R = [[1,1],[1,1]], D = diag(2,2) -> all entries 0.5
    np.testing.assert_allclose(adj.matrix.toarray(), [[0.5, 0.5], [0.5, 0.5]])


def test_saturated_k_gives_uniform():
    rng = np.random.default_rng(3)
    net = random_connected_network(rng)
    topo = netgraph.line_graph(net)
    n = topo.node_count
    adj = netgraph.khop_adjacency(topo, n + 1)
    np.testing.assert_allclose(adj.matrix.toarray(), np.full((n, n), 1.0 / n))


def test_khop_pattern_matches_power_oracle():
    rng = np.random.default_rng(21)
    for _ in range(40):
        net = random_connected_network(rng)
        topo = netgraph.line_graph(net)
        dense = topo.adjacency().toarray()
        for k in range(1, 6):
            got = netgraph.khop_adjacency(topo, k).matrix.toarray()
            expect = matrix_power_reachability(dense, k)
            assert np.array_equal(got > 0, expect)


def test_khop_monotone_symmetric_and_reconstructs():
    rng = np.random.default_rng(5)
    for _ in range(25):
        net = random_connected_network(rng)
        topo = netgraph.line_graph(net)
        prev = None
        for k in range(1, 5):
            a = netgraph.khop_adjacency(topo, k).matrix.toarray()
            assert np.allclose(a, a.T)
            assert a.min() >= 0 and a.max() <= 1.0 + 1e-12
            assert np.all(np.diag(a) > 0)
            pattern = a > 0
            if prev is not None:
                assert np.all(pattern[prev])  # nonzeros only grow with k
            prev = pattern
            # D^{1/2} A D^{1/2} recovers the boolean reachability exactly
            deg = pattern.sum(axis=1).astype(float)
            recon = a * np.sqrt(deg)[:, None] * np.sqrt(deg)[None, :]
            assert np.allclose(recon, pattern.astype(float), atol=1e-12)


def test_k_zero_rejected():
    net = netgraph.build_network([mkbus(1), mkbus(2)], [mkline("a", 1, 2)])
    topo = netgraph.line_graph(net)
    with pytest.raises(ValueError):
        netgraph.khop_adjacency(topo, 0)


def test_identity_adjacency():
    net = netgraph.build_network([mkbus(1), mkbus(2), mkbus(3)], [mkline("a", 1, 2), mkline("b", 2, 3)])
    topo = netgraph.line_graph(net)
    eye = netgraph.identity_adjacency(topo)
    np.testing.assert_allclose(eye.matrix.toarray(), np.eye(2))


# -- csv round trips ----------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    net = netgraph.build_network(
        [mkbus(1), mkbus(2), mkbus(3)], [mkline("a", 1, 2, sus=0.37), mkline("b", 2, 3, length=4.25)]
    )
    netgraph.write_buses_csv(tmp_path / "buses.csv", net.buses)
    netgraph.write_lines_csv(tmp_path / "lines.csv", net.lines)
    buses = netgraph.read_buses_csv(tmp_path / "buses.csv")
    lines = netgraph.read_lines_csv(tmp_path / "lines.csv")
    rebuilt = netgraph.build_network(buses, lines)
    assert rebuilt == net

    adj = netgraph.khop_adjacency(netgraph.line_graph(net), 1)
    netgraph.write_adjacency_csv(tmp_path / "adj.csv", adj)
    text = (tmp_path / "adj.csv").read_text().splitlines()
    assert text[0] == "row,col,value"
    assert len(text) == 1 + adj.matrix.nnz
