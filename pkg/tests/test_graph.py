import math

import numpy as np
import pytest

from mdlab.graph import (
    DeferredGraph,
    Graph,
    check_small_degree_separation,
    classify_degrees,
    degree_threshold,
    generate_gnp,
    is_connected,
    load_edge_list,
    save_edge_list,
)
from mdlab.rng import split_streams


def rng_for(seed, stream=0):
    return split_streams(seed, 0, 0).edges if stream == 0 else split_streams(seed, 0, 0).beliefs


def test_gnp_empty_and_complete():
    assert generate_gnp(5, 0.0, rng_for(1)).edge_count == 0
    k5 = generate_gnp(5, 1.0, rng_for(1))
    assert k5.edge_count == 10
    for v in range(5):
        assert sorted(k5.neighbors(v).tolist()) == [u for u in range(5) if u != v]


def test_gnp_validation():
    with pytest.raises(ValueError):
        generate_gnp(0, 0.5, rng_for(1))
    with pytest.raises(ValueError):
        generate_gnp(5, -0.1, rng_for(1))
    with pytest.raises(ValueError):
        generate_gnp(5, 1.5, rng_for(1))


def test_gnp_mean_edge_count():
    # mean of Bin(4950, 0.3) over many draws, within 3 standard errors
    samples = 4000
    rng = rng_for(77)
    counts = [generate_gnp(100, 0.3, rng).edge_count for _ in range(samples)]
    expected = 4950 * 0.3
    se = math.sqrt(4950 * 0.3 * 0.7 / samples)
    assert abs(np.mean(counts) - expected) <= 3 * se


def test_gnp_deterministic_under_seed():
    a = generate_gnp(50, 0.2, rng_for(9))
    b = generate_gnp(50, 0.2, rng_for(9))
    assert a.edge_count == b.edge_count
    assert np.array_equal(a.edges(), b.edges())


def test_graph_invariants():
    g = generate_gnp(80, 0.15, rng_for(3))
    degs = g.degrees()
    assert g.edge_count * 2 == degs.sum()
    for v in range(g.n):
        row = g.neighbors(v)
        assert np.all(np.diff(row) > 0)  # sorted, no duplicates
        assert v not in row
        for u in row:
            assert v in g.neighbors(int(u))


def test_graph_rejects_self_loops_and_duplicates():
    with pytest.raises(ValueError):
        Graph.from_edge_list(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph.from_edge_list(3, [(0, 1), (1, 0)])


def test_reveal_trivial_probabilities():
    dg = DeferredGraph(10, 0.0, rng_for(4))
    assert dg.reveal_edges(0, np.arange(1, 10)).size == 0
    dg = DeferredGraph(10, 1.0, rng_for(4))
    assert dg.reveal_edges(0, np.array([3, 5, 7])).tolist() == [3, 5, 7]


def test_reveal_rejects_self_query():
    dg = DeferredGraph(5, 0.5, rng_for(4))
    with pytest.raises(ValueError):
        dg.reveal_edges(2, np.array([1, 2]))
    with pytest.raises(ValueError):
        dg.reveal_edges(2, np.array([1, 1]))  # duplicate target


def test_reveal_idempotent_and_symmetric():
    dg = DeferredGraph(30, 0.4, rng_for(5))
    first = dg.reveal_edges(0, np.arange(1, 30)).tolist()
    pairs_before = dg.revealed_pairs
    edges_before = dg.revealed_edge_count
    second = dg.reveal_edges(0, np.arange(1, 30)).tolist()
    assert first == second
    assert dg.revealed_pairs == pairs_before
    assert dg.revealed_edge_count == edges_before
    # symmetry: the stored indicator is shared by both orientations
    for u in first:
        assert 0 in dg.reveal_edges(int(u), np.array([0])).tolist()
    assert dg.revealed_pairs == pairs_before
    assert dg.revealed_edge_count == edges_before


def test_deferred_matches_eager_distribution_small():
    # full reveal of a deferred graph obeys the same per-pair Bernoulli law
    n, p, samples = 12, 0.3, 10_000
    rng = rng_for(6)
    n_pairs = n * (n - 1) // 2
    counts = np.zeros(n_pairs)
    for _ in range(samples):
        dg = DeferredGraph(n, p, rng)
        g = dg.reveal_all()
        mask = np.zeros((n, n), dtype=bool)
        e = g.edges()
        if e.size:
            mask[e[:, 0], e[:, 1]] = True
        counts += mask[np.triu_indices(n, k=1)]
    # chi-square over per-pair frequencies, significance 1e-3
    expected = samples * p
    stat = float(np.sum((counts - expected) ** 2 / (samples * p * (1 - p))))
    from scipy.stats import chi2

    assert stat < chi2.ppf(1 - 1e-3, df=n_pairs)


def test_deferred_complete_preserves_stored_values():
    rng = rng_for(8)
    dg = DeferredGraph(40, 0.25, rng)
    revealed = {}
    for v in range(5):
        targets = np.arange(v + 1, 40)
        hits = set(dg.reveal_edges(v, targets).tolist())
        for u in targets:
            revealed[(v, int(u))] = int(u) in hits
    g = dg.complete()
    for (u, w), present in revealed.items():
        assert g.has_edge(u, w) == present


def test_degree_threshold_values():
    # direct evaluation of 5*ln(n)/sqrt(ln(ln(n)))
    for n in (16, 10**6):
        expected = 5.0 * math.log(n) / math.sqrt(math.log(math.log(n)))
        assert degree_threshold(n) == pytest.approx(expected, rel=1e-12)
    assert degree_threshold(16) == pytest.approx(13.7274, abs=5e-4)
    assert degree_threshold(10**6) == pytest.approx(42.63, abs=5e-2)
    assert degree_threshold(10**6) < degree_threshold(10**7)
    with pytest.raises(ValueError):
        degree_threshold(15)


def test_classify_degrees_partition():
    g = generate_gnp(50, 0.2, rng_for(10))
    cls = classify_degrees(g, 10.0)
    assert cls.small_nodes | cls.large_nodes == set(range(50))
    assert not (cls.small_nodes & cls.large_nodes)
    for v in cls.small_nodes:
        assert g.degree(v) <= 10.0
    for v in cls.large_nodes:
        assert g.degree(v) > 10.0


def test_small_degree_separation_examples():
    k5 = generate_gnp(5, 1.0, rng_for(1))
    assert check_small_degree_separation(k5, 1.0) is True  # no small nodes
    single_edge = Graph.from_edge_list(2, [(0, 1)])
    assert check_small_degree_separation(single_edge, 1.0) is False  # distance 1
    path = Graph.from_edge_list(3, [(0, 1), (1, 2)])
    assert check_small_degree_separation(path, 1.0) is False  # ends at distance 2


def _separation_oracle(g: Graph, threshold: float) -> bool:
    # adjacency-matrix oracle: distance <= 2 iff A + A^2 has a positive entry
    n = g.n
    a = np.zeros((n, n), dtype=np.int64)
    for u, v in g.edges():
        a[u, v] = a[v, u] = 1
    reach2 = (a + a @ a) > 0
    small = np.flatnonzero(g.degrees() <= threshold)
    for i, u in enumerate(small):
        for v in small[i + 1:]:
            if reach2[u, v]:
                return False
    return True


def test_small_degree_separation_matches_oracle():
    rng = rng_for(11)
    draws_per_p = 33_334
    thresholds = (1.0, 2.0, 3.0)
    for p in (0.2, 0.5, 0.8):
        for i in range(draws_per_p):
            g = generate_gnp(8, p, rng)
            thr = thresholds[i % 3]
            assert check_small_degree_separation(g, thr) == _separation_oracle(g, thr)


def test_is_connected():
    empty = Graph.from_edge_list(3, [])
    assert is_connected(empty) is False
    assert is_connected(generate_gnp(5, 1.0, rng_for(1))) is True
    two_edges = Graph.from_edge_list(4, [(0, 1), (2, 3)])
    assert is_connected(two_edges) is False
    assert is_connected(Graph.from_edge_list(1, [])) is True


def test_edge_list_round_trip(tmp_path):
    g = generate_gnp(25, 0.3, rng_for(12))
    path = tmp_path / "graph.txt"
    save_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"25 {g.edge_count}"
    g2 = load_edge_list(path)
    assert g2.n == g.n and g2.edge_count == g.edge_count
    assert np.array_equal(g2.edges(), g.edges())
