import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import r_oracle, scatter_oracle
from ogslda.errors import SingleClassCorpus
from ogslda.graph import Edge, OpcodeAlphabet, OpcodeGraph, build_graph
from ogslda.lda import (
    EdgeFeatureTable,
    ScatterStats,
    compute_scatter,
    extract_features,
    rank_edges,
    r_value,
    select_top_edges,
    write_ranking_csv,
)

M, B = "malware", "benign"


def _table(columns, labels):
    edges = [Edge(f"e{i:02d}", "x") for i in range(len(columns))]
    return EdgeFeatureTable(edges, np.array(columns, dtype=float).T, list(labels))


def test_extract_features_fills_zero():
    alpha = OpcodeAlphabet(("add", "mov"))
    g1 = OpcodeGraph(alpha, [[0, 0], [0.5, 0.5]])
    g2 = OpcodeGraph(alpha, [[0, 0], [0, 1.0]])
    t = extract_features([g1, g2], [M, B])
    assert t.edges == [Edge("mov", "add"), Edge("mov", "mov")]
    assert t.values[:, 0].tolist() == [0.5, 0.0]


def test_extract_features_identical_edge_sets():
    alpha = OpcodeAlphabet(("a", "b"))
    gs = [build_graph(["a", "b", "a"], alpha), build_graph(["a", "b", "a", "b"], alpha)]
    assert len(extract_features(gs, [M, B]).edges) == 2


def test_extract_features_single_class():
    alpha = OpcodeAlphabet(("a",))
    with pytest.raises(SingleClassCorpus):
        extract_features([OpcodeGraph(alpha, [[1.0]])] * 2, [B, B])


def test_scatter_worked_example():
    s = compute_scatter(_table([[0.2, 0.4, 0.8, 1.0]], [M, M, B, B]))
    assert s.class_means[M][0] == pytest.approx(0.3, abs=1e-12)
    assert s.class_means[B][0] == pytest.approx(0.9, abs=1e-12)
    assert s.overall_mean[0] == pytest.approx(0.6, abs=1e-12)
    assert s.s_w[0] == pytest.approx(0.02, abs=1e-12)
    assert s.s_b[0] == pytest.approx(0.36, abs=1e-12)
    assert r_value(s.s_w[0], s.s_b[0]) == pytest.approx(19.0, abs=1e-12)


def test_scatter_constant_and_perfect():
    s = compute_scatter(_table([[0.3] * 4, [0, 0, 1, 1]], [M, M, B, B]))
    assert s.s_w.tolist() == [0.0, 0.0]
    assert s.s_b.tolist() == [0.0, 1.0]


def test_empirical_priors():
    s = compute_scatter(_table([[0.0, 1.0, 0.0, 0.0]], [M, M, M, B]), priors="empirical")
    # S_mal = 2/3, S_ben = 0, P_mal = 3/4
    assert s.s_w[0] == pytest.approx(0.5, abs=1e-12)


def _stats(sw, sb):
    edges = [Edge(f"e{i}", "x") for i in range(len(sw))]
    return ScatterStats(edges, np.array(sw, float), np.array(sb, float), {}, np.zeros(len(sw)), {})


def test_rank_descending_and_ties():
    # R = 19, 1, 5 and a tie at 5 broken lexicographically
    ranking = rank_edges(_stats([0.02, 1.0, 0.25, 0.25], [0.36, 0.0, 1.0, 1.0]))
    assert [r.edge.src for r in ranking.ranked] == ["e0", "e2", "e3", "e1"]
    assert [r.r_value for r in ranking.ranked] == pytest.approx([19.0, 5.0, 5.0, 1.0])


def test_rank_degenerate_tiers():
    ranking = rank_edges(_stats([0.0, 0.1, 0.0, 0.0], [0.0, 0.1, 0.5, 2.0]))
    assert [r.edge.src for r in ranking.ranked] == ["e3", "e2", "e1", "e0"]
    assert math.isinf(ranking.ranked[0].r_value)
    assert ranking.ranked[-1].r_value == 0.0


def test_select_top_edges():
    ranking = rank_edges(_stats([0.02, 1.0, 0.25], [0.36, 0.0, 1.0]))
    assert select_top_edges(ranking, 2) == [Edge("e0", "x"), Edge("e2", "x")]
    assert len(select_top_edges(ranking, 50)) == 3
    assert set(select_top_edges(ranking, len(ranking))) == set(ranking.edges())
    with pytest.raises(ValueError):
        select_top_edges(ranking, 0)


def test_ranking_csv(tmp_path):
    ranking = rank_edges(_stats([0.02], [0.36]))
    write_ranking_csv(ranking, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "from,to,s_w,s_b,r_value"
    assert lines[1].startswith("e0,x,0.02,0.36,19.")




tables = st.integers(2, 10).flatmap(
    lambda n_mal: st.integers(2, 10).flatmap(
        lambda n_ben: st.integers(1, 6).flatmap(
            lambda d: st.tuples(
                st.just([M] * n_mal + [B] * n_ben),
                st.lists(
                    st.lists(st.floats(0, 1), min_size=d, max_size=d),
                    min_size=n_mal + n_ben,
                    max_size=n_mal + n_ben,
                ),
            )
        )
    )
)


def _mk(labels, rows):
    d = len(rows[0])
    return EdgeFeatureTable([Edge(f"e{i}", "x") for i in range(d)], np.array(rows, float), labels)


@settings(max_examples=100, deadline=None)
@given(tables)
def test_scatter_matches_oracle(data):
    labels, rows = data
    s = compute_scatter(_mk(labels, rows))
    for c, (sw, sb) in enumerate(scatter_oracle(rows, labels)):
        assert abs(s.s_w[c] - sw) <= 1e-10
        assert abs(s.s_b[c] - sb) <= 1e-10
        assert s.s_w[c] >= 0 and s.s_b[c] >= 0
        lo, hi = sorted((s.class_means[M][c], s.class_means[B][c]))
        assert lo - 1e-12 <= s.overall_mean[c] <= hi + 1e-12
        if s.s_w[c] > 1e-6:
            assert abs(r_value(s.s_w[c], s.s_b[c]) - (1 + s.s_b[c] / s.s_w[c])) <= 1e-12 * r_value(
                s.s_w[c], s.s_b[c]
            )
            assert abs(r_value(s.s_w[c], s.s_b[c]) - r_oracle(sw, sb)) <= 1e-6 * r_oracle(sw, sb)


@settings(max_examples=100, deadline=None)
@given(tables, st.floats(-5, 5))
def test_scatter_shift_invariant(data, c):
    labels, rows = data
    base = compute_scatter(_mk(labels, rows))
    shifted = compute_scatter(_mk(labels, [[x + c for x in r] for r in rows]))
    assert np.allclose(base.s_w, shifted.s_w, rtol=1e-9, atol=1e-9)
    assert np.allclose(base.s_b, shifted.s_b, rtol=1e-9, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(tables, st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]))
def test_ranking_order_scale_invariant(data, t):
    labels, rows = data
    base = compute_scatter(_mk(labels, rows))
    scaled = compute_scatter(_mk(labels, [[x * t for x in r] for r in rows]))
    assert np.allclose(scaled.s_w, base.s_w * t * t, rtol=1e-12, atol=0)
    assert np.allclose(scaled.s_b, base.s_b * t * t, rtol=1e-12, atol=0)
    assert rank_edges(base).edges() == rank_edges(scaled).edges()
    rs = [r.r_value for r in rank_edges(base).ranked]
    assert all(x >= y for x, y in zip(rs, rs[1:]))
