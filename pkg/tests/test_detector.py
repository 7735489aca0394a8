import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample
from oracles import scatter_oracle, threshold_oracle
from ogslda import detector
from ogslda.corpus import BENIGN, MALWARE, OpcodeSequence
from ogslda.detector import (
    DetectorModel,
    load_model,
    predict,
    predict_many,
    save_model,
    set_threshold,
    threshold_from_scores,
    train,
)
from ogslda.errors import (
    DegenerateTraining,
    EmptySequence,
    FormatVersionMismatch,
    SchemaError,
    SingleClassCorpus,
)
from ogslda.graph import Edge, OpcodeAlphabet, OpcodeGraph, build_alphabet, build_graph
from ogslda.lda import extract_features


def test_threshold_separable_midpoint():
    assert threshold_from_scores([1.0, 2.0], [6.0, 8.0]) == (4.0, True)


def test_threshold_overlap_enumerated():
    # cuts 2 / 4 / 6.5 make 1 / 2 / 1 errors; lowest of the tied best is 2
    assert threshold_from_scores([1, 5], [3, 8]) == (2.0, False)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 20).map(float), min_size=1, max_size=12),
    st.lists(st.integers(0, 20).map(float), min_size=1, max_size=12),
)
def test_threshold_matches_enumeration(m, b):
    if len(set(m) | set(b)) < 2:
        return
    got, separable = threshold_from_scores(m, b)
    assert separable == (max(m) < min(b))
    assert got == threshold_oracle(m, b)


def test_set_threshold_guards():
    alpha = OpcodeAlphabet(("a",))
    g = OpcodeGraph(alpha, [[1.0]])
    with pytest.raises(DegenerateTraining):
        set_threshold([g], [g])
    with pytest.raises(DegenerateTraining):
        set_threshold([g, g], [])


def test_train_separates_training_data(toy_corpus):
    model = train(toy_corpus, top_k=5)
    assert model.separable
    assert len(model.selected_edges) <= 5
    allowed = {model.alphabet.flat_index(e) for e in model.selected_edges}
    for g in model.malware_graphs:
        assert set(np.flatnonzero(g.weights).tolist()) <= allowed
    for s in toy_corpus:
        assert predict(model, s.sequence).label == s.label


def test_train_unpruned(toy_corpus):
    model = train(toy_corpus, prune=False)
    assert model.selected_edges is None and not model.pruned
    for s in toy_corpus:
        assert predict(model, s.sequence).label == s.label


def test_train_guards(toy_corpus):
    with pytest.raises(SingleClassCorpus):
        train([s for s in toy_corpus if s.label == BENIGN])
    with pytest.raises(DegenerateTraining):
        train([toy_corpus[0]] + [s for s in toy_corpus if s.label == BENIGN])


def test_single_differing_edge_selected_first():
    mal = [make_sample("x y z", MALWARE, sid=f"m{i}") for i in range(3)]
    ben = [make_sample("x y z x", BENIGN, sid="b0"), make_sample("z x y z x", BENIGN, sid="b1")]
    samples = mal + ben
    alpha = build_alphabet(s.sequence for s in samples)
    table = extract_features([build_graph(s.sequence, alpha) for s in samples], [s.label for s in samples])
    oracle = scatter_oracle(table.values.tolist(), table.labels)
    only = [e for e, (sw, sb) in zip(table.edges, oracle) if sb > 0]
    assert only == [Edge("z", "x")]
    model = train(samples, top_k=1)
    assert model.selected_edges == (Edge("z", "x"),)


def _manual_model(threshold):
    alpha = OpcodeAlphabet(("p", "q"))
    refs = [OpcodeGraph(alpha, [[0, 0.5], [0, 0]], "r0"), OpcodeGraph(alpha, [[0, 0], [0, 0]], "r1")]
    return DetectorModel(alpha, (Edge("p", "q"),), refs, threshold, top_k=1)


def test_predict_mean_rule_and_tie():
    query = OpcodeSequence(("p", "q"))
    # per-reference scores (1 - 0.5)^2 = 0.25 and 1.0; mean 0.625
    v = predict(_manual_model(0.7), query)
    assert v.per_reference_scores == [0.25, 1.0]
    assert v.aggregate_score == 0.625 and v.label == MALWARE
    assert predict(_manual_model(0.625), query).label == BENIGN
    assert predict(_manual_model(0.5), query).label == BENIGN
    assert predict(_manual_model(0.7), query, aggregation="max").aggregate_score == 1.0


def test_aggregate_examples():
    assert detector._aggregate(np.array([2.0, 4.0]), "mean") == 3.0
    assert detector._aggregate(np.array([5.0, 7.0]), "mean") == 6.0
    with pytest.raises(ValueError):
        detector._aggregate(np.array([1.0]), "median")


def test_unknown_opcodes_dropped():
    v = predict(_manual_model(0.7), OpcodeSequence(("p", "zz", "q", "yy")))
    assert v.dropped_opcodes == 2
    assert v.per_reference_scores == [0.25, 1.0]


def test_predict_empty():
    with pytest.raises(EmptySequence):
        predict(_manual_model(0.7), [])


def test_predict_many_equals_single(toy_corpus):
    model = train(toy_corpus, top_k=4)
    seqs = [s.sequence for s in toy_corpus]
    batch = predict_many(model, seqs)
    assert batch == [predict(model, s) for s in seqs]


def test_round_trip_bit_stable(toy_corpus):
    for prune in (True, False):
        model = train(toy_corpus, top_k=4, prune=prune)
        blob = save_model(model)
        back = load_model(blob)
        assert back == model
        assert save_model(back) == blob
        for s in toy_corpus:
            v1, v2 = predict(model, s.sequence), predict(back, s.sequence)
            assert v1.aggregate_score.hex() == v2.aggregate_score.hex()
            assert v1 == v2


def test_model_file_layout(toy_corpus):
    doc = json.loads(save_model(train(toy_corpus, top_k=3)))
    assert list(doc) == sorted(doc)
    assert {"version", "top_k", "threshold", "alphabet", "selected_edges", "malware_graphs"} <= set(doc)
    assert isinstance(doc["threshold"], str)
    edge = doc["malware_graphs"][0]["edges"][0]
    assert isinstance(edge[2], str) and float(edge[2]) > 0


def test_weights_keep_17_digits():
    alpha = OpcodeAlphabet(("a", "b"))
    w = 1 / 3
    model = DetectorModel(alpha, (Edge("a", "b"),), [OpcodeGraph(alpha, [[0, w], [0, 0]])], 0.1, 1)
    doc = json.loads(save_model(model))
    assert doc["malware_graphs"][0]["edges"][0][2] == "0.33333333333333331"
    assert load_model(save_model(model)).malware_graphs[0].weights[0, 1] == w


def test_truncated_model(toy_corpus):
    blob = save_model(train(toy_corpus))
    with pytest.raises(SchemaError):
        load_model(blob[: len(blob) // 2])


def test_version_mismatch(toy_corpus):
    doc = json.loads(save_model(train(toy_corpus)))
    doc["version"] = 999
    with pytest.raises(FormatVersionMismatch):
        load_model(json.dumps(doc))


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.pop("threshold"), "$"),
        (lambda d: d.__setitem__("top_k", "5"), "$.top_k"),
        (lambda d: d["malware_graphs"][0]["edges"][0].__setitem__(2, 0.5), "$.malware_graphs[0].edges[0]"),
        (lambda d: d["selected_edges"].append(["nope", "a"]), "$.selected_edges["),
        (lambda d: d.__setitem__("alphabet", ["b", "a"]), "$.alphabet"),
    ],
)
def test_schema_errors_name_the_field(toy_corpus, mutate, path):
    doc = json.loads(save_model(train(toy_corpus)))
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        load_model(json.dumps(doc))
    assert info.value.path.startswith(path)
