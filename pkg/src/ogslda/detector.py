"""Threshold detector: training, prediction, and the model file.

Training builds one graph per sample over a shared alphabet, keeps the
top-k LDA-ranked edges, and places a threshold between malware-malware and
benign-malware pair scores. A new sequence is scored against every stored
malware graph; it is malware iff the aggregate score is strictly below the
threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import BENIGN, MALWARE, LabeledSample, OpcodeSequence, split_by_label
from .errors import (
    DegenerateTraining,
    EmptySequence,
    FormatVersionMismatch,
    SchemaError,
    SingleClassCorpus,
)
from .graph import Edge, OpcodeAlphabet, OpcodeGraph, build_alphabet, build_graph, pairwise_scores
from .lda import compute_scatter, extract_features, rank_edges, select_top_edges

FORMAT_VERSION = 1
DEFAULT_TOP_K = 50
AGGREGATIONS = ("mean", "max")


@dataclass
class DetectorModel:
    alphabet: OpcodeAlphabet
    selected_edges: Optional[tuple[Edge, ...]]  # None: unpruned, full-matrix scoring
    malware_graphs: list[OpcodeGraph]
    threshold: float
    top_k: int = DEFAULT_TOP_K
    separable: bool = True
    format_version: int = FORMAT_VERSION

    @property
    def pruned(self) -> bool:
        return self.selected_edges is not None

    def __eq__(self, other):
        if not isinstance(other, DetectorModel):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.selected_edges == other.selected_edges
            and self.malware_graphs == other.malware_graphs
            and _same_float(self.threshold, other.threshold)
            and self.top_k == other.top_k
            and self.separable == other.separable
            and self.format_version == other.format_version
        )


def _same_float(a: float, b: float) -> bool:
    return np.float64(a).tobytes() == np.float64(b).tobytes()


@dataclass
class Verdict:
    label: str
    aggregate_score: float
    per_reference_scores: list[float] = field(default_factory=list)
    dropped_opcodes: int = 0


def threshold_from_scores(malware_scores, benign_scores) -> tuple[float, bool]:
    """Pick a cut between malware-malware and benign-malware scores.

    Returns ``(threshold, separable)``. When every malware pair scores
    below every benign pair the midpoint of the gap is used. Otherwise the
    midpoint between consecutive distinct scores with the fewest training
    errors wins, lowest on ties.
    """
    m = np.sort(np.asarray(malware_scores, dtype=np.float64))
    b = np.sort(np.asarray(benign_scores, dtype=np.float64))
    if m.size == 0 or b.size == 0:
        raise DegenerateTraining("need malware-malware and benign-malware scores")
    if m[-1] < b[0]:
        return float((m[-1] + b[0]) / 2), True
    merged = np.unique(np.concatenate([m, b]))
    if merged.size == 1:
        return float(merged[0]), False
    cuts = (merged[:-1] + merged[1:]) / 2
    # malware misclassified when score >= cut, benign when score < cut
    errors = (m.size - np.searchsorted(m, cuts, side="left")) + np.searchsorted(b, cuts, side="left")
    return float(cuts[int(np.argmin(errors))]), False


def _upper_pairs(mat: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(mat.shape[0], k=1)
    return mat[iu]


def training_scores(malware_graphs, benign_graphs, edges=None):
    """All malware-malware pair scores and all benign-vs-malware scores."""
    mm = _upper_pairs(pairwise_scores(malware_graphs, malware_graphs, edges))
    bm = pairwise_scores(benign_graphs, malware_graphs, edges).ravel()
    return mm, bm


def set_threshold(
    malware_graphs: Sequence[OpcodeGraph],
    benign_graphs: Sequence[OpcodeGraph],
    edges=None,
) -> tuple[float, bool]:
    if len(malware_graphs) < 2:
        raise DegenerateTraining("threshold needs at least 2 malware graphs")
    if len(benign_graphs) < 1:
        raise DegenerateTraining("threshold needs at least 1 benign graph")
    mm, bm = training_scores(malware_graphs, benign_graphs, edges)
    return threshold_from_scores(mm, bm)


def train(
    samples: Sequence[LabeledSample],
    top_k: int = DEFAULT_TOP_K,
    prune: bool = True,
    priors: str = "fixed",
) -> DetectorModel:
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    mal, ben = split_by_label(samples)
    if not mal or not ben:
        raise SingleClassCorpus("training needs both malware and benign samples")
    if len(mal) < 2:
        raise DegenerateTraining("training needs at least 2 malware samples")
    alphabet = build_alphabet(s.sequence for s in samples)
    mal_graphs = [build_graph(s.sequence, alphabet) for s in mal]
    ben_graphs = [build_graph(s.sequence, alphabet) for s in ben]

    if prune:
        table = extract_features(
            mal_graphs + ben_graphs, [MALWARE] * len(mal_graphs) + [BENIGN] * len(ben_graphs)
        )
        if not table.edges:
            raise DegenerateTraining("no transitions in the training corpus")
        ranking = rank_edges(compute_scatter(table, priors))
        selected = tuple(sorted(select_top_edges(ranking, top_k)))
    else:
        selected = None

    threshold, separable = set_threshold(mal_graphs, ben_graphs, selected)
    stored = [g.restrict(selected) for g in mal_graphs]
    return DetectorModel(alphabet, selected, stored, threshold, top_k, separable)


def _project(model: DetectorModel, sequence) -> tuple[OpcodeGraph, int]:
    tokens = list(sequence)
    if not tokens:
        raise EmptySequence(getattr(sequence, "source_id", ""))
    kept = [t for t in tokens if t in model.alphabet]
    return build_graph(kept, model.alphabet, getattr(sequence, "source_id", "")), len(tokens) - len(kept)


def _aggregate(row: np.ndarray, aggregation: str) -> float:
    if aggregation == "mean":
        return math.fsum(row.tolist()) / row.size
    if aggregation == "max":
        return float(row.max())
    raise ValueError(f"unknown aggregation {aggregation!r}")


def predict_many(model: DetectorModel, sequences, aggregation: str = "mean") -> list[Verdict]:
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    projected = [_project(model, s) for s in sequences]
    if not projected:
        return []
    scores = pairwise_scores([g for g, _ in projected], model.malware_graphs, model.selected_edges)
    verdicts = []
    for row, (_, dropped) in zip(scores, projected):
        agg = _aggregate(row, aggregation)
        label = MALWARE if agg < model.threshold else BENIGN
        verdicts.append(Verdict(label, agg, row.tolist(), dropped))
    return verdicts


def predict(model: DetectorModel, sequence: OpcodeSequence, aggregation: str = "mean") -> Verdict:
    return predict_many(model, [sequence], aggregation)[0]


# -- model file ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def model_to_dict(model: DetectorModel) -> dict:
    ops = model.alphabet.opcodes
    graphs = []
    for g in model.malware_graphs:
        graphs.append({"source_id": g.source_id, "edges": [[e.src, e.dst, _fmt(w)] for e, w in g.edges()]})
    return {
        "version": model.format_version,
        "top_k": model.top_k,
        "threshold": _fmt(model.threshold),
        "separable": model.separable,
        "pruned": model.pruned,
        "alphabet": list(ops),
        "selected_edges": None if model.selected_edges is None else [list(e) for e in model.selected_edges],
        "malware_graphs": graphs,
    }


def save_model(model: DetectorModel) -> bytes:
    return (json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n").encode("utf-8")


def _require(obj, key, kind, path):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path, f"missing field {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _parse_weight(text, path) -> float:
    if not isinstance(text, str):
        raise SchemaError(path, "weights are stored as decimal strings")
    try:
        w = float(text)
    except ValueError:
        raise SchemaError(path, f"not a number: {text!r}") from None
    if not math.isfinite(w):
        raise SchemaError(path, "weight must be finite")
    return w


def _parse_edge(item, alphabet: OpcodeAlphabet, path, with_weight=False):
    size = 3 if with_weight else 2
    if not isinstance(item, list) or len(item) != size:
        raise SchemaError(path, f"expected a list of {size} items")
    src, dst = item[0], item[1]
    if src not in alphabet or dst not in alphabet:
        raise SchemaError(path, f"edge ({src!r}, {dst!r}) outside the alphabet")
    return Edge(src, dst)


def model_from_dict(doc) -> DetectorModel:
    if not isinstance(doc, dict):
        raise SchemaError("$", "model must be a JSON object")
    version = _require(doc, "version", int, "$")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"model format {version}, this build reads {FORMAT_VERSION}")
    top_k = _require(doc, "top_k", int, "$")
    if top_k < 1:
        raise SchemaError("$.top_k", "must be >= 1")
    threshold = _parse_weight(_require(doc, "threshold", str, "$"), "$.threshold")
    if threshold < 0:
        raise SchemaError("$.threshold", "must be non-negative")
    separable = _require(doc, "separable", bool, "$")
    ops = _require(doc, "alphabet", list, "$")
    try:
        alphabet = OpcodeAlphabet(tuple(ops))
    except (ValueError, TypeError) as exc:
        raise SchemaError("$.alphabet", str(exc)) from None
    if not all(isinstance(o, str) for o in ops):
        raise SchemaError("$.alphabet", "opcodes must be strings")

    raw_sel = _require(doc, "selected_edges", None, "$")
    if raw_sel is None:
        selected = None
    else:
        if not isinstance(raw_sel, list):
            raise SchemaError("$.selected_edges", "expected a list or null")
        selected = tuple(
            _parse_edge(item, alphabet, f"$.selected_edges[{i}]") for i, item in enumerate(raw_sel)
        )
        if len(selected) > top_k:
            raise SchemaError("$.selected_edges", "more edges than top_k")
    pruned = _require(doc, "pruned", bool, "$")
    if pruned != (selected is not None):
        raise SchemaError("$.pruned", "disagrees with selected_edges")
    allowed = None if selected is None else set(selected)

    graphs = []
    n = len(alphabet)
    for gi, gdoc in enumerate(_require(doc, "malware_graphs", list, "$")):
        gpath = f"$.malware_graphs[{gi}]"
        sid = _require(gdoc, "source_id", str, gpath)
        w = np.zeros((n, n))
        for ei, item in enumerate(_require(gdoc, "edges", list, gpath)):
            epath = f"{gpath}.edges[{ei}]"
            edge = _parse_edge(item, alphabet, epath, with_weight=True)
            if allowed is not None and edge not in allowed:
                raise SchemaError(epath, "edge is not a selected edge")
            weight = _parse_weight(item[2], epath)
            if not 0.0 <= weight <= 1.0:
                raise SchemaError(epath, "weight outside [0, 1]")
            w[alphabet.index[edge.src], alphabet.index[edge.dst]] = weight
        graphs.append(OpcodeGraph(alphabet, w, sid))
    if not graphs:
        raise SchemaError("$.malware_graphs", "model has no reference graphs")
    return DetectorModel(alphabet, selected, graphs, threshold, top_k, separable, version)


def load_model(data) -> DetectorModel:
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)
