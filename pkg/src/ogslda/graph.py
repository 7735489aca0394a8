"""Opcode transition graphs and their dissimilarity score.

A graph is an N x N row-stochastic matrix over a shared, lexicographically
ordered alphabet: entry (i, j) is the probability that opcode i is followed
by opcode j. Opcodes without a successor keep an all-zero row.

The score between graphs A and B is ``(sum |a_ij - b_ij|)**2 / N**2``. With
an edge filter of K edges only those entries are summed and the
normalizer becomes ``K**2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import AlphabetMismatch, EmptyAlphabet, EmptyFilter, UnknownOpcode


class Edge(NamedTuple):
    src: str
    dst: str


@dataclass(frozen=True)
class OpcodeAlphabet:
    opcodes: tuple[str, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ops = tuple(self.opcodes)
        if list(ops) != sorted(set(ops)):
            raise ValueError("alphabet must be sorted and free of duplicates")
        object.__setattr__(self, "opcodes", ops)
        object.__setattr__(self, "index", {tok: i for i, tok in enumerate(ops)})

    def __len__(self):
        return len(self.opcodes)

    def __contains__(self, token):
        return token in self.index

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        try:
            return np.fromiter((self.index[t] for t in tokens), dtype=np.int64)
        except KeyError as exc:
            raise UnknownOpcode(exc.args[0]) from None

    def flat_index(self, edge: Edge) -> int:
        try:
            return self.index[edge[0]] * len(self.opcodes) + self.index[edge[1]]
        except KeyError as exc:
            raise UnknownOpcode(exc.args[0]) from None

    def edge_at(self, flat: int) -> Edge:
        n = len(self.opcodes)
        return Edge(self.opcodes[flat // n], self.opcodes[flat % n])


def build_alphabet(samples: Iterable) -> OpcodeAlphabet:
    """Sorted union of every token in ``samples`` (sequences or token lists)."""
    seen = set()
    for seq in samples:
        seen.update(seq)
    if not seen:
        raise EmptyAlphabet("all input sequences are empty")
    return OpcodeAlphabet(tuple(sorted(seen)))


class OpcodeGraph:
    """Immutable transition-probability matrix bound to an alphabet."""

    __slots__ = ("alphabet", "weights", "source_id")

    def __init__(self, alphabet: OpcodeAlphabet, weights, source_id: str = ""):
        w = np.array(weights, dtype=np.float64)
        n = len(alphabet)
        if w.shape != (n, n):
            raise ValueError(f"weights shape {w.shape} does not match alphabet size {n}")
        w.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "source_id", source_id)

    def __setattr__(self, name, value):
        raise AttributeError("OpcodeGraph is immutable")

    def __eq__(self, other):
        if not isinstance(other, OpcodeGraph):
            return NotImplemented
        return (
            self.source_id == other.source_id
            and self.alphabet == other.alphabet
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def __repr__(self):
        return f"OpcodeGraph({self.source_id!r}, n={len(self.alphabet)}, edges={self.edge_count()})"

    def weight(self, src: str, dst: str) -> float:
        idx = self.alphabet.index
        return float(self.weights[idx[src], idx[dst]])

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.weights))

    def edges(self) -> list[tuple[Edge, float]]:
        """Nonzero entries in row-major (lexicographic) order."""
        rows, cols = np.nonzero(self.weights)
        ops = self.alphabet.opcodes
        return [(Edge(ops[i], ops[j]), float(self.weights[i, j])) for i, j in zip(rows, cols)]

    def restrict(self, edges: Optional[Iterable[Edge]]) -> "OpcodeGraph":
        """Copy keeping only ``edges``; rows are not renormalized."""
        if edges is None:
            return self
        mask = np.zeros(self.weights.size, dtype=bool)
        mask[edge_indices(self.alphabet, edges)] = True
        w = np.where(mask.reshape(self.weights.shape), self.weights, 0.0)
        return OpcodeGraph(self.alphabet, w, self.source_id)


def build_graph(sequence, alphabet: OpcodeAlphabet, source_id: Optional[str] = None) -> OpcodeGraph:
    codes = alphabet.encode(sequence)
    counts = kernels.transition_counts(codes, len(alphabet))
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(totals > 0, counts / totals, 0.0)
    if source_id is None:
        source_id = getattr(sequence, "source_id", "")
    return OpcodeGraph(alphabet, weights, source_id)


def edge_indices(alphabet: OpcodeAlphabet, edges: Iterable[Edge]) -> np.ndarray:
    """Sorted flat (row-major) indices of ``edges``."""
    idx = np.array(sorted({alphabet.flat_index(e) for e in edges}), dtype=np.int64)
    return idx


def _check_shared(graphs: Sequence[OpcodeGraph], alphabet: OpcodeAlphabet):
    for g in graphs:
        if g.alphabet != alphabet:
            raise AlphabetMismatch(f"graph {g.source_id!r} uses a different alphabet")


def feature_matrix(
    graphs: Sequence[OpcodeGraph], columns: Optional[np.ndarray], alphabet: OpcodeAlphabet
) -> np.ndarray:
    """Stack flattened weights, optionally keeping only ``columns``."""
    if not graphs:
        width = len(alphabet) ** 2 if columns is None else len(columns)
        return np.zeros((0, width))
    flat = np.stack([g.weights.ravel() for g in graphs])
    return flat if columns is None else flat[:, columns]


def _resolve_filter(alphabet: OpcodeAlphabet, edge_filter):
    if edge_filter is None:
        return None, len(alphabet) ** 2
    cols = edge_indices(alphabet, edge_filter)
    if cols.size == 0:
        raise EmptyFilter("edge filter is empty")
    return cols, cols.size ** 2


def score(a: OpcodeGraph, b: OpcodeGraph, edge_filter: Optional[Iterable[Edge]] = None) -> float:
    """Dissimilarity of two graphs; 0 means the compared entries are equal."""
    if a.alphabet != b.alphabet:
        raise AlphabetMismatch("graphs use different alphabets")
    return float(pairwise_scores([a], [b], edge_filter)[0, 0])


def pairwise_scores(
    left: Sequence[OpcodeGraph],
    right: Sequence[OpcodeGraph],
    edge_filter: Optional[Iterable[Edge]] = None,
) -> np.ndarray:
    """Score matrix with ``out[i, j] = score(left[i], right[j], edge_filter)``."""
    graphs = list(left) + list(right)
    if not graphs:
        return np.zeros((len(left), len(right)))
    alphabet = graphs[0].alphabet
    _check_shared(graphs, alphabet)
    cols, norm = _resolve_filter(alphabet, edge_filter)
    sums = kernels.pairwise_l1(
        feature_matrix(left, cols, alphabet), feature_matrix(right, cols, alphabet)
    )
    return sums * sums / norm
