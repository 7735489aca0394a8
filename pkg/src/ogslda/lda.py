"""Two-class LDA scatter statistics used to rank and prune graph edges.

Each edge weight is treated as one scalar feature. Per edge::

    S_i  = sum over class-i samples of (x - m_i)**2
    s_w  = P_mal * S_mal + P_ben * S_ben          (P_k = 0.5 by default)
    s_b  = sum_i N_i * (m_i - m)**2               (m = sample-weighted mean)
    R_e  = (s_w + s_b) / s_w

Edges are ranked by R_e, highest first. An edge with s_w == 0 and s_b > 0
separates the classes perfectly and outranks every finite R_e (ties by
larger s_b). An edge with s_w == s_b == 0 is constant and goes last.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import BENIGN, MALWARE
from .errors import AlphabetMismatch, SingleClassCorpus
from .graph import Edge, OpcodeGraph

FIXED_PRIOR = 0.5


@dataclass
class EdgeFeatureTable:
    edges: list[Edge]
    values: np.ndarray  # (n_samples, n_edges)
    labels: list[str]


@dataclass
class ScatterStats:
    edges: list[Edge]
    s_w: np.ndarray
    s_b: np.ndarray
    class_means: dict  # label -> per-edge mean
    overall_mean: np.ndarray
    class_sizes: dict  # label -> count


class RankedEdge(NamedTuple):
    edge: Edge
    r_value: float
    s_w: float
    s_b: float


@dataclass
class EdgeRanking:
    ranked: list[RankedEdge]

    def __len__(self):
        return len(self.ranked)

    def edges(self) -> list[Edge]:
        return [r.edge for r in self.ranked]


def extract_features(graphs: Sequence[OpcodeGraph], labels: Sequence[str]) -> EdgeFeatureTable:
    if len(graphs) != len(labels):
        raise ValueError("graphs and labels differ in length")
    if set(labels) != {MALWARE, BENIGN}:
        raise SingleClassCorpus(f"need both classes, got {sorted(set(labels))}")
    alphabet = graphs[0].alphabet
    for g in graphs:
        if g.alphabet != alphabet:
            raise AlphabetMismatch(f"graph {g.source_id!r} uses a different alphabet")
    flat = np.stack([g.weights.ravel() for g in graphs])
    cols = np.flatnonzero(np.any(flat != 0.0, axis=0))
    edges = [alphabet.edge_at(int(c)) for c in cols]
    return EdgeFeatureTable(edges, flat[:, cols].copy(), list(labels))


def _class_mean(block: np.ndarray) -> np.ndarray:
    m = block.mean(axis=0)
    # constant columns get their exact value so deviations are exactly zero
    const = block.max(axis=0) == block.min(axis=0)
    return np.where(const, block[0], m)


def compute_scatter(table: EdgeFeatureTable, priors: str = "fixed") -> ScatterStats:
    """Per-edge within/between-class scatter.

    ``priors="fixed"`` weights both classes by 0.5; ``"empirical"`` uses
    N_k / N instead.
    """
    labels = np.asarray(table.labels)
    values = np.asarray(table.values, dtype=np.float64)
    sizes, means, within = {}, {}, {}
    for label in (MALWARE, BENIGN):
        block = values[labels == label]
        if block.shape[0] == 0:
            raise SingleClassCorpus(f"no {label} samples")
        sizes[label] = block.shape[0]
        means[label] = _class_mean(block)
        within[label] = ((block - means[label]) ** 2).sum(axis=0)
    total = sizes[MALWARE] + sizes[BENIGN]
    if priors == "fixed":
        p = {MALWARE: FIXED_PRIOR, BENIGN: FIXED_PRIOR}
    elif priors == "empirical":
        p = {k: v / total for k, v in sizes.items()}
    else:
        raise ValueError(f"unknown priors {priors!r}")
    s_w = p[MALWARE] * within[MALWARE] + p[BENIGN] * within[BENIGN]
    overall = (sizes[MALWARE] * means[MALWARE] + sizes[BENIGN] * means[BENIGN]) / total
    overall = np.where(means[MALWARE] == means[BENIGN], means[MALWARE], overall)
    s_b = sum(sizes[k] * (means[k] - overall) ** 2 for k in (MALWARE, BENIGN))
    return ScatterStats(list(table.edges), s_w, s_b, means, overall, sizes)


def r_value(s_w: float, s_b: float) -> float:
    if s_w > 0:
        return (s_w + s_b) / s_w
    return math.inf if s_b > 0 else 0.0


def rank_edges(stats: ScatterStats) -> EdgeRanking:
    entries = []
    for edge, sw, sb in zip(stats.edges, stats.s_w.tolist(), stats.s_b.tolist()):
        r = r_value(sw, sb)
        if math.isinf(r):
            key = (0, -sb, edge)
        elif sw > 0:
            key = (1, -r, edge)
        else:
            key = (2, 0.0, edge)
        entries.append((key, RankedEdge(edge, r, sw, sb)))
    entries.sort(key=lambda kv: kv[0])
    return EdgeRanking([e for _, e in entries])


def select_top_edges(ranking: EdgeRanking, k: int) -> list[Edge]:
    if k < 1:
        raise ValueError("k must be at least 1")
    return [r.edge for r in ranking.ranked[:k]]


def write_ranking_csv(ranking: EdgeRanking, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["from", "to", "s_w", "s_b", "r_value"])
        for r in ranking.ranked:
            writer.writerow([r.edge.src, r.edge.dst, repr(r.s_w), repr(r.s_b), repr(r.r_value)])
