"""Stratified k-fold driver and detection metrics.

Malware is the positive class. The per-fold score is the total accuracy
``(TP + TN) / total``; when malware samples carry family tags the fold also
reports ``(total accuracy + mean family TPR) / 2``. The experiment score is
the mean of fold scores (MMA).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import detector
from .corpus import BENIGN, MALWARE, LabeledSample
from .errors import EmptyFamilyMap, InsufficientSamples, OGSError

REPORT_VERSION = 1
NO_FAMILY = ""


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, truth: str, predicted: str) -> None:
        if truth == MALWARE:
            if predicted == MALWARE:
                self.tp += 1
            else:
                self.fn += 1
        elif predicted == MALWARE:
            self.fp += 1
        else:
            self.tn += 1


@dataclass
class SampleVerdict:
    sample_id: str
    label: str
    family: Optional[str]
    aggregate_score: float
    verdict: str


@dataclass
class FoldResult:
    fold_index: int
    counts: ConfusionCounts
    total_accuracy: float
    per_family_tpr: dict
    mean_fold_accuracy: float
    threshold_used: float
    separable: bool
    selected_edge_count: Optional[int]
    per_family_accuracy: dict = field(default_factory=dict)
    verdicts: list[SampleVerdict] = field(default_factory=list)


@dataclass
class EvalReport:
    folds: list[FoldResult]
    mma: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": dict(self.config),
            "mma": self.mma,
            "folds": [asdict(f) for f in self.folds],
            "metric_note": "mean_fold_accuracy = (total_accuracy + mean family TPR) / 2",
        }

    def fold_accuracies(self) -> list[float]:
        return [f.mean_fold_accuracy for f in self.folds]

    def family_mma(self) -> dict:
        """Per-family accuracy averaged over folds."""
        fams = sorted({fam for f in self.folds for fam in f.per_family_accuracy})
        return {fam: mma([f.per_family_accuracy[fam] for f in self.folds]) for fam in fams}


class ExperimentError(OGSError):
    def __init__(self, fold_index, cause):
        super().__init__(f"fold {fold_index} failed: {cause}")
        self.fold_index = fold_index
        self.cause = cause


def total_accuracy(c: ConfusionCounts) -> float:
    total = c.tp + c.tn + c.fp + c.fn
    if total == 0:
        raise ZeroDivisionError("no test samples")
    return (c.tp + c.tn) / total


def mean_fold_accuracy(total: float, per_family_tpr: dict) -> float:
    if not per_family_tpr:
        raise EmptyFamilyMap("no family TPRs")
    return (total + math.fsum(per_family_tpr.values()) / len(per_family_tpr)) / 2


def mma(fold_accuracies: Sequence[float]) -> float:
    if len(fold_accuracies) == 0:
        raise ValueError("no fold accuracies")
    return math.fsum(fold_accuracies) / len(fold_accuracies)


def kfold_split(samples: Sequence[LabeledSample], k: int, seed: int):
    """Stratified partitions ``[(train, test), ...]``, one per fold.

    Each class is shuffled with ``numpy.random.default_rng(seed)`` and cut
    into k near-equal parts. Within train and test, corpus order is kept.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in range(k)]
    for label in (MALWARE, BENIGN):
        idx = [i for i, s in enumerate(samples) if s.label == label]
        if len(idx) < k:
            raise InsufficientSamples(label, k, len(idx))
        shuffled = rng.permutation(np.array(idx, dtype=np.int64))
        for fold, chunk in enumerate(np.array_split(shuffled, k)):
            parts[fold].extend(chunk.tolist())
    splits = []
    for fold in range(k):
        test_idx = set(parts[fold])
        train = [s for i, s in enumerate(samples) if i not in test_idx]
        test = [s for i, s in enumerate(samples) if i in test_idx]
        splits.append((train, test))
    return splits


def per_family_tpr(verdicts: Sequence[SampleVerdict]) -> dict:
    hits, seen = {}, {}
    for v in verdicts:
        if v.label != MALWARE:
            continue
        fam = v.family if v.family is not None else NO_FAMILY
        seen[fam] = seen.get(fam, 0) + 1
        hits[fam] = hits.get(fam, 0) + (v.verdict == MALWARE)
    return {fam: hits[fam] / seen[fam] for fam in sorted(seen)}


def per_family_accuracy(verdicts: Sequence[SampleVerdict]) -> dict:
    """Fold metric restricted to one family: its malware plus every benign test file."""
    benign = [v for v in verdicts if v.label == BENIGN]
    out = {}
    for fam in per_family_tpr(verdicts):
        mal = [v for v in verdicts if v.label == MALWARE and (v.family or NO_FAMILY) == fam]
        counts = tally(mal + benign)
        out[fam] = mean_fold_accuracy(total_accuracy(counts), {fam: counts.tp / len(mal)})
    return out


def tally(verdicts: Sequence[SampleVerdict]) -> ConfusionCounts:
    counts = ConfusionCounts()
    for v in verdicts:
        counts.add(v.label, v.verdict)
    return counts


def evaluate_fold(
    fold_index: int,
    train: Sequence[LabeledSample],
    test: Sequence[LabeledSample],
    top_k: int,
    aggregation: str = "mean",
    prune: bool = True,
    priors: str = "fixed",
) -> FoldResult:
    model = detector.train(train, top_k=top_k, prune=prune, priors=priors)
    results = detector.predict_many(model, [s.sequence for s in test], aggregation)
    verdicts = [
        SampleVerdict(s.source_id, s.label, s.family, r.aggregate_score, r.label)
        for s, r in zip(test, results)
    ]
    counts = tally(verdicts)
    total = total_accuracy(counts)
    tprs = per_family_tpr(verdicts)
    has_families = any(v.family is not None for v in verdicts if v.label == MALWARE)
    mfa = mean_fold_accuracy(total, tprs) if has_families else total
    return FoldResult(
        fold_index,
        counts,
        total,
        tprs if has_families else {},
        mfa,
        model.threshold,
        model.separable,
        None if model.selected_edges is None else len(model.selected_edges),
        per_family_accuracy(verdicts) if has_families else {},
        verdicts,
    )


def run_experiment(
    corpus: Sequence[LabeledSample],
    k: int = 5,
    top_k: int = detector.DEFAULT_TOP_K,
    seed: int = 42,
    aggregation: str = "mean",
    prune: bool = True,
    priors: str = "fixed",
    train_families: Optional[Sequence[str]] = None,
) -> EvalReport:
    """Cross-validate the detector over ``corpus``.

    With ``train_families`` only benign samples and malware of those
    families are split into folds; all other malware joins every fold's
    test set (train on low padding, test on every padding level).
    """
    if train_families is None:
        pool, extra = list(corpus), []
    else:
        wanted = set(train_families)
        pool = [s for s in corpus if s.label == BENIGN or s.family in wanted]
        extra = [s for s in corpus if s.label == MALWARE and s.family not in wanted]
    folds = []
    for i, (train, test) in enumerate(kfold_split(pool, k, seed)):
        try:
            folds.append(evaluate_fold(i, train, test + extra, top_k, aggregation, prune, priors))
        except OGSError as exc:
            raise ExperimentError(i, exc) from exc
    config = {
        "folds": k,
        "top_k": top_k,
        "seed": seed,
        "aggregation": aggregation,
        "prune": prune,
        "priors": priors,
        "samples": len(corpus),
        "train_families": None if train_families is None else sorted(train_families),
    }
    return EvalReport(folds, mma([f.mean_fold_accuracy for f in folds]), config)


def run_comparison(
    corpus, k=5, top_k=detector.DEFAULT_TOP_K, seed=42, aggregation="mean", priors="fixed", train_families=None
):
    """Pruned run plus the unpruned (all-edge) baseline on the same splits."""
    return {
        "pruned": run_experiment(corpus, k, top_k, seed, aggregation, True, priors, train_families),
        "baseline": run_experiment(corpus, k, top_k, seed, aggregation, False, priors, train_families),
    }


def top_k_sweep(corpus, ks=(50, 100, 150, 200), k=5, seed=42, aggregation="mean") -> list[tuple[int, float]]:
    return [(tk, run_experiment(corpus, k, tk, seed, aggregation).mma) for tk in ks]


def format_sweep(rows) -> str:
    lines = ["top_edges\taccuracy"]
    lines += [f"{tk}\t{100 * acc:.2f}" for tk, acc in rows]
    return "\n".join(lines) + "\n"


def report_json(reports: dict) -> str:
    doc = {name: rep.to_dict() for name, rep in sorted(reports.items())}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def scores_csv(reports: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pass", "fold", "sample_id", "label", "family", "aggregate_score", "verdict"])
    for name, rep in sorted(reports.items()):
        for f in rep.folds:
            for v in f.verdicts:
                writer.writerow(
                    [name, f.fold_index, v.sample_id, v.label, v.family or "", repr(v.aggregate_score), v.verdict]
                )
    return buf.getvalue()
