"""Synthetic metamorphic corpora.

A base worm opcode sequence is turned into variants by three obfuscations,
applied in order: alias substitution (1:1 swaps within groups of
interchangeable mnemonics), adjacent block transposition, and dead-code
insertion of contiguous snippets taken from benign programs. The padding
ratio is dead-code opcodes per worm opcode.

Benign programs and the base worm are sampled from sparse random Markov
chains over two different opcode vocabularies (see ``data/isa.json``).
Every file gets its own generator seeded from ``(corpus seed, file index)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import BENIGN, MALWARE, CorpusManifest, LabeledSample, ManifestEntry, OpcodeSequence, write_manifest
from .errors import ConfigError, EmptyBase, EmptyBenignPool

SNIPPET_MIN = 3
SNIPPET_MAX = 10
BLOCK_MIN = 2
BLOCK_MAX = 8
PAPER_RATIOS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


@lru_cache(maxsize=None)
def isa_tables() -> dict:
    text = resources.files("ogslda").joinpath("data/isa.json").read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def alias_map() -> dict:
    """opcode -> tuple of its interchangeable aliases (excluding itself)."""
    out = {}
    for group in isa_tables()["aliases"]:
        for op in group:
            out[op] = tuple(g for g in group if g != op)
    return out


def derive_seed(corpus_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([corpus_seed, index]).generate_state(1, np.uint64)[0])


@dataclass
class MorphConfig:
    padding_ratio: float = 0.0
    substitution_rate: float = 0.0
    block_transposition_count: int = 0
    seed: int = 0
    benign_pool: Sequence[OpcodeSequence] = ()

    def __post_init__(self):
        if not self.padding_ratio >= 0:
            raise ConfigError("padding_ratio", "must be >= 0")
        if not 0.0 <= self.substitution_rate <= 1.0:
            raise ConfigError("substitution_rate", "must be in [0, 1]")
        if self.block_transposition_count < 0:
            raise ConfigError("block_transposition_count", "must be >= 0")


@dataclass
class MutationTrace:
    tokens: list[str]
    dead: list[bool]  # True where the token is inserted dead code
    core: list[str]  # worm core after substitution and transposition


def _substitute(tokens, rate, rng):
    if rate <= 0:
        return list(tokens)
    aliases = alias_map()
    out = []
    for tok in tokens:
        alts = aliases.get(tok)
        if alts and rng.random() < rate:
            tok = alts[int(rng.integers(len(alts)))]
        out.append(tok)
    return out


def _transpose(tokens, count, rng):
    tokens = list(tokens)
    n = len(tokens)
    if n < 2 * BLOCK_MIN:
        return tokens
    for _ in range(count):
        size = int(rng.integers(BLOCK_MIN, min(BLOCK_MAX, n // 2) + 1))
        i = int(rng.integers(0, n - 2 * size + 1))
        tokens[i : i + 2 * size] = tokens[i + size : i + 2 * size] + tokens[i : i + size]
    return tokens


def _dead_snippets(amount, pool, rng):
    snippets = []
    while amount > 0:
        src = pool[int(rng.integers(len(pool)))].tokens
        size = min(int(rng.integers(SNIPPET_MIN, SNIPPET_MAX + 1)), amount, len(src))
        start = int(rng.integers(0, len(src) - size + 1))
        snippets.append(list(src[start : start + size]))
        amount -= size
    return snippets


def mutate_tracked(base: OpcodeSequence, config: MorphConfig) -> MutationTrace:
    tokens = list(base)
    if not tokens:
        raise EmptyBase("base sequence is empty")
    amount = math.floor(config.padding_ratio * len(tokens))
    pool = [p for p in config.benign_pool if len(p)]
    if amount > 0 and not pool:
        raise EmptyBenignPool("padding requested but the benign pool is empty")
    rng = np.random.default_rng(config.seed)

    core = _substitute(tokens, config.substitution_rate, rng)
    core = _transpose(core, config.block_transposition_count, rng)

    snippets = _dead_snippets(amount, pool, rng)
    gaps = rng.integers(0, len(core) + 1, size=len(snippets)) if snippets else []
    at_gap = {}
    for gap, snip in zip(gaps, snippets):
        at_gap.setdefault(int(gap), []).append(snip)

    out, dead = [], []
    for pos in range(len(core) + 1):
        for snip in at_gap.get(pos, ()):
            out.extend(snip)
            dead.extend([True] * len(snip))
        if pos < len(core):
            out.append(core[pos])
            dead.append(False)
    return MutationTrace(out, dead, core)


def mutate(base: OpcodeSequence, config: MorphConfig, source_id: Optional[str] = None) -> OpcodeSequence:
    trace = mutate_tracked(base, config)
    return OpcodeSequence(tuple(trace.tokens), base.source_id if source_id is None else source_id)


# -- Markov sources -------------------------------------------------------------


def random_chain(vocab: Sequence[str], out_degree: int, rng) -> np.ndarray:
    """Sparse row-stochastic matrix: each opcode gets ``out_degree`` successors."""
    n = len(vocab)
    deg = min(out_degree, n)
    p = np.zeros((n, n))
    for i in range(n):
        succ = rng.choice(n, size=deg, replace=False)
        p[i, succ] = rng.dirichlet(np.ones(deg))
    return p


def perturb_chain(p: np.ndarray, concentration: float, rng) -> np.ndarray:
    """Resample every row from a Dirichlet centred on it (same support)."""
    out = np.zeros_like(p)
    for i, row in enumerate(p):
        nz = np.flatnonzero(row)
        out[i, nz] = rng.dirichlet(concentration * row[nz])
    return out


def sample_chain(vocab: Sequence[str], p: np.ndarray, length: int, rng) -> list[str]:
    state = int(rng.integers(len(vocab)))
    out = [vocab[state]]
    cdf = np.cumsum(p, axis=1)
    for _ in range(length - 1):
        state = min(int(np.searchsorted(cdf[state], rng.random(), side="right")), len(vocab) - 1)
        out.append(vocab[state])
    return out


@dataclass
class SyntheticCorpusSpec:
    seed: int = 42
    base_worm: Optional[Sequence[str]] = None
    worm_length: int = 200
    variants_per_ratio: int = 100
    ratios: Sequence[float] = PAPER_RATIOS
    benign_count: int = 20
    benign_length: tuple[int, int] = (1500, 2500)
    substitution_rate: float = 0.1
    block_transposition_count: int = 2
    worm_out_degree: int = 2
    benign_out_degree: int = 5
    benign_concentration: float = 20.0

    def validate(self):
        if self.base_worm is None and self.worm_length < 1:
            raise ConfigError("worm_length", "must be >= 1")
        if self.base_worm is not None and len(self.base_worm) == 0:
            raise ConfigError("base_worm", "must not be empty")
        if not self.ratios:
            raise ConfigError("ratios", "at least one padding ratio is required")
        if any(not (r >= 0) for r in self.ratios):
            raise ConfigError("ratios", "padding ratios must be >= 0")
        if self.variants_per_ratio < 0:
            raise ConfigError("variants_per_ratio", "must be >= 0")
        if self.benign_count < 0:
            raise ConfigError("benign_count", "must be >= 0")
        lo, hi = self.benign_length
        if not 1 <= lo <= hi:
            raise ConfigError("benign_length", "need 1 <= min <= max")
        if not 0 <= self.substitution_rate <= 1:
            raise ConfigError("substitution_rate", "must be in [0, 1]")
        if any(r > 0 for r in self.ratios) and self.benign_count == 0:
            raise ConfigError("benign_count", "padding needs benign programs as the dead-code source")

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticCorpusSpec":
        if not isinstance(doc, dict):
            raise ConfigError("$", "corpus spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        kwargs = dict(doc)
        if "ratios" in kwargs:
            if not isinstance(kwargs["ratios"], list):
                raise ConfigError("ratios", "must be a list")
            kwargs["ratios"] = tuple(float(r) for r in kwargs["ratios"])
        if "benign_length" in kwargs:
            kwargs["benign_length"] = tuple(kwargs["benign_length"])
        spec = cls(**kwargs)
        spec.validate()
        return spec


def family_name(ratio: float) -> str:
    return f"pad_{float(ratio)!r}"


def make_base_worm(spec: SyntheticCorpusSpec) -> OpcodeSequence:
    if spec.base_worm is not None:
        return OpcodeSequence(tuple(spec.base_worm), "base_worm")
    rng = np.random.default_rng(derive_seed(spec.seed, -1 & 0xFFFFFFFF))
    vocab = isa_tables()["worm_vocab"]
    chain = random_chain(vocab, spec.worm_out_degree, rng)
    return OpcodeSequence(tuple(sample_chain(vocab, chain, spec.worm_length, rng)), "base_worm")


def make_benign(spec: SyntheticCorpusSpec) -> list[OpcodeSequence]:
    vocab = isa_tables()["benign_vocab"]
    shared = random_chain(vocab, spec.benign_out_degree, np.random.default_rng(derive_seed(spec.seed, 0xFFFFFFFE)))
    out = []
    lo, hi = spec.benign_length
    for i in range(spec.benign_count):
        rng = np.random.default_rng(derive_seed(spec.seed, 1_000_000 + i))
        chain = perturb_chain(shared, spec.benign_concentration, rng)
        length = int(rng.integers(lo, hi + 1))
        out.append(OpcodeSequence(tuple(sample_chain(vocab, chain, length, rng)), f"benign/benign_{i:03d}.ops"))
    return out


def generate_samples(spec: SyntheticCorpusSpec) -> list[LabeledSample]:
    """Malware variants (grouped by ratio) followed by benign programs."""
    spec.validate()
    base = make_base_worm(spec)
    benign = make_benign(spec)
    samples = []
    index = 0
    for ratio in spec.ratios:
        fam = family_name(ratio)
        for v in range(spec.variants_per_ratio):
            cfg = MorphConfig(
                padding_ratio=ratio,
                substitution_rate=spec.substitution_rate,
                block_transposition_count=spec.block_transposition_count,
                seed=derive_seed(spec.seed, index),
                benign_pool=benign,
            )
            seq = mutate(base, cfg, source_id=f"malware/{fam}/variant_{v:03d}.ops")
            samples.append(LabeledSample(seq, MALWARE, fam))
            index += 1
    samples.extend(LabeledSample(b, BENIGN) for b in benign)
    return samples


def generate_corpus(spec: SyntheticCorpusSpec, out_dir, manifest_name: str = "manifest.jsonl") -> CorpusManifest:
    """Write ``.ops`` files plus a JSON-lines manifest under ``out_dir``."""
    out_dir = Path(out_dir)
    samples = generate_samples(spec)
    entries = []
    for s in samples:
        path = out_dir / s.source_id
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(s.sequence.to_text(), encoding="utf-8", newline="\n")
        entries.append(ManifestEntry(s.source_id, s.label, s.family))
    manifest = CorpusManifest(entries, out_dir)
    write_manifest(manifest, out_dir / manifest_name)
    return manifest


def mwor_like_spec(seed: int = 42, **overrides) -> SyntheticCorpusSpec:
    """Worm with heavy dead-code padding sweeps (800 variants, 20 benign)."""
    return SyntheticCorpusSpec(seed=seed, **overrides)


def ngvck_like_spec(seed: int = 42, **overrides) -> SyntheticCorpusSpec:
    """Kit-style family: strong substitution and permutation, light junk code."""
    params = dict(
        seed=seed,
        variants_per_ratio=200,
        ratios=(0.25,),
        benign_count=40,
        substitution_rate=0.4,
        block_transposition_count=10,
    )
    params.update(overrides)
    return SyntheticCorpusSpec(**params)
