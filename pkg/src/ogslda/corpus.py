"""Opcode text parsing and labeled corpus loading.

Opcode files (``.ops``) hold one instruction per line. Anything after the
first whitespace run is an operand and is discarded; ``#`` lines and blank
lines are skipped. Manifests are JSON-lines with ``path``, ``label`` and an
optional ``family``; relative paths resolve against the manifest directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import CorpusLoadError, EmptySequence, ManifestError

MALWARE = "malware"
BENIGN = "benign"
LABELS = (MALWARE, BENIGN)


@dataclass(frozen=True)
class OpcodeSequence:
    tokens: tuple[str, ...]
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid opcode token {tok!r} in {self.source_id!r}")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def to_text(self) -> str:
        return "".join(tok + "\n" for tok in self.tokens)


@dataclass(frozen=True)
class LabeledSample:
    sequence: OpcodeSequence
    label: str
    family: Optional[str] = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def source_id(self) -> str:
        return self.sequence.source_id


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    family: Optional[str] = None


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p


def parse_opcode_file(raw_text: str, source_id: str = "") -> OpcodeSequence:
    tokens = []
    for line in raw_text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens.append(stripped.split(None, 1)[0].lower())
    if not tokens:
        raise EmptySequence(source_id)
    return OpcodeSequence(tuple(tokens), source_id)


def read_opcode_file(path, source_id: Optional[str] = None) -> OpcodeSequence:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_opcode_file(text, str(path) if source_id is None else source_id)


def read_manifest(path) -> CorpusManifest:
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if not isinstance(obj, dict) or "path" not in obj or "label" not in obj:
                raise ManifestError(f"{path}:{lineno}: need 'path' and 'label' keys")
            if obj["label"] not in LABELS:
                raise ManifestError(f"{path}:{lineno}: bad label {obj['label']!r}")
            entries.append(ManifestEntry(str(obj["path"]), obj["label"], obj.get("family")))
    return CorpusManifest(entries, path.parent)


def write_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for e in manifest.entries:
            obj = {"path": e.path, "label": e.label}
            if e.family is not None:
                obj["family"] = e.family
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def load_corpus(manifest: CorpusManifest, errors: Optional[list] = None) -> list[LabeledSample]:
    """Load every manifest entry in order.

    Failures (unreadable paths, empty files) never stop the loop. If an
    ``errors`` list is supplied they are appended to it as
    ``(source_id, exception)`` pairs; otherwise a :class:`CorpusLoadError`
    carrying all failures is raised once loading finishes.
    """
    samples = []
    failed = []
    for entry in manifest.entries:
        path = manifest.resolve(entry)
        try:
            seq = read_opcode_file(path, source_id=entry.path)
        except (OSError, UnicodeDecodeError, EmptySequence) as exc:
            failed.append((entry.path, exc))
            continue
        samples.append(LabeledSample(seq, entry.label, entry.family))
    if errors is not None:
        errors.extend(failed)
    elif failed:
        raise CorpusLoadError(failed, samples)
    return samples


def split_by_label(samples: Iterable[LabeledSample]):
    mal = [s for s in samples if s.label == MALWARE]
    ben = [s for s in samples if s.label == BENIGN]
    return mal, ben
