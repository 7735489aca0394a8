import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ogslda.corpus import BENIGN, MALWARE, LabeledSample, OpcodeSequence


def make_sample(tokens, label, family=None, sid=None):
    if isinstance(tokens, str):
        tokens = tokens.split()
    return LabeledSample(OpcodeSequence(tuple(tokens), sid or " ".join(tokens)[:40]), label, family)


@pytest.fixture
def toy_corpus():
    """Malware loops through a-b-c; benign programs cycle x-y-z with some shared opcodes."""
    mal = [
        make_sample("a b c a b c a b c mov", MALWARE, sid="m0"),
        make_sample("a b c a b c mov a b c", MALWARE, sid="m1"),
        make_sample("mov a b c a b c a b c", MALWARE, sid="m2"),
        make_sample("a b c mov a b c a b c", MALWARE, sid="m3"),
    ]
    ben = [
        make_sample("x y z x y z mov x y z", BENIGN, sid="b0"),
        make_sample("mov x y z x y z x y z", BENIGN, sid="b1"),
        make_sample("x y z x mov y z x y z", BENIGN, sid="b2"),
    ]
    return mal + ben


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                status = "PASS" if rep.passed else "FAIL"
                lines.append((props["criterion"], f"[{status}] criterion {props['criterion']}: {props.get('summary', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
