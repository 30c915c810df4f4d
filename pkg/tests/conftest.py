import numpy as np
import pytest

from narrlens.embedding import DeterministicEmbedder
from narrlens.taxonomy import COLUMNS, load_taxonomy

TINY_ROWS = [
    ("N1", "First narrative definition.", "N1 example.", "n1-meta",
     "S1a", "Sub a of N1.", "S1a example.", "s1a-meta"),
    ("N1", "First narrative definition.", "N1 example.", "n1-meta",
     "S1b", "Sub b of N1.", "S1b example.", "s1b-meta"),
    ("N2", "Second narrative definition.", "N2 example.", "n2-meta",
     "S2a", "Sub a of N2.", "S2a example.", "s2a-meta"),
]


def tsv(rows, header=COLUMNS) -> str:
    lines = ["\t".join(header)] + ["\t".join(r) for r in rows]
    return "\n".join(lines) + "\n"


@pytest.fixture
def tiny_tax_path(tmp_path):
    path = tmp_path / "tax.tsv"
    path.write_text(tsv(TINY_ROWS), encoding="utf-8")
    return path


@pytest.fixture
def tiny_tax(tiny_tax_path):
    return load_taxonomy(tiny_tax_path, "CC")


@pytest.fixture
def embedder():
    return DeterministicEmbedder(256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict[str, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _ACCEPTANCE[str(marker.args[0])] = (marker.args[1], status, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        title, status, duration = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{status}  criterion {key:<3} {title}  ({duration:.2f}s)")
