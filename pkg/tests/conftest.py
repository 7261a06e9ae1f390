import os
import sysconfig
from pathlib import Path

import numpy as np
import pytest

from clrnn.data import DATA_DIR_ENV, mnist_paths

REPO = Path(__file__).resolve().parents[1]

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def stdlib_corpus(min_bytes: int = 512_000) -> bytes:
    """Concatenate public standard-library modules (sorted by name) until ``min_bytes``.

    Private ``_*.py`` modules are skipped: several are generated data tables
    that would end up as an unrepresentative validation tail.
    """
    root = Path(sysconfig.get_paths()["stdlib"])
    buf = bytearray()
    for path in sorted(root.glob("*.py")):
        if path.name.startswith("_"):
            continue
        buf += path.read_bytes()
        if len(buf) >= min_bytes:
            return bytes(buf)
    raise RuntimeError(f"standard library under {root} has fewer than {min_bytes} bytes of source")


def mnist_dir() -> Path | None:
    for candidate in (os.environ.get(DATA_DIR_ENV), REPO / "data" / "mnist"):
        if candidate:
            try:
                mnist_paths(candidate)
                return Path(candidate)
            except FileNotFoundError:
                continue
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance(request):
    """Record a one-line detail for the acceptance summary of the running test."""

    def note(detail: str) -> None:
        request.node.user_properties.append(("acceptance_detail", detail))

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and hasattr(item.function, "criterion"):
        if report.when == "call" or (report.when == "setup" and not report.passed):
            detail = dict(item.user_properties).get("acceptance_detail", "")
            status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
            _ACCEPTANCE[item.function.criterion] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] {key}" + (f" -- {detail}" if detail else ""))
