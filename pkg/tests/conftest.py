from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from hierobf.library import bundled_library
from hierobf.verilog import parse, read

CORPUS_DIR = Path(__file__).parent / "corpus"
CORPUS_FILES = sorted(CORPUS_DIR.glob("*.gv"))
BUILTIN = ("pipe", "corr")


def builtin_text(name: str) -> str:
    return resources.files("hierobf.data").joinpath("designs", f"{name}.gv").read_text(encoding="ascii")


def corpus_netlists(lib):
    """(name, netlist) for the hand-written corpus plus both bundled designs."""
    out = [(p.stem, read(p, lib)) for p in CORPUS_FILES]
    out += [(n, parse(builtin_text(n), lib, filename=f"{n}.gv")) for n in BUILTIN]
    return out


@pytest.fixture(scope="session")
def lib():
    return bundled_library()


@pytest.fixture(scope="session")
def corpus(lib):
    return corpus_netlists(lib)


@pytest.fixture(scope="session")
def pipe(lib):
    return parse(builtin_text("pipe"), lib, filename="pipe.gv")


@pytest.fixture(scope="session")
def corr(lib):
    return parse(builtin_text("corr"), lib, filename="corr.gv")


def gv(text: str, lib):
    return parse(text, lib)


# acceptance verdicts, printed after the run so they survive output capture
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
