from pathlib import Path

import pytest

from routeseq.graph import MINNESOTA_BBOX, filter_bbox, load_graph, load_minnesota

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="run the multi-hour full-scale training reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended (hours of CPU time)")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def toy5():
    return load_graph(FIXTURES / "toy5.mtx", FIXTURES / "toy5.xy")


@pytest.fixture(scope="session")
def minnesota():
    return load_minnesota()


@pytest.fixture(scope="session")
def mn376(minnesota):
    return filter_bbox(minnesota, *MINNESOTA_BBOX)


CRITERIA = {
    1: "graph reproduction",
    2: "corpus statistics",
    3: "oracle equivalence",
    4: "gradient correctness",
    5: "diffusion fidelity",
    6: "capacity smoke test",
    7: "reference rates",
    8: "rank property",
    9: "determinism",
}


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def acceptance(request):
    """Record one verdict line for an acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        lines = request.config.acceptance_lines.setdefault(number, [])
        lines.append(f"{'PASS' if ok else 'FAIL'}  criterion {number} ({CRITERIA[number]}): {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        for line in lines.get(n, [f"SKIP  criterion {n} ({CRITERIA[n]}): not run"]):
            terminalreporter.write_line(line)
