import os
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from hdcos.data import DATA_DIR_ENV, find_idx_pair
from hdcos.dealer import gen_triples
from hdcos.runtime import run_two_party

REPO = Path(__file__).resolve().parents[1]

_CRITERIA = defaultdict(list)  # number -> [(title, test id, outcome)]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[mark.args[0]].append((mark.args[1], item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        results = _CRITERIA[number]
        outcomes = [o for _, _, o in results]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        detail = ", ".join(f"{name}={o}" for _, name, o in results)
        terminalreporter.write_line(f"criterion {number}: {verdict} - {results[0][0]} ({detail})")


def mnist_dir():
    """The MNIST directory, or None: $HDCOS_DATA_DIR/mnist, then <repo>/data/mnist."""
    candidates = []
    if os.environ.get(DATA_DIR_ENV):
        candidates.append(Path(os.environ[DATA_DIR_ENV]) / "mnist")
    candidates.append(REPO / "data" / "mnist")
    for c in candidates:
        try:
            find_idx_pair(c, "train")
            find_idx_pair(c, "test")
            return c
        except FileNotFoundError:
            continue
    return None


@pytest.fixture(scope="session")
def mnist_path():
    path = mnist_dir()
    if path is None:
        pytest.skip("MNIST IDX files not found; run scripts/fetch_mnist.py")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def run_protocol(protocol, inputs, n_triples=0, transport="lockstep", seed=0, **kw):
    """Deal ``n_triples`` and run ``protocol(ctx, input)`` for both parties."""
    pools = gen_triples(n_triples, np.random.default_rng([seed, 99]))
    res = run_two_party(protocol, inputs, pools, transport=transport, seed=seed, **kw)
    return res, pools
