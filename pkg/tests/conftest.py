from pathlib import Path

import numpy as np
import pytest

from bayesdl.corpus import OVERS, CellGrid, InningsSummary, Checkpoint
from bayesdl.model import Theta

DATA = Path(__file__).parent / "data"

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")
    config.stash[_ACCEPTANCE] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return report
    failed_early = report.when == "setup" and not report.passed
    if report.when == "call" or failed_early:
        detail = dict(item.user_properties).get("detail", "")
        if not report.passed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
        item.config.stash[_ACCEPTANCE].append(
            (marker.args[0], marker.args[1], "PASS" if report.passed else "FAIL", detail))
    return report


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash[_ACCEPTANCE])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict, detail in rows:
        terminalreporter.write_line(f"{verdict} criterion {number}: {title} | {detail}")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240611))


@pytest.fixture
def theta_star():
    from bayesdl.synth import DEFAULT_THETA_STAR
    return DEFAULT_THETA_STAR


@pytest.fixture
def simple_theta():
    a = np.linspace(300.0, 120.0, 10)
    b = np.linspace(0.03, 0.045, 10)
    return Theta(a, b, 400.0)


def full_grid(theta: Theta, rng, counts=(1, 20), noise=10.0) -> CellGrid:
    """Fully observed grid scattered around theta's mean surface."""
    from bayesdl.model import mean_surface
    n = rng.integers(counts[0], counts[1], size=(OVERS, 10))
    rbar = mean_surface(theta) + rng.normal(0.0, noise, size=(OVERS, 10)) / np.sqrt(n)
    return CellGrid(n, rbar, float(rbar[OVERS - 1, 0]))


def corpus_text(matches: dict[str, list[tuple[int, bool]]]) -> str:
    """Corpus CSV from per-match lists of (runs, wicket) per legal delivery, in order."""
    lines = ["match_id,over,ball,runs,wicket_fell"]
    for mid, balls in matches.items():
        for i, (runs, wicket) in enumerate(balls):
            lines.append(f"{mid},{i // 6 + 1},{i % 6 + 1},{runs},{'true' if wicket else 'false'}")
    return "\n".join(lines) + "\n"


def toy_matches() -> dict[str, list[tuple[int, bool]]]:
    """Three complete innings with varied scoring and wicket patterns."""
    gen = np.random.Generator(np.random.Philox(7))
    out = {}
    for mid, wickets_at in (("t1", {40, 95, 180, 250, 281}), ("t2", {10, 11, 60, 120, 200, 230, 260, 270, 290}),
                            ("t3", set())):
        balls = []
        for i in range(300):
            balls.append((int(gen.integers(0, 7)), i in wickets_at))
        out[mid] = balls
    return out


def make_summary(match_id: str, over_runs, wickets_after) -> InningsSummary:
    total = int(sum(over_runs))
    so_far = np.cumsum(over_runs)
    cps = tuple(Checkpoint(OVERS - 1 - k, int(wickets_after[k]), total - int(so_far[k])) for k in range(OVERS))
    return InningsSummary(match_id, total, cps)
