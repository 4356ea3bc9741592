import numpy as np
import pytest

from harvestmdp.config import build_named_pmf
from harvestmdp.model import Pmf, ProblemSpec

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        _criteria.append((marker, report.outcome))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), outcome in sorted(_criteria):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n:>2}: {title}")


def reference_problem(discount=0.85, recharge="decreasing"):
    return ProblemSpec(
        battery_capacity=50,
        recharge_pmf=build_named_pmf(recharge, 57),
        channel_states=tuple(range(1, 18)),
        channel_pmf=build_named_pmf("bell", 17),
        noise=10.0,
        discount=discount,
    )


@pytest.fixture(scope="session")
def reference_spec():
    return reference_problem()


@pytest.fixture
def tiny_spec():
    """Capacity 1, one channel with gain/noise = 1, recharge always 1, discount 0.5."""
    return ProblemSpec(1, Pmf((0.0, 1.0)), (10.0,), Pmf((1.0,)), 10.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
