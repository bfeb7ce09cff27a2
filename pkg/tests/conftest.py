import pytest
from hypothesis import HealthCheck, settings

from levisim import protocol
from levisim.params import derive, fig2_config
from levisim.rates import localization_rates

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fig2():
    return fig2_config()


@pytest.fixture(scope="session")
def fig2_dq(fig2):
    return derive(fig2)


@pytest.fixture(scope="session")
def fig2_rates(fig2, fig2_dq):
    return localization_rates(fig2, fig2_dq)


@pytest.fixture(scope="session")
def fig2_plan(fig2, fig2_dq, fig2_rates):
    return protocol.plan_pulse(fig2, fig2_dq, fig2_rates)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
