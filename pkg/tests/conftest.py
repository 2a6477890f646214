import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# lines recorded by test_acceptance.py, echoed once more in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def transport():
    from rolegame.envs.transport import TransportParams, build_transport_spec

    params = TransportParams()
    spec, gamma, x0 = build_transport_spec(params)
    return params, spec, gamma, x0
