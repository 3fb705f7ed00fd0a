import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "hessdisc", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("hessdisc")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def studies():
    """Default convergence studies, run once per session and shared."""
    from hessdisc.study import RunConfig, run_study
    cache = {}

    def get(scheme, problem="ex1", mesh="builtin"):
        key = (scheme, problem, mesh)
        if key not in cache:
            cache[key] = run_study(RunConfig(scheme, problem, mesh=mesh))
        return cache[key]

    return get


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Lines collected by the acceptance suite, printed in the terminal summary."""
    return pytestconfig.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
