import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def surrogate_prior():
    """Prior I/O data from the default surrogate under the Case 1 gains."""
    from afmpc.config import ExperimentConfig
    from afmpc.runner import collect_prior

    return collect_prior(ExperimentConfig())


@pytest.fixture(scope="session")
def criterion_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    log = getattr(request.config, "_criterion_log", None)
    if log is None:
        log = request.config._criterion_log = {}
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_criterion_log", None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        terminalreporter.write_line(log[n])
