import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quasinorm.gn_estimator import EstimateOptions, QuotientSpec, estimate_constant
from quasinorm.radial import RadialGrid
from quasinorm.variational import ProblemParams, critical_exponent, thresholds

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

N, P, Q = 3, 2.5, 5.8
SAFETY = 1.02


@pytest.fixture(scope="session")
def constants():
    grid = RadialGrid(N, 12.0, 2048)
    out = {}
    for name, s in (("p", P), ("q", Q), ("critical", critical_exponent(N))):
        out[name] = estimate_constant(QuotientSpec("E", N, s), EstimateOptions(grid=grid)).constant.inflated(SAFETY)
    return out


@pytest.fixture(scope="session")
def ref_params(constants):
    """Supercritical reference problem at half the local threshold."""
    base = ProblemParams(N, P, Q, 1.0, gn_p=constants["p"], gn_q=constants["q"])
    return base.with_(a=0.5 * thresholds(base).a_star)


@pytest.fixture(scope="session")
def ref_thresholds(ref_params, constants):
    return thresholds(ref_params, constants["critical"])


@pytest.fixture(scope="session")
def grid():
    return RadialGrid(N, 20.0, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number: int, title: str, checks: dict, detail: str = ""):
        failed = [name for name, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"criterion {number:2d} {status}: {title}"
        if detail:
            line += f" ({detail})"
        if failed:
            line += " failed: " + ", ".join(failed)
        lines.append((number, line))
        print(line)
        assert not failed, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
