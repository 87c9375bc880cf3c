import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mwlab.models import indicator, random_chain, two_state

settings.register_profile("mwlab", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mwlab")

SEED = 12345


@pytest.fixture(scope="session")
def chain03():
    """Two-state chain a=0.3, b=0.6: pi = (2/3, 1/3), second eigenvalue 0.1."""
    return two_state(0.3, 0.6)


@pytest.fixture(scope="session")
def ind03(chain03):
    return indicator(chain03, 0)


def random_centered(m: int, seed: int, grid=None):
    """Seeded random chain with a centered random scalar observable."""
    from mwlab.models import Observable, center_observable

    rng = np.random.default_rng(seed)
    model = random_chain(m, rng)
    vals = rng.normal(size=m) if grid is None else rng.normal(size=(m, grid.size))
    return model, center_observable(model, Observable(vals, grid))


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines recorded by tests/test_acceptance.py."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "call") != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
