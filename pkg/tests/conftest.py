import pytest

from corrsim import ScenarioConfig, SeedSpec, WorldSpec
from corrsim.attackers import AttackerSpec
from corrsim.defenders import DefenderSpec, WrapperSpec

ACCEPTANCE_LINES = []


def scenario(k=10, n=10000, r=0.02, profile="deterministic", duplicate_rate=0.0, base="fixed_deterministic",
             wrappers=(), attacker="test_set", target=None, exploration=1.0, screen_budget=0,
             m_test=1000, episodes=1, seed=1234, tail_window=None):
    return ScenarioConfig(
        world=WorldSpec(k, n, r, profile, duplicate_rate),
        defender=DefenderSpec(base, tuple(WrapperSpec(kind, dict(params)) for kind, params in wrappers)),
        attacker=AttackerSpec(attacker, target, exploration, screen_budget),
        m_test=m_test,
        episodes=episodes,
        seed=SeedSpec(seed),
        tail_window=tail_window,
    )


@pytest.fixture
def make_scenario():
    return scenario


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
