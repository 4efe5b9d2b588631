import numpy as np
import pytest

from leverbench.world import world_1, world_3


@pytest.fixture(scope="session")
def w1():
    return world_1()


@pytest.fixture(scope="session")
def w3():
    return world_3()


@pytest.fixture(scope="session")
def w125():
    """World-1 layout with object 1 fixed on the right and object 2 on the left: 125 inputs."""
    return world_1(sides=(-1, 1), name="world-1-fixed-sides")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
