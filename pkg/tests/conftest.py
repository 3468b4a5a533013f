import functools

import numpy as np
import pytest

import ni_forge
import ni_forge.cli
import ni_forge.pipeline
import ni_forge.solver
from ni_forge.io import write_system
from ni_forge.lti import ModeSpec, flex_plant, tf_to_ss

# Every SolverResult produced in-process during the session, for suite-wide checks.
SOLVE_LOG = []


def _recording(fn):
    @functools.wraps(fn)
    def wrapper(problem, config=None):
        result = fn(problem, config)
        SOLVE_LOG.append((problem, result))
        return result

    return wrapper


_solve = _recording(ni_forge.solver.solve)
for _mod in (ni_forge.solver, ni_forge, ni_forge.cli, ni_forge.pipeline):
    _mod.solve = _solve

LQG1_NUM = [-1.593, 9.84, -12.58, 93.76]
LQG1_DEN = [1, 3.847, 26.66, 46.86, 125.1]
NILQG1_NUM = [13.75, 6.77, 132.5]
N2_MODES = [ModeSpec(2.0, 0.02), ModeSpec(4.0, 0.02)]
N5_MODES = [ModeSpec(2.0 * k, 0.02) for k in range(1, 6)]


@pytest.fixture
def lqg1():
    return tf_to_ss(LQG1_NUM, LQG1_DEN)


@pytest.fixture
def nilqg1():
    return tf_to_ss(NILQG1_NUM, LQG1_DEN)


@pytest.fixture
def plant_n2():
    return flex_plant(N2_MODES)


@pytest.fixture
def plant_n5():
    return flex_plant(N5_MODES)


@pytest.fixture
def files(tmp_path, lqg1, nilqg1, plant_n2, plant_n5):
    """System files for the example systems in a temporary directory."""
    paths = {}
    for name, sys in [("lqg1", lqg1), ("nilqg1", nilqg1), ("n2", plant_n2), ("n5", plant_n5)]:
        paths[name] = tmp_path / f"{name}.json"
        write_system(paths[name], sys, name)
    return paths


@pytest.fixture
def rng(request):
    seed = int.from_bytes(request.node.nodeid.encode()[-8:], "little") % (2**32)
    return np.random.default_rng(seed)


# -- acceptance criteria bookkeeping -------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "suite_wide: runs after every other test")
    config._criteria = {}


def pytest_collection_modifyitems(session, config, items):
    items.sort(key=lambda it: it.get_closest_marker("suite_wide") is not None)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    ok = report.passed if report.when == "call" else not report.failed
    crit = item.config._criteria
    crit[marker.args[0]] = crit.get(marker.args[0], True) and ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if crit[n] else 'FAIL'}")
