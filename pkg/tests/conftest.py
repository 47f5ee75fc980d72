"""Shared, session-scoped results of the expensive convergence runs."""

import time

import pytest

from elastweak.verify import convergence_study, manufactured_case

ACCEPTANCE = {}


def timed_study(*args, **kw):
    t0 = time.perf_counter()
    table = convergence_study(*args, **kw)
    table.seconds = time.perf_counter() - t0
    return table


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def trig_r0():
    return timed_study(manufactured_case("trig"), 0, [2, 4, 8])


@pytest.fixture(scope="session")
def trig_r1():
    return timed_study(manufactured_case("trig"), 1, [1, 2, 4])


@pytest.fixture(scope="session")
def trig_r0_stiff():
    return timed_study(manufactured_case("trig", lam=1e6), 0, [2, 4, 8])


@pytest.fixture(scope="session")
def trig_r0_simplified():
    return timed_study(manufactured_case("trig"), 0, [2, 4, 8], simplified=True)


@pytest.fixture(scope="session")
def infsup_stable():
    from elastweak.mesh import build_box_mesh
    from elastweak.verify import infsup_for_mesh
    return [infsup_for_mesh(build_box_mesh(n), 0) for n in (1, 2, 3, 4)]


@pytest.fixture(scope="session")
def infsup_control():
    from elastweak.mesh import build_box_mesh
    from elastweak.verify import infsup_for_mesh
    return [infsup_for_mesh(build_box_mesh(n), 0, control="rt-stress") for n in (1, 2, 3, 4)]


@pytest.fixture(scope="session")
def identity_report():
    from elastweak.verify import run_identity_suite
    return run_identity_suite(seed=0, trials=100)


@pytest.fixture(scope="session")
def commuting_reports():
    from elastweak.mesh import build_box_mesh
    from elastweak.verify import run_commuting_suite
    return {n: run_commuting_suite(build_box_mesh(n), 0, trials=20, seed=n) for n in (1, 2)}


@pytest.fixture(scope="session")
def exactness_reports():
    from elastweak.mesh import build_box_mesh
    from elastweak.verify import run_exactness_suite
    return {n: run_exactness_suite(build_box_mesh(n), 0) for n in (1, 2)}


@pytest.fixture(scope="session")
def simplified_report():
    from elastweak.mesh import build_box_mesh
    from elastweak.verify import run_simplified_suite
    return run_simplified_suite(build_box_mesh(1))


@pytest.fixture(scope="session")
def acceptance():
    """Record one summary line per criterion; printed after the run."""
    def record(k, passed, detail):
        ACCEPTANCE[k] = f"criterion {k}: {'PASS' if passed else 'FAIL'} | {detail}"
        print(ACCEPTANCE[k])
        return passed
    return record
