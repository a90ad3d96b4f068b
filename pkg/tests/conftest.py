import numpy as np
import pytest

from isobench import Problem, gen_gaussian, normalize_spectral

from oracles import synthetic_data


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if rep.when == "call" and marker is not None:
        verdict = "PASS" if rep.passed else "FAIL"
        print(f"\n[acceptance] {marker.args[0]}: {verdict}")


@pytest.fixture(scope="session")
def desk_instance():
    """The frozen 50x200 Gaussian-type workhorse instance."""
    op = normalize_spectral(gen_gaussian(50, 200, seed=21), 0.999)
    y = synthetic_data(op, seed=22, support=10, noise=0.01)
    return op, y


@pytest.fixture(scope="session")
def desk_problem(desk_instance):
    op, y = desk_instance
    return Problem(op, y, lam=0.0)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
