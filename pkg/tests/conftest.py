import numpy as np
import pytest

from frozen_planet import _backend
from frozen_planet.action import ActionContext
from frozen_planet.kepler import brake_orbit
from frozen_planet.mountainpass import MinimaxConfig, solve
from frozen_planet.potentials import SmoothedPotentials, helium, power_law


@pytest.fixture(scope="session")
def helium_sp():
    return SmoothedPotentials(helium(), 1e-3, 1e-3)


@pytest.fixture(scope="session")
def kepler_sp():
    """``f = 1/s`` with a tiny regularization radius."""
    return SmoothedPotentials(power_law(1.0, 1.0, 1.0, 1.0), 1e-7, 1e-7)


@pytest.fixture(scope="session")
def helium_ctx(helium_sp):
    return ActionContext(helium_sp, 1.0, 1.0, 512)


@pytest.fixture(scope="session")
def helium_brake(helium_sp):
    return brake_orbit(helium_sp, 1.0, 512)


@pytest.fixture(scope="session")
def helium_result(helium_ctx, helium_brake):
    """Default end-to-end solve: T=1, n=512, M=64, eps=1e-3, mu=1."""
    return solve(helium_ctx, MinimaxConfig(), brake=helium_brake)


@pytest.fixture(params=["python", "compiled"])
def backend(request):
    """Run a test once per kernel backend (compiled skipped when not built)."""
    if request.param == "compiled" and not _backend.compiled_available():
        pytest.skip("compiled kernels not built")
    before = _backend.name()
    _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(before)


def smooth_trajectory(T=1.0, n=128, seed=0, amp=0.05):
    """A trajectory in the admissible set with random smooth perturbations."""
    from frozen_planet.trajectory import Trajectory
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, T, n + 1) / T
    modes = np.arange(1, 5)
    c1 = amp * rng.standard_normal(modes.size)
    c2 = amp * rng.standard_normal(modes.size)
    q1 = np.sin(0.5 * np.pi * t) ** (2 / 3) + np.sin(np.outer(t, modes) * np.pi) @ c1
    q1[0] = 0.0
    q2 = 2.5 - 0.4 * t ** 2 + np.cos(np.outer(t, modes) * np.pi) @ c2
    return Trajectory(T, q1, q2)


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    # one line per test: the call phase, or a setup phase that errored or skipped
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    item.config.stash[ACCEPTANCE][mark.args[0]] = f"criterion {mark.args[0]:2d}: {status}  {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
