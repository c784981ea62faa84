import numpy as np
import pytest
from hypothesis import settings

from unimodal_clt.maps import TentFamily

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def tent():
    return TentFamily()


def orbit_histogram(t, bins, steps, orbits=1000, burn_in=200, seed=0):
    """Normalised histogram of many parallel tent orbits (density oracle)."""
    rng = np.random.default_rng(seed)
    x = rng.random(orbits)
    for _ in range(burn_in):
        x = np.where(x < 0.5, t * x, t - t * x)
    counts = np.zeros(bins)
    for _ in range(steps // orbits):
        counts += np.bincount(np.minimum((x * bins).astype(np.int64), bins - 1), minlength=bins)
        x = np.where(x < 0.5, t * x, t - t * x)
    return counts * bins / counts.sum()


def birkhoff_average(t, phi, steps, orbits=1000, burn_in=200, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.random(orbits)
    for _ in range(burn_in):
        x = np.where(x < 0.5, t * x, t - t * x)
    acc = 0.0
    per = steps // orbits
    for _ in range(per):
        acc += phi(x).sum()
        x = np.where(x < 0.5, t * x, t - t * x)
    return acc / (per * orbits)


def coarse(values, bins):
    return np.asarray(values).reshape(bins, -1).mean(axis=1)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = []


@pytest.fixture
def criterion():
    """report(label, ok, detail) records one pass/fail line for the summary."""

    def report(label, ok, detail):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} | {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
