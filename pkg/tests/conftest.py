import os
import sys

import numpy as np
import pytest

from fairdecide.core import ScoredPopulation, UtilityParams

sys.path.insert(0, os.path.dirname(__file__))

# Beta-distributed reference populations: (seed, n0, n1, beta params g0, beta params g1)
REFERENCE_POPULATIONS = {
    1: (1, 20_000, 20_000, (1.9, 1.35), (3, 2)),
    2: (2, 20_000, 20_000, (2, 3), (3, 2)),
    3: (3, 20_000, 2_000, (2, 3), (3, 2)),
}
REFERENCE_UTILITY = UtilityParams(7, -3)


def beta_population(seed, n0, n1, a0, a1) -> ScoredPopulation:
    rng = np.random.default_rng(seed)
    p = np.concatenate([rng.beta(*a0, n0), rng.beta(*a1, n1)])
    g = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    return ScoredPopulation(p, g, groups=(0, 1))


def reference_population(k: int) -> ScoredPopulation:
    return beta_population(*REFERENCE_POPULATIONS[k])


@pytest.fixture(scope="session")
def populations():
    return {k: reference_population(k) for k in REFERENCE_POPULATIONS}


def random_small_population(rng, n_max=12, with_labels=True) -> ScoredPopulation:
    n = int(rng.integers(2, n_max + 1))
    p = rng.random(n).round(3)
    grp = rng.integers(0, 2, n)
    grp[0], grp[1] = 0, 1
    y = (rng.random(n) < p).astype(int) if with_labels else None
    return ScoredPopulation(p, grp, y, groups=(0, 1))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
