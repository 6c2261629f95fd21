import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clusterens import datagen

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset():
    means = datagen.gen_means_on_sphere(3, 4, 1.0, seed=1)
    clusters = [datagen.ClusterSpec("gaussian", 50, 4, mean=means[t]) for t in range(3)]
    outcome = datagen.gen_beta(4, 4, seed=2, noise_sd=0.5)
    return datagen.make_dataset(clusters, outcome, seed=3)
