"""Shared fixtures: a small synthetic cohort in raw and preprocessed form."""

import numpy as np
import pytest

from cfpolicy.cohort import assign_splits
from cfpolicy.preprocess import preprocess_cohort
from cfpolicy.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_config():
    return SynthConfig(n_patients=60, T=30, n_features=12, seed=3,
                       disparity_delta=0.5)


@pytest.fixture(scope="session")
def small_cohort(small_config):
    cohort, _ = generate(small_config)
    return assign_splits(cohort, seed=3)


@pytest.fixture(scope="session")
def small_truth(small_config):
    _, truth = generate(small_config)
    return truth


@pytest.fixture(scope="session")
def proc_cohort(small_cohort):
    return preprocess_cohort(small_cohort)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
