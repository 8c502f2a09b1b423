"""Shared fixtures: the worked step slab, the uniform medium and a graded core."""

import numpy as np
import pytest

from slabguide.green import build_evaluator
from slabguide.modal import WaveguideProfile, find_guided_modes, parabolic_core


@pytest.fixture(scope="session")
def slab():
    return WaveguideProfile(k=5.0, h=0.2, n_co=2.0, n_cl=1.0, label="step slab")


@pytest.fixture(scope="session")
def uniform():
    return WaveguideProfile(k=5.0, h=0.2, n_co=1.0, n_cl=1.0, label="uniform")


@pytest.fixture(scope="session")
def graded():
    return WaveguideProfile(k=5.0, h=0.4, n_co=parabolic_core(1.8, 1.2, 0.4), n_cl=1.0, label="parabolic")


@pytest.fixture(scope="session")
def gentle():
    """Weakly guiding slab with long wavelengths, for stencil-level checks."""
    return WaveguideProfile(k=2.0, h=0.5, n_co=1.5, n_cl=1.0)


@pytest.fixture(scope="session")
def slab_modes(slab):
    return find_guided_modes(slab)


@pytest.fixture(scope="session")
def slab_ev(slab):
    return build_evaluator(slab, tol=1e-6)


@pytest.fixture(scope="session")
def uniform_ev(uniform):
    return build_evaluator(uniform, tol=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
