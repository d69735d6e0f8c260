import numpy as np
import pytest

from msmw.model import Gaussian, Lattice, MarkovKernel, SemiMarkovModel, Uniform


def _lat(min_index, weights, span=1.0):
    return Lattice(span, min_index, tuple(weights))


@pytest.fixture(scope="session")
def srw():
    """Simple +/-1 random walk: one state, fair steps."""
    return SemiMarkovModel(
        kernel=MarkovKernel([[1.0]]),
        steps=((_lat(-1, (0.5, 0.0, 0.5)),),),
        moment_window=1.0,
        name="srw",
    )


@pytest.fixture(scope="session")
def two_state():
    """p = [[1/2, 1/2], [1/2, 1/2]]; +1 steps from state 0, -1 from state 1.

    k(lambda) = cosh(lambda), second eigenvalue 0, sigma^2 = 1.
    """
    up = _lat(1, (1.0,))
    dn = _lat(-1, (1.0,))
    return SemiMarkovModel(
        kernel=MarkovKernel([[0.5, 0.5], [0.5, 0.5]]),
        steps=((up, up), (dn, dn)),
        moment_window=1.0,
        name="two-state",
    )


@pytest.fixture(scope="session")
def three_state():
    """Symmetric-drift three-state lattice model with a 0 atom in one row.

    States 0/1 step deterministically +1/-1, state 2 steps {-1, 0, +1} with
    weights (1/4, 1/2, 1/4); nu = (5, 5, 8)/18 so the global drift vanishes
    exactly, and the centering shifts are integers.
    """
    up = _lat(1, (1.0,))
    dn = _lat(-1, (1.0,))
    mid = _lat(-1, (0.25, 0.5, 0.25))
    return SemiMarkovModel(
        kernel=MarkovKernel([[0.3, 0.3, 0.4], [0.3, 0.3, 0.4], [0.25, 0.25, 0.5]]),
        steps=((up, up, up), (dn, dn, dn), (mid, mid, mid)),
        moment_window=1.0,
        name="three-state",
    )


@pytest.fixture(scope="session")
def lattice_battery(srw, two_state, three_state):
    return [srw, two_state, three_state]


@pytest.fixture(scope="session")
def gaussian_model():
    return SemiMarkovModel(
        kernel=MarkovKernel([[1.0]]),
        steps=((Gaussian(0.0, 1.0),),),
        moment_window=2.0,
        spread_out=True,
        name="gaussian",
    )


@pytest.fixture(scope="session")
def uniform_model():
    return SemiMarkovModel(
        kernel=MarkovKernel([[1.0]]),
        steps=((Uniform(-1.0, 1.0),),),
        moment_window=2.0,
        spread_out=True,
        name="uniform",
    )


@pytest.fixture(scope="session")
def dirac_model():
    """Steps identically 0: the degenerate deterministic cocycle."""
    return SemiMarkovModel(
        kernel=MarkovKernel([[1.0]]),
        steps=((_lat(0, (1.0,)),),),
        moment_window=1.0,
        name="dirac",
    )


@pytest.fixture(scope="session")
def drifted_model():
    """One state, lattice steps with mean 1/2 (violates H3)."""
    return SemiMarkovModel(
        kernel=MarkovKernel([[1.0]]),
        steps=((_lat(0, (0.5, 0.5)),),),
        moment_window=1.0,
        name="drifted",
    )


@pytest.fixture(scope="session")
def offlattice_shift_model():
    """Two-state model whose centering shifts are 2/3 of the span, forcing
    the common-refinement path in center()."""
    up = _lat(1, (1.0,))
    dn = _lat(-1, (1.0,))
    # p00 - p01 = -1/2 makes v an eigenvector with eigenvalue -1/2, so the
    # centering potential is v / (3/2) = (2/3, -2/3)
    return SemiMarkovModel(
        kernel=MarkovKernel([[0.25, 0.75], [0.75, 0.25]]),
        steps=((up, up), (dn, dn)),
        moment_window=1.0,
        name="off-lattice-shift",
    )
