import numpy as np
import pytest

from sgnn_lab import ADJACENCY, Rng, ShiftOperator, build_sbm


@pytest.fixture
def k2():
    return ShiftOperator(ADJACENCY, np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def k3():
    return ShiftOperator(ADJACENCY, np.ones((3, 3)) - np.eye(3))


@pytest.fixture
def p3():
    return ShiftOperator(ADJACENCY, np.diag([1.0, 1.0], 1) + np.diag([1.0, 1.0], -1))


@pytest.fixture
def p4():
    return ShiftOperator(ADJACENCY, np.diag([1.0, 1, 1], 1) + np.diag([1.0, 1, 1], -1))


@pytest.fixture
def star5():
    mat = np.zeros((6, 6))
    mat[0, 1:] = mat[1:, 0] = 1.0
    return ShiftOperator(ADJACENCY, mat)


@pytest.fixture
def random8():
    return build_sbm(8, 2, 0.9, 0.4, Rng(2024).child(0))
