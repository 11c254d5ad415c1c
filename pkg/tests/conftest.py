import numpy as np
import pytest

from homoglab import cell, coeff


@pytest.fixture(scope="session")
def identity_field():
    return coeff.builtin("constant", value=np.eye(2))


@pytest.fixture(scope="session")
def layered_field():
    return coeff.builtin("layered")


@pytest.fixture(scope="session")
def layered_cell64(layered_field):
    return cell.solve(layered_field, 64)


@pytest.fixture(scope="session")
def layered_cell128(layered_field):
    return cell.solve(layered_field, 128)
