import pytest

from affinekg._backend import BACKENDS
from affinekg.subspace import AffineSubspace, Ball


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def desk_H():
    return AffineSubspace.from_matrix([["sqrt2 - 1"], ["sqrt3 - 1"]])


@pytest.fixture(scope="session")
def desk_U():
    return Ball((0.0,), 0.5)
