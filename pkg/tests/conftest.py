import pytest

import habitpolicy as hp
from habitpolicy.params import derive_constants
from habitpolicy.simulate import PolicyTable


@pytest.fixture(scope="session")
def base_params():
    return hp.BASE_PARAMS


@pytest.fixture(scope="session")
def base_consts(base_params):
    return derive_constants(base_params)


@pytest.fixture(scope="session")
def base_policy(base_params):
    # one shared solve; several modules interrogate the same solution
    return hp.solve(base_params)


@pytest.fixture(scope="session")
def base_table(base_policy):
    return PolicyTable.build(base_policy)
