import numpy as np
import pytest

import basincontrol._network_kernels as kernels
from basincontrol import ControlParams, ConstraintSet, build_system


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile (or load from cache) the network kernels once, outside any
    # timed assertions.
    kernels.warmup()


@pytest.fixture(scope="session")
def double_well():
    return build_system("double_well_particle", (1.0,))


@pytest.fixture(scope="session")
def dw_params():
    return ControlParams(eps0=1e-3, eps1=5e-2, it_max=500, t_max=10.0,
                         dt=0.01, t_test=100.0, tol=1e-2)


@pytest.fixture()
def frozen_position_cs():
    return ConstraintSet(lb=np.array([-1.0, -np.inf]),
                         ub=np.array([-1.0, np.inf]))
