import numpy as np
import pytest
from dsmin.models.schemas import InnerMode, SolverConfig
from dsmin.services.setfn import random_cover_instance, tiny_a, tiny_c, tiny_d


@pytest.fixture
def tiny_a_inst():
    """Nested covers; minimum −2 at {2}"""
    return tiny_a()


@pytest.fixture
def tiny_c_inst():
    """{0} is a weak local minimum; optimum −1 at {1, 2}"""
    return tiny_c()


@pytest.fixture
def tiny_d_inst():
    return tiny_d()


@pytest.fixture
def random_instances():
    """Ten random set-cover DS instances with 3 to 7 elements"""
    rng = np.random.default_rng(7)
    return [random_cover_instance(rng, int(rng.integers(3, 8))) for _ in range(10)]


@pytest.fixture
def exact_cfg():
    return SolverConfig(rho=0.0, inner_mode=InnerMode.EXACT, localmin_restart=False)
