import numpy as np
import pytest

from mfrelax import (E3Params, HopfParams, assemble_operators, box,
                     build_mesh, eval_e3, eval_hopf, init_divfree_field)


@pytest.fixture(scope="session")
def hopf_mesh():
    return build_mesh(box(4.0, 10.0), 4, 4, 10)


@pytest.fixture(scope="session")
def hopf_ops(hopf_mesh):
    return assemble_operators(hopf_mesh)


@pytest.fixture(scope="session")
def hopf_B0(hopf_mesh, hopf_ops):
    return init_divfree_field(hopf_mesh, hopf_ops,
                              lambda p: eval_hopf(p, HopfParams()))


@pytest.fixture(scope="session")
def e3_mesh():
    return build_mesh(box(4.0, 24.0), 4, 4, 24)


@pytest.fixture(scope="session")
def e3_ops(e3_mesh):
    return assemble_operators(e3_mesh)


@pytest.fixture(scope="session")
def e3_B0(e3_mesh, e3_ops):
    p = E3Params()
    return init_divfree_field(e3_mesh, e3_ops, lambda pts: eval_e3(pts, p),
                              subtract_background=p.background)


@pytest.fixture(scope="session")
def tiny_mesh():
    return build_mesh(box(1.0, 1.0), 2, 2, 2)


@pytest.fixture(scope="session")
def tiny_ops(tiny_mesh):
    return assemble_operators(tiny_mesh)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)
