import dataclasses
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import biotfs as bf


@pytest.fixture(scope="session")
def params():
    return bf.MaterialParams(mu=41.667e9, lam=27.778e9, alpha=1.0, inv_m=0.0)


def _loaded_problem(n, params, t=0.1, tau=0.1):
    """Problem with first-step loads of the built-in sources applied."""
    prob = bf.build_problem(n, params, sources="manufactured")
    sys_run = dataclasses.replace(prob.system)
    sys_run.f = bf.assemble_momentum_load(prob.mesh, prob.dofs, prob.body_force, t)[
        prob.dofs.free_u
    ]
    moment = bf.assemble_source_moment(prob.mesh, prob.dofs, prob.fluid_source, t)
    sys_run.g = tau * moment[prob.dofs.free_p]
    sys_run.prepare()
    prob.system = sys_run
    return prob


@pytest.fixture(scope="session")
def problem4(params):
    return _loaded_problem(4, params)


@pytest.fixture(scope="session")
def problem8(params):
    return _loaded_problem(8, params)


@pytest.fixture(scope="session")
def dense_eigen8(problem8):
    """Dense Schur pencil eigendata on the n=8 problem."""
    s = bf.dense_schur(problem8.system)
    mp = problem8.system.Mp.toarray()
    w, v = bf.dense_generalized_symmetric_eigen(s, mp)
    return w, v


@pytest.fixture(scope="session")
def dense_eigen4(problem4):
    s = bf.dense_schur(problem4.system)
    mp = problem4.system.Mp.toarray()
    w, v = bf.dense_generalized_symmetric_eigen(s, mp)
    return w, v
