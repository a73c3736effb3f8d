import functools

import numpy as np
import pytest

from fracphi.space import build_space, graph_from_edges
from fracphi.spectral import decompose


@functools.lru_cache(maxsize=None)
def space(name: str, level: int):
    return build_space(name, level)


@functools.lru_cache(maxsize=None)
def spectral(name: str, level: int):
    return decompose(space(name, level))


@pytest.fixture(scope="session")
def two_vertex():
    """Unit conductance, unit measure on each vertex: lambda = {0, 2}."""
    return decompose(graph_from_edges(2, [(0, 1)], 1.0, 1.0))


@pytest.fixture(scope="session")
def path3():
    return decompose(graph_from_edges(3, [(0, 1), (1, 2)], 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_fields(sd, count, seed=0, s=None):
    """Heat-regularized white noise."""
    g = np.random.default_rng(seed)
    s = 10.0 * sd.graph.mesh_time if s is None else s
    from fracphi.spectral import apply_semigroup_op

    return apply_semigroup_op(sd, "P", s, 0, g.standard_normal((count, sd.n)))
