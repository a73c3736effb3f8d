import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from fracphi.errors import CatalogError, ConstructionError, ResourceError
from fracphi.space import (
    build_space,
    catalog_lookup,
    graph_from_edges,
    known_names,
    product_space,
    register_product,
)

from conftest import space

LN2, LN3, LN5 = math.log(2), math.log(3), math.log(5)


def test_catalog_exponents():
    v = catalog_lookup("vicsek")
    assert (v.d_h, v.d_w, v.theta) == pytest.approx((LN5 / LN3, LN5 / LN3 + 1, 1.0))
    sg = catalog_lookup("sg")
    assert (sg.d_h, sg.d_w, sg.theta) == pytest.approx((LN3 / LN2, LN5 / LN2, LN5 / LN2 - LN3 / LN2))
    assert sg.theta == pytest.approx(0.737, abs=1e-3)
    t = catalog_lookup("torus2d")
    assert (t.d_h, t.d_w, t.theta) == (2.0, 2.0, 1.0)
    assert catalog_lookup("SG").name == "sg"


def test_catalog_ranges_and_spectral_dimension():
    for name in known_names():
        s = catalog_lookup(name)
        assert 0 < s.theta <= 1
        assert s.d_s == pytest.approx(2 * s.d_h / s.d_w)
        if not s.factors:
            assert 2 <= s.d_w <= s.d_h + 1 + 1e-12


def test_unknown_name_lists_known_names():
    with pytest.raises(CatalogError) as err:
        catalog_lookup("koch")
    for name in ("sg", "vicsek", "torus2d", "interval"):
        assert name in str(err.value)


def test_product_specs():
    sg2 = catalog_lookup("sg2")
    assert (sg2.d_h, sg2.d_w, sg2.theta) == pytest.approx((2 * LN3 / LN2, LN5 / LN2, LN5 / LN2 - LN3 / LN2))
    assert sg2.d_h == pytest.approx(3.170, abs=1e-3)
    assert catalog_lookup("sgxsg").d_h == pytest.approx(sg2.d_h)
    with pytest.raises(ConstructionError):
        catalog_lookup("sgxvicsek")
    spec = register_product("circ2", "circle", "circle")
    assert catalog_lookup("circ2") is spec


@pytest.mark.parametrize("level", range(5))
def test_sg_combinatorics(level):
    g = build_space("sg", level)
    assert g.n_vertices == 3 * (3**level + 1) // 2
    assert g.n_edges == 3 ** (level + 1)


@pytest.mark.parametrize("level", range(4))
def test_vicsek_combinatorics(level):
    g = build_space("vicsek", level)
    assert g.n_edges == 4 * 5**level
    assert g.n_vertices == g.n_edges + 1  # a tree


def test_small_examples():
    g = build_space("sg", 1)
    assert (g.n_vertices, g.n_edges) == (6, 9)
    t = build_space("torus2d", 16)
    assert (t.n_vertices, t.n_edges) == (256, 512)
    v = build_space("vicsek", 0)
    assert (v.n_vertices, v.n_edges) == (5, 4)
    center = np.bincount(v.edges.ravel()).argmax()
    assert np.bincount(v.edges.ravel())[center] == 4


@pytest.mark.parametrize("name, level", [("sg", 0), ("sg", 3), ("vicsek", 2), ("interval", 9), ("circle", 12), ("torus2d", 6), ("sg2", 2), ("vicsek2", 1)])
def test_graph_invariants(name, level):
    g = build_space(name, level)
    assert np.all(g.measure > 0)
    assert g.total_measure == pytest.approx(1.0, rel=1e-12)
    K = g.conductance_laplacian
    assert abs(K - K.T).max() == 0
    assert np.abs(K @ np.ones(g.n_vertices)).max() < 1e-9 * abs(K).max()
    assert np.all(g.conductances > 0)
    d = g.distances_from(0)
    assert np.all(np.isfinite(d))  # connected
    if g.n_vertices <= 400:
        assert g.distance_matrix().max() == pytest.approx(1.0)


def test_level_guard():
    with pytest.raises(ResourceError):
        build_space("sg", 14)
    with pytest.raises(ResourceError):
        build_space("sg", 4, max_vertices=10)


def test_product_vertex_count_and_incompatible_scaling():
    a, b = build_space("sg", 1), build_space("sg", 2)
    with pytest.raises(ConstructionError):
        product_space(a, b)
    p = product_space(a, build_space("sg", 1))
    assert p.n_vertices == 36


def _dense_spectrum(g):
    K = g.conductance_laplacian.toarray()
    return sla.eigh(K, np.diag(g.measure), eigvals_only=True)


def test_product_spectrum_is_pairwise_sums():
    a = build_space("sg", 1)
    p = product_space(a, build_space("sg", 1))
    la = _dense_spectrum(a)
    sums = np.sort((la[:, None] + la[None, :]).ravel())
    assert np.allclose(_dense_spectrum(p), sums, atol=1e-9 * sums.max())


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 7), st.integers(3, 7))
def test_lattice_product_spectrum_property(na, nb):
    a, b = build_space("circle", na), build_space("circle", nb)
    if a.laplacian_scale != b.laplacian_scale:
        with pytest.raises(ConstructionError):
            product_space(a, b)
        return
    p = product_space(a, b)
    la, lb = _dense_spectrum(a), _dense_spectrum(b)
    assert np.allclose(_dense_spectrum(p), np.sort((la[:, None] + lb[None, :]).ravel()), atol=1e-8)


def test_laplacian_application_matches_sparse_form():
    rng = np.random.default_rng(0)
    for name, level in (("sg", 3), ("sg2", 2), ("torus2d", 5)):
        g = space(name, level)
        f = rng.standard_normal(g.n_vertices)
        dense = (g.conductance_laplacian @ f) / g.measure
        assert np.allclose(g.apply_laplacian(f), dense, atol=1e-10 * np.abs(dense).max())
        F = rng.standard_normal((g.n_vertices, 3))
        assert np.allclose(g.apply_laplacian(F)[:, 1], g.apply_laplacian(F[:, 1]))


def test_dirichlet_energy_matches_generator():
    rng = np.random.default_rng(1)
    for name, level in (("vicsek", 2), ("sg2", 2)):
        g = space(name, level)
        u, v = rng.standard_normal((2, g.n_vertices))
        assert g.dirichlet_energy(u, v) == pytest.approx(g.inner(u, g.apply_laplacian(v)), rel=1e-10)
        assert g.dirichlet_energy(u, u) >= 0


def test_graph_from_edges_validation():
    with pytest.raises(ConstructionError):
        graph_from_edges(3, [(0, 1)])
    with pytest.raises(ConstructionError):
        graph_from_edges(2, [(0, 0)])
    with pytest.raises(ConstructionError):
        graph_from_edges(2, [(0, 1)], conductances=-1.0)
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert g.distance_matrix()[0, 3] == pytest.approx(1.0)


def test_json_adjacency_dump():
    d = build_space("sg", 1).to_json_dict()
    assert len(d["edges"]) == 9 and len(d["measure"]) == 6
    assert d["spec"]["name"] == "sg"
