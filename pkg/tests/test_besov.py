import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracphi.besov import (
    BesovParams,
    besov_norm_dyadic,
    besov_norm_integral,
    default_j_max,
    default_t_grid,
    holder_norm,
    interpolated_params,
    l2_duality_constant,
    log_trapezoid_weights,
    lp_norm,
    regularization_ratio,
)
from fracphi.errors import DomainError, ParameterError
from fracphi.extended import INF
from fracphi.space import graph_from_edges
from fracphi.spectral import decompose

from conftest import smooth_fields, spectral


def test_params_validation():
    with pytest.raises(ParameterError):
        BesovParams(1.0, p=0.5)
    with pytest.raises(ParameterError):
        BesovParams(1.0, k=0)
    with pytest.raises(ParameterError):
        BesovParams(5.0, k=2).validate(2.0)  # k must exceed alpha/d_w = 2.5
    BesovParams(3.9, k=2).validate(2.0)
    c = BesovParams(0.5, 4.0, 1.0).conjugate()
    assert c.alpha == -0.5 and c.p == pytest.approx(4 / 3) and c.q is INF


def test_lp_norm_basics():
    mu = np.array([0.25, 0.75])
    f = np.array([2.0, -1.0])
    assert lp_norm(f, mu, INF) == 2.0
    assert lp_norm(f, mu, 1.0) == pytest.approx(1.25)
    assert lp_norm(f, mu, 2.0) == pytest.approx(math.sqrt(1.75))
    assert lp_norm(f, mu, 3.0) == pytest.approx((8 * 0.25 + 0.75) ** (1 / 3))


@pytest.mark.parametrize("p, q", [(2.0, 2.0), (INF, INF), (1.0, 3.0)])
def test_constant_field(p, q):
    sd = spectral("sg", 3)
    params = BesovParams(0.7, p, q, 1)
    for norm in (besov_norm_dyadic, besov_norm_integral):
        r = norm(sd, np.full(sd.n, -3.0), params)
        assert r.semi_part < 1e-9
        assert r.total == pytest.approx(3.0, rel=1e-9)


def test_eigenfunction_dyadic_closed_form():
    sd = spectral("sg", 3)
    d_w = sd.graph.spec.d_w
    alpha, k = 0.6, 1
    for m in (1, 7, 20):
        phi = sd.eigenvector(m)
        lam = sd.eigenvalues[m]
        j_max = default_j_max(sd.graph, d_w)
        j = np.arange(j_max + 1)
        t = 2.0 ** (-d_w * j)
        expect = np.max(2.0 ** (j * alpha) * (t * lam) ** k * np.exp(-t * lam)) * np.abs(phi).max()
        r = besov_norm_dyadic(sd, phi, BesovParams(alpha, INF, INF, k))
        assert r.semi_part == pytest.approx(expect, rel=1e-10)
        assert r.p1_part == pytest.approx(math.exp(-lam) * np.abs(phi).max(), rel=1e-8, abs=1e-14)


def test_eigenfunction_integral_sup_closed_form():
    sd = spectral("sg", 3)
    d_w = sd.graph.spec.d_w
    grid = default_t_grid(sd.graph)
    phi = sd.eigenvector(4)
    lam = sd.eigenvalues[4]
    expect = np.max(grid ** (-0.5 / d_w) * (grid * lam) ** 2 * np.exp(-grid * lam)) * np.abs(phi).max()
    r = besov_norm_integral(sd, phi, BesovParams(0.5, INF, INF, 2))
    assert r.semi_part == pytest.approx(expect, rel=1e-10)
    assert r.quadrature["rule"] == "grid-sup"


def test_three_vertex_path_brute_force(path3):
    """f = phi_1 + phi_2 on a 3-vertex path, dyadic terms evaluated by matrix exponentials."""
    from scipy.linalg import expm

    sd = path3
    g = sd.graph
    L = np.diag(1 / g.measure) @ g.conductance_laplacian.toarray()
    f = sd.eigenvector(1) + sd.eigenvector(2)
    d_w, alpha, k, j_max = 2.0, 0.8, 1, 6
    terms = []
    for j in range(j_max + 1):
        t = 2.0 ** (-d_w * j)
        Aj = np.linalg.matrix_power(t * L, k) @ expm(-t * L) @ f
        terms.append(2.0 ** (j * alpha) * np.sqrt((Aj**2) @ g.measure))
    p1 = np.sqrt(((expm(-L) @ f) ** 2) @ g.measure)
    expect = p1 + np.sqrt(np.sum(np.array(terms) ** 2))
    r = besov_norm_dyadic(sd, f, BesovParams(alpha, 2.0, 2.0, k), j_max=j_max, d_w=d_w)
    assert r.total == pytest.approx(expect, rel=1e-12)
    assert r.total == pytest.approx(r.p1_part + r.semi_part)


def test_j_max_below_mesh_rejected():
    sd = spectral("sg", 3)
    with pytest.raises(ParameterError):
        besov_norm_dyadic(sd, np.ones(sd.n), BesovParams(0.5), j_max=12)


def test_integral_grid_validation():
    sd = spectral("sg", 2)
    with pytest.raises(ParameterError):
        besov_norm_integral(sd, np.ones(sd.n), BesovParams(0.5), t_grid=np.array([]))
    with pytest.raises(ParameterError):
        besov_norm_integral(sd, np.ones(sd.n), BesovParams(0.5), t_grid=np.array([0.5, 2.0]))


def test_log_trapezoid_weights_integrate_power():
    grid = np.geomspace(1e-4, 1, 400)
    w = log_trapezoid_weights(grid)
    assert w @ grid**0.5 == pytest.approx(2 * (1 - 1e-2), rel=1e-4)
    assert w.sum() == pytest.approx(math.log(1e4))


def test_grid_id_is_reproducible():
    sd = spectral("sg", 3)
    f = smooth_fields(sd, 1)[0]
    a = besov_norm_integral(sd, f, BesovParams(0.5, 2, 2))
    b = besov_norm_integral(sd, f, BesovParams(0.5, 2, 2))
    assert a.grid_id == b.grid_id and a.total == b.total


def _interp_check(sd, norm, a, b, fields):
    for eta in (0.2, 0.5, 0.8):
        mid = interpolated_params(a, b, eta)
        for f in fields:
            lhs = norm(sd, f, mid).total
            rhs = norm(sd, f, a).total ** eta * norm(sd, f, b).total ** (1 - eta)
            assert lhs <= rhs * (1 + 1e-8)


@pytest.mark.parametrize("norm", [besov_norm_dyadic, besov_norm_integral])
def test_interpolation_inequality(norm):
    sd = spectral("sg", 3)
    fields = list(smooth_fields(sd, 10, seed=7, s=sd.graph.mesh_time))
    _interp_check(sd, norm, BesovParams(1.0, 2.0, 1.0, 1), BesovParams(-0.5, INF, 4.0, 1), fields)
    _interp_check(sd, norm, BesovParams(0.2, 1.0, INF, 1), BesovParams(1.5, 3.0, 2.0, 1), fields)


def test_interpolated_params_endpoints():
    a, b = BesovParams(1.0, 2.0, INF), BesovParams(0.0, INF, 1.0)
    m = interpolated_params(a, b, 0.5)
    assert m.alpha == 0.5 and m.p == pytest.approx(4.0) and m.q == pytest.approx(2.0)
    assert interpolated_params(a, b, 1.0).p == 2.0
    with pytest.raises(DomainError):
        interpolated_params(a, b, 1.5)


@pytest.mark.parametrize("form", ["dyadic", "integral"])
def test_l2_duality_inequality(form):
    norm = besov_norm_dyadic if form == "dyadic" else besov_norm_integral
    for level in (3, 4):
        sd = spectral("sg", level)
        C = l2_duality_constant(sd, 0.5, 1, form)
        rng = np.random.default_rng(level)
        fs = np.concatenate([smooth_fields(sd, 10, seed=level), rng.standard_normal((10, sd.n))])
        gs = np.concatenate([rng.standard_normal((10, sd.n)), smooth_fields(sd, 10, seed=level + 10)])
        pf, pg = BesovParams(0.5, 2.0, 2.0, 1), BesovParams(-0.5, 2.0, 2.0, 1)
        for f, g in zip(fs, gs):
            lhs = abs(sd.graph.inner(f, g))
            assert lhs <= C * norm(sd, f, pf).total * norm(sd, g, pg).total * (1 + 1e-8)
        # eigenfunction pairs are the extremal directions
        for m in (1, 5, sd.n // 2):
            phi = sd.eigenvector(m)
            assert 1.0 <= C * norm(sd, phi, pf).total * norm(sd, phi, pg).total * (1 + 1e-8)


def test_duality_constant_stable_across_levels():
    """Recorded constant over the low eigenmodes (which converge with the level), p = 4 against p' = 4/3."""
    pf, pg = BesovParams(0.5, 4.0, 2.0, 1), BesovParams(-0.5, 4 / 3, 2.0, 1)
    consts = []
    for level in (4, 5, 6):
        sd = spectral("sg", level)
        consts.append(max(
            1.0 / (besov_norm_dyadic(sd, phi, pf).total * besov_norm_dyadic(sd, phi, pg).total)
            for phi in (sd.eigenvector(m) for m in range(9))
        ))
    assert max(consts) / min(consts) < 1.2


def test_monotone_embedding_of_dyadic_sup_seminorm():
    sd = spectral("sg", 4)
    for f in smooth_fields(sd, 10, seed=3):
        a = besov_norm_dyadic(sd, f, BesovParams(0.3, 2.0, INF, 1)).semi_part
        b = besov_norm_dyadic(sd, f, BesovParams(0.9, 2.0, INF, 1)).semi_part
        assert a <= b * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(-1.0, 1.0), st.floats(0.0, 2.0), st.integers(1, 3))
def test_heat_regularization_ratio(s, alpha, extra, b):
    sd = spectral("sg", 3)
    d_w = sd.graph.spec.d_w
    sigma = alpha + extra
    if b < (sigma - alpha) / d_w:
        return
    k = max(1, math.ceil(max(alpha, 0) / d_w + 1e-9))
    f = np.random.default_rng(9).standard_normal(sd.n)
    r = regularization_ratio(sd, f, s, b, alpha, sigma, k, INF, default_t_grid(sd.graph))
    assert r <= 1 + 1e-8


def test_holder_norm_examples():
    g = graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    assert holder_norm(g, np.full(5, -2.0), 0.5) == pytest.approx(2.0)
    f = g.distances_from(0)[0]
    assert holder_norm(g, f, 1.0) == pytest.approx(np.abs(f).max() + 1.0)
    with pytest.raises(DomainError):
        holder_norm(g, f, 0.0)


def test_holder_besov_comparison_is_bounded():
    """Two-sided ratio for sigma < Theta on smooth fields; recorded, not assumed."""
    ratios = []
    for level in (3, 4):
        sd = spectral("sg", level)
        sigma = 0.5
        for f in smooth_fields(sd, 10, seed=4):
            b = besov_norm_dyadic(sd, f, BesovParams(sigma, INF, INF, 1)).total
            ratios.append(b / holder_norm(sd.graph, f, sigma))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios)) and ratios.min() > 0.05 and ratios.max() < 20
