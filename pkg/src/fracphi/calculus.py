"""Energy measure, paraproducts and the resolution operator.

The paraproduct follows from differentiating
``F(t) = P_t^{(b)}(P_t^{(b)} f * P_t^{(b)} g)`` in ``t``: since
``t d/dt P_t^{(b)} = -Q_t^{(b)} / (b-1)!`` and
``tL(uv) = u tLv + v tLu - 2t Gamma(u, v)`` holds exactly on a graph, the
pieces below add up to ``f g`` up to quadrature error alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammainc

from .besov import BesovParams, besov_norm_dyadic, lp_norm
from .errors import DomainError, ParameterError
from .fields import TrajectorySample, as_field
from .space import GraphApproximation
from .spectral import SpectralDecomposition, multiplier


def gamma_k(k: int) -> float:
    """Normalizing constant of the Calderón formula, (k-1)!."""
    if k < 1:
        raise ParameterError("gamma_k needs k >= 1")
    return float(math.factorial(k - 1))


def calderon_residual(lam: np.ndarray, k: int) -> np.ndarray:
    """Per-eigenvalue residual of ``(1/gamma_k) int_0^1 (t lam)^k e^{-t lam} dt/t + P_1^{(k)} = 1``.

    The integral is the regularized lower incomplete gamma ``P(k, lam)``;
    ``P_1^{(k)}`` is evaluated as the explicit finite sum.
    """
    lam = np.asarray(lam, dtype=float)
    integral = gammainc(k, lam)
    tail = multiplier("P_sum", 1.0, k, lam)
    return np.abs(integral + tail - 1.0)


# ---------------------------------------------------------------------------
# energy measure


@dataclass
class EnergyMeasure:
    graph: GraphApproximation
    density: np.ndarray

    def total(self) -> float:
        return float(self.density @ self.graph.measure)

    def integrate(self, h: np.ndarray) -> float:
        return float((np.asarray(h) * self.density) @ self.graph.measure)


def gamma_density(graph: GraphApproximation, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``1/2 (u Lv + v Lu - L(uv))`` along the last axis (batched)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.ndim == 1:
        return 0.5 * (u * graph.apply_laplacian(v) + v * graph.apply_laplacian(u) - graph.apply_laplacian(u * v))
    Lu = graph.apply_laplacian(u.T).T
    Lv = graph.apply_laplacian(v.T).T
    Luv = graph.apply_laplacian((u * v).T).T
    return 0.5 * (u * Lv + v * Lu - Luv)


def energy_measure(sd: SpectralDecomposition | GraphApproximation, u: np.ndarray, v: np.ndarray) -> EnergyMeasure:
    graph = sd.graph if isinstance(sd, SpectralDecomposition) else sd
    u = as_field(u, graph.n_vertices, "u")
    v = as_field(v, graph.n_vertices, "v")
    return EnergyMeasure(graph, gamma_density(graph, u, v))


def dirichlet_energy(graph: GraphApproximation, u: np.ndarray, v: np.ndarray) -> float:
    """``E(u, v) = sum over edges of c_xy (u(x)-u(y)) (v(x)-v(y))``."""
    if isinstance(graph, SpectralDecomposition):
        graph = graph.graph
    return graph.dirichlet_energy(as_field(u, graph.n_vertices, "u"), as_field(v, graph.n_vertices, "v"))


# ---------------------------------------------------------------------------
# paraproduct


@dataclass
class TimeQuadrature:
    """Nodes and weights for integrals ``int_0^1 h(t) dt/t``.

    ``weights`` integrates over ``[nodes[1], 1]`` (or the whole node set for a
    plain geometric grid); ``head_weight`` multiplies the integrand at
    ``t_min = nodes[0]`` to account for ``(0, t_min)`` assuming ``h ~ t^b``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    description: dict = field(default_factory=dict)


def log_gauss_quadrature(t_min: float, n_nodes: int = 512, order: int = 16) -> TimeQuadrature:
    """Composite Gauss-Legendre rule in ``u = log t`` on ``[t_min, 1]``."""
    if not 0 < t_min < 1:
        raise ParameterError("t_min must lie in (0, 1)")
    panels = max(1, n_nodes // order)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(math.log(t_min), 0.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    return TimeQuadrature(
        np.exp(u), wu,
        {"rule": "gauss-legendre-log", "t_min": t_min, "nodes": int(u.size), "panels": panels, "order": order},
    )


def geometric_quadrature(grid: np.ndarray) -> TimeQuadrature:
    """Log-trapezoid weights on a user supplied geometric grid."""
    from .besov import log_trapezoid_weights

    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(grid <= 0) or np.any(grid > 1 + 1e-12) or np.any(np.diff(grid) <= 0):
        raise ParameterError("t grid must be increasing inside (0, 1] with at least two points")
    return TimeQuadrature(grid, log_trapezoid_weights(grid), {"rule": "log-trapezoid", "t_min": float(grid[0]), "nodes": int(grid.size)})


def default_paraproduct_quadrature(sd: SpectralDecomposition, n_nodes: int = 512) -> TimeQuadrature:
    lam_max = float(sd.mode_eigenvalues.max())
    t_min = min(1e-3 / lam_max, 1e-3) if lam_max > 0 else 1e-3
    return log_gauss_quadrature(t_min, n_nodes)


@dataclass
class ParaproductParts:
    pi_g_f: np.ndarray
    pi_f_g: np.ndarray
    resonant: np.ndarray
    tail: np.ndarray
    b: int
    quadrature: dict = field(default_factory=dict)

    def reconstruction(self) -> np.ndarray:
        return self.pi_g_f + self.pi_f_g + self.resonant + self.tail

    def csv_rows(self) -> list[tuple]:
        return [
            (i, a, b_, c, d)
            for i, (a, b_, c, d) in enumerate(zip(self.pi_g_f, self.pi_f_g, self.resonant, self.tail))
        ]


def _integrands(sd: SpectralDecomposition, cf: np.ndarray, cg: np.ndarray, ts: np.ndarray, b: int):
    """Integrand values of the three paraproduct pieces at the times ``ts``."""
    graph = sd.graph
    lam = sd.mode_eigenvalues
    mP = np.stack([multiplier("P_sum", t, b, lam) for t in ts])
    mQ = np.stack([multiplier("Q", t, b - 1, lam) for t in ts])
    mLP = ts[:, None] * lam[None, :] * mP
    fr = sd.from_modes
    to = sd.to_modes
    Qf, Qg = fr(cf * mQ), fr(cg * mQ)
    Pf, Pg = fr(cf * mP), fr(cg * mP)
    LPf, LPg = fr(cf * mLP), fr(cg * mLP)

    def tgamma(u, v):
        return ts[:, None] * gamma_density(graph, u, v)

    pi_g_f = fr(mLP * to(Qf * Pg)) + fr(mQ * to(LPf * Pg))
    pi_f_g = fr(mLP * to(Qg * Pf)) + fr(mQ * to(LPg * Pf))
    s_fg = fr(mP * to(2.0 * tgamma(Qf, Pg) - Qf * LPg))
    s_gf = fr(mP * to(2.0 * tgamma(Qg, Pf) - Qg * LPf))
    r = -2.0 * fr(mQ * to(tgamma(Pf, Pg)))
    return pi_g_f, pi_f_g, s_fg + s_gf + r


def paraproduct(
    sd: SpectralDecomposition,
    f: np.ndarray,
    g: np.ndarray,
    b: int = 2,
    t_grid: np.ndarray | TimeQuadrature | None = None,
    batch: int = 64,
) -> ParaproductParts:
    """Split ``f g`` into ``Pi_g(f) + Pi_f(g) + Pi(f, g) + Delta_{-1}``."""
    if int(b) != b or b < 2:
        raise ParameterError(f"paraproduct needs an integer b >= 2, got {b!r}")
    n = sd.n
    f = as_field(f, n, "f")
    g = as_field(g, n, "g")
    if t_grid is None:
        quad = default_paraproduct_quadrature(sd)
    elif isinstance(t_grid, TimeQuadrature):
        quad = t_grid
    else:
        quad = geometric_quadrature(t_grid)
    cf, cg = sd.to_modes(f), sd.to_modes(g)
    acc = [np.zeros(n), np.zeros(n), np.zeros(n)]
    nodes, weights = quad.nodes, quad.weights
    for start in range(0, nodes.size, batch):
        ts = nodes[start : start + batch]
        ws = weights[start : start + batch]
        for i, part in enumerate(_integrands(sd, cf, cg, ts, b)):
            acc[i] += ws @ part
    # (0, t_min): every integrand behaves like t^b there
    t0 = np.array([float(nodes.min())])
    for i, part in enumerate(_integrands(sd, cf, cg, t0, b)):
        acc[i] += part[0] / b
    gb = gamma_k(b)
    m1 = multiplier("P_sum", 1.0, b, sd.mode_eigenvalues)
    tail = sd.from_modes(m1 * sd.to_modes(sd.from_modes(cf * m1) * sd.from_modes(cg * m1)))
    desc = dict(quad.description, b=int(b), endpoint_correction="t^b")
    return ParaproductParts(acc[0] / gb, acc[1] / gb, acc[2] / gb, tail, int(b), desc)


def product_estimate_ratio(
    sd: SpectralDecomposition, f: np.ndarray, g: np.ndarray, alpha: float, beta: float, k: int = 2
) -> float:
    """``||fg||_{B^{alpha ^ beta}} / (||f||_{B^alpha} ||g||_{B^beta})`` (dyadic, p = q = inf)."""
    num = besov_norm_dyadic(sd, np.asarray(f) * np.asarray(g), BesovParams(min(alpha, beta), "inf", "inf", k)).total
    den = (
        besov_norm_dyadic(sd, f, BesovParams(alpha, "inf", "inf", k)).total
        * besov_norm_dyadic(sd, g, BesovParams(beta, "inf", "inf", k)).total
    )
    return num / den


# ---------------------------------------------------------------------------
# resolution operator


def _psum_primitive(lam: np.ndarray, T: np.ndarray, k: int) -> np.ndarray:
    """``G(T) = int_0^T sum_{m<k} (s lam)^m/m! e^{-s lam} ds``, shape ``(len(T), len(lam))``."""
    T = np.asarray(T, dtype=float)[:, None]
    lam = np.asarray(lam, dtype=float)[None, :]
    out = np.empty((T.shape[0], lam.shape[1]))
    pos = lam[0] > 0
    x = T * lam[:, pos]
    acc = np.zeros_like(x)
    for m in range(k):
        acc += gammainc(m + 1, x)
    out[:, pos] = acc / lam[:, pos]
    out[:, ~pos] = T
    return out


def resolution(sd: SpectralDecomposition, v_path: TrajectorySample, k: int = 1) -> TrajectorySample:
    """``R^{(k)}(v)_t = int_0^t P_{t-s}^{(k)} v(s) ds`` for the piecewise-constant interpolant of ``v``.

    ``v`` is held at ``v(s_l)`` on ``[s_l, s_{l+1})``; each mode is integrated
    exactly.  Returns the values at the grid times.
    """
    if len(v_path) == 0:
        raise DomainError("empty path")
    if int(k) != k or k < 1:
        raise ParameterError("k must be a positive integer")
    if not v_path.is_uniform():
        raise DomainError("resolution needs a uniform time grid")
    times = v_path.times
    nt = times.size
    if v_path.n_vertices != sd.n:
        raise DomainError("path does not match the graph")
    if nt == 1:
        return TrajectorySample(times, np.zeros((1, sd.n)), meta={"k": int(k)})
    h = times[1] - times[0]
    G = _psum_primitive(sd.mode_eigenvalues, h * np.arange(nt), int(k))
    W = np.diff(G, axis=0)  # W[m-1] = G(m h) - G((m-1) h)
    coeffs = sd.to_modes(v_path.values)
    out = np.zeros_like(coeffs)
    # R_i = sum_{l<i} W[i-l-1] c_l  (causal convolution per mode)
    conv = fftconvolve(W, coeffs[:-1], axes=0)[: nt - 1]
    out[1:] = conv
    return TrajectorySample(times, sd.from_modes(out), meta={"k": int(k), "interpolant": "piecewise-constant"})


def schauder_ratio(
    sd: SpectralDecomposition, v_path: TrajectorySample, beta: float, eta: float, k: int = 1, op_k: int | None = None
) -> np.ndarray:
    """Per-time ratio ``||R(v)_t||_{B^{beta+d_w/eta}} / ((t + t^{(eta-1)/eta}) sup_{s<=t} ||v(s)||_{B^beta})``."""
    if eta < 1:
        raise ParameterError("eta must be >= 1")
    d_w = sd.graph.spec.d_w
    target = beta + d_w / eta
    ko = op_k or max(1, int(math.floor(max(target, beta) / d_w)) + 1)
    R = resolution(sd, v_path, k)
    vn = np.array([besov_norm_dyadic(sd, v, BesovParams(beta, "inf", "inf", ko)).total for v in v_path.values])
    sup_v = np.maximum.accumulate(vn)
    t = v_path.times
    out = np.full(t.size, np.nan)
    for i in range(1, t.size):
        rn = besov_norm_dyadic(sd, R.values[i], BesovParams(target, "inf", "inf", ko)).total
        out[i] = rn / ((t[i] + t[i] ** ((eta - 1) / eta)) * sup_v[i])
    return out


# ---------------------------------------------------------------------------
# recorded-constant estimators


def gamma_smoothing_ratio(sd: SpectralDecomposition, f: np.ndarray, alpha: float, ts: np.ndarray, k: int = 1) -> float:
    """Max over ``t`` of ``t ||Q_t Gamma(Q_t f, Q_t f)||_inf / (t^{2 alpha/d_w} ||f||^2_{B^alpha_inf})``."""
    d_w = sd.graph.spec.d_w
    norm = besov_norm_dyadic(sd, f, BesovParams(alpha, "inf", "inf", max(k, 1))).total
    c = sd.to_modes(f)
    lam = sd.mode_eigenvalues
    best = 0.0
    for t in np.asarray(ts, dtype=float):
        m = multiplier("Q", t, k, lam)
        u = sd.from_modes(c * m)
        gam = gamma_density(sd.graph, u, u)
        val = t * np.abs(sd.from_modes(m * sd.to_modes(gam))).max()
        best = max(best, val / (t ** (2 * alpha / d_w) * norm**2))
    return best


def leibniz_residual(graph: GraphApproximation, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """``||Gamma(uv, w) - u Gamma(v, w) - v Gamma(u, w)||_{L^1}``."""
    res = gamma_density(graph, u * v, w) - u * gamma_density(graph, v, w) - v * gamma_density(graph, u, w)
    return float(np.abs(res) @ graph.measure)


def hls_ratio(graph: GraphApproximation, f: np.ndarray, q: float) -> float:
    """``||f||_{L^q} / (sqrt(E(f,f)) + ||f||_{L^2})``."""
    num = float(lp_norm(f, graph.measure, q))
    den = math.sqrt(max(graph.dirichlet_energy(f, f), 0.0)) + float(lp_norm(f, graph.measure, 2.0))
    return num / den


def chain_rule_ratio(sd: SpectralDecomposition, f: np.ndarray, n: int, p: int, k: int = 1) -> float:
    """``||f^{n+2p-2}||_{B^{d_w/2}_{1,inf}} / (||f^{2p+2n-4}||^{1/2}_{L^1} E(f^p, f^p)^{1/2})`` (seminorm, dyadic)."""
    if p % 2 == 0 or p < 2 - n:
        raise ParameterError("p must be odd with p >= 2 - n")
    d_w = sd.graph.spec.d_w
    kk = max(k, int(math.floor(0.5)) + 1)
    num = besov_norm_dyadic(sd, f ** (n + 2 * p - 2), BesovParams(d_w / 2, 1.0, "inf", kk)).semi_part
    den = math.sqrt(float(lp_norm(f ** (2 * p + 2 * n - 4), sd.graph.measure, 1.0))) * math.sqrt(
        sd.graph.dirichlet_energy(f**p, f**p)
    )
    return num / den
