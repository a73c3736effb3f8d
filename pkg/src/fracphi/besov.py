"""Heat-semigroup Besov norms and Hölder norms on graph approximations.

Both forms of the norm share the low-frequency part ``||P_1 f||_p`` (with
``P_1 = e^{-L}``) and differ in how the high-frequency seminorm samples the
scale ``t``:

* dyadic: ``t_j = 2^{-d_w j}``, terms ``2^{j alpha} ||(t_j L)^k P_{t_j} f||_p``;
* integral: ``t^{-alpha/d_w} ||Q_t^{(k)} f||_p`` integrated against ``dt/t``
  with the log-trapezoid rule on a geometric grid.

``q = INF`` replaces the sum (or integral) by a maximum over the grid.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError
from .extended import INF, Extended, parse_exponent, to_json
from .space import GraphApproximation
from .spectral import SpectralDecomposition, multiplier

DEFAULT_PER_DECADE = 64


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: Extended = INF
    q: Extended = INF
    k: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", parse_exponent(self.p))
        object.__setattr__(self, "q", parse_exponent(self.q))
        for name in ("p", "q"):
            v = getattr(self, name)
            if v is not INF and not v >= 1:
                raise ParameterError(f"{name} must be >= 1 or inf, got {v!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k!r}")

    def validate(self, d_w: float) -> None:
        if not self.k > self.alpha / d_w:
            raise ParameterError(
                f"operator order k={self.k} must exceed alpha/d_w={self.alpha / d_w:.6g}"
            )

    def conjugate(self) -> "BesovParams":
        """Parameters of the dual space B^{-alpha}_{p', q'}."""
        return BesovParams(-self.alpha, _conj(self.p), _conj(self.q), self.k)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "p": to_json(self.p), "q": to_json(self.q), "k": self.k}


def _conj(p: Extended) -> Extended:
    if p is INF:
        return 1.0
    if p == 1:
        return INF
    return p / (p - 1.0)


@dataclass
class NormResult:
    total: float
    p1_part: float
    semi_part: float
    quadrature: dict = field(default_factory=dict)

    @property
    def grid_id(self) -> str:
        return self.quadrature.get("grid_id", "")


def lp_norm(f: np.ndarray, measure: np.ndarray, p: Extended) -> np.ndarray:
    """L^p(mu) norm along the last axis."""
    f = np.abs(np.asarray(f, dtype=float))
    if p is INF:
        return f.max(axis=-1)
    if p == 1:
        return f @ measure
    if p == 2:
        return np.sqrt((f * f) @ measure)
    return ((f**p) @ measure) ** (1.0 / p)


def _combine(terms: np.ndarray, q: Extended, weights: np.ndarray | None = None) -> float:
    if terms.size == 0:
        return 0.0
    if q is INF:
        return float(terms.max())
    w = np.ones_like(terms) if weights is None else weights
    return float((w @ terms**q) ** (1.0 / q))


def _grid_id(grid: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(grid, dtype="<f8").tobytes()).hexdigest()[:12]


def default_j_max(graph: GraphApproximation, d_w: float) -> int:
    """Largest j with 2^{-d_w j} >= mesh time (10 when the graph has no mesh scale)."""
    if graph.mesh_time <= 0:
        return 10
    return max(0, int(math.floor(math.log2(1.0 / graph.mesh_time) / d_w + 1e-12)))


def default_t_grid(graph: GraphApproximation, per_decade: int = DEFAULT_PER_DECADE) -> np.ndarray:
    """Geometric grid on (mesh time, 1] with ``per_decade`` points per decade."""
    t_min = graph.mesh_time if graph.mesh_time > 0 else 1e-4
    decades = math.log10(1.0 / t_min)
    count = max(2, int(math.ceil(per_decade * decades)))
    # exclude the mesh time itself, include 1
    return np.geomspace(t_min, 1.0, count + 1)[1:]


def _d_w(sd: SpectralDecomposition, d_w: float | None) -> float:
    return float(d_w if d_w is not None else sd.graph.spec.d_w)


def _scale_norms(sd, c: np.ndarray, ts: np.ndarray, k: int, p: Extended) -> np.ndarray:
    """||Q_t^{(k)} f||_p for each t, given modal coefficients c of f."""
    lam = sd.mode_eigenvalues
    out = np.empty(len(ts))
    chunk = max(1, int(4e7 // max(1, sd.n)))
    for start in range(0, len(ts), chunk):
        sl = ts[start : start + chunk]
        mult = np.stack([multiplier("Q", t, k, lam) for t in sl])
        out[start : start + chunk] = lp_norm(sd.from_modes(mult * c[None, :]), sd.graph.measure, p)
    return out


def _p1_part(sd: SpectralDecomposition, c: np.ndarray, p: Extended) -> float:
    return float(lp_norm(sd.from_modes(c * np.exp(-sd.mode_eigenvalues)), sd.graph.measure, p))


def besov_norm_dyadic(
    sd: SpectralDecomposition,
    f: np.ndarray,
    params: BesovParams,
    j_max: int | None = None,
    d_w: float | None = None,
) -> NormResult:
    """Dyadic form: ``||P_1 f||_p + || (2^{j alpha} ||A_j f||_p)_{j=0..j_max} ||_{l^q}``."""
    d_w = _d_w(sd, d_w)
    params.validate(d_w)
    if j_max is None:
        j_max = default_j_max(sd.graph, d_w)
    if j_max < 0:
        raise ParameterError("j_max must be nonnegative")
    ts = 2.0 ** (-d_w * np.arange(j_max + 1))
    if sd.graph.mesh_time > 0 and ts[-1] < sd.graph.mesh_time * (1 - 1e-12):
        raise ParameterError(
            f"t_(j_max)={ts[-1]:.3g} lies below the mesh time {sd.graph.mesh_time:.3g}"
        )
    c = sd.to_modes(f)
    terms = 2.0 ** (params.alpha * np.arange(j_max + 1)) * _scale_norms(sd, c, ts, params.k, params.p)
    semi = _combine(terms, params.q)
    p1 = _p1_part(sd, c, params.p)
    return NormResult(
        p1 + semi, p1, semi,
        {"kind": "dyadic", "j_max": int(j_max), "d_w": d_w, "grid_id": _grid_id(ts), "terms": terms},
    )


def log_trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Weights w_i with sum_i w_i g(t_i) ~ integral of g(t) dt/t over [t_0, t_end]."""
    u = np.log(grid)
    w = np.zeros_like(u)
    if len(u) >= 2:
        du = np.diff(u)
        w[:-1] += du / 2
        w[1:] += du / 2
    return w


def besov_norm_integral(
    sd: SpectralDecomposition,
    f: np.ndarray,
    params: BesovParams,
    t_grid: np.ndarray | None = None,
    d_w: float | None = None,
) -> NormResult:
    """Integral form with log-trapezoid quadrature on ``t_grid`` (default: 64 per decade)."""
    d_w = _d_w(sd, d_w)
    params.validate(d_w)
    grid = default_t_grid(sd.graph) if t_grid is None else np.asarray(t_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty t grid")
    if np.any(grid <= 0) or np.any(grid > 1.0 + 1e-12) or np.any(np.diff(grid) <= 0):
        raise ParameterError("t grid must be increasing inside (0, 1]")
    c = sd.to_modes(f)
    terms = grid ** (-params.alpha / d_w) * _scale_norms(sd, c, grid, params.k, params.p)
    semi = _combine(terms, params.q, None if params.q is INF else log_trapezoid_weights(grid))
    p1 = _p1_part(sd, c, params.p)
    return NormResult(
        p1 + semi, p1, semi,
        {
            "kind": "integral",
            "rule": "log-trapezoid" if params.q is not INF else "grid-sup",
            "t_min": float(grid[0]),
            "t_max": float(grid[-1]),
            "points": int(grid.size),
            "d_w": d_w,
            "grid_id": _grid_id(grid),
        },
    )


def holder_norm(graph: GraphApproximation, f: np.ndarray, sigma: float) -> float:
    """``sup |f| + sup_{0 < d(x,y) <= 1} |f(x) - f(y)| / d(x,y)^sigma`` over vertex pairs."""
    if not (0 < sigma <= 1):
        raise DomainError(f"sigma must lie in (0, 1], got {sigma!r}")
    f = np.asarray(f, dtype=float)
    if f.shape != (graph.n_vertices,):
        raise DomainError("field does not match the graph")
    sup = float(np.abs(f).max())
    best = 0.0
    n = graph.n_vertices
    block = max(1, int(2e7 // n))
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        d = graph.distances_from(rows)
        diff = np.abs(f[rows][:, None] - f[None, :])
        ok = (d > 0) & (d <= 1.0)
        if np.any(ok):
            best = max(best, float((diff[ok] / d[ok] ** sigma).max()))
    return sup + best


def interpolated_params(a: BesovParams, b: BesovParams, eta: float) -> BesovParams:
    """Parameters (alpha_eta, p_eta, q_eta) between ``a`` (weight eta) and ``b``."""
    if not (0 <= eta <= 1):
        raise DomainError("eta must lie in [0, 1]")
    if a.k != b.k:
        raise ParameterError("interpolation endpoints must share k")

    def inv(x: Extended) -> float:
        return 0.0 if x is INF else 1.0 / x

    def mix(x: Extended, y: Extended) -> Extended:
        s = eta * inv(x) + (1 - eta) * inv(y)
        return INF if s == 0 else 1.0 / s

    return BesovParams(eta * a.alpha + (1 - eta) * b.alpha, mix(a.p, b.p), mix(a.q, b.q), a.k)


def regularization_ratio(
    sd: SpectralDecomposition,
    f: np.ndarray,
    s: float,
    b: int,
    alpha: float,
    sigma: float,
    k: int,
    p: Extended,
    t_grid: np.ndarray,
    d_w: float | None = None,
) -> float:
    """Max over ``t`` of ``t^{-alpha/d_w}||Q_t^{(k)} Q_s^{(b)} f||_p`` divided by
    ``s^{(sigma-alpha)/d_w} (t+s)^{-sigma/d_w} ||Q_{t+s}^{(k+b)} f||_p``.

    The ratio is at most 1 whenever ``b >= (sigma - alpha)/d_w`` and ``k >= alpha/d_w``.
    """
    d_w = _d_w(sd, d_w)
    p = parse_exponent(p)
    c = sd.to_modes(f)
    lam = sd.mode_eigenvalues
    cs = c * multiplier("Q", s, b, lam)
    t_grid = np.asarray(t_grid, dtype=float)
    lhs = t_grid ** (-alpha / d_w) * _scale_norms(sd, cs, t_grid, k, p)
    rhs = s ** ((sigma - alpha) / d_w) * (t_grid + s) ** (-sigma / d_w) * _scale_norms(sd, c, t_grid + s, k + b, p)
    keep = rhs > 0
    if not np.any(keep):
        return 0.0
    return float((lhs[keep] / rhs[keep]).max())


def l2_duality_constant(
    sd: SpectralDecomposition,
    alpha: float,
    k: int = 1,
    form: str = "dyadic",
    j_max: int | None = None,
    t_grid: np.ndarray | None = None,
    d_w: float | None = None,
) -> float:
    """A constant C with ``|<f, g>_mu| <= C ||f||_{B^alpha_{2,2}} ||g||_{B^{-alpha}_{2,2}}`` for all f, g.

    For p = q = 2 both norms dominate ``sqrt(sum_k c_k^2 m_{+-alpha}(lambda_k))``
    (since ``sqrt(a) + sqrt(b) >= sqrt(a + b)``), where ``m`` collects the
    squared multipliers of the low-frequency part and of every scale term.
    Cauchy-Schwarz per mode then gives ``C = max_k (m_alpha m_{-alpha})^{-1/2}``.
    """
    d_w = _d_w(sd, d_w)
    lam = sd.mode_eigenvalues
    if form == "dyadic":
        if j_max is None:
            j_max = default_j_max(sd.graph, d_w)
        j = np.arange(j_max + 1)
        ts = 2.0 ** (-d_w * j)

        def m(a: float) -> np.ndarray:
            w = 2.0 ** (2 * a * j)
            return np.exp(-2 * lam) + sum(wi * multiplier("Q", t, k, lam) ** 2 for wi, t in zip(w, ts))

    elif form == "integral":
        grid = default_t_grid(sd.graph) if t_grid is None else np.asarray(t_grid, dtype=float)
        lw = log_trapezoid_weights(grid)

        def m(a: float) -> np.ndarray:
            return np.exp(-2 * lam) + sum(
                wi * t ** (-2 * a / d_w) * multiplier("Q", t, k, lam) ** 2 for wi, t in zip(lw, grid)
            )

    else:
        raise ParameterError(f"unknown form {form!r}")
    return float(np.max(1.0 / np.sqrt(m(alpha) * m(-alpha))))
