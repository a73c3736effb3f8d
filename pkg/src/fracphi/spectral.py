"""Spectral calculus of the renormalized graph Laplacian.

Every semigroup operator in the package is a spectral multiplier
``m(lambda)`` applied in the mu-orthonormal eigenbasis.  Fields are numpy
arrays whose last axis indexes vertices; modal coefficient arrays use the
"mode layout" of the decomposition (sorted eigenvalues for a dense
decomposition, the row-major ``(i, j)`` grid of factor modes for a product).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import ConstructionError, DiagnosticsError, DomainError, ResourceError
from .space import FractalSpec, GraphApproximation

DEFAULT_N_MAX = 4096
POINTS_PER_DECADE = 32


@dataclass(eq=False)
class SpectralDecomposition:
    """Eigen-data of ``L = M^{-1} K`` on a graph.

    Dense decompositions hold ``eigenvectors`` as the columns of an ``(N, N)``
    array with ``<phi_i, phi_j>_mu = delta_ij``.  Product decompositions hold
    ``kronecker_factors`` instead and never form the product basis.
    """

    graph: GraphApproximation
    _values: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    kronecker_factors: tuple["SpectralDecomposition", "SpectralDecomposition"] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # -- layout ---------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def is_product(self) -> bool:
        return self.kronecker_factors is not None

    @cached_property
    def mode_eigenvalues(self) -> np.ndarray:
        """Eigenvalues in mode layout."""
        if self.kronecker_factors is None:
            return self._values
        a, b = self.kronecker_factors
        return (a.mode_eigenvalues[:, None] + b.mode_eigenvalues[None, :]).ravel()

    @cached_property
    def mode_order(self) -> np.ndarray:
        """Permutation sorting the mode layout by eigenvalue (stable)."""
        if self.kronecker_factors is None:
            return np.arange(self.n)
        return np.argsort(self.mode_eigenvalues, kind="stable")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues lambda_0 = 0 <= ... <= lambda_{N-1}."""
        return self.mode_eigenvalues[self.mode_order]

    # -- transforms -------------------------------------------------------------
    def to_modes(self, f: np.ndarray) -> np.ndarray:
        """Coefficients <f, phi_k>_mu in mode layout (last axis)."""
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.n:
            raise DomainError(f"field has {f.shape[-1]} entries, graph has {self.n} vertices")
        if self.kronecker_factors is None:
            return (f * self.graph.measure) @ self.eigenvectors
        a, b = self.kronecker_factors
        lead = f.shape[:-1]
        F = f.reshape(lead + (a.n, b.n)) * a.graph.measure[:, None] * b.graph.measure[None, :]
        C = a.eigenvectors.T @ F @ b.eigenvectors
        return C.reshape(lead + (self.n,))

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        """Field sum_k c_k phi_k from mode-layout coefficients."""
        c = np.asarray(c, dtype=float)
        if self.kronecker_factors is None:
            return c @ self.eigenvectors.T
        a, b = self.kronecker_factors
        lead = c.shape[:-1]
        C = c.reshape(lead + (a.n, b.n))
        return (a.eigenvectors @ C @ b.eigenvectors.T).reshape(lead + (self.n,))

    def apply_multiplier(self, f: np.ndarray, m: np.ndarray) -> np.ndarray:
        return self.from_modes(self.to_modes(f) * m)

    def eigenvector(self, k: int) -> np.ndarray:
        """The k-th eigenvector in ascending eigenvalue order, as a field."""
        if not 0 <= k < self.n:
            raise DomainError(f"mode index {k} out of range")
        if self.kronecker_factors is None:
            return self.eigenvectors[:, k].copy()
        e = np.zeros(self.n)
        e[self.mode_order[k]] = 1.0
        return self.from_modes(e)

    def squared_eigenvector_sum(self, weights: np.ndarray) -> np.ndarray:
        """Pointwise sum_k w_k phi_k(x)^2 for mode-layout weights ``w``."""
        if self.kronecker_factors is None:
            return (self.eigenvectors**2) @ weights
        a, b = self.kronecker_factors
        W = weights.reshape(a.n, b.n)
        return ((a.eigenvectors**2) @ W @ (b.eigenvectors**2).T).ravel()


def decompose(graph: GraphApproximation, n_max: int = DEFAULT_N_MAX) -> SpectralDecomposition:
    """Eigendecomposition of the graph Laplacian.

    Products are decomposed factor by factor.  Dense problems larger than
    ``n_max`` raise :class:`ResourceError`.
    """
    if graph.is_product:
        fa, fb = graph.factors
        da = decompose(fa, n_max)
        db = da if fb is fa else decompose(fb, n_max)
        return SpectralDecomposition(graph, kronecker_factors=(da, db))
    n = graph.n_vertices
    if n > n_max:
        raise ResourceError(f"dense eigensolver budget is {n_max} vertices, graph has {n}")
    K = graph.conductance_laplacian.toarray()
    if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ConstructionError("conductance Laplacian is not symmetric")
    if np.abs(K.sum(axis=1)).max() > 1e-9 * max(1.0, np.abs(K).max()):
        raise ConstructionError("conductance Laplacian rows do not sum to zero")
    mu = graph.measure
    s = 1.0 / np.sqrt(mu)
    S = K * s[:, None] * s[None, :]
    S = 0.5 * (S + S.T)
    lam, U = linalg.eigh(S)
    phi = U * s[:, None]
    # exact kernel: connected graph has the constants as its null space
    mass = mu.sum()
    phi[:, 0] = 1.0 / math.sqrt(mass)
    lam[0] = 0.0
    proj = (mu @ phi[:, 1:]) / mass
    phi[:, 1:] -= proj[None, :]
    norms = np.sqrt(mu @ phi**2)
    phi /= norms[None, :]
    lam = np.maximum(lam, 0.0)
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    phi *= signs[None, :]
    lam.setflags(write=False)
    phi.setflags(write=False)
    return SpectralDecomposition(graph, _values=lam, eigenvectors=phi)


# ---------------------------------------------------------------------------
# multipliers

_KINDS = ("P", "Q", "P_sum")


def _check_kind(kind: str, k: int) -> None:
    if kind not in _KINDS:
        raise DomainError(f"unknown operator kind {kind!r}; expected one of {_KINDS}")
    if int(k) != k or k < 0:
        raise DomainError(f"operator order must be a nonnegative integer, got {k!r}")
    if kind in ("Q", "P_sum") and k < 1:
        raise DomainError(f"kind {kind} requires k >= 1")


def multiplier(kind: str, t: float, k: int, lam: np.ndarray) -> np.ndarray:
    """Spectral multiplier of ``P_t``, ``Q_t^{(k)}`` or ``P_t^{(k)}`` at eigenvalues ``lam``.

    ``P_t^{(k)}`` has multiplier ``sum_{m<k} (t lam)^m / m! * exp(-t lam)``.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    _check_kind(kind, k)
    x = t * np.asarray(lam, dtype=float)
    if kind == "P":
        return np.exp(-x)
    if kind == "Q":
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(k * np.log(x[pos]) - x[pos])
        return out
    out = np.zeros_like(x)
    pos = x > 0
    lx = np.log(x[pos])
    for m in range(k):
        out[pos] += np.exp(m * lx - x[pos] - gammaln(m + 1))
    out[~pos] = 1.0
    return out


def apply_semigroup_op(sd: SpectralDecomposition, kind: str, t: float, k: int, f: np.ndarray) -> np.ndarray:
    """Apply ``P_t`` (kind "P"), ``Q_t^{(k)}`` ("Q") or ``P_t^{(k)}`` ("P_sum") to ``f``."""
    return sd.apply_multiplier(f, multiplier(kind, t, k, sd.mode_eigenvalues))


# ---------------------------------------------------------------------------
# heat kernel


def heat_kernel_rows(sd: SpectralDecomposition, t: float, xs: Sequence[int] | np.ndarray) -> np.ndarray:
    """``p_t(x, .)`` for each ``x`` in ``xs``, shape ``(len(xs), N)``."""
    if not t > 0:
        raise DomainError(f"heat kernel requires t > 0, got {t!r}")
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    if np.any(xs < 0) or np.any(xs >= sd.n):
        raise DomainError("vertex index out of range")
    if sd.kronecker_factors is None:
        e = np.exp(-t * sd._values)
        return (sd.eigenvectors[xs] * e) @ sd.eigenvectors.T
    a, b = sd.kronecker_factors
    xa, xb = np.divmod(xs, b.n)
    ra = heat_kernel_rows(a, t, xa)
    rb = heat_kernel_rows(b, t, xb)
    return (ra[:, :, None] * rb[:, None, :]).reshape(len(xs), -1)


def heat_kernel(sd: SpectralDecomposition, t: float, x: int, y: int) -> float:
    """``p_t(x, y) = sum_k exp(-t lambda_k) phi_k(x) phi_k(y)``."""
    if not t > 0:
        raise DomainError(f"heat kernel requires t > 0, got {t!r}")
    if not (0 <= x < sd.n and 0 <= y < sd.n):
        raise DomainError("vertex index out of range")
    if sd.kronecker_factors is None:
        return float(np.sum(np.exp(-t * sd._values) * sd.eigenvectors[x] * sd.eigenvectors[y]))
    a, b = sd.kronecker_factors
    xa, xb = divmod(int(x), b.n)
    ya, yb = divmod(int(y), b.n)
    return heat_kernel(a, t, xa, ya) * heat_kernel(b, t, xb, yb)


def heat_trace(sd: SpectralDecomposition, t: float | np.ndarray) -> np.ndarray:
    """``sum_k exp(-t lambda_k) = integral of p_t(x, x) dmu``."""
    t = np.asarray(t, dtype=float)
    if sd.kronecker_factors is None:
        return np.exp(-np.multiply.outer(t, sd._values)).sum(axis=-1)
    a, b = sd.kronecker_factors
    return heat_trace(a, t) * heat_trace(b, t)


def geometric_grid(t_min: float, t_max: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    if not (0 < t_min < t_max):
        raise DomainError("geometric grid needs 0 < t_min < t_max")
    count = max(2, int(math.ceil(per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, count)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class HeatDiagnostics:
    completeness_residual: float
    symmetry_residual: float
    ondiag_slope: float
    ondiag_window: tuple[float, float]
    holder_theta_fit: float
    holder_window: tuple[float, float]
    lower_bound_ok: bool
    lower_constant: float
    upper_constant: float
    expected_slope: float
    t_grid: np.ndarray = field(repr=False)
    ondiag_values: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "completeness_residual": self.completeness_residual,
            "symmetry_residual": self.symmetry_residual,
            "ondiag_slope": self.ondiag_slope,
            "ondiag_window": list(self.ondiag_window),
            "expected_slope": self.expected_slope,
            "holder_theta_fit": self.holder_theta_fit,
            "holder_window": list(self.holder_window),
            "lower_bound_ok": self.lower_bound_ok,
            "lower_constant": self.lower_constant,
            "upper_constant": self.upper_constant,
        }

    def csv_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.t_grid.tolist(), self.ondiag_values.tolist()))


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def default_window(graph: GraphApproximation) -> tuple[float, float]:
    """One decade starting at twice the mesh time (clipped to (0, 1])."""
    lo = 2.0 * graph.mesh_time if graph.mesh_time > 0 else 1e-3
    lo = min(lo, 0.1)
    return (lo, min(1.0, 10.0 * lo))


def heat_diagnostics(
    sd: SpectralDecomposition,
    spec: FractalSpec | None = None,
    t_window: tuple[float, float] | None = None,
    sample_count: int = 16,
    seed: int = 0,
    holder_times: Sequence[float] = (1e-3, 1e-2, 1e-1),
) -> HeatDiagnostics:
    """Empirical checks of completeness, symmetry, on-diagonal decay and Hölder continuity.

    The on-diagonal slope regresses the mu-average of ``p_t(x, x)``, i.e.
    ``mu(M)^{-1} sum_k e^{-t lambda_k}``, on ``log t`` over a 32-per-decade
    grid spanning ``t_window``.  The Hölder exponent is the median over
    ``holder_times`` of the slope of ``log sup_z |p_t(x,z) - p_t(y,z)|``
    against ``log d(x, y)`` for ``d(x, y) <= t^{1/d_w}``.
    """
    graph = sd.graph
    spec = spec or graph.spec
    t_min, t_max = map(float, t_window or default_window(graph))
    if not (0 < t_min < t_max <= 1.0):
        raise DomainError(f"t_window must satisfy 0 < t_min < t_max <= 1, got {(t_min, t_max)}")
    if t_min < graph.mesh_time:
        raise DiagnosticsError(
            f"t_min={t_min:g} is below the mesh time {graph.mesh_time:g}; use a larger level"
        )
    grid = geometric_grid(t_min, t_max)
    ondiag = heat_trace(sd, grid) / graph.total_measure
    slope = _slope(np.log(grid), np.log(ondiag))

    rng = np.random.default_rng(seed)
    n = sd.n
    xs = np.sort(rng.choice(n, size=min(sample_count, n), replace=False))
    dists = graph.distances_from(xs)
    dh_dw = spec.d_h / spec.d_w
    complete = sym = 0.0
    lo_c, hi_c = math.inf, 0.0
    for t in np.geomspace(t_min, t_max, 5):
        rows = heat_kernel_rows(sd, t, xs)
        complete = max(complete, float(np.abs(rows @ graph.measure - 1.0).max()))
        block = rows[:, xs]
        sym = max(sym, float(np.abs(block - block.T).max() / np.abs(block).max()))
        vals = rows[dists <= t ** (1.0 / spec.d_w)] * t**dh_dw
        lo_c = min(lo_c, float(vals.min()))
        hi_c = max(hi_c, float(vals.max()))

    fits = []
    used = [t for t in holder_times if graph.mesh_time <= t <= 1.0]
    for t in used:
        r = t ** (1.0 / spec.d_w)
        rows = heat_kernel_rows(sd, t, xs)
        lx, ly = [], []
        for i in range(len(xs)):
            ys = np.flatnonzero((dists[i] > 0) & (dists[i] <= r))
            if ys.size > 64:
                ys = rng.choice(ys, 64, replace=False)
            if ys.size == 0:
                continue
            diff = np.abs(heat_kernel_rows(sd, t, ys) - rows[i]).max(axis=1)
            keep = diff > 0
            lx.extend(np.log(dists[i, ys[keep]]))
            ly.extend(np.log(diff[keep]))
        if len(set(lx)) >= 2:
            fits.append(_slope(np.asarray(lx), np.asarray(ly)))
    theta_fit = float(np.median(fits)) if fits else float("nan")
    return HeatDiagnostics(
        completeness_residual=complete,
        symmetry_residual=sym,
        ondiag_slope=slope,
        ondiag_window=(t_min, t_max),
        holder_theta_fit=theta_fit,
        holder_window=(min(used), max(used)) if used else (float("nan"), float("nan")),
        lower_bound_ok=bool(lo_c > 0 and lo_c / hi_c >= 1e-2),
        lower_constant=lo_c,
        upper_constant=hi_c,
        expected_slope=-dh_dw,
        t_grid=grid,
        ondiag_values=ondiag,
    )
