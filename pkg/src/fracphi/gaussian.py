"""Gaussian reference field, Wick renormalization and Hermite polynomials.

The Edwards-Wilkinson field ``dY = -(L+1) Y dt + dW`` decouples in the
eigenbasis into independent Ornstein-Uhlenbeck modes with rate ``1 + lambda_k``,
so paths are sampled exactly (no time-discretization error).  The
counterterm is the stationary variance of the mollified field
``Y_eps = P_eps Y``:

    C_eps(x) = sum_k exp(-2 eps lambda_k) phi_k(x)^2 / (2 (1 + lambda_k)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import DomainError
from .fields import as_field
from .spectral import SpectralDecomposition


def hermite(n: int, x, var):
    """Hermite polynomial ``H_n(x, var)`` with ``H_0 = 1``, ``H_1 = x``.

    Uses ``H_n = x H_{n-1} - var d/dx H_{n-1}`` in its three-term form
    ``H_n = x H_{n-1} - (n-1) var H_{n-2}`` (since ``H_n' = n H_{n-1}``).
    Broadcasts over array arguments.
    """
    if int(n) != n or n < 0:
        raise DomainError(f"Hermite degree must be a nonnegative integer, got {n!r}")
    x = np.asarray(x, dtype=float)
    var = np.asarray(var, dtype=float)
    prev = np.ones(np.broadcast(x, var).shape)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = x + 0.0 * var
    for m in range(2, n + 1):
        prev, cur = cur, x * cur - (m - 1) * var * prev
    return cur if cur.ndim else float(cur)


def hermite_all(n_max: int, x: np.ndarray, var) -> np.ndarray:
    """Stack ``[H_1, ..., H_{n_max}]`` along a new leading axis."""
    x = np.asarray(x, dtype=float)
    var = np.asarray(var, dtype=float)
    out = np.empty((n_max,) + np.broadcast(x, var).shape)
    prev = np.ones_like(out[0])
    cur = x + 0.0 * var
    out[0] = cur
    for m in range(2, n_max + 1):
        prev, cur = cur, x * cur - (m - 1) * var * prev
        out[m - 1] = cur
    return out


# ---------------------------------------------------------------------------
# counterterm and covariance


def _mode_variances(sd: SpectralDecomposition, epsilon: float, noise: float = 1.0) -> np.ndarray:
    lam = sd.mode_eigenvalues
    return noise * noise * np.exp(-2.0 * epsilon * lam) / (2.0 * (1.0 + lam))


@dataclass
class Counterterm:
    epsilon: float
    values: np.ndarray
    noise: float = 1.0

    def mean(self, measure: np.ndarray) -> float:
        return float(self.values @ measure / measure.sum())


def counterterm(sd: SpectralDecomposition, epsilon: float, noise: float = 1.0) -> Counterterm:
    """Exact stationary variance of ``P_eps Y`` at every vertex."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    values = sd.squared_eigenvector_sum(_mode_variances(sd, epsilon, noise))
    return Counterterm(float(epsilon), values, float(noise))


def counterterm_mean(sd: SpectralDecomposition, epsilon: float, noise: float = 1.0) -> float:
    """mu-average of ``C_eps``, i.e. ``mu(M)^{-1} sum_k`` of the mode variances."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    return float(_mode_variances(sd, epsilon, noise).sum() / sd.graph.total_measure)


@dataclass
class ScalingFit:
    """Divergence rate of the counterterm over an epsilon window.

    ``mode == "log"``: fit ``C = a + b log(1/eps)``; ``normalized_slope`` is
    ``b`` divided by ``reference_slope`` when one is known.
    ``mode == "power"``: slope of ``log(C_eps - C_{2 eps})`` against
    ``log eps``, which removes the additive constant of ``C``.
    """

    mode: str
    slope: float
    expected: float
    r_squared: float
    eps: np.ndarray
    values: np.ndarray
    intercept: float = 0.0
    reference_slope: float | None = None

    @property
    def normalized_slope(self) -> float:
        if self.reference_slope:
            return self.slope / self.reference_slope
        return self.slope

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "slope": self.slope,
            "normalized_slope": self.normalized_slope,
            "expected": self.expected,
            "r_squared": self.r_squared,
            "eps_min": float(self.eps[0]),
            "eps_max": float(self.eps[-1]),
            "points": int(self.eps.size),
        }


def counterterm_scaling(sd: SpectralDecomposition, eps: Sequence[float], noise: float = 1.0) -> ScalingFit:
    """Fit the small-epsilon divergence of the mu-averaged counterterm."""
    eps = np.sort(np.asarray(eps, dtype=float))
    if eps.size < 3 or eps[0] <= 0:
        raise DomainError("need at least three positive epsilon values")
    spec = sd.graph.spec
    means = np.array([counterterm_mean(sd, e, noise) for e in eps])
    if math.isclose(spec.d_h, spec.d_w, rel_tol=1e-12):
        x = np.log(1.0 / eps)
        b, a = np.polyfit(x, means, 1)
        resid = means - (a + b * x)
        r2 = 1.0 - resid.var() / means.var()
        ref = 1.0 / (8.0 * math.pi) * noise**2 if math.isclose(spec.d_h, 2.0) else None
        return ScalingFit("log", float(b), 1.0 if ref else float("nan"), float(r2), eps, means, float(a), ref)
    if spec.d_h < spec.d_w:
        raise DomainError("the counterterm stays bounded when d_h < d_w")
    inc = means - np.array([counterterm_mean(sd, 2 * e, noise) for e in eps])
    x, y = np.log(eps), np.log(inc)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (icpt + slope * x)
    r2 = 1.0 - resid.var() / y.var()
    return ScalingFit("power", float(slope), -(spec.d_h - spec.d_w) / spec.d_w, float(r2), eps, inc, float(icpt))


def covariance_K(
    sd: SpectralDecomposition, epsilon: float, t1: float, t2: float, x: int, y: int, noise: float = 1.0
) -> float:
    """Stationary space-time covariance ``E[Y_eps(t1, x) Y_eps(t2, y)]``."""
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    lam = sd.mode_eigenvalues
    w = _mode_variances(sd, epsilon, noise) * np.exp(-(1.0 + lam) * abs(t1 - t2))
    ex = np.zeros(sd.n)
    ey = np.zeros(sd.n)
    ex[x] = 1.0 / sd.graph.measure[x]
    ey[y] = 1.0 / sd.graph.measure[y]
    # phi_k(x) = <delta_x / mu(x), phi_k>_mu
    return float(np.sum(w * sd.to_modes(ex) * sd.to_modes(ey)))


# ---------------------------------------------------------------------------
# OU paths


@dataclass
class OUPath:
    sd: SpectralDecomposition
    times: np.ndarray
    modes: np.ndarray
    seed: dict = field(default_factory=dict)

    def field_at(self, i: int, epsilon: float = 0.0) -> np.ndarray:
        c = self.modes[i]
        if epsilon > 0:
            c = c * np.exp(-epsilon * self.sd.mode_eigenvalues)
        return self.sd.from_modes(c)

    def fields(self, epsilon: float = 0.0) -> np.ndarray:
        c = self.modes
        if epsilon > 0:
            c = c * np.exp(-epsilon * self.sd.mode_eigenvalues)[None, :]
        return self.sd.from_modes(c)


def ou_step_coefficients(lam: np.ndarray, dt: float, noise: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Decay factor and innovation standard deviation of one exact OU step."""
    rate = 1.0 + np.asarray(lam, dtype=float)
    decay = np.exp(-rate * dt)
    std = noise * np.sqrt(-np.expm1(-2.0 * rate * dt) / (2.0 * rate))
    return decay, std


def sample_ou_path(
    sd: SpectralDecomposition,
    seed: int,
    times: Sequence[float],
    init="stationary",
    replica: int = 0,
    noise: float = 1.0,
) -> OUPath:
    """Exact per-mode sample of the EW field on ``times``.

    ``init`` is ``"stationary"``, ``"zero"``, or a field (vertex values).
    Draws come from the stream keyed by ``(seed, replica)``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a nonempty 1-D grid")
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    lam = sd.mode_eigenvalues
    m = lam.size
    modes = np.empty((times.size, m))
    if isinstance(init, str):
        if init == "stationary":
            g = rngmod.stream(seed, replica, rngmod.INIT)
            modes[0] = noise * g.standard_normal(m) / np.sqrt(2.0 * (1.0 + lam))
        elif init == "zero":
            modes[0] = 0.0
        else:
            raise DomainError(f"unknown init {init!r}")
    else:
        modes[0] = sd.to_modes(as_field(init, sd.n, "init"))
    if times.size > 1:
        z = rngmod.stream(seed, replica, rngmod.INCREMENTS).standard_normal((times.size - 1, m))
        dts = np.diff(times)
        uniform = np.allclose(dts, dts[0], rtol=1e-12, atol=0)
        if uniform:
            decay, std = ou_step_coefficients(lam, dts[0], noise)
        for i in range(1, times.size):
            if not uniform:
                decay, std = ou_step_coefficients(lam, dts[i - 1], noise)
            modes[i] = decay * modes[i - 1] + std * z[i - 1]
    return OUPath(sd, times, modes, {"seed": int(seed), "replica": int(replica), "init": init if isinstance(init, str) else "field", "noise": float(noise)})


# ---------------------------------------------------------------------------
# Wick powers


@dataclass
class WickBundle:
    """``paths[k-1][i]`` is ``Y_eps^{:k:}`` at ``times[i]``."""

    epsilon: float
    n_max: int
    times: np.ndarray
    paths: np.ndarray
    counterterm: Counterterm

    @classmethod
    def zero(cls, n_vertices: int, times: Sequence[float], n_max: int, epsilon: float = 1.0) -> "WickBundle":
        times = np.asarray(times, dtype=float)
        return cls(
            float(epsilon), int(n_max), times, np.zeros((n_max, times.size, n_vertices)),
            Counterterm(float(epsilon), np.zeros(n_vertices), 0.0),
        )

    def power(self, k: int, i: int) -> np.ndarray:
        if k == 0:
            return np.ones(self.paths.shape[2])
        return self.paths[k - 1, i]

    def sup_norms(self) -> np.ndarray:
        """``sup_t ||Y^{:k:}(t)||_inf`` for k = 1..n_max."""
        return np.abs(self.paths).max(axis=(1, 2))


def wick_powers(sd: SpectralDecomposition, ou: OUPath, epsilon: float, n_max: int) -> WickBundle:
    """``H_k(P_eps Y, C_eps)`` for ``k = 1..n_max`` at every time of ``ou``."""
    if int(n_max) != n_max or n_max < 1:
        raise DomainError("n_max must be a positive integer")
    noise = float(ou.seed.get("noise", 1.0)) if isinstance(ou.seed, dict) else 1.0
    ct = counterterm(sd, epsilon, noise) if noise > 0 else Counterterm(float(epsilon), np.zeros(sd.n), 0.0)
    y = ou.fields(epsilon)
    return WickBundle(float(epsilon), int(n_max), ou.times, hermite_all(int(n_max), y, ct.values[None, :]), ct)


# ---------------------------------------------------------------------------
# ensemble statistics


@dataclass
class WickCovarianceResult:
    n: int
    pairs: list[tuple[int, int]]
    empirical: np.ndarray
    theory: np.ndarray
    stderr: np.ndarray
    replicas: int
    slices: int

    @property
    def relative_error(self) -> np.ndarray:
        return np.abs(self.empirical - self.theory) / np.abs(self.theory)


def stationary_slices(
    sd: SpectralDecomposition, seed: int, replica: int, slices: int, spacing: float, noise: float = 1.0
) -> np.ndarray:
    """Stationary mode vectors at ``slices`` times ``spacing`` apart (exact OU transitions)."""
    lam = sd.mode_eigenvalues
    g0 = rngmod.stream(seed, replica, rngmod.INIT)
    out = np.empty((slices, lam.size))
    out[0] = noise * g0.standard_normal(lam.size) / np.sqrt(2.0 * (1.0 + lam))
    if slices > 1:
        decay, std = ou_step_coefficients(lam, spacing, noise)
        z = rngmod.stream(seed, replica, rngmod.INCREMENTS).standard_normal((slices - 1, lam.size))
        for i in range(1, slices):
            out[i] = decay * out[i - 1] + std * z[i - 1]
    return out


def wick_covariance_check(
    sd: SpectralDecomposition,
    epsilon: float,
    ns: Sequence[int],
    pairs: Sequence[tuple[int, int]],
    replicas: int,
    seed: int,
    slices: int = 8,
    spacing: float = 3.0,
) -> dict[int, WickCovarianceResult]:
    """Compare ``E[Y^{:n:}(t,x) Y^{:n:}(t,y)]`` with ``n! K_eps(t,t,x,y)^n``.

    Each replica contributes the average over ``slices`` stationary time
    slices; standard errors come from the spread of the replica averages.
    """
    ct = counterterm(sd, epsilon)
    damp = np.exp(-epsilon * sd.mode_eigenvalues)
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    n_max = max(ns)
    acc = {n: np.empty((replicas, len(pairs))) for n in ns}
    for r in range(replicas):
        y = sd.from_modes(stationary_slices(sd, seed, r, slices, spacing) * damp)
        hx = hermite_all(n_max, y[:, xs], ct.values[xs])
        hy = hermite_all(n_max, y[:, ys], ct.values[ys])
        for n in ns:
            acc[n][r] = (hx[n - 1] * hy[n - 1]).mean(axis=0)
    out = {}
    for n in ns:
        theory = np.array([math.factorial(n) * covariance_K(sd, epsilon, 0.0, 0.0, x, y) ** n for x, y in pairs])
        data = acc[n]
        out[n] = WickCovarianceResult(
            n, [tuple(map(int, p)) for p in pairs], data.mean(axis=0), theory,
            data.std(axis=0, ddof=1) / math.sqrt(replicas), replicas, slices,
        )
    return out
