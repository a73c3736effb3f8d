"""Long-horizon time averages of the phi dynamics and a stationarity check.

A single run starts from ``phi_0 = 0``, discards a burn-in, and splits the
remaining horizon into equal windows.  For each window it records time
averages of a fixed observable set together with batch-means standard
errors; consecutive windows are compared with a 3-sigma rule.

The run is integrated in chunks so that memory stays bounded: every chunk
restarts the solver from the previous chunk's final ``phi`` and ``Y`` and
draws its increments from its own stream, keyed by
``replica * CHUNK_STRIDE + chunk``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .besov import lp_norm
from .dpd import SolverConfig, solve_phi
from .errors import BlowUpError, DomainError
from .spectral import SpectralDecomposition

N_PAIRING_MODES = 8
CHUNK_STRIDE = 1 << 20
DEFAULT_BATCHES = 25


def observable_names(sd: SpectralDecomposition) -> list[str]:
    m = min(N_PAIRING_MODES, sd.n)
    return [f"pair_{j}" for j in range(m)] + ["v_L2", "v_L4"]


def _observables(sd: SpectralDecomposition, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    m = min(N_PAIRING_MODES, sd.n)
    modes = sd.to_modes(phi)
    low = sd.mode_order[:m]
    pair = modes.reshape(modes.shape[0], -1)[:, low]
    mu = sd.graph.measure
    return np.column_stack([pair, lp_norm(v, mu, 2), lp_norm(v, mu, 4)])


def batch_means(x: np.ndarray, batches: int = DEFAULT_BATCHES) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error of each column of ``x``."""
    x = np.asarray(x, dtype=float)
    size = x.shape[0] // batches
    if size < 1:
        raise DomainError(f"need at least {batches} samples per window, got {x.shape[0]}")
    b = x[: size * batches].reshape(batches, size, -1).mean(axis=1)
    return x.mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(batches)


@dataclass
class InvariantReport:
    observables: list[str]
    window_averages: np.ndarray
    window_stderr: np.ndarray
    window_diffs: np.ndarray
    combined_stderr: np.ndarray
    burnin: float
    horizon: float
    windows: list[tuple[float, float]]
    moment_bound: list[float]
    pass_: bool
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_

    @property
    def mc_stderr(self) -> np.ndarray:
        return self.window_stderr

    def max_sigma(self) -> float:
        """Largest |diff| in units of the combined standard error."""
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.combined_stderr > 0, np.abs(self.window_diffs) / self.combined_stderr,
                         np.where(self.window_diffs == 0, 0.0, np.inf))
        return float(z.max()) if z.size else 0.0

    def to_dict(self) -> dict:
        return {
            "observables": self.observables,
            "window_averages": self.window_averages.tolist(),
            "mc_stderr": self.window_stderr.tolist(),
            "window_diffs": self.window_diffs.tolist(),
            "combined_stderr": self.combined_stderr.tolist(),
            "max_sigma": self.max_sigma(),
            "burnin": self.burnin,
            "horizon": self.horizon,
            "windows": [list(w) for w in self.windows],
            "moment_bound": self.moment_bound,
            "pass": self.pass_,
            **self.meta,
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for w, (lo, hi) in enumerate(self.windows):
            for k, name in enumerate(self.observables):
                rows.append({
                    "window": w, "t_start": lo, "t_end": hi, "observable": name,
                    "mean": float(self.window_averages[w, k]), "stderr": float(self.window_stderr[w, k]),
                })
        return rows


def run_invariant_estimate(
    sd: SpectralDecomposition,
    cfg: SolverConfig,
    horizon: float,
    windows: int = 2,
    seed: int = 0,
    burnin: float | None = None,
    replica: int = 0,
    chunk_steps: int = 2000,
    batches: int = DEFAULT_BATCHES,
    moment_q: float = 2.0,
) -> InvariantReport:
    cfg.validate()
    if burnin is None:
        burnin = 0.1 * horizon
    if windows < 2:
        raise DomainError("need at least two windows")
    if burnin < 0 or horizon < 2 * burnin or horizon <= burnin:
        raise DomainError("horizon must be at least twice the burn-in")
    dt = cfg.dt
    total = int(round(horizon / dt))
    chunk_steps = max(1, int(chunk_steps))
    run_cfg = SolverConfig(**{**cfg.to_dict(), "store_every": 1})

    t_all, obs_all = [], []
    phi = np.zeros(sd.n)
    y = None
    done = 0
    chunk = 0
    while done < total:
        steps = min(chunk_steps, total - done)
        times = dt * np.arange(steps + 1)
        run_cfg.T = steps * dt
        try:
            traj = solve_phi(sd, phi, run_cfg, seed, replica=replica * CHUNK_STRIDE + chunk, y0=y, times=times)
        except BlowUpError as exc:
            t0 = done * dt
            raise BlowUpError(
                f"invariant run (seed={seed}, replica={replica}) blew up near t={t0 + (exc.time or 0):.6g}: {exc}",
                time=None if exc.time is None else t0 + exc.time,
                sup_norm=exc.sup_norm,
            ) from exc
        v = traj.meta["remainder"].values
        t_abs = done * dt + traj.times[1:]
        t_all.append(t_abs)
        obs_all.append(_observables(sd, traj.values[1:], v[1:]))
        phi = traj.values[-1]
        y = traj.values[-1] - v[-1]
        done += steps
        chunk += 1

    t = np.concatenate(t_all)
    obs = np.concatenate(obs_all)
    v_l2 = obs[:, -2]
    keep = t > burnin
    t, obs, v_l2 = t[keep], obs[keep], v_l2[keep]
    edges = np.linspace(burnin, horizon, windows + 1)
    idx = np.clip(np.searchsorted(edges, t, side="left") - 1, 0, windows - 1)
    means, errs, moments = [], [], []
    weight = np.minimum(t ** (moment_q / (cfg.n - 1)), 1.0)
    for w in range(windows):
        sel = idx == w
        m, e = batch_means(obs[sel], batches)
        means.append(m)
        errs.append(e)
        moments.append(float(np.mean(weight[sel] * v_l2[sel] ** moment_q)))
    means = np.asarray(means)
    errs = np.asarray(errs)
    diffs = np.diff(means, axis=0)
    comb = np.sqrt(errs[1:] ** 2 + errs[:-1] ** 2)
    ok = bool(np.all(np.abs(diffs) <= 3.0 * comb))
    return InvariantReport(
        observable_names(sd), means, errs, diffs, comb, float(burnin), float(horizon),
        [(float(edges[w]), float(edges[w + 1])) for w in range(windows)], moments, ok,
        {"seed": int(seed), "replica": int(replica), "batches": int(batches), "dt": dt,
         "n": cfg.n, "epsilon": cfg.epsilon, "noise": cfg.noise, "chunks": chunk,
         "window_rule": "equal windows after burn-in; batch-means standard errors"},
    )
