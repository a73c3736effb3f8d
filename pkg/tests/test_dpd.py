import math

import numpy as np
import pytest

from fracphi.dpd import (
    SolverConfig,
    binomial_nonlinearity,
    cdi_check,
    graded_grid,
    solve_phi,
    solve_remainder,
)
from fracphi.errors import BlowUpError, ParameterError
from fracphi.gaussian import WickBundle, sample_ou_path, wick_powers

from conftest import smooth_fields, spectral


def bernoulli(c, t, n=3):
    """Exact solution of v' = -v - v^n, v(0) = c > 0."""
    return ((c ** (1 - n) + 1.0) * np.exp((n - 1) * t) - 1.0) ** (-1.0 / (n - 1))


def _zero_noise_constant_run(sd, c, dt, n=3, T=1.0, scheme="exponential_euler"):
    cfg = SolverConfig(n=n, dt=dt, T=T, noise=0.0, scheme=scheme)
    bundle = WickBundle.zero(sd.n, cfg.time_grid(), n)
    return solve_remainder(sd, bundle, np.full(sd.n, c), cfg)


def test_bernoulli_closed_form_and_first_order_convergence():
    sd = spectral("sg", 2)
    errs = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        tr = _zero_noise_constant_run(sd, 2.0, dt)
        errs.append(np.abs(tr.values - bernoulli(2.0, tr.times)[:, None]).max())
    assert errs[-1] < 1e-3
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= a / b <= 2.2


@pytest.mark.parametrize("n", [5, 7])
def test_bernoulli_higher_powers(n):
    sd = spectral("sg", 1)
    tr = _zero_noise_constant_run(sd, 1.5, 1e-4, n=n, T=0.5)
    assert np.abs(tr.values - bernoulli(1.5, tr.times, n)[:, None]).max() < 5e-3


def test_zero_initial_zero_noise_stays_zero():
    sd = spectral("sg", 3)
    tr = _zero_noise_constant_run(sd, 0.0, 1e-2, T=0.5)
    assert np.all(tr.values == 0)


def test_sign_symmetry():
    sd = spectral("sg", 3)
    f = smooth_fields(sd, 1, seed=2)[0]
    cfg = SolverConfig(dt=1e-3, T=0.2, noise=0.0)
    bundle = WickBundle.zero(sd.n, cfg.time_grid(), 3)
    a = solve_remainder(sd, bundle, f, cfg).values
    b = solve_remainder(sd, bundle, -f, cfg).values
    assert np.allclose(a, -b, atol=1e-14)


def test_deterministic_energy_decay():
    # without noise: d/dt (1/2)||v||^2 = -E(v) - ||v||^2 - ||v||_{n+1}^{n+1} <= 0
    sd = spectral("sg", 3)
    f = 3.0 * smooth_fields(sd, 1, seed=5)[0]
    cfg = SolverConfig(dt=1e-3, T=0.5, noise=0.0)
    tr = solve_remainder(sd, WickBundle.zero(sd.n, cfg.time_grid(), 3), f, cfg)
    mu = sd.graph.measure
    l2 = np.sqrt((tr.values**2 * mu).sum(axis=1))
    assert np.all(np.diff(l2) <= 1e-12)
    assert np.all(tr.diagnostics["energy"] >= 0)


def test_binomial_nonlinearity_matches_expanded_power():
    sd = spectral("sg", 2)
    ou = sample_ou_path(sd, 4, [0.0, 0.1])
    b = wick_powers(sd, ou, 0.1, 3)
    v = smooth_fields(sd, 1, seed=1)[0]
    y = b.paths[0, 0]
    c = (y**2 - b.paths[1, 0])  # counterterm recovered from H_2
    expected = -((v + y) ** 3 - 3 * c * (v + y))
    assert np.allclose(binomial_nonlinearity(v, b, 0, 3), expected, atol=1e-10)


def test_picard_agrees_with_exponential_euler():
    sd = spectral("sg", 2)
    ou = sample_ou_path(sd, 3, np.linspace(0, 0.05, 51))
    bundle = wick_powers(sd, ou, 0.05, 3)
    v0 = smooth_fields(sd, 1, seed=3)[0]
    ee = solve_remainder(sd, bundle, v0, SolverConfig(dt=1e-3, T=0.05))
    pc = solve_remainder(sd, bundle, v0, SolverConfig(dt=1e-3, T=0.05, scheme="picard"))
    assert pc.meta["iterations"] < 50
    assert np.abs(ee.values - pc.values).max() < 1e-8


def test_blowup_guard_reports_time():
    sd = spectral("sg", 1)
    cfg = SolverConfig(dt=0.5, T=5.0, noise=0.0)
    with pytest.raises(BlowUpError) as exc:
        solve_remainder(sd, WickBundle.zero(sd.n, cfg.time_grid(), 3), np.full(sd.n, 50.0), cfg)
    assert exc.value.time is not None and exc.value.time <= 5.0


@pytest.mark.parametrize(
    "kw",
    [dict(n=4), dict(n=1), dict(epsilon=0.0), dict(dt=-1.0), dict(T=1e-5), dict(scheme="rk4"),
     dict(monitor_p=3), dict(noise=-1.0), dict(store_every=0), dict(blowup_ceiling=0.0)],
)
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        SolverConfig(**kw).validate()


def test_store_every_thins_output_and_keeps_last():
    sd = spectral("sg", 2)
    cfg = SolverConfig(dt=1e-2, T=0.25, noise=0.0, store_every=10)
    tr = solve_remainder(sd, WickBundle.zero(sd.n, cfg.time_grid(), 3), np.ones(sd.n), cfg)
    assert np.allclose(tr.times, [0.0, 0.1, 0.2, 0.25])


def test_phi_split_and_reproducibility():
    sd = spectral("sg", 3)
    cfg = SolverConfig(dt=1e-3, T=0.05)
    a = solve_phi(sd, 0.5, cfg, seed=9)
    b = solve_phi(sd, 0.5, cfg, seed=9)
    assert np.array_equal(a.values, b.values)
    assert np.allclose(a.values[0], 0.5)
    assert not np.array_equal(a.values, solve_phi(sd, 0.5, cfg, seed=9, replica=1).values)


def test_phi_independent_of_split_without_noise():
    sd = spectral("sg", 3)
    cfg = SolverConfig(dt=1e-3, T=0.1, noise=0.0)
    f = smooth_fields(sd, 1, seed=4)[0]
    direct = solve_phi(sd, f, cfg, seed=0)
    assert np.allclose(direct.values, direct.meta["remainder"].values)
    modal = solve_phi(sd, {"modes": sd.to_modes(f)}, cfg, seed=0)
    assert np.allclose(direct.values, modal.values)


def test_restart_consistency():
    """Running [0, T] once equals two chained runs on [0, T/2] with the OU state carried over."""
    sd = spectral("sg", 2)
    dt = 1e-3
    full_t = dt * np.arange(101)
    ou = sample_ou_path(sd, 5, full_t)
    cfg = SolverConfig(dt=dt, T=0.1)
    full = solve_remainder(sd, wick_powers(sd, ou, cfg.epsilon, 3), np.zeros(sd.n), cfg)
    first = ou.modes[:51]
    second = ou.modes[50:]
    from fracphi.gaussian import OUPath

    p1 = OUPath(sd, full_t[:51], first, ou.seed)
    p2 = OUPath(sd, full_t[50:] - full_t[50], second, ou.seed)
    h1 = solve_remainder(sd, wick_powers(sd, p1, cfg.epsilon, 3), np.zeros(sd.n), SolverConfig(dt=dt, T=0.05))
    h2 = solve_remainder(sd, wick_powers(sd, p2, cfg.epsilon, 3), h1.values[-1], SolverConfig(dt=dt, T=0.05))
    assert np.allclose(np.vstack([h1.values, h2.values[1:]]), full.values, atol=1e-13)


def test_graded_grid():
    g = graded_grid(1.0, 0.01, 1e-6)
    assert g[0] == 0 and g[-1] == pytest.approx(1.0)
    steps = np.diff(g)
    assert steps.min() >= 1e-6 * (1 - 1e-9) and steps.max() <= 0.01 * (1 + 1e-9)
    assert np.all(np.diff(steps[:-1]) >= -1e-15)


def test_cdi_zero_noise_exponent_and_envelope():
    sd = spectral("sg", 2)
    rep = cdi_check(sd, SolverConfig(dt=1e-2, T=1.0, noise=0.0), [10.0, 100.0, 1000.0], seed=0)
    assert rep.exponent_fit == pytest.approx(0.5, abs=0.05)
    assert rep.exponent_ok and rep.passed


def test_cdi_noisy_envelope_is_uniform_in_initial_scale():
    sd = spectral("torus2d", 8)
    rep = cdi_check(sd, SolverConfig(dt=1e-2, T=1.0, epsilon=0.05), [10.0, 100.0, 1000.0], seed=1)
    assert rep.ratio <= 2.0 and rep.passed


def _eps_differences(sd, eps_list, seed, T=0.1, dt=1e-3):
    out = []
    for eps in eps_list:
        runs = [solve_phi(sd, 0.0, SolverConfig(epsilon=e, dt=dt, T=T), seed).meta["remainder"].values
                for e in (eps, eps / 2)]
        out.append(float(np.abs(runs[0] - runs[1]).max()))
    return out


@pytest.mark.parametrize("seed", [0, 1])
def test_remainder_cauchy_trend_once_eps_resolves_the_lowest_mode(seed):
    sd = spectral("torus2d", 16)
    eps_list = [0.00625, 0.003125, 0.0015625]
    assert eps_list[0] < 1 / (2 * sd.eigenvalues[1])
    d = _eps_differences(sd, eps_list, seed)
    assert d[0] > d[1] > d[2]
