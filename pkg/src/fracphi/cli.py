"""Command-line front end.

Every subcommand prints a JSON report on standard output.  With ``--out DIR``
it also writes the report, any CSV tables and snapshots into ``DIR`` along
with a ``manifest.json`` (config hash, seed, library versions).

Settings come from built-in defaults, then an optional ``--config`` JSON
file with sections ``space``, ``solver``, ``ensemble`` and ``outputs``, then
command-line flags.

Exit codes: 0 success, 1 domain/validation/usage error, 2 resource error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from . import io as fio
from .besov import BesovParams, besov_norm_dyadic, besov_norm_integral
from .calculus import calderon_residual, paraproduct
from .dpd import SolverConfig, cdi_check, solve_phi
from .ergodic import run_invariant_estimate
from .errors import DomainError, FracphiError, ResourceError
from .extended import parse_exponent
from .gaussian import counterterm_scaling
from .regime import CSV_COLUMNS, classify, phi4_benchmark, region_grid
from .space import build_space, catalog_lookup, known_names
from .spectral import apply_semigroup_op, decompose, heat_diagnostics
from . import rng as rngmod

DEFAULTS: dict[str, dict[str, Any]] = {
    "space": {"name": "sg", "level": 3},
    "solver": {"n": 3, "epsilon": 0.05, "dt": 1e-3, "T": 1.0, "scheme": "exponential_euler", "noise": 1.0},
    "ensemble": {"replicas": 1, "seed": 0},
    "outputs": {"directory": None, "snapshot_every": 1, "formats": ["json", "csv"]},
}

# flag dest -> (section, key)
_OVERRIDES = {
    "space_name": ("space", "name"),
    "level": ("space", "level"),
    "n": ("solver", "n"),
    "epsilon": ("solver", "epsilon"),
    "dt": ("solver", "dt"),
    "T": ("solver", "T"),
    "scheme": ("solver", "scheme"),
    "noise": ("solver", "noise"),
    "replicas": ("ensemble", "replicas"),
    "seed": ("ensemble", "seed"),
    "out": ("outputs", "directory"),
    "snapshot_every": ("outputs", "snapshot_every"),
}


class UsageError(FracphiError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def load_config(path: str | None, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise DomainError("config must be a JSON object")
        for section, values in user.items():
            if section not in cfg:
                raise DomainError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise DomainError(f"config section {section!r} must be an object")
            unknown = set(values) - set(cfg[section])
            if unknown:
                raise DomainError(f"unknown keys in {section!r}: {sorted(unknown)}")
            cfg[section].update(values)
    for dest, (section, key) in _OVERRIDES.items():
        val = getattr(args, dest, None)
        if val is not None:
            cfg[section][key] = val
    return cfg


def _solver_config(cfg: dict, **extra) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(
        n=int(s["n"]), epsilon=float(s["epsilon"]), dt=float(s["dt"]), T=float(s["T"]),
        scheme=str(s["scheme"]), noise=float(s["noise"]), **extra,
    ).validate()


def _decomposed(cfg: dict):
    graph = build_space(cfg["space"]["name"], int(cfg["space"]["level"]))
    return graph, decompose(graph)


def _random_fields(sd, count: int, seed: int, smoothing: float | None = None) -> np.ndarray:
    """Heat-regularized white noise, ``P_s xi`` with ``s`` ten mesh times by default."""
    g = rngmod.stream(seed, 0, rngmod.SPLIT)
    s = smoothing if smoothing is not None else 10.0 * max(sd.graph.mesh_time, 1e-4)
    xi = g.standard_normal((count, sd.n))
    return apply_semigroup_op(sd, "P", s, 0, xi)


# ---------------------------------------------------------------------------
# subcommands; each returns (report, tables, snapshots)


def cmd_catalog(args, cfg):
    return {"spaces": [catalog_lookup(n).to_dict() for n in known_names()]}, {}, {}


def cmd_space(args, cfg):
    graph = build_space(cfg["space"]["name"], int(cfg["space"]["level"]))
    report = {
        "space": graph.spec.to_dict(),
        "level": graph.level,
        "vertices": graph.n_vertices,
        "edges": graph.n_edges,
        "total_measure": graph.total_measure,
        "mesh_time": graph.mesh_time,
        "laplacian_scale": graph.laplacian_scale,
    }
    tables, extra = {}, {}
    if args.adjacency:
        extra["adjacency.json"] = graph.to_json_dict()
    return report, tables, extra


def cmd_regime(args, cfg):
    if args.action == "classify":
        return classify(args.dh, args.dw, args.theta, args.n_regime).to_dict(), {}, {}
    if args.action == "benchmark":
        r = phi4_benchmark(args.dw, args.theta)
        r["singular_window"] = list(r["singular_window"])
        return r, {}, {}
    policy = args.theta_policy
    if policy != "product_minimal":
        try:
            policy = float(policy)
        except ValueError as exc:
            raise DomainError("--theta-policy must be 'product_minimal' or a number") from exc
    rows = region_grid(tuple(args.dw_range), tuple(args.dh_range), policy, args.n_regime, args.resolution)
    summary = {
        "points": len(rows),
        "local": sum(r["local"] for r in rows),
        "global": sum(r["global"] for r in rows),
        "subcritical": sum(r["subcritical"] for r in rows),
        "theta_policy": args.theta_policy,
    }
    if args.out is None:
        summary["rows"] = rows
    return summary, {"regime_grid.csv": (rows, list(CSV_COLUMNS))}, {}


def cmd_heat(args, cfg):
    graph, sd = _decomposed(cfg)
    window = (args.t_min, args.t_max) if args.t_min is not None and args.t_max is not None else None
    d = heat_diagnostics(sd, graph.spec, window, seed=int(cfg["ensemble"]["seed"]))
    rows = [{"t": t, "ondiag": p} for t, p in d.csv_rows()]
    return {"space": graph.spec.name, "level": graph.level, **d.to_dict()}, {"heat_ondiag.csv": (rows, ["t", "ondiag"])}, {}


def cmd_besov(args, cfg):
    graph, sd = _decomposed(cfg)
    params = BesovParams(args.alpha, parse_exponent(args.p), parse_exponent(args.q), args.k)
    if args.field:
        fields = fio.read_field(args.field)[None, :]
    else:
        fields = _random_fields(sd, args.fields, int(cfg["ensemble"]["seed"]))
    rows = []
    for i, f in enumerate(fields):
        dy = besov_norm_dyadic(sd, f, params)
        it = besov_norm_integral(sd, f, params)
        rows.append({"field": i, "dyadic": dy.total, "integral": it.total, "ratio": it.total / dy.total})
    ratios = np.array([r["ratio"] for r in rows])
    report = {
        "space": graph.spec.name, "level": graph.level, "params": params.to_dict(),
        "fields": len(rows), "ratio_min": float(ratios.min()), "ratio_max": float(ratios.max()),
        "equivalence_constant": float(max(ratios.max(), 1.0 / ratios.min())),
    }
    return report, {"besov_norms.csv": (rows, ["field", "dyadic", "integral", "ratio"])}, {}


def cmd_calculus(args, cfg):
    graph, sd = _decomposed(cfg)
    if args.check == "calderon":
        lam = sd.eigenvalues
        res = {k: float(np.abs(calderon_residual(lam, k)).max()) for k in (2, 3, 4)}
        return {"space": graph.spec.name, "level": graph.level, "max_residual": res}, {}, {}
    seed = int(cfg["ensemble"]["seed"])
    fs = _random_fields(sd, 2 * args.pairs, seed)
    rows = []
    for i in range(args.pairs):
        f, g = fs[2 * i], fs[2 * i + 1]
        parts = paraproduct(sd, f, g, b=args.b)
        rows.append({"pair": i, "error": float(np.abs(f * g - parts.reconstruction()).max())})
    return (
        {"space": graph.spec.name, "level": graph.level, "pairs": args.pairs, "b": args.b,
         "max_error": max(r["error"] for r in rows)},
        {"paraproduct.csv": (rows, ["pair", "error"])},
        {},
    )


def cmd_simulate(args, cfg):
    graph, sd = _decomposed(cfg)
    every = int(cfg["outputs"]["snapshot_every"])
    scfg = _solver_config(cfg, store_every=every)
    seed = int(cfg["ensemble"]["seed"])
    reps = int(cfg["ensemble"]["replicas"])
    if reps < 1:
        raise DomainError("replicas must be positive")
    rows, snaps, finals = [], {}, []
    for r in range(reps):
        traj = solve_phi(sd, args.phi0, scfg, seed, replica=r)
        for i, t in enumerate(traj.times):
            rows.append({
                "replica": r, "t": float(t),
                "L2p_norm": float(traj.diagnostics["L2p_norm"][i]),
                "besov_gamma": float(traj.diagnostics["besov_gamma"][i]),
                "energy": float(traj.diagnostics["energy"][i]),
            })
        snaps[f"phi_r{r}.fphi"] = traj
        finals.append(float(np.abs(traj.values[-1]).max()))
    report = {
        "space": graph.spec.name, "level": graph.level, "solver": scfg.to_dict(),
        "seed": seed, "replicas": reps, "final_sup_norm": finals,
    }
    cols = ["replica", "t", "L2p_norm", "besov_gamma", "energy"]
    return report, {"trajectory.csv": (rows, cols)}, snaps


def cmd_cdi(args, cfg):
    graph, sd = _decomposed(cfg)
    scfg = _solver_config(cfg)
    rep = cdi_check(sd, scfg, args.scales, int(cfg["ensemble"]["seed"]), factor=args.factor)
    return {"space": graph.spec.name, "level": graph.level, **rep.to_dict()}, {}, {}


def cmd_invariant(args, cfg):
    graph, sd = _decomposed(cfg)
    scfg = _solver_config(cfg)
    rep = run_invariant_estimate(sd, scfg, args.horizon, args.windows, int(cfg["ensemble"]["seed"]), args.burnin)
    return {"space": graph.spec.name, "level": graph.level, **rep.to_dict()}, {"invariant_windows.csv": (rep.csv_rows(), None)}, {}


def cmd_counterterm(args, cfg):
    graph, sd = _decomposed(cfg)
    eps_min = args.eps_min if args.eps_min is not None else 4.0 * graph.mesh_time
    eps = np.geomspace(eps_min, args.eps_max, args.points)
    fit = counterterm_scaling(sd, eps, float(cfg["solver"]["noise"]))
    return {"space": graph.spec.name, "level": graph.level, **fit.to_dict()}, {}, {}


COMMANDS = {
    "catalog": cmd_catalog,
    "space": cmd_space,
    "regime": cmd_regime,
    "heat": cmd_heat,
    "besov": cmd_besov,
    "calculus": cmd_calculus,
    "simulate": cmd_simulate,
    "cdi": cmd_cdi,
    "invariant": cmd_invariant,
    "counterterm": cmd_counterterm,
}


def _common(p: argparse.ArgumentParser, space: bool = True, solver: bool = False) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    if space:
        p.add_argument("--space", dest="space_name", help="catalog name, e.g. sg, vicsek, torus2d, sg2")
        p.add_argument("--level", type=int, help="refinement level (vertices per side for lattices)")
    if solver:
        p.add_argument("--n", type=int, help="odd nonlinearity degree")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--scheme", choices=["exponential_euler", "picard"])
        p.add_argument("--noise", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracphi", description="Renormalized Phi^{n+1} dynamics on fractal graph approximations.")
    parser.add_argument("--version", action="version", version=f"fracphi {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("catalog", help="list catalog spaces")
    _common(p, space=False)

    p = sub.add_parser("space", help="build a graph approximation")
    _common(p)
    p.add_argument("--adjacency", action="store_true", help="also write a JSON adjacency dump")

    p = sub.add_parser("regime", help="admissibility of (d_h, d_w, theta, n)")
    rs = p.add_subparsers(dest="action", parser_class=_Parser, metavar="ACTION")
    rs.required = True
    c = rs.add_parser("classify")
    _common(c, space=False)
    c.add_argument("--dh", type=float, required=True)
    c.add_argument("--dw", type=float, required=True)
    c.add_argument("--theta", type=float, required=True)
    c.add_argument("--n", dest="n_regime", type=int, required=True)
    b = rs.add_parser("benchmark")
    _common(b, space=False)
    b.add_argument("--dw", type=float, required=True)
    b.add_argument("--theta", type=float, default=1.0)
    g = rs.add_parser("grid")
    _common(g, space=False)
    g.add_argument("--dw-range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    g.add_argument("--dh-range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    g.add_argument("--theta-policy", default="product_minimal", help="'product_minimal' or a fixed theta")
    g.add_argument("--n", dest="n_regime", type=int, default=3)
    g.add_argument("--resolution", type=int, default=50)

    p = sub.add_parser("heat", help="heat-kernel diagnostics")
    _common(p)
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)

    p = sub.add_parser("besov", help="dyadic vs integral Besov norms")
    _common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p", default="2")
    p.add_argument("--q", default="2")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--fields", type=int, default=10, help="number of random fields")
    p.add_argument("--field", help="FPHI snapshot holding the field to measure")

    p = sub.add_parser("calculus", help="Calderon identity or paraproduct reconstruction")
    _common(p)
    p.add_argument("--check", choices=["calderon", "paraproduct"], default="paraproduct")
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--b", type=int, default=2)

    p = sub.add_parser("simulate", help="solve the phi equation")
    _common(p, solver=True)
    p.add_argument("--replicas", type=int)
    p.add_argument("--phi0", type=float, default=0.0, help="constant initial condition")
    p.add_argument("--snapshot-every", type=int)

    p = sub.add_parser("cdi", help="coming-down-from-infinity envelope")
    _common(p, solver=True)
    p.add_argument("--scales", type=float, nargs="+", default=[10.0, 100.0, 1000.0])
    p.add_argument("--factor", type=float, default=2.0)

    p = sub.add_parser("invariant", help="time-averaged stationarity check")
    _common(p, solver=True)
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--windows", type=int, default=2)
    p.add_argument("--burnin", type=float)

    p = sub.add_parser("counterterm", help="scaling of the Wick counterterm in epsilon")
    _common(p, solver=True)
    p.add_argument("--eps-min", type=float, help="default: four mesh times")
    p.add_argument("--eps-max", type=float, default=1e-2)
    p.add_argument("--points", type=int, default=12)
    return parser


def _emit(command: str, cfg: dict, report: dict, tables: dict, extras: dict) -> None:
    out = cfg["outputs"]["directory"]
    text = fio.dumps(report)
    print(text)
    if not out:
        return
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    fio.write_json(outdir / "report.json", report)
    written.append("report.json")
    for name, (rows, cols) in tables.items():
        fio.write_csv(outdir / name, rows, cols)
        written.append(name)
    for name, obj in extras.items():
        if name.endswith(".fphi"):
            fio.snapshot_write(outdir / name, obj)
        else:
            fio.write_json(outdir / name, obj)
        written.append(name)
    fio.write_json(outdir / "manifest.json", fio.manifest(command, cfg, cfg["ensemble"]["seed"], written))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, args)
        report, tables, extras = COMMANDS[args.command](args, cfg)
        _emit(args.command, cfg, report, tables, extras)
        return 0
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except ResourceError as exc:
        _report_error(exc)
        return 2
    except MemoryError as exc:
        _report_error(ResourceError(f"out of memory: {exc}"))
        return 2
    except (FracphiError, ValueError) as exc:
        _report_error(exc)
        return 1


def _report_error(exc: BaseException) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for key in ("time", "sup_norm"):
        val = getattr(exc, key, None)
        if val is not None and math.isfinite(val):
            payload[key] = val
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
