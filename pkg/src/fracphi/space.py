"""Finite weighted-graph approximations of catalog fractals.

A :class:`GraphApproximation` carries the vertex measure, the edge
conductances (already renormalized so that ``L = M^{-1} K`` approximates the
fractal generator), and a hop metric rescaled to unit diameter.  Products are
kept in factored form: the Laplacian of ``a x b`` is the Kronecker sum
``L_a (x) I + I (x) L_b`` and is never assembled unless explicitly requested.

Vertex ordering of a product is row-major: vertex ``(x, y)`` has flat index
``x * |V_b| + y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import CatalogError, ConstructionError, ResourceError

DEFAULT_MAX_VERTICES = 250_000
DEFAULT_MAX_EDGES_MATERIALIZED = 5_000_000
_DISTANCE_MATRIX_LIMIT = 6000


@dataclass(frozen=True)
class FractalSpec:
    """Scaling exponents of a fractal and how its graph approximations scale.

    ``kind`` selects the graph builder.  For the lattice kinds (``interval``,
    ``circle``) the build ``level`` is the number of vertices per side.
    """

    name: str
    d_h: float
    d_w: float
    theta: float
    time_renorm: float
    measure_renorm: float
    kind: str = "custom"
    factors: tuple["FractalSpec", ...] = ()

    def __post_init__(self) -> None:
        for label in ("d_h", "d_w", "time_renorm", "measure_renorm"):
            value = getattr(self, label)
            if not (math.isfinite(value) and value > 0):
                raise ConstructionError(f"{label} must be a positive real, got {value!r}")
        if not (0.0 < self.theta <= 1.0):
            raise ConstructionError(f"theta must lie in (0, 1], got {self.theta!r}")

    @property
    def d_s(self) -> float:
        """Spectral dimension 2 d_h / d_w."""
        return 2.0 * self.d_h / self.d_w

    @property
    def is_product(self) -> bool:
        return bool(self.factors)

    def exponents(self) -> tuple[float, float, float]:
        return (self.d_h, self.d_w, self.theta)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "d_h": self.d_h,
            "d_w": self.d_w,
            "theta": self.theta,
            "d_s": self.d_s,
            "time_renorm": self.time_renorm,
            "measure_renorm": self.measure_renorm,
            "kind": self.kind,
        }
        if self.factors:
            out["factors"] = [f.name for f in self.factors]
        return out


_LN2, _LN3, _LN5 = math.log(2.0), math.log(3.0), math.log(5.0)

SG = FractalSpec("sg", _LN3 / _LN2, _LN5 / _LN2, _LN5 / _LN2 - _LN3 / _LN2, 5.0, 3.0, "sg")
VICSEK = FractalSpec("vicsek", _LN5 / _LN3, _LN5 / _LN3 + 1.0, 1.0, 15.0, 5.0, "vicsek")
INTERVAL = FractalSpec("interval", 1.0, 2.0, 1.0, 4.0, 2.0, "interval")
CIRCLE = FractalSpec("circle", 1.0, 2.0, 1.0, 4.0, 2.0, "circle")


def product_spec(a: FractalSpec, b: FractalSpec, name: str | None = None) -> FractalSpec:
    """Exponents of ``a x b``: Hausdorff dimensions add, d_w is shared, theta is the minimum."""
    if not math.isclose(a.d_w, b.d_w, rel_tol=1e-12):
        raise ConstructionError(
            f"product of {a.name} and {b.name} needs a common walk dimension "
            f"({a.d_w:.6g} != {b.d_w:.6g})"
        )
    if not math.isclose(a.time_renorm, b.time_renorm, rel_tol=1e-12):
        raise ConstructionError(
            f"product of {a.name} and {b.name} needs a common time renormalization"
        )
    return FractalSpec(
        name or f"{a.name}x{b.name}",
        a.d_h + b.d_h,
        a.d_w,
        min(a.theta, b.theta),
        a.time_renorm,
        a.measure_renorm * b.measure_renorm,
        "product",
        (a, b),
    )


_CATALOG: dict[str, FractalSpec] = {
    "sg": SG,
    "vicsek": VICSEK,
    "interval": INTERVAL,
    "circle": CIRCLE,
}
_CATALOG["torus2d"] = product_spec(CIRCLE, CIRCLE, "torus2d")
_CATALOG["sg2"] = product_spec(SG, SG, "sg2")
_CATALOG["vicsek2"] = product_spec(VICSEK, VICSEK, "vicsek2")


def known_names() -> list[str]:
    return sorted(_CATALOG)


def register_product(name: str, a: str, b: str) -> FractalSpec:
    """Register ``name`` as the product of two catalog entries."""
    spec = product_spec(catalog_lookup(a), catalog_lookup(b), name)
    _CATALOG[name] = spec
    return spec


def catalog_lookup(name: str) -> FractalSpec:
    """Return the catalog entry ``name``.

    Besides the registered names, ``"AxB"`` is accepted for any two entries
    ``A`` and ``B`` with a common walk dimension.
    """
    key = str(name).strip().lower()
    if key in _CATALOG:
        return _CATALOG[key]
    if "x" in key:
        parts = key.split("x")
        if len(parts) == 2 and all(p in _CATALOG for p in parts):
            return product_spec(_CATALOG[parts[0]], _CATALOG[parts[1]], key)
    raise CatalogError(f"unknown space {name!r}; known names: {', '.join(known_names())}")


# ---------------------------------------------------------------------------
# graph containers


@dataclass(eq=False)
class GraphApproximation:
    """Weighted graph with vertex measure approximating a fractal.

    Explicit graphs store ``edges`` (shape ``(E, 2)``) and ``conductances``.
    Product graphs store ``factors`` and derive everything from them.
    """

    spec: FractalSpec
    level: int
    measure: np.ndarray
    laplacian_scale: float
    mesh_time: float
    hop_diameter: int
    _edges: np.ndarray | None = None
    _conductances: np.ndarray | None = None
    factors: tuple["GraphApproximation", ...] = ()
    coords: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.measure = np.ascontiguousarray(self.measure, dtype=float)
        self.measure.setflags(write=False)
        if self._edges is not None:
            self._edges = np.ascontiguousarray(self._edges, dtype=np.int64).reshape(-1, 2)
            self._conductances = np.ascontiguousarray(self._conductances, dtype=float)
            self._edges.setflags(write=False)
            self._conductances.setflags(write=False)

    # -- basic shape -------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return int(self.measure.shape[0])

    @property
    def is_product(self) -> bool:
        return bool(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        """Field shape in factored form: ``(N,)`` or ``(N_a, N_b)``."""
        if self.factors:
            return tuple(f.n_vertices for f in self.factors)
        return (self.n_vertices,)

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def n_edges(self) -> int:
        if self.factors:
            a, b = self.factors
            return a.n_edges * b.n_vertices + a.n_vertices * b.n_edges
        return int(self._edges.shape[0])

    @property
    def edges(self) -> np.ndarray:
        if not self.factors:
            return self._edges
        return self._materialized()[0]

    @property
    def conductances(self) -> np.ndarray:
        if not self.factors:
            return self._conductances
        return self._materialized()[1]

    def _materialized(self) -> tuple[np.ndarray, np.ndarray]:
        if "materialized" in self._cache:
            return self._cache["materialized"]
        if self.n_edges > DEFAULT_MAX_EDGES_MATERIALIZED:
            raise ResourceError(
                f"refusing to materialize {self.n_edges} product edges; use the factored form"
            )
        a, b = self.factors
        nb = b.n_vertices
        ea, ca = a.edges, a.conductances
        eb, cb = b.edges, b.conductances
        ys = np.arange(nb)
        xs = np.arange(a.n_vertices)
        # edges moving in the a-coordinate, weighted by mu_b(y)
        e1 = np.stack(
            [(ea[:, None, 0] * nb + ys[None, :]).ravel(), (ea[:, None, 1] * nb + ys[None, :]).ravel()],
            axis=1,
        )
        c1 = (ca[:, None] * b.measure[None, :]).ravel()
        e2 = np.stack(
            [(xs[:, None] * nb + eb[None, :, 0]).ravel(), (xs[:, None] * nb + eb[None, :, 1]).ravel()],
            axis=1,
        )
        c2 = (a.measure[:, None] * cb[None, :]).ravel()
        out = (np.concatenate([e1, e2]), np.concatenate([c1, c2]))
        self._cache["materialized"] = out
        return out

    # -- operators -----------------------------------------------------------
    @property
    def conductance_laplacian(self) -> sparse.csr_matrix:
        """Sparse symmetric K with (Kf)(x) = sum_y c_xy (f(x) - f(y))."""
        if "K" not in self._cache:
            n = self.n_vertices
            e, c = self.edges, self.conductances
            w = sparse.coo_matrix(
                (np.concatenate([c, c]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
                shape=(n, n),
            ).tocsr()
            deg = np.asarray(w.sum(axis=1)).ravel()
            self._cache["K"] = (sparse.diags(deg) - w).tocsr()
        return self._cache["K"]

    def apply_laplacian(self, f: np.ndarray) -> np.ndarray:
        """Apply ``L = M^{-1} K`` to a field (or to the columns of a 2-D array of fields)."""
        f = np.asarray(f, dtype=float)
        if self.factors:
            a, b = self.factors
            na, nb = a.n_vertices, b.n_vertices
            lead = f.shape[1:] if f.ndim > 1 else ()
            F = f.reshape((na, nb) + lead)
            out = np.empty_like(F)
            # L_a acting on the first axis, L_b on the second
            La = a.apply_laplacian(F.reshape(na, -1)).reshape(F.shape)
            Fb = np.moveaxis(F, 1, 0).reshape(nb, -1)
            Lb = np.moveaxis(b.apply_laplacian(Fb).reshape((nb, na) + lead), 0, 1)
            out[...] = La + Lb
            return out.reshape(f.shape)
        Kf = self.conductance_laplacian @ f
        if f.ndim == 1:
            return Kf / self.measure
        return Kf / self.measure[:, None]

    def dirichlet_energy(self, u: np.ndarray, v: np.ndarray) -> float:
        """Edge form: sum over edges of c_xy (u(x)-u(y)) (v(x)-v(y))."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.factors:
            a, b = self.factors
            U = u.reshape(a.n_vertices, b.n_vertices)
            V = v.reshape(a.n_vertices, b.n_vertices)
            ea, eb = a.edges, b.edges
            part_a = np.einsum(
                "e,ey,ey,y->", a.conductances, U[ea[:, 0]] - U[ea[:, 1]], V[ea[:, 0]] - V[ea[:, 1]], b.measure
            )
            part_b = np.einsum(
                "e,xe,xe,x->", b.conductances, U[:, eb[:, 0]] - U[:, eb[:, 1]], V[:, eb[:, 0]] - V[:, eb[:, 1]], a.measure
            )
            return float(part_a + part_b)
        e = self._edges
        return float(np.sum(self._conductances * (u[e[:, 0]] - u[e[:, 1]]) * (v[e[:, 0]] - v[e[:, 1]])))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Measure-weighted inner product <f, g>_mu."""
        return float(np.sum(np.asarray(f) * np.asarray(g) * self.measure))

    # -- metric --------------------------------------------------------------
    def _hop_distances(self, sources: np.ndarray) -> np.ndarray:
        if self.factors:
            raise AssertionError("unreachable")
        n = self.n_vertices
        e = self._edges
        adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
        return csgraph.shortest_path(adj, directed=False, unweighted=True, indices=sources)

    def distances_from(self, sources: Iterable[int] | int) -> np.ndarray:
        """Normalized graph distance from each source to every vertex, shape ``(len(sources), N)``."""
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if np.any(src < 0) or np.any(src >= self.n_vertices):
            raise ConstructionError("vertex index out of range")
        return self._raw_hops(src) / self.hop_diameter

    def _raw_hops(self, src: np.ndarray) -> np.ndarray:
        if not self.factors:
            return self._hop_distances(src)
        a, b = self.factors
        nb = b.n_vertices
        xa, yb = np.divmod(src, nb)
        ha = a._raw_hops(np.unique(xa))
        hb = b._raw_hops(np.unique(yb))
        ia = np.searchsorted(np.unique(xa), xa)
        ib = np.searchsorted(np.unique(yb), yb)
        return (ha[ia][:, :, None] + hb[ib][:, None, :]).reshape(len(src), -1)

    def distance_matrix(self) -> np.ndarray:
        """All-pairs normalized distances (cached; small graphs only)."""
        if "D" not in self._cache:
            n = self.n_vertices
            if n > _DISTANCE_MATRIX_LIMIT:
                raise ResourceError(f"all-pairs distances for {n} vertices exceed the limit {_DISTANCE_MATRIX_LIMIT}")
            self._cache["D"] = self.distances_from(np.arange(n))
        return self._cache["D"]

    # -- serialization -------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "format": "fracphi-graph",
            "version": 1,
            "spec": self.spec.to_dict(),
            "level": self.level,
            "vertex_count": self.n_vertices,
            "edge_count": self.n_edges,
            "laplacian_scale": self.laplacian_scale,
            "mesh_time": self.mesh_time,
            "hop_diameter": self.hop_diameter,
            "measure": self.measure.tolist(),
            "edges": [[int(i), int(j), float(c)] for (i, j), c in zip(self.edges, self.conductances)],
        }


# ---------------------------------------------------------------------------
# builders


def _dedupe(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique integer points and the inverse index, ordered lexicographically."""
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def _sg_cells(level: int) -> np.ndarray:
    size = 2**level
    cells = np.array([[[0, 0], [size, 0], [0, size]]], dtype=np.int64)
    for _ in range(level):
        a, b, c = cells[:, 0], cells[:, 1], cells[:, 2]
        ab, ac, bc = (a + b) // 2, (a + c) // 2, (b + c) // 2
        cells = np.concatenate(
            [np.stack([a, ab, ac], 1), np.stack([ab, b, bc], 1), np.stack([ac, bc, c], 1)]
        )
    return cells


def _build_sg(spec: FractalSpec, level: int) -> GraphApproximation:
    cells = _sg_cells(level)
    pts, inv = _dedupe(cells.reshape(-1, 2))
    tri = inv.reshape(-1, 3)
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    edges = np.sort(edges, axis=1)
    n = len(pts)
    measure = np.bincount(tri.ravel(), minlength=n) * (spec.measure_renorm ** -level / 3.0)
    cond = np.full(len(edges), (spec.time_renorm / spec.measure_renorm) ** level)
    # triangular-lattice coordinates -> plane
    xy = pts.astype(float) / 2**level
    coords = np.stack([xy[:, 0] + 0.5 * xy[:, 1], (math.sqrt(3) / 2) * xy[:, 1]], axis=1)
    return GraphApproximation(
        spec, level, measure, spec.time_renorm**level, spec.time_renorm ** -level, 2**level,
        edges, cond, coords=coords,
    )


_VICSEK_OFFSETS = ((0, 0), (2, 0), (0, 2), (2, 2), (1, 1))


def _build_vicsek(spec: FractalSpec, level: int) -> GraphApproximation:
    size = 2 * 3**level
    cells = np.array([[0, 0, size]], dtype=np.int64)
    for _ in range(level):
        s = cells[:, 2] // 3
        cells = np.concatenate(
            [np.stack([cells[:, 0] + i * s, cells[:, 1] + j * s, s], 1) for i, j in _VICSEK_OFFSETS]
        )
    ox, oy, s = cells[:, 0], cells[:, 1], cells[:, 2]
    h = s // 2
    star = np.stack(
        [
            np.stack([ox + h, oy + h], 1),
            np.stack([ox, oy], 1),
            np.stack([ox + s, oy], 1),
            np.stack([ox, oy + s], 1),
            np.stack([ox + s, oy + s], 1),
        ],
        axis=1,
    )
    pts, inv = _dedupe(star.reshape(-1, 2))
    cell_v = inv.reshape(-1, 5)
    edges = np.concatenate([np.stack([cell_v[:, 0], cell_v[:, j]], 1) for j in range(1, 5)])
    edges = np.sort(edges, axis=1)
    n = len(pts)
    measure = np.bincount(cell_v.ravel(), minlength=n) * (spec.measure_renorm ** -level / 5.0)
    cond = np.full(len(edges), (spec.time_renorm / spec.measure_renorm) ** level)
    return GraphApproximation(
        spec, level, measure, spec.time_renorm**level, spec.time_renorm ** -level, 2 * 3**level,
        edges, cond, coords=pts.astype(float) / size,
    )


def _build_interval(spec: FractalSpec, n: int) -> GraphApproximation:
    if n < 2:
        raise ConstructionError("interval needs at least 2 vertices")
    h = 1.0 / (n - 1)
    measure = np.full(n, h)
    measure[[0, -1]] = h / 2
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], 1)
    cond = np.full(n - 1, 1.0 / h)
    return GraphApproximation(
        spec, n, measure, (n - 1) ** 2, h * h, n - 1, edges, cond,
        coords=np.linspace(0.0, 1.0, n)[:, None],
    )


def _build_circle(spec: FractalSpec, n: int) -> GraphApproximation:
    if n < 3:
        raise ConstructionError("circle needs at least 3 vertices")
    h = 1.0 / n
    edges = np.sort(np.stack([np.arange(n), (np.arange(n) + 1) % n], 1), axis=1)
    return GraphApproximation(
        spec, n, np.full(n, h), float(n * n), h * h, n // 2, edges, np.full(n, 1.0 / h),
        coords=(np.arange(n) * h)[:, None],
    )


def _predicted_vertices(spec: FractalSpec, level: int) -> int:
    if spec.factors:
        a, b = spec.factors
        return _predicted_vertices(a, level) * _predicted_vertices(b, level)
    if spec.kind == "sg":
        return 3 * (3**level + 1) // 2
    if spec.kind == "vicsek":
        return _vicsek_count(level)
    return level


def _vicsek_count(level: int) -> int:
    count = 5
    for _ in range(level):
        count = 5 * count - 4
    return count


_BUILDERS = {"sg": _build_sg, "vicsek": _build_vicsek, "interval": _build_interval, "circle": _build_circle}


def build_space(spec: FractalSpec | str, level: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> GraphApproximation:
    """Build the level-``level`` approximation of ``spec``.

    For lattice entries (interval, circle, torus2d) ``level`` is the number of
    vertices per side.  Raises :class:`ResourceError` if the predicted vertex
    count exceeds ``max_vertices``.
    """
    if isinstance(spec, str):
        spec = catalog_lookup(spec)
    level = int(level)
    if level < 0:
        raise ConstructionError("level must be nonnegative")
    predicted = _predicted_vertices(spec, level)
    if predicted > max_vertices:
        raise ResourceError(
            f"{spec.name} at level {level} has {predicted} vertices, above the limit {max_vertices}"
        )
    if spec.factors:
        a, b = spec.factors
        return product_space(build_space(a, level, max_vertices), build_space(b, level, max_vertices), spec)
    try:
        builder = _BUILDERS[spec.kind]
    except KeyError:
        raise ConstructionError(f"no builder for kind {spec.kind!r}") from None
    return builder(spec, level)


def product_space(a: GraphApproximation, b: GraphApproximation, spec: FractalSpec | None = None) -> GraphApproximation:
    """Cartesian product with product measure and Kronecker-sum Laplacian."""
    if a.is_product or b.is_product:
        raise ConstructionError("only products of two non-product graphs are supported")
    if not math.isclose(a.laplacian_scale, b.laplacian_scale, rel_tol=1e-12):
        raise ConstructionError(
            f"incompatible scaling: laplacian_scale {a.laplacian_scale:g} vs {b.laplacian_scale:g}"
        )
    if spec is None:
        spec = product_spec(a.spec, b.spec)
    measure = np.outer(a.measure, b.measure).ravel()
    return GraphApproximation(
        spec,
        a.level,
        measure,
        a.laplacian_scale,
        max(a.mesh_time, b.mesh_time),
        a.hop_diameter + b.hop_diameter,
        factors=(a, b),
    )


def graph_from_edges(
    n_vertices: int,
    edges: Sequence[tuple[int, int]],
    conductances: Sequence[float] | float = 1.0,
    measure: Sequence[float] | float = 1.0,
    spec: FractalSpec | None = None,
) -> GraphApproximation:
    """Build an explicit graph from an edge list (for tests and small oracles)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    cond = np.broadcast_to(np.asarray(conductances, dtype=float), (len(edges),)).copy()
    mu = np.broadcast_to(np.asarray(measure, dtype=float), (n_vertices,)).copy()
    if np.any(edges < 0) or np.any(edges >= n_vertices) or np.any(edges[:, 0] == edges[:, 1]):
        raise ConstructionError("edges must join two distinct existing vertices")
    if np.any(cond <= 0) or np.any(mu <= 0):
        raise ConstructionError("conductances and measure must be positive")
    spec = spec or FractalSpec("custom", 1.0, 2.0, 1.0, 1.0, 1.0, "custom")
    g = GraphApproximation(spec, 0, mu, 1.0, 0.0, 1, np.sort(edges, axis=1), cond)
    hops = g._hop_distances(np.arange(n_vertices))
    if not np.all(np.isfinite(hops)):
        raise ConstructionError("graph is not connected")
    g.hop_diameter = max(int(hops.max()), 1)
    return g
