"""Iterated function systems for nested fractals and their graph sequences.

A fractal is specified by N similitudes psi_i(x) = U_i x / beta + shift_i
with U_i orthogonal. The boundary V0 is the set of essential fixed
points; the level-n graph G_n has vertex set union psi_word(V0) over all
words of length n, and an edge between every pair of vertices sharing a
cell. Cell words are tuples of 0-based map indices.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .streams import as_generator

ORTHO_TOL = 1e-12
GRID_SCALE = 1e-9  # canonicalization grid = GRID_SCALE * beta**-n


class InvalidFractalError(ValueError):
    pass


class PrecisionError(RuntimeError):
    """Canonicalization merged vertices that are not exact coincidences."""


@dataclass(frozen=True)
class IFSMap:
    """One similitude x -> U x / beta + shift."""

    matrix: np.ndarray
    shift: np.ndarray


class IFSSpec:
    """The map family (psi_i), contraction ratio beta, ambient dimension.

    Invariants enforced here: N >= 2, each U_i orthogonal to 1e-12, and
    psi_1(x) = x / beta (U identity, zero shift) so 0 is a fixed point of
    the first map. The open set condition is user-asserted metadata and
    is never checked.
    """

    def __init__(self, ambient_dim, beta, maps, preset_name=None, open_set_note="user-asserted"):
        self.ambient_dim = int(ambient_dim)
        self.beta = float(beta)
        self.maps = [self._as_map(m) for m in maps]
        self.preset_name = preset_name
        self.open_set_note = open_set_note
        self._validate()
        self._v0 = None

    def _as_map(self, m):
        if isinstance(m, IFSMap):
            U, g = m.matrix, m.shift
        else:
            U, g = m
        U = np.asarray(U, dtype=float).reshape(self.ambient_dim, self.ambient_dim)
        g = np.asarray(g, dtype=float).reshape(self.ambient_dim)
        U.setflags(write=False)
        g.setflags(write=False)
        return IFSMap(U, g)

    def _validate(self):
        if self.ambient_dim < 1:
            raise InvalidFractalError("ambient dimension must be >= 1")
        if self.beta <= 1.0:
            raise InvalidFractalError("contraction ratio beta must exceed 1")
        if len(self.maps) < 2:
            raise InvalidFractalError("need at least 2 maps")
        eye = np.eye(self.ambient_dim)
        for i, m in enumerate(self.maps):
            if np.max(np.abs(m.matrix.T @ m.matrix - eye)) > ORTHO_TOL:
                raise InvalidFractalError(f"map {i} is not orthogonal within {ORTHO_TOL}")
        first = self.maps[0]
        if np.max(np.abs(first.matrix - eye)) > ORTHO_TOL or np.max(np.abs(first.shift)) > ORTHO_TOL:
            raise InvalidFractalError("first map must be x -> x / beta (identity part, zero shift)")

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    def apply(self, i: int, x):
        m = self.maps[i]
        return m.matrix @ np.asarray(x, dtype=float) / self.beta + m.shift

    def fixed_point(self, i: int) -> np.ndarray:
        m = self.maps[i]
        a = np.eye(self.ambient_dim) - m.matrix / self.beta
        return np.linalg.solve(a, m.shift)

    def word_map(self, word):
        """Affine (A, b) of psi_word = psi_{w1} o ... o psi_{wn}."""
        A = np.eye(self.ambient_dim)
        b = np.zeros(self.ambient_dim)
        for i in word:
            m = self.maps[i]
            # compose on the right: current o psi_i
            b = A @ m.shift + b
            A = A @ (m.matrix / self.beta)
        return A, b

    def word_point(self, word, x=None):
        A, b = self.word_map(word)
        if x is None:
            return b
        return A @ np.asarray(x, dtype=float) + b

    def boundary_points(self) -> np.ndarray:
        if self._v0 is None:
            self._v0 = essential_fixed_points(self)
        return self._v0

    def __repr__(self):
        name = self.preset_name or f"{self.n_maps} maps"
        return f"IFSSpec({name}, dim={self.ambient_dim}, beta={self.beta})"


def essential_fixed_points(spec: IFSSpec) -> np.ndarray:
    """The boundary set V0: fixed points x of some psi_i with
    psi_i(x) = psi_j(y) for some j != i and fixed point y.

    Ordered with the origin first, the rest lexicographically.
    """
    tol = GRID_SCALE / spec.beta
    fps = [spec.fixed_point(i) for i in range(spec.n_maps)]
    images = [[spec.apply(i, p) for p in fps] for i in range(spec.n_maps)]
    essential = []
    for xi, x in enumerate(fps):
        hit = False
        for i in range(spec.n_maps):
            for j in range(spec.n_maps):
                if j == i:
                    continue
                if any(np.linalg.norm(images[i][xi] - img) <= tol for img in images[j]):
                    hit = True
                    break
            if hit:
                break
        if hit and not any(np.linalg.norm(x - e) <= tol for e in essential):
            essential.append(x)
    if len(essential) < 2:
        raise InvalidFractalError(f"only {len(essential)} essential fixed points; need at least 2")
    origin = [p for p in essential if np.linalg.norm(p) <= tol]
    if not origin:
        raise InvalidFractalError("0 is not an essential fixed point; renormalize the map family")
    rest = [p for p in essential if np.linalg.norm(p) > tol]
    rest.sort(key=lambda p: tuple(np.round(p / tol).astype(np.int64)))
    return np.array(origin + rest)


@dataclass
class FractalGraph:
    """Level-n graph: canonical vertices, within-cell edges, cell table.

    edges[k] joins vertex ids (a, b); edge_labels[k] gives the V0 indices
    of the two endpoints inside the owning cell edge_cell[k]. cells lists
    (word, vertex ids) in lexicographic word order, so the edge array is
    cell-major. boundary holds the ids of the V0 images.
    """

    spec: IFSSpec
    level: int
    coords: np.ndarray
    addresses: list
    edges: np.ndarray
    edge_labels: np.ndarray
    edge_cell: np.ndarray
    cells: list
    boundary: np.ndarray
    _grid: dict = field(repr=False, default=None)
    _h: float = field(repr=False, default=0.0)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def locate(self, points) -> np.ndarray:
        """Vertex ids of the given coordinates; errors on a miss."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points), dtype=np.int64)
        for k, p in enumerate(points):
            vid, dist = _grid_lookup(self._grid, self.coords, p, self._h)
            if vid < 0 or dist > self._h / 2:
                raise KeyError(f"no vertex at {p}")
            out[k] = vid
        return out

    def cell_index(self, word) -> int:
        n = self.spec.n_maps
        idx = 0
        for letter in word:
            idx = idx * n + int(letter)
        return idx


def _grid_key(p, h):
    return tuple(np.floor(p / h + 0.5).astype(np.int64))

def _grid_lookup(grid, coords, p, h):
    """Nearest registered vertex among neighboring grid cells."""
    base = np.floor(p / h + 0.5).astype(np.int64)
    best, best_d = -1, math.inf
    for off in itertools.product((-1, 0, 1), repeat=len(base)):
        vid = grid.get(tuple(base + np.array(off, dtype=np.int64)))
        if vid is not None:
            d = float(np.linalg.norm(coords[vid] - p))
            if d < best_d:
                best, best_d = vid, d
    return best, best_d


def build_graph(spec: IFSSpec, n: int) -> FractalGraph:
    """Enumerate all length-n cells and identify shared vertices.

    Vertices are canonicalized on a grid of spacing GRID_SCALE * beta**-n;
    true coincidences are exact for nested fractals, so a merge at more
    than 1/20 of the grid spacing is reported as a precision failure.
    """
    if n < 0:
        raise ValueError("level must be >= 0")
    v0 = spec.boundary_points()
    k0 = len(v0)
    h = GRID_SCALE * spec.beta ** (-n)

    grid = {}
    coords = []
    addresses = []

    def canonical(p, word, v0_idx):
        vid, dist = _grid_lookup(grid, coords, p, h)
        if vid >= 0 and dist <= h / 2:
            if dist > h / 20:
                raise PrecisionError(
                    f"level {n}: cell {word} point {v0_idx} at {p} merged with vertex "
                    f"{vid} at {coords[vid]} separated by {dist:.3e} (grid {h:.3e}); "
                    "coordinates are not exact coincidences"
                )
            addresses[vid].append((word, v0_idx))
            return vid
        vid = len(coords)
        coords.append(p)
        grid[_grid_key(p, h)] = vid
        addresses.append([(word, v0_idx)])
        return vid

    # words level by level, carrying the affine composition
    level_words = [((), (np.eye(spec.ambient_dim), np.zeros(spec.ambient_dim)))]
    for _ in range(n):
        nxt = []
        for word, (A, b) in level_words:
            for i, m in enumerate(spec.maps):
                nxt.append((word + (i,), (A @ (m.matrix / spec.beta), A @ m.shift + b)))
        level_words = nxt

    cells = []
    edges = []
    edge_labels = []
    edge_cell = []
    for ci, (word, (A, b)) in enumerate(level_words):
        vids = tuple(canonical(A @ p + b, word, k) for k, p in enumerate(v0))
        if len(set(vids)) != k0:
            raise InvalidFractalError(f"cell {word} collapsed to {len(set(vids))} vertices")
        cells.append((word, vids))
        for a in range(k0):
            for bb in range(a + 1, k0):
                u, v = vids[a], vids[bb]
                edges.append((u, v) if u < v else (v, u))
                edge_labels.append((a, bb))
                edge_cell.append(ci)

    graph = FractalGraph(
        spec=spec,
        level=n,
        coords=np.array(coords),
        addresses=addresses,
        edges=np.array(edges, dtype=np.int64),
        edge_labels=np.array(edge_labels, dtype=np.int64),
        edge_cell=np.array(edge_cell, dtype=np.int64),
        cells=cells,
        boundary=np.zeros(k0, dtype=np.int64),
        _grid=grid,
        _h=h,
    )
    graph.boundary = graph.locate(v0)
    return graph


@dataclass
class AxiomReport:
    level: int
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def _hull(points):
    from shapely.geometry import MultiPoint

    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(len(pts))])
    return MultiPoint([tuple(p) for p in pts]).convex_hull


def verify_nesting(spec: IFSSpec, n: int) -> AxiomReport:
    """Check that distinct n-cell hulls meet only at shared V0-image points.

    Violations are data, not errors; an empty list means the level passes.
    """
    if n < 1:
        raise ValueError("nesting check needs level >= 1")
    if spec.ambient_dim > 2:
        raise NotImplementedError("hull intersection check implemented for dim <= 2")
    graph = build_graph(spec, n)
    h = GRID_SCALE * spec.beta ** (-n)
    hulls = [_hull(graph.coords[list(vids)]) for _, vids in graph.cells]
    violations = []
    for a in range(len(graph.cells)):
        wa, va = graph.cells[a]
        for b in range(a + 1, len(graph.cells)):
            wb, vb = graph.cells[b]
            inter = hulls[a].intersection(hulls[b])
            if inter.is_empty:
                continue
            if getattr(inter, "area", 0.0) > h * h or inter.length > h:
                violations.append((wa, wb, "positive-measure hull overlap"))
                continue
            shared = graph.coords[list(set(va) & set(vb))]
            pts = [inter] if inter.geom_type == "Point" else list(getattr(inter, "geoms", []))
            for pt in pts:
                q = np.array([pt.x, pt.y])[: spec.ambient_dim]
                if len(shared) == 0 or np.min(np.linalg.norm(shared - q, axis=1)) > h:
                    violations.append((wa, wb, f"cells touch at non-shared point {tuple(q)}"))
                    break
    return AxiomReport(n, violations)


def verify_symmetry(spec: IFSSpec, n: int) -> AxiomReport:
    """Check each bisector reflection of a V0 pair permutes the n-cells
    and fixes cells that straddle the reflecting hyperplane."""
    v0 = spec.boundary_points()
    if len(v0) < 2:
        raise InvalidFractalError("symmetry check needs |V0| >= 2")
    graph = build_graph(spec, n)
    tol = 1e-8 * spec.beta ** (-n) + 1e-12
    cell_coords = [graph.coords[list(vids)] for _, vids in graph.cells]
    centroids = np.array([c.mean(axis=0) for c in cell_coords])
    violations = []
    for i in range(len(v0)):
        for j in range(i + 1, len(v0)):
            axis = v0[j] - v0[i]
            u = axis / np.linalg.norm(axis)
            mid = (v0[i] + v0[j]) / 2

            def reflect(p):
                return p - 2.0 * ((p - mid) @ u) * u

            for ci, pts in enumerate(cell_coords):
                ref = np.array([reflect(p) for p in pts])
                d = np.linalg.norm(centroids - ref.mean(axis=0), axis=1)
                cj = int(np.argmin(d))
                ok = d[cj] <= tol and _same_point_set(ref, cell_coords[cj], tol)
                if not ok:
                    violations.append(((i, j), graph.cells[ci][0], "image is not a cell"))
                    continue
                side = (pts - mid) @ u
                # touching the mirror plane is not straddling: such cells
                # may swap with their image; only two-sided cells are pinned
                straddles = side.max() > tol and side.min() < -tol
                if straddles and cj != ci:
                    violations.append(((i, j), graph.cells[ci][0], "straddling cell not fixed"))
    return AxiomReport(n, violations)


def _same_point_set(a, b, tol):
    if len(a) != len(b):
        return False
    used = np.zeros(len(b), dtype=bool)
    for p in a:
        d = np.linalg.norm(b - p, axis=1)
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > tol:
            return False
        used[k] = True
    return True


def sample_self_similar(spec: IFSSpec, depth: int, rng) -> np.ndarray:
    """One draw from the uniform self-similar measure at resolution beta**-depth."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    gen = as_generator(rng)
    letters = gen.integers(0, spec.n_maps, size=depth)
    p = np.zeros(spec.ambient_dim)
    for i in letters[::-1]:
        p = spec.apply(int(i), p)
    return p


_SQ3 = math.sqrt(3.0)

_PRESETS = {
    "sierpinski-gasket": dict(
        dim=2,
        beta=2.0,
        anchors=[(0.0, 0.0), (1.0, 0.0), (0.5, _SQ3 / 2)],
    ),
    "vicsek-2d": dict(
        dim=2,
        beta=3.0,
        anchors=[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)],
    ),
}


def preset_names():
    return sorted(_PRESETS)


def preset(name: str) -> IFSSpec:
    """Built-in fractals: each map is x -> x/beta + (1 - 1/beta) * anchor,
    so every anchor is its map's fixed point."""
    try:
        p = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(preset_names())}") from None
    dim, beta = p["dim"], p["beta"]
    eye = np.eye(dim)
    scale = 1.0 - 1.0 / beta
    maps = [(eye, scale * np.asarray(a, dtype=float)) for a in p["anchors"]]
    return IFSSpec(dim, beta, maps, preset_name=name)
