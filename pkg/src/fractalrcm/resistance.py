"""Weighted graph Laplacians, Schur traces, effective resistance, hitting times.

Energy convention: E(f) = sum over unordered edges of w_e (f(a) - f(b))^2,
which equals the half double-sum over ordered pairs with per-pair
conductances. Effective resistance is 1 / inf{E(f) : f(x)=1, f(y)=0}.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

METRIC_TOL = 1e-10
CLAMP_TOL = 1e-12  # relative, for negative Schur off-diagonals


class SingularTraceError(RuntimeError):
    """An interior component has no path to the boundary."""


class TargetUnreachableError(RuntimeError):
    pass


@dataclass(frozen=True)
class EdgeNetwork:
    """A bare weighted-graph skeleton for networks that are not fractal levels."""

    n_vertices: int
    edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))


@dataclass
class ConductanceField:
    """Per-edge weights on a graph, with the vertex measure nu they induce."""

    graph: object
    weights: np.ndarray
    origin: str = "deterministic"  # {deterministic, random, scaled}
    scale: float = 1.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        ne = len(self.graph.edges)
        if self.weights.shape != (ne,):
            raise ValueError(f"need {ne} edge weights, got shape {self.weights.shape}")
        if not np.all(self.weights > 0):
            raise ValueError("conductances must be strictly positive")
        if np.any(self.nu() <= 0):
            raise ValueError("every vertex needs positive incident weight")

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    def nu(self) -> np.ndarray:
        """nu(x) = sum of weights of edges incident to x."""
        out = np.zeros(self.graph.n_vertices)
        np.add.at(out, self.graph.edges[:, 0], self.weights)
        np.add.at(out, self.graph.edges[:, 1], self.weights)
        return out

    def laplacian(self) -> np.ndarray:
        n = self.graph.n_vertices
        L = np.zeros((n, n))
        a, b = self.graph.edges[:, 0], self.graph.edges[:, 1]
        np.add.at(L, (a, b), -self.weights)
        np.add.at(L, (b, a), -self.weights)
        np.add.at(L, (a, a), self.weights)
        np.add.at(L, (b, b), self.weights)
        return L

    def replace(self, weights, origin=None, scale=None) -> "ConductanceField":
        return ConductanceField(
            self.graph, weights, origin or self.origin, self.scale if scale is None else scale
        )


def energy(field: ConductanceField, f) -> float:
    """Dirichlet energy sum_e w_e (df_e)^2."""
    f = np.asarray(f, dtype=float)
    if f.shape != (field.graph.n_vertices,):
        raise ValueError(f"f must have one value per vertex ({field.graph.n_vertices})")
    d = f[field.graph.edges[:, 0]] - f[field.graph.edges[:, 1]]
    return float(field.weights @ d**2)


@dataclass
class BoundaryForm:
    """A conductance network on an ordered vertex subset (a traced form)."""

    vertices: np.ndarray
    conductances: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        C = np.asarray(self.conductances, dtype=float)
        k = len(self.vertices)
        if C.shape != (k, k):
            raise ValueError("conductance matrix shape mismatch")
        if np.max(np.abs(C - C.T)) > 1e-9 * max(1.0, np.max(np.abs(C))):
            raise ValueError("conductance matrix must be symmetric")
        C = (C + C.T) / 2
        np.fill_diagonal(C, 0.0)
        if np.min(C) < 0:
            raise ValueError("conductances must be nonnegative")
        self.conductances = C
        if not _connected_matrix(C):
            raise ValueError("induced boundary network is disconnected")

    @property
    def size(self) -> int:
        return len(self.vertices)

    def laplacian(self) -> np.ndarray:
        L = -self.conductances.copy()
        np.fill_diagonal(L, self.conductances.sum(axis=1))
        return L

    def energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(f @ self.laplacian() @ f)

    def trace_to(self, keep_positions) -> "BoundaryForm":
        """Schur-complement this form onto a subset of its own vertices."""
        keep = np.asarray(keep_positions, dtype=np.int64)
        S = _schur(self.laplacian(), keep)
        return BoundaryForm(self.vertices[keep], _offdiag_conductances(S))

    def kernel(self) -> "ResistanceKernel":
        return ResistanceKernel(self.vertices, _resistances_from_laplacian(self.laplacian()))


def _connected_matrix(C) -> bool:
    n = len(C)
    if n <= 1:
        return True
    seen = np.zeros(n, dtype=bool)
    queue = deque([0])
    seen[0] = True
    while queue:
        i = queue.popleft()
        for j in np.nonzero(C[i] > 0)[0]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def _adjacency(n, edges, weights):
    adj = [[] for _ in range(n)]
    for (a, b), w in zip(edges, weights):
        adj[a].append(b)
        adj[b].append(a)
    return adj


def _reachable(field: ConductanceField, sources) -> np.ndarray:
    n = field.graph.n_vertices
    adj = _adjacency(n, field.graph.edges, field.weights)
    seen = np.zeros(n, dtype=bool)
    queue = deque(int(s) for s in np.atleast_1d(sources))
    for s in queue:
        seen[s] = True
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return seen


def _schur(L, keep) -> np.ndarray:
    """Schur complement of a Laplacian onto the kept rows/columns."""
    n = len(L)
    mask = np.zeros(n, dtype=bool)
    mask[keep] = True
    interior = np.where(~mask)[0]
    A = L[np.ix_(keep, keep)]
    if len(interior) == 0:
        return A.copy()
    B = L[np.ix_(keep, interior)]
    D = L[np.ix_(interior, interior)]
    try:
        S = A - B @ cho_solve(cho_factor(D), B.T)
    except np.linalg.LinAlgError as exc:
        raise SingularTraceError(f"interior block is singular: {exc}") from None
    return (S + S.T) / 2


def _offdiag_conductances(S) -> np.ndarray:
    C = -S.copy()
    np.fill_diagonal(C, 0.0)
    scale = max(1.0, float(np.max(np.abs(S))))
    low = float(np.min(C))
    if low < -CLAMP_TOL * scale:
        raise SingularTraceError(f"trace produced negative conductance {low:.3e}")
    np.clip(C, 0.0, None, out=C)
    return C


def trace_to(field: ConductanceField, boundary) -> BoundaryForm:
    """The network on `boundary` whose energy is the infimum over interior
    extensions: the Schur complement of the weighted Laplacian."""
    boundary = np.asarray(boundary, dtype=np.int64)
    if len(boundary) == 0:
        raise ValueError("boundary must be nonempty")
    if not _reachable(field, boundary).all():
        raise SingularTraceError("an interior component is disconnected from the boundary")
    S = _schur(field.laplacian(), boundary)
    return BoundaryForm(boundary, _offdiag_conductances(S))


def trace_to_level(field: ConductanceField, k: int) -> BoundaryForm:
    """Trace a level-n fractal field onto V_k by eliminating cell interiors
    level by level, merging sibling cells. O(N^n) small dense solves."""
    graph = field.graph
    n = graph.level
    if not 0 <= k <= n:
        raise ValueError(f"target level {k} outside 0..{n}")
    spec = graph.spec
    v0 = spec.boundary_points()
    k0 = len(v0)

    # leaf forms: per-cell conductance matrices on local V0 labels
    forms = []
    for word, vids in graph.cells:
        forms.append((np.asarray(vids, dtype=np.int64), np.zeros((k0, k0))))
    for (a, b), ci, w in zip(graph.edge_labels, graph.edge_cell, field.weights):
        forms[ci][1][a, b] += w
        forms[ci][1][b, a] += w

    nmaps = spec.n_maps
    words = [word for word, _ in graph.cells]
    for level in range(n, k, -1):
        parent_words = [words[i] for i in range(0, len(words), nmaps)]
        merged = []
        for pi, pword in enumerate(parent_words):
            pword = pword[:-1]
            children = forms[pi * nmaps : (pi + 1) * nmaps]
            keep_ids = graph.locate([spec.word_point(pword, p) for p in v0])
            merged.append((keep_ids, _merge_cells(children, keep_ids)))
        forms = merged
        words = [w[:-1] for w in words[::nmaps]]

    ids = np.unique(np.concatenate([ids for ids, _ in forms]))
    pos = {int(v): i for i, v in enumerate(ids)}
    C = np.zeros((len(ids), len(ids)))
    for vids, c in forms:
        loc = [pos[int(v)] for v in vids]
        C[np.ix_(loc, loc)] += c
    return BoundaryForm(ids, C)


def _merge_cells(children, keep_ids):
    ids = np.unique(np.concatenate([ids for ids, _ in children]))
    pos = {int(v): i for i, v in enumerate(ids)}
    L = np.zeros((len(ids), len(ids)))
    for vids, c in children:
        loc = [pos[int(v)] for v in vids]
        Lc = -c.copy()
        np.fill_diagonal(Lc, c.sum(axis=1))
        L[np.ix_(loc, loc)] += Lc
    keep = np.array([pos[int(v)] for v in keep_ids], dtype=np.int64)
    return _offdiag_conductances(_schur(L, keep))


class ResistanceKernel:
    """Pairwise effective resistances on an ordered support.

    The metric axioms (symmetry, zero diagonal exactly at x = y, triangle
    inequality) are checked on every instance, at a tolerance relative to
    the kernel magnitude.
    """

    def __init__(self, support, matrix, tol=METRIC_TOL):
        self.support = np.asarray(support, dtype=np.int64)
        M = np.asarray(matrix, dtype=float)
        k = len(self.support)
        if M.shape != (k, k):
            raise ValueError("kernel matrix shape mismatch")
        scale = max(1.0, float(np.max(np.abs(M)))) if k else 1.0
        if k and np.max(np.abs(M - M.T)) > tol * scale:
            raise ValueError("resistance matrix must be symmetric")
        M = (M + M.T) / 2
        if k and np.max(np.abs(np.diag(M))) > tol * scale:
            raise ValueError("resistance diagonal must vanish")
        np.fill_diagonal(M, 0.0)
        off = M[~np.eye(k, dtype=bool)]
        if off.size and np.min(off) <= 0:
            raise ValueError("distinct vertices must have positive resistance")
        viol = _triangle_violation(M)
        if viol > tol * scale:
            raise ValueError(f"triangle inequality violated by {viol:.3e}")
        self.matrix = M

    @property
    def size(self) -> int:
        return len(self.support)

    def value(self, i: int, j: int) -> float:
        """Resistance between support positions i and j."""
        return float(self.matrix[i, j])

    def restrict(self, positions) -> "ResistanceKernel":
        positions = np.asarray(positions, dtype=np.int64)
        return ResistanceKernel(self.support[positions], self.matrix[np.ix_(positions, positions)])

    def align_to(self, labels) -> "ResistanceKernel":
        """Reorder so that support matches the given labels."""
        index = {int(v): i for i, v in enumerate(self.support)}
        try:
            positions = [index[int(v)] for v in labels]
        except KeyError as exc:
            raise KeyError(f"label {exc} not in kernel support") from None
        return self.restrict(positions)

    def to_csv(self, path):
        with open(path, "w", encoding="utf8") as fh:
            fh.write(",".join(str(int(v)) for v in self.support) + "\n")
            for row in self.matrix:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ResistanceKernel":
        with open(path, "r", encoding="utf8") as fh:
            support = [int(tok) for tok in fh.readline().strip().split(",")]
            rows = [[float(tok) for tok in line.strip().split(",")] for line in fh if line.strip()]
        return cls(support, np.array(rows))

    def __repr__(self):
        return f"ResistanceKernel({self.size} vertices)"


def _triangle_violation(R) -> float:
    # metric iff R[i,j] == min_k (R[i,k] + R[k,j]); the min-plus square
    best = np.full_like(R, np.inf)
    for k in range(len(R)):
        np.minimum(best, R[:, k : k + 1] + R[k : k + 1, :], out=best)
    return float(np.max(R - best)) if len(R) else 0.0


def _resistances_from_laplacian(L) -> np.ndarray:
    # grounded inverse: R is invariant to the rank-one gauge, and the
    # Cholesky route keeps the triangle slack at rounding level where the
    # eigen-route pseudoinverse drifts on stiff random weights
    n = len(L)
    M = np.zeros((n, n))
    if n > 1:
        try:
            M[1:, 1:] = cho_solve(cho_factor(L[1:, 1:]), np.eye(n - 1))
        except np.linalg.LinAlgError as exc:
            raise SingularTraceError(str(exc)) from None
    d = np.diag(M)
    return d[:, None] + d[None, :] - 2 * M


def effective_resistance(field: ConductanceField, x: int, y: int, route: str = "solve") -> float:
    """R(x, y) = 1 / inf{E(f) : f(x)=1, f(y)=0}; 0 when x == y.

    route `solve` does one pinned linear solve; route `trace` reduces the
    network to {x, y}. The two agree to 1e-10 and are cross-checked in
    the test suite.
    """
    x, y = int(x), int(y)
    if x == y:
        return 0.0
    if route == "trace":
        form = trace_to(field, [x, y])
        return 1.0 / form.conductances[0, 1]
    if route != "solve":
        raise ValueError(f"unknown route {route!r}")
    reach = _reachable(field, [y])
    if not reach[x]:
        raise TargetUnreachableError(f"{x} and {y} are in different components")
    L = field.laplacian()
    idx = np.where(reach)[0]
    idx = idx[idx != y]
    rhs = np.zeros(len(idx))
    rhs[np.searchsorted(idx, x)] = 1.0
    try:
        phi = cho_solve(cho_factor(L[np.ix_(idx, idx)]), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularTraceError(str(exc)) from None
    return float(phi[np.searchsorted(idx, x)])


def pairwise_resistance(field: ConductanceField, subset=None) -> ResistanceKernel:
    """All-pairs resistances from one pseudoinverse of the Laplacian."""
    R = _resistances_from_laplacian(field.laplacian())
    if subset is None:
        subset = np.arange(field.graph.n_vertices, dtype=np.int64)
    subset = np.asarray(subset, dtype=np.int64)
    return ResistanceKernel(subset, R[np.ix_(subset, subset)])


def kernel_of_form(form: BoundaryForm) -> ResistanceKernel:
    return form.kernel()


def green_kernel(kernel: ResistanceKernel, x: int, y: int, z: int) -> float:
    """Occupation kernel of the walk killed at x, from resistances alone:
    g_x(y, z) = (R(x,y) + R(x,z) - R(y,z)) / 2. Positions index the support."""
    R = kernel.matrix
    g = (R[x, y] + R[x, z] - R[y, z]) / 2
    scale = max(1.0, float(np.max(np.abs(R))))
    if g < -METRIC_TOL * scale:
        raise ValueError(f"green kernel came out negative: {g:.3e}")
    return float(max(g, 0.0))


def occupation_solve(field: ConductanceField, theta, targets) -> np.ndarray:
    """Expected theta-weighted occupation before hitting `targets`:
    solve L h = theta off the target set, h = 0 on it.

    Vertices the targets cannot reach keep h = nan.
    """
    theta = np.asarray(theta, dtype=float)
    n = field.graph.n_vertices
    if theta.shape != (n,):
        raise ValueError("theta must have one mass per vertex")
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) == 0:
        raise ValueError("need at least one target")
    reach = _reachable(field, targets)
    h = np.full(n, np.nan)
    h[targets] = 0.0
    mask = reach.copy()
    mask[targets] = False
    idx = np.where(mask)[0]
    if len(idx) == 0:
        return h
    L = field.laplacian()
    try:
        h[idx] = cho_solve(cho_factor(L[np.ix_(idx, idx)]), theta[idx])
    except np.linalg.LinAlgError as exc:
        raise SingularTraceError(str(exc)) from None
    return h


@dataclass
class HittingTime:
    """Expected hitting time computed two independent ways."""

    via_kernel: float
    via_solve: float

    @property
    def value(self) -> float:
        return self.via_solve

    def relative_gap(self) -> float:
        scale = max(abs(self.via_solve), abs(self.via_kernel), 1e-300)
        return abs(self.via_kernel - self.via_solve) / scale


def expected_hitting_time(field: ConductanceField, theta, start: int, target: int) -> HittingTime:
    """E_start of the hitting time of `target` for the theta-speed chain.

    Returns both the green-kernel sum  sum_z g_target(start, z) theta(z)
    and the direct linear solve; the two must agree (tested to 1e-8).
    """
    start, target = int(start), int(target)
    if start == target:
        raise ValueError("start and target must differ")
    theta = np.asarray(theta, dtype=float)
    reach = _reachable(field, [target])
    if not reach[start]:
        raise TargetUnreachableError(f"target {target} unreachable from {start}")
    h = occupation_solve(field, theta, [target])
    via_solve = float(h[start])

    sub = np.where(reach)[0]
    kern = pairwise_resistance(field, sub)
    pos = {int(v): i for i, v in enumerate(sub)}
    ix, iy = pos[target], pos[start]
    via_kernel = 0.0
    for z in sub:
        tz = theta[z]
        if tz != 0.0:
            via_kernel += green_kernel(kern, ix, iy, pos[int(z)]) * tz
    return HittingTime(via_kernel=via_kernel, via_solve=via_solve)
