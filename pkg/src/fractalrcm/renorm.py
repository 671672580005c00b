"""Renormalization of boundary conductances and the scale factor rho.

The replicate-and-trace map assigns a boundary form's conductances to
every 1-cell of the fractal and traces the level-1 network back to V0.
Its normalized fixed point q_star gives the invariant transition weights
and the ratio rho by which resistance grows per refinement level.
"""

from dataclasses import dataclass, field

import numpy as np

from .ifs import IFSSpec, build_graph, FractalGraph
from .resistance import BoundaryForm, ConductanceField, ResistanceKernel, pairwise_resistance, trace_to
from .streams import SeededStream


class NonScalarFixedPointError(RuntimeError):
    """Iteration converged but the map does not scale the form by one number."""


@dataclass
class RenormResult:
    q_star: BoundaryForm  # normalized so every row of q sums to 1
    rho: float
    iterations: int
    residual: float
    residuals: list = field(default_factory=list)
    multi_start_spread: float = None


def renorm_map(spec: IFSSpec, form: BoundaryForm, graph: FractalGraph = None) -> BoundaryForm:
    """Pull the form's conductances onto every 1-cell and trace back to V0."""
    if graph is None:
        graph = build_graph(spec, 1)
    C = form.conductances
    if C.shape[0] != len(spec.boundary_points()):
        raise ValueError("form size does not match |V0|")
    weights = C[graph.edge_labels[:, 0], graph.edge_labels[:, 1]]
    if np.any(weights <= 0):
        raise ValueError("form must put positive conductance on every V0 pair edge")
    field_ = ConductanceField(graph, weights)
    traced = trace_to(field_, graph.boundary)
    return BoundaryForm(np.arange(form.size), traced.conductances)


def _normalize(C):
    off = C[C > 0]
    if off.size == 0:
        raise ValueError("form has no positive conductances")
    return C / off[0]


def _uniform_form(k) -> BoundaryForm:
    return BoundaryForm(np.arange(k), np.ones((k, k)) - np.eye(k))


def find_fixed_point(
    spec: IFSSpec,
    tol: float = 1e-12,
    max_iter: int = 10000,
    multi_start: int = 0,
    rng=None,
) -> RenormResult:
    """Iterate normalize(renorm_map(.)) from the uniform form.

    Iteration continues past `tol` until the residual stops improving,
    so the subsequent scalar-ratio extraction of rho sees a machine-
    precision fixed point. rho is the mean entrywise conductance ratio
    input/output; a ratio spread of tol or more is an error.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    k = len(spec.boundary_points())
    graph = build_graph(spec, 1)

    main = _iterate(spec, graph, _uniform_form(k), tol, max_iter)
    result = _extract(spec, graph, k, tol, *main)

    if multi_start:
        stream = rng if isinstance(rng, SeededStream) else SeededStream(0 if rng is None else int(rng), "renorm-multistart")
        spread = 0.0
        for s in range(multi_start):
            gen = stream.child(None, s).generator()
            raw = gen.uniform(0.5, 2.0, size=(k, k))
            start = BoundaryForm(np.arange(k), (raw + raw.T) / 2)
            other = _extract(spec, graph, k, tol, *_iterate(spec, graph, start, tol, max_iter))
            spread = max(spread, float(np.max(np.abs(other.q_star.conductances - result.q_star.conductances))))
            spread = max(spread, abs(other.rho - result.rho))
        result.multi_start_spread = spread
    return result


def _iterate(spec, graph, form, tol, max_iter):
    C = _normalize(form.conductances)
    residuals = []
    iterations = 0
    converged_at = None
    while iterations < max_iter:
        nxt = _normalize(renorm_map(spec, BoundaryForm(np.arange(len(C)), C), graph).conductances)
        iterations += 1
        residuals.append(float(np.max(np.abs(nxt - C))))
        C = nxt
        if residuals[-1] < tol:
            if converged_at is None:
                converged_at = iterations
            # polish to the residual floor so the rho spread check is clean
            if len(residuals) >= 2 and residuals[-1] >= residuals[-2]:
                break
            if iterations - converged_at > 60:
                break
    if converged_at is None:
        raise RuntimeError(
            f"no convergence in {max_iter} iterations; last residual {residuals[-1]:.3e}"
        )
    return C, iterations, residuals


def _extract(spec, graph, k, tol, C, iterations, residuals):
    out = renorm_map(spec, BoundaryForm(np.arange(k), C), graph).conductances
    mask = C > 0
    if not np.array_equal(mask, out > 0):
        raise NonScalarFixedPointError("input and output forms have different supports")
    ratios = C[mask] / out[mask]
    rho = float(np.mean(ratios))
    spread = float(np.max(ratios) - np.min(ratios))
    if spread >= tol * max(1.0, rho):
        raise NonScalarFixedPointError(f"entrywise rho spread {spread:.3e} at tol {tol:.1e}")
    if rho <= 1.0:
        raise NonScalarFixedPointError(f"resistance scale rho = {rho} is not > 1")

    rows = C.sum(axis=1)
    q = C / np.mean(rows)
    qrows = q.sum(axis=1)
    if np.max(np.abs(qrows - 1.0)) > 1e-12:
        raise NonScalarFixedPointError(
            "row sums are unequal; fixed point admits no stochastic normalization"
        )
    return RenormResult(
        q_star=BoundaryForm(np.arange(k), q),
        rho=rho,
        iterations=iterations,
        residual=residuals[-1],
        residuals=residuals,
    )


def q_field(graph: FractalGraph, result: RenormResult, level_scale: float = 1.0) -> ConductanceField:
    """The deterministic field putting q_star on every cell edge,
    optionally multiplied by a per-level scale factor."""
    q = result.q_star.conductances
    w = level_scale * q[graph.edge_labels[:, 0], graph.edge_labels[:, 1]]
    return ConductanceField(graph, w, origin="deterministic", scale=level_scale)


def deterministic_field(spec: IFSSpec, n: int, result: RenormResult, graph: FractalGraph = None) -> ConductanceField:
    """Level-n field with conductances rho**n * q on every cell edge, the
    scaling that keeps resistances level-independent on common vertices."""
    if graph is None:
        graph = build_graph(spec, n)
    return q_field(graph, result, level_scale=result.rho**n)


def deterministic_resistance(spec: IFSSpec, n: int, result: RenormResult) -> ResistanceKernel:
    """The resistance metric R_n on all of V_n."""
    if n < 0:
        raise ValueError("level must be >= 0")
    graph = build_graph(spec, n)
    return pairwise_resistance(deterministic_field(spec, n, result, graph))
