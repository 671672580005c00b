"""Resistance homogenization: random metrics concentrate on the
deterministic one.

With heavy-tailed i.i.d. conductances omega, the level-n field
rho^n omega / c_hat carries an effective resistance metric R_n^omega.
On a fixed common vertex set V_k the sup distance to the deterministic
metric shrinks as n grows; the constant c_hat is the empirical median
of R_det / R_raw. Rayleigh monotonicity gives the hard a priori bound
R_n^omega <= (c_hat q_max / lower_bound) R_det, which every trial is
checked against.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .environment import ConductanceLaw, sample_environment
from .ifs import IFSSpec, build_graph
from .renorm import RenormResult, deterministic_resistance, find_fixed_point
from .resistance import ConductanceField, ResistanceKernel, kernel_of_form, pairwise_resistance, trace_to_level
from .streams import as_stream

FULL_SET_MAX_LEVEL = 3  # dense all-pairs comparison only on small graphs


def random_resistance(spec: IFSSpec, n: int, result: RenormResult,
                      field: ConductanceField, c_hat: float = 1.0,
                      subset=None) -> ResistanceKernel:
    """Resistance metric of the rescaled random field rho^n omega / c_hat."""
    if field.graph.level != n:
        raise ValueError(f"field lives at level {field.graph.level}, not {n}")
    if c_hat <= 0:
        raise ValueError("c_hat must be positive")
    scale = result.rho**n / c_hat
    rescaled = field.replace(scale * field.weights, scale=scale)
    return pairwise_resistance(rescaled, subset=subset)


@dataclass
class CEstimate:
    c_hat: float
    spread: float  # bootstrap standard deviation of the median
    n_ref: int
    trials: int


def _boundary_ratios(graph, law, result, det_v0, stream, trial):
    env = sample_environment(graph, law, stream.child("chat-env", trial))
    scale = result.rho**graph.level
    raw = field_kernel_on_v0(env.replace(scale * env.weights, scale=scale))
    iu = np.triu_indices(det_v0.shape[0], k=1)
    return det_v0[iu] / raw.matrix[iu]


def field_kernel_on_v0(field) -> ResistanceKernel:
    """Effective resistances between the boundary vertices, by the
    level-by-level network reduction."""
    form = trace_to_level(field, 0)
    return kernel_of_form(form).align_to(field.graph.boundary)


def estimate_c(spec: IFSSpec, result: RenormResult, law: ConductanceLaw,
               n_ref: int = 3, trials: int = 200, rng=0) -> CEstimate:
    """The homogenization constant: median over trials and boundary
    pairs of R_det / R_raw at a reference level, with a bootstrap
    spread so the stability of the estimate is visible."""
    if n_ref < 2:
        raise ValueError("reference level must be >= 2")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    stream = as_stream(rng, "estimate-c")
    graph = build_graph(spec, n_ref)
    det_v0 = deterministic_resistance(spec, 0, result).matrix
    ratios = np.array([
        _boundary_ratios(graph, law, result, det_v0, stream, j)
        for j in range(trials)
    ])
    c_hat = float(np.median(ratios))
    gen = stream.child("chat-bootstrap").generator()
    picks = gen.integers(0, trials, size=(200, trials))
    boot = np.median(ratios[picks].reshape(200, -1), axis=1)
    return CEstimate(c_hat, float(np.std(boot)), n_ref, trials)


@dataclass
class HomogenizationReport:
    levels: list
    trials: int
    c_estimate: CEstimate
    common_level: dict  # level -> k used for the common vertex set
    medians: np.ndarray  # median sup distance per level
    upper_quartiles: np.ndarray
    monotone: bool  # medians strictly decreasing
    halved: bool  # last median <= half the first
    rows: list  # (level, trial, d_sup, d_sup_full, c_hat)

    @property
    def passed(self) -> bool:
        # a degenerate law gives exact zeros at every level: already
        # homogenized, nothing left to decrease
        if np.all(self.medians <= 1e-12):
            return True
        return self.monotone and self.halved


def _one_distance(spec, graph, law, result, c_hat, kernels_det, v0_bound,
                  stream, n, j):
    env = sample_environment(graph, law, stream.child("homog-env", n, j))
    k = min(n, 2)
    scale = result.rho**n / c_hat
    rescaled = env.replace(scale * env.weights, scale=scale)
    form = trace_to_level(rescaled, k)
    det = kernels_det[k]
    common = graph.locate(det.graph_coords)
    Rw = kernel_of_form(form).align_to(common).matrix
    d_sup = float(np.max(np.abs(Rw - det.matrix)))
    # exact monotonicity bound; a violation means broken numerics
    ceil = v0_bound * det.matrix
    if np.any(Rw > ceil + 1e-6 * np.max(ceil)):
        raise RuntimeError(
            f"resistance exceeded the monotonicity bound at level {n}, trial {j}")
    if n <= FULL_SET_MAX_LEVEL:
        Rfull = random_resistance(spec, n, result, env, c_hat=c_hat)
        det_full = deterministic_resistance(spec, n, result)
        d_full = float(np.max(np.abs(Rfull.matrix - det_full.matrix)))
    else:
        d_full = math.nan
    return d_sup, d_full


@dataclass
class _DetKernel:
    matrix: np.ndarray
    graph_coords: np.ndarray


def run_homogenization(spec: IFSSpec, law: ConductanceLaw, levels, trials: int,
                       rng=0, threads: int = 1, n_ref: int = 3,
                       result: RenormResult = None) -> HomogenizationReport:
    """Sup distance between random and deterministic resistance metrics
    on a common vertex set, per level and trial.

    The common set is V_k with k = min(n, 2); on levels <= 3 the
    distance over all of V_n is recorded alongside. The report flags
    whether the per-level medians strictly decrease and whether the top
    level at most halves the bottom one.
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 2 or len(set(levels)) != len(levels):
        raise ValueError("need at least two distinct levels")
    if min(levels) < 1:
        raise ValueError("levels must be >= 1")
    if trials < 1:
        raise ValueError("need at least one trial")
    if result is None:
        result = find_fixed_point(spec)
    stream = as_stream(rng, "homog")
    c_est = estimate_c(spec, result, law, n_ref=n_ref, trials=max(trials, 100),
                       rng=stream.child("homog-chat"))
    q = result.q_star.conductances
    v0_bound = c_est.c_hat * float(np.max(q)) / law.lower_bound

    graphs = {n: build_graph(spec, n) for n in levels}
    kernels_det = {}
    for k in sorted({min(n, 2) for n in levels}):
        gk = build_graph(spec, k)
        kernels_det[k] = _DetKernel(
            deterministic_resistance(spec, k, result).matrix, gk.coords)

    tasks = [(n, j) for n in levels for j in range(trials)]

    def one(nj):
        n, j = nj
        return _one_distance(spec, graphs[n], law, result, c_est.c_hat,
                             kernels_det, v0_bound, stream, n, j)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(one, tasks))
    else:
        outs = [one(nj) for nj in tasks]
    rows = [(n, j, d, dfull, c_est.c_hat)
            for (n, j), (d, dfull) in zip(tasks, outs)]

    per_level = [np.array([d for (m, _, d, _, _) in rows if m == n])
                 for n in levels]
    medians = np.array([float(np.median(v)) for v in per_level])
    uq = np.array([float(np.percentile(v, 75)) for v in per_level])
    monotone = bool(np.all(np.diff(medians) < 0))
    halved = bool(medians[-1] <= 0.5 * medians[0])
    return HomogenizationReport(
        levels=levels,
        trials=trials,
        c_estimate=c_est,
        common_level={n: min(n, 2) for n in levels},
        medians=medians,
        upper_quartiles=uq,
        monotone=monotone,
        halved=halved,
        rows=rows,
    )
