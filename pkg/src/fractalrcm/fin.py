"""Discrete approximation of the trap-measure time-changed diffusion.

A sampled atomic trap measure is projected onto the level-n vertex set;
the walk on the deterministic base field is then run with holding means
theta(x)/nu(x), so vertices carrying no atom are instantaneous. The
stabilization check compares rescaled crossing-time distributions: the
heavy-tailed constant-speed family (rescaled by (rho N^(1/alpha))^-n)
against itself across levels, and the projected-trap family (rescaled
by rho^-n) against it at the top level. Distributions are compared
after dividing by their medians; the limit objects agree in shape, not
in the non-universal time constant.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .environment import ConductanceLaw, TrapMeasure, sample_environment, sample_trap_measure
from .ifs import FractalGraph, IFSSpec, build_graph
from .renorm import RenormResult, find_fixed_point, q_field
from .resistance import ConductanceField
from .streams import as_stream
from .walks import WalkConfig, WalkResult, _crossing_endpoints, _simulate


def project_traps(measure: TrapMeasure, graph: FractalGraph) -> np.ndarray:
    """Atom masses summed onto V_n.

    Each atom lands on the nearest vertex (ties to the lowest id) of the
    cell named by the first n letters of its word; total mass is
    conserved exactly.
    """
    n = graph.level
    if measure.depth < max(n, 1):
        raise ValueError("atom words are shallower than the graph level")
    spec = graph.spec
    theta = np.zeros(graph.n_vertices)
    for mass, word in zip(measure.masses, measure.words):
        ci = graph.cell_index(tuple(word[:n]))
        vids = np.sort(np.asarray(graph.cells[ci][1], dtype=np.int64))
        point = spec.word_point(tuple(word))
        dists = np.linalg.norm(graph.coords[vids] - point, axis=1)
        theta[vids[int(np.argmin(dists))]] += mass
    return theta


@dataclass
class TimeChangedWalkSetup:
    graph: FractalGraph
    base_field: ConductanceField
    theta: np.ndarray
    zero_mass_policy: str = "instantaneous"

    def __post_init__(self):
        if self.zero_mass_policy != "instantaneous":
            raise ValueError("only the 'instantaneous' zero-mass policy exists")
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.graph.n_vertices,):
            raise ValueError("theta must have one mass per vertex")
        if np.any(self.theta < 0):
            raise ValueError("trap masses must be nonnegative")
        if self.base_field.graph.n_vertices != self.graph.n_vertices:
            raise ValueError("base field lives on a different graph")


def simulate_time_changed(setup: TimeChangedWalkSetup, cfg: WalkConfig, rng) -> WalkResult:
    """Walk with holding mean theta(x)/nu(x); the jump chain is that of
    the base field, so only clocks differ from the plain walks."""
    if cfg.mode != "time-changed":
        raise ValueError(f"config mode is {cfg.mode!r}, not 'time-changed'")
    return _simulate(setup.base_field, cfg, rng, theta=setup.theta)


@dataclass
class FinReport:
    levels: list
    alpha: float
    cutoff: float
    trials: int
    csrw_ks: list  # consecutive-level KS, raw rescaled values
    trap_ks: list
    cross_ks: float  # families at the top level, median-normalized
    csrw_decreasing: bool
    trap_decreasing: bool
    rows: list  # (family, level, trial, rescaled time)


def _weakly_decreasing(xs) -> bool:
    return all(b <= a + 1e-12 for a, b in zip(xs, xs[1:]))


def _median_normalized(x) -> np.ndarray:
    m = np.median(x)
    return x / m if m > 0 else x


def _csrw_time(graph, law, level, trial, stream):
    env = sample_environment(graph, law, stream.child("fin-csrw-env", level, trial))
    start, targets = _crossing_endpoints(graph)
    cfg = WalkConfig(mode="csrw", start=start, hit_set=targets)
    return _simulate(env, cfg, stream.child("fin-csrw-walk", level, trial)).elapsed_time


def _trap_time(spec, graph, base, alpha, cutoff, level, trial, stream):
    measure = sample_trap_measure(
        spec, alpha, cutoff, 2 * max(level, 1),
        stream.child("fin-trap-measure", level, trial))
    theta = project_traps(measure, graph)
    start, targets = _crossing_endpoints(graph)
    cfg = WalkConfig(mode="time-changed", start=start, hit_set=targets)
    return _simulate(base, cfg, stream.child("fin-trap-walk", level, trial),
                     theta=theta).elapsed_time


def fin_stabilization_check(spec: IFSSpec, alpha: float, levels, trials: int,
                            rng=0, cutoff: float = 1e-3, threads: int = 1,
                            renorm_result: RenormResult = None) -> FinReport:
    """Distributional stabilization of rescaled crossing times.

    Reports consecutive-level Kolmogorov-Smirnov distances within each
    family (on the raw rescaled values) and the cross-family distance at
    the top level (median-normalized).
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 3 or len(set(levels)) != len(levels):
        raise ValueError("need at least three distinct levels")
    if min(levels) < 1:
        raise ValueError("levels must be >= 1")
    if trials < 100:
        raise ValueError("need at least 100 trials per level")
    result = renorm_result if renorm_result is not None else find_fixed_point(spec)
    rho, nmaps = result.rho, spec.n_maps
    stream = as_stream(rng, "fin")
    law = ConductanceLaw(alpha=alpha, lower_bound=1.0, family="pareto")

    graphs = {n: build_graph(spec, n) for n in levels}
    bases = {n: q_field(graphs[n], result) for n in levels}

    def one(task):
        family, n, j = task
        if family == "csrw":
            t = _csrw_time(graphs[n], law, n, j, stream)
            return t / (rho * nmaps ** (1.0 / alpha)) ** n
        t = _trap_time(spec, graphs[n], bases[n], alpha, cutoff, n, j, stream)
        return t / rho**n

    tasks = [(fam, n, j) for fam in ("csrw", "trap") for n in levels
             for j in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, tasks))
    else:
        vals = [one(task) for task in tasks]
    rows = [(fam, n, j, v) for (fam, n, j), v in zip(tasks, vals)]

    samples = {
        fam: {n: np.array([v for f, m, _, v in rows if f == fam and m == n])
              for n in levels}
        for fam in ("csrw", "trap")
    }
    csrw_ks = [float(ks_2samp(samples["csrw"][a], samples["csrw"][b]).statistic)
               for a, b in zip(levels, levels[1:])]
    trap_ks = [float(ks_2samp(samples["trap"][a], samples["trap"][b]).statistic)
               for a, b in zip(levels, levels[1:])]
    top = levels[-1]
    cross = float(ks_2samp(_median_normalized(samples["trap"][top]),
                           _median_normalized(samples["csrw"][top])).statistic)
    return FinReport(
        levels=levels,
        alpha=alpha,
        cutoff=cutoff,
        trials=trials,
        csrw_ks=csrw_ks,
        trap_ks=trap_ks,
        cross_ks=cross,
        csrw_decreasing=_weakly_decreasing(csrw_ks),
        trap_decreasing=_weakly_decreasing(trap_ks),
        rows=rows,
    )
