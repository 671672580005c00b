"""Continuous-time walks on conductance fields and crossing-time scaling.

The jump chain moves from x to a neighbor y with probability
w_xy / nu(x); the holding time at x is exponential with mean
theta(x) / nu(x). theta = 1 is the variable-speed walk, theta = nu the
constant-speed walk (unit mean holding everywhere), and a trap field
theta gives the time-changed walk. All three share one kernel.

Runs are reproducible as a pure function of (seed, level, trial): every
trial draws from its own addressed substream, so thread count and
completion order cannot change any number in a report.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .environment import sample_environment
from .ifs import IFSSpec, build_graph
from .renorm import RenormResult, find_fixed_point
from .resistance import ConductanceField, TargetUnreachableError, _reachable, occupation_solve
from .streams import as_generator, as_stream

_MODES = ("vsrw", "csrw", "time-changed")


@dataclass
class WalkConfig:
    mode: str
    start: int
    hit_set: object = None
    time_horizon: float = None
    jump_budget: int = None
    skeleton_stride: int = None
    collapse: bool = True

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, not {self.mode!r}")
        if self.hit_set is None and self.time_horizon is None and self.jump_budget is None:
            raise ValueError("need a hit set, a time horizon, or a jump budget")
        if self.hit_set is not None:
            self.hit_set = np.asarray(self.hit_set, dtype=np.int64).reshape(-1)
            if len(self.hit_set) == 0:
                raise ValueError("hit set must not be empty")
        if self.time_horizon is not None and self.time_horizon < 0:
            raise ValueError("time horizon must be >= 0")
        if self.jump_budget is not None and self.jump_budget < 0:
            raise ValueError("jump budget must be >= 0")
        if self.skeleton_stride is not None and self.skeleton_stride < 1:
            raise ValueError("skeleton stride must be >= 1")


@dataclass
class WalkResult:
    elapsed_time: float
    jumps: int
    exit_vertex: int
    skeleton: object = None  # (times, vertices) when recorded
    warning: str = None


def _simulate(field: ConductanceField, cfg: WalkConfig, rng, theta=None) -> WalkResult:
    n = field.graph.n_vertices
    start = int(cfg.start)
    if not 0 <= start < n:
        raise ValueError(f"start vertex {start} out of range")
    nu = field.nu()
    if theta is None:
        theta = np.ones(n) if cfg.mode == "vsrw" else nu
    hold = theta / nu
    mask = None
    if cfg.hit_set is not None:
        mask = np.zeros(n, dtype=np.bool_)
        mask[cfg.hit_set] = True
        if mask[start]:
            skel = (np.zeros(1), np.array([start])) if cfg.skeleton_stride else None
            return WalkResult(0.0, 0, start, skeleton=skel)
        if cfg.time_horizon is None and cfg.jump_budget is None:
            reach = _reachable(field, cfg.hit_set)
            if not reach[start]:
                raise TargetUnreachableError(
                    f"hit set unreachable from vertex {start}")
    indptr, indices, weights = _kernels.to_csr(n, field.graph.edges, field.weights)
    t, jumps, x, skeleton = _kernels.run_walk(
        indptr, indices, weights, nu, hold, as_generator(rng), start,
        target_mask=mask,
        horizon=cfg.time_horizon,
        budget=cfg.jump_budget,
        stride=cfg.skeleton_stride or 0,
        collapse=cfg.collapse,
    )
    warning = None
    if t == 0.0 and jumps > 0:
        warning = "time change vanished along the whole path"
    return WalkResult(float(t), int(jumps), int(x), skeleton=skeleton, warning=warning)


def simulate_vsrw(field: ConductanceField, cfg: WalkConfig, rng) -> WalkResult:
    """Variable-speed walk: unit theta, holding mean 1/nu(x)."""
    if cfg.mode != "vsrw":
        raise ValueError(f"config mode is {cfg.mode!r}, not 'vsrw'")
    return _simulate(field, cfg, rng)


def simulate_csrw(field: ConductanceField, cfg: WalkConfig, rng) -> WalkResult:
    """Constant-speed walk: theta = nu, holding mean exactly 1."""
    if cfg.mode != "csrw":
        raise ValueError(f"config mode is {cfg.mode!r}, not 'csrw'")
    return _simulate(field, cfg, rng)


def crossing_oracle(field: ConductanceField, theta, start: int, targets) -> float:
    """Exact expected hitting time of `targets`, by one linear solve."""
    h = occupation_solve(field, theta, targets)
    val = h[int(start)]
    if math.isnan(val):
        raise TargetUnreachableError(f"targets unreachable from {start}")
    return float(val)


def _crossing_endpoints(graph):
    # corner-to-far-corners passage across the level-n graph
    b = graph.boundary
    return int(b[0]), np.asarray(b[1:], dtype=np.int64)


@dataclass
class ScalingReport:
    mode: str
    levels: list
    statistic: str
    values: np.ndarray  # statistic of crossing time per level
    fitted_log_slope: float
    predicted_log_slope: float
    c_hat: float
    alpha: float
    trials: int
    rows: list  # (level, trial, time, jumps)

    @property
    def relative_slope_error(self) -> float:
        return abs(self.fitted_log_slope - self.predicted_log_slope) / abs(
            self.predicted_log_slope)


def _statistic(values, statistic: str) -> float:
    values = np.asarray(values, dtype=float)
    if statistic == "median":
        return float(np.median(values))
    if statistic == "mean":
        return float(np.mean(values))
    if statistic.startswith("q:"):
        pct = float(statistic[2:])
        if not 0 <= pct <= 100:
            raise ValueError("quantile must lie in [0, 100]")
        return float(np.percentile(values, pct))
    raise ValueError(f"unknown statistic {statistic!r}")


def _one_crossing(graph, law, mode, level, trial, stream, collapse=True):
    env = sample_environment(
        graph, law, stream.child("scaling-env", level, trial))
    start, targets = _crossing_endpoints(graph)
    cfg = WalkConfig(mode=mode, start=start, hit_set=targets, collapse=collapse)
    res = _simulate(env, cfg, stream.child("scaling-walk", level, trial))
    return res.elapsed_time, res.jumps


def scaling_experiment(spec: IFSSpec, law, mode: str, levels, trials: int,
                       statistic: str = "median", rng=0, threads: int = 1,
                       renorm_result: RenormResult = None) -> ScalingReport:
    """Crossing-time growth across levels against the predicted rate.

    With a law, each (level, trial) samples a fresh environment and
    simulates one corner-to-corners crossing; `statistic` summarizes
    each level and the slope of log statistic against level is fitted.
    law None runs the exact oracle on unit conductances instead (no
    randomness; the jumps column carries the expected jump count).

    Predicted slope: log(rho N) for the variable-speed walk, and
    log(rho N^(1/alpha)) for the constant-speed walk under a heavy
    tail with index alpha (N = number of maps, rho = resistance scale
    factor).
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 3 or len(set(levels)) != len(levels):
        raise ValueError("need at least three distinct levels for a slope fit")
    if min(levels) < 1:
        raise ValueError("levels must be >= 1")
    if mode not in ("vsrw", "csrw"):
        raise ValueError("scaling runs use mode 'vsrw' or 'csrw'")
    result = renorm_result if renorm_result is not None else find_fixed_point(spec)
    rho, nmaps = result.rho, spec.n_maps
    graphs = {n: build_graph(spec, n) for n in levels}

    if law is None:
        rows = []
        values = []
        for n in levels:
            graph = graphs[n]
            field = ConductanceField(graph, np.ones(graph.n_edges))
            start, targets = _crossing_endpoints(graph)
            t_csrw = crossing_oracle(field, field.nu(), start, targets)
            t = crossing_oracle(
                field, np.ones(graph.n_vertices), start, targets
            ) if mode == "vsrw" else t_csrw
            values.append(t)
            rows.append((n, 0, t, t_csrw))
        predicted = math.log(rho * nmaps)
        alpha = math.nan
        trials = 0
    else:
        if trials < 1:
            raise ValueError("need at least one trial per level")
        stream = as_stream(rng, "scaling")
        tasks = [(n, j) for n in levels for j in range(trials)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(
                    lambda nj: _one_crossing(
                        graphs[nj[0]], law, mode, nj[0], nj[1], stream),
                    tasks))
        else:
            outs = [_one_crossing(graphs[n], law, mode, n, j, stream)
                    for n, j in tasks]
        rows = [(n, j, t, jumps) for (n, j), (t, jumps) in zip(tasks, outs)]
        values = [
            _statistic([t for (n, _, t, _) in rows if n == lev], statistic)
            for lev in levels
        ]
        heavy = law.family == "pareto"
        if mode == "csrw" and heavy:
            predicted = math.log(rho * nmaps ** (1.0 / law.alpha))
        else:
            predicted = math.log(rho * nmaps)
        alpha = law.alpha if heavy else math.nan

    slope, intercept = np.polyfit(levels, np.log(values), 1)
    return ScalingReport(
        mode=mode,
        levels=levels,
        statistic=statistic,
        values=np.asarray(values),
        fitted_log_slope=float(slope),
        predicted_log_slope=float(predicted),
        c_hat=float(math.exp(intercept)),
        alpha=alpha,
        trials=trials,
        rows=rows,
    )
