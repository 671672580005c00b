"""Heavy-tailed random conductance environments and Poisson trap measures.

Default law: i.i.d. Pareto per edge, P(omega > u) = (u / c)^-alpha for
u >= c, drawn cell by cell so the per-cell tuples are independent. The
cell-sum tail constant of this law is |E0| (single big jump). A
cell_sampler hook admits within-cell dependence.
"""

import math
from dataclasses import dataclass

import numpy as np

from .ifs import IFSSpec
from .resistance import ConductanceField
from .streams import as_generator

_FAMILIES = ("pareto", "constant")


@dataclass
class ConductanceLaw:
    alpha: float = 0.5
    lower_bound: float = 1.0
    family: str = "pareto"
    cell_sampler: object = None  # callable (generator, n_edges) -> weights

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; want one of {_FAMILIES}")
        if self.lower_bound <= 0:
            raise ValueError("lower bound must be positive")
        if self.family == "pareto" and not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def sample(self, gen, size: int) -> np.ndarray:
        if self.family == "constant":
            return np.full(size, self.lower_bound)
        u = gen.random(size)
        # inverse CDF of the Pareto tail; 1 - u avoids u = 0
        return self.lower_bound * (1.0 - u) ** (-1.0 / self.alpha)


def sample_environment(graph, law: ConductanceLaw, rng) -> ConductanceField:
    """One environment: independent per-cell weight tuples on the edges.

    The edge array is cell-major, so without a hook one vectorized draw
    in edge order realizes the law; with a hook, cells are drawn in cell
    order from the same generator.
    """
    gen = as_generator(rng)
    ne = len(graph.edges)
    if law.cell_sampler is None:
        weights = law.sample(gen, ne)
    else:
        cells = getattr(graph, "cells", None)
        if not cells:
            raise ValueError("cell_sampler needs a graph with a cell table")
        per = ne // len(cells)
        weights = np.empty(ne)
        for ci in range(len(cells)):
            w = np.asarray(law.cell_sampler(gen, per), dtype=float)
            if w.shape != (per,):
                raise ValueError(f"cell_sampler must return {per} weights")
            weights[ci * per : (ci + 1) * per] = w
    if np.min(weights) < law.lower_bound - 1e-15:
        raise ValueError("sampled weight fell below the law's lower bound")
    return ConductanceField(graph, weights, origin="random")


def nu_measure(field: ConductanceField) -> np.ndarray:
    """The conductance vertex measure nu(x) = sum of incident weights."""
    return field.nu()


@dataclass
class TrapMeasure:
    """Finite atom list (mass, cell word) approximating the limiting
    Poisson trap measure above a mass cutoff."""

    masses: np.ndarray
    words: np.ndarray  # (n_atoms, depth) map letters
    cutoff: float
    alpha: float

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        words = np.asarray(self.words, dtype=np.int64)
        if words.ndim != 2:
            # reshape(0, -1) is rejected by numpy, so fix the empty case by hand
            words = words.reshape(len(self.masses), -1) if words.size else words.reshape(0, 1)
        self.words = words
        if len(self.words) != len(self.masses):
            raise ValueError("need exactly one word per atom")
        if np.any(self.masses < self.cutoff - 1e-15):
            raise ValueError("atom mass below cutoff")

    @property
    def n_atoms(self) -> int:
        return len(self.masses)

    @property
    def depth(self) -> int:
        return self.words.shape[1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def points(self, spec: IFSSpec) -> np.ndarray:
        """Resolve atom words to coordinates psi_word(0)."""
        return np.array([spec.word_point(tuple(w)) for w in self.words]).reshape(
            self.n_atoms, spec.ambient_dim
        )

    def to_csv(self, path):
        with open(path, "w", encoding="utf8") as fh:
            fh.write("word,mass\n")
            for w, v in zip(self.words, self.masses):
                fh.write(".".join(str(int(i)) for i in w) + "," + repr(float(v)) + "\n")

    @classmethod
    def from_csv(cls, path, cutoff, alpha) -> "TrapMeasure":
        words, masses = [], []
        with open(path, "r", encoding="utf8") as fh:
            header = fh.readline()
            if header.strip() != "word,mass":
                raise ValueError(f"unexpected header {header.strip()!r}")
            for line in fh:
                if not line.strip():
                    continue
                wtxt, vtxt = line.strip().split(",")
                words.append([int(t) for t in wtxt.split(".")] if wtxt else [])
                masses.append(float(vtxt))
        return cls(np.array(masses), np.array(words, dtype=np.int64), cutoff, alpha)


def sample_trap_measure(spec: IFSSpec, alpha: float, cutoff: float, depth: int, rng) -> TrapMeasure:
    """Atoms of the Poisson measure with intensity alpha v^-1-alpha dv mu(dx)
    above the cutoff: count ~ Poisson(cutoff^-alpha), masses Pareto with
    scale = cutoff, locations uniform depth-m words of the self-similar
    measure."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    gen = as_generator(rng)
    count = int(gen.poisson(cutoff**-alpha))
    masses = cutoff * (1.0 - gen.random(count)) ** (-1.0 / alpha)
    words = gen.integers(0, spec.n_maps, size=(count, depth))
    return TrapMeasure(masses, words, cutoff, alpha)


@dataclass
class TailEstimate:
    alpha_hat: float
    stderr: float
    k: int
    degenerate: bool = False


def tail_estimate(samples, k: int) -> TailEstimate:
    """Hill estimator over the top-k order statistics, with the naive
    standard error alpha_hat / sqrt(k). Constant tails are flagged."""
    samples = np.asarray(samples, dtype=float)
    if k < 2:
        raise ValueError("need k >= 2 order statistics")
    if k >= len(samples):
        raise ValueError("k must be smaller than the sample count")
    xs = np.sort(samples)[::-1]
    pivot = xs[k]
    if pivot <= 0:
        return TailEstimate(0.0, math.inf, k, degenerate=True)
    mean_log = float(np.mean(np.log(xs[:k] / pivot)))
    if mean_log <= 0:
        return TailEstimate(0.0, math.inf, k, degenerate=True)
    alpha_hat = 1.0 / mean_log
    return TailEstimate(alpha_hat, alpha_hat / math.sqrt(k), k)


def dump_environment(field: ConductanceField, path):
    """CSV rows (cell word, edge index within the cell, weight)."""
    graph = field.graph
    per = len(graph.edges) // len(graph.cells)
    with open(path, "w", encoding="utf8") as fh:
        fh.write("word,edge,weight\n")
        for i, w in enumerate(field.weights):
            word = graph.cells[graph.edge_cell[i]][0]
            fh.write(".".join(str(l) for l in word) + f",{i % per}," + repr(float(w)) + "\n")


def load_environment(graph, path) -> ConductanceField:
    per = len(graph.edges) // len(graph.cells)
    weights = np.full(len(graph.edges), np.nan)
    with open(path, "r", encoding="utf8") as fh:
        header = fh.readline()
        if header.strip() != "word,edge,weight":
            raise ValueError(f"unexpected header {header.strip()!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            wtxt, etxt, vtxt = line.strip().split(",")
            word = tuple(int(t) for t in wtxt.split(".")) if wtxt else ()
            ci = graph.cell_index(word)
            if not 0 <= ci < len(graph.cells) or graph.cells[ci][0] != word:
                raise ValueError(f"line {lineno}: cell {wtxt!r} not in this graph")
            weights[ci * per + int(etxt)] = float(vtxt)
    if np.any(np.isnan(weights)):
        raise ValueError("environment file does not cover every edge")
    return ConductanceField(graph, weights, origin="random")
