"""Reproducible seed streams for parallel Monte Carlo.

Every random quantity in an experiment is drawn from a generator that is
a pure function of (master_seed, purpose, indices). Trials can then run
in any order, on any number of workers, and still consume identical
randomness.
"""

import zlib

import numpy as np


class SeededStream:
    """A named, index-addressed substream of one master seed.

    Distinct (purpose, indices) pairs give statistically independent
    generators. The mapping never depends on draw order elsewhere.
    """

    __slots__ = ("master_seed", "purpose", "indices")

    def __init__(self, master_seed: int, purpose: str = "root", indices=()):
        master_seed = int(master_seed)
        if master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        self.master_seed = master_seed
        self.purpose = str(purpose)
        self.indices = tuple(int(i) for i in indices)
        if any(i < 0 for i in self.indices):
            raise ValueError("stream indices must be nonnegative")

    def child(self, purpose=None, *indices) -> "SeededStream":
        """Derive a substream; indices are appended to this stream's."""
        return SeededStream(
            self.master_seed,
            self.purpose if purpose is None else purpose,
            self.indices + tuple(indices),
        )

    def generator(self) -> np.random.Generator:
        tag = zlib.crc32(self.purpose.encode("utf8"))
        seq = np.random.SeedSequence([self.master_seed, tag, *self.indices])
        return np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"SeededStream({self.master_seed}, {self.purpose!r}, {self.indices})"


def as_generator(rng) -> np.random.Generator:
    """Accept a SeededStream, a Generator, or an int master seed."""
    if isinstance(rng, SeededStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededStream(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


def as_stream(rng, purpose: str = "root") -> SeededStream:
    """Accept a SeededStream or an int master seed (Generators refused).

    Experiment drivers need index-addressable substreams, which a bare
    Generator cannot provide reproducibly.
    """
    if isinstance(rng, SeededStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededStream(int(rng), purpose)
    raise TypeError("experiment functions need an int seed or a SeededStream")
