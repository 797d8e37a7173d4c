"""Seed lineage for reproducible, order-independent Monte Carlo.

Every random quantity in the package is drawn from a :class:`Stream`, which is
nothing more than an ordered tuple of integers (the root seed followed by
replicate / purpose indices).  A stream is turned into a counter-based Philox
generator keyed by a ``SeedSequence`` built from that tuple, so the numbers a
replicate sees depend only on its path and never on how many workers ran or in
which order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Stream:
    """A node in the seed tree."""

    seed_path: tuple[int, ...]

    def __post_init__(self):
        if not self.seed_path:
            raise ValueError("seed_path must contain at least the root seed")
        if any(int(s) < 0 for s in self.seed_path):
            raise ValueError("seed_path entries must be non-negative integers")
        object.__setattr__(self, "seed_path", tuple(int(s) for s in self.seed_path))

    @property
    def root(self) -> int:
        return self.seed_path[0]

    def child(self, *index: int) -> "Stream":
        return Stream(self.seed_path + tuple(int(i) for i in index))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed_path[0], spawn_key=self.seed_path[1:])
        return np.random.Generator(np.random.Philox(seq))

    def __str__(self) -> str:
        return "/".join(str(s) for s in self.seed_path)


RngLike = Union[Stream, int, Sequence[int], np.random.Generator]


def as_stream(rng: RngLike) -> Stream:
    """Coerce a seed, seed path or stream into a :class:`Stream`."""
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, np.random.Generator):
        raise TypeError("a bare Generator has no seed lineage; pass a Stream or an integer seed")
    if isinstance(rng, (int, np.integer)):
        return Stream((int(rng),))
    return Stream(tuple(rng))


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).generator()


def seed_path_of(rng: RngLike) -> tuple[int, ...]:
    if isinstance(rng, np.random.Generator):
        return ()
    return as_stream(rng).seed_path
