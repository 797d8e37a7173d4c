"""Report types and stream plumbing shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import RngLike, Stream, as_stream

QUANTITIES = ("expected_w2", "expected_kl", "marginal_kl", "mi_y_theta", "mi_x_y", "var_density_integral")

# child indices under a replicate's stream
THETA, INNER, OUTER_X, NOISE, MARGINAL_INNER, MARGINAL_OUTER, INNER_EXTRA, REFERENCE = range(8)


@dataclass(frozen=True)
class EstimateReport:
    quantity: str
    value: float
    se: float
    reps_outer: int
    samples_inner: int
    method: str
    seed_path: tuple[int, ...]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if not math.isfinite(self.value):
            raise FloatingPointError(f"{self.quantity} estimate is not finite")

    def as_dict(self) -> dict:
        return {"quantity": self.quantity, "value": self.value, "se": self.se, "reps_outer": self.reps_outer,
                "samples_inner": self.samples_inner, "method": self.method,
                "seed_path": list(self.seed_path), "extras": dict(self.extras)}


@dataclass(frozen=True)
class GaussianReference:
    """N(0, variance I_k)."""

    k: int
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    def logpdf(self, y) -> np.ndarray:
        y = np.atleast_2d(y)
        return -0.5 * np.einsum("ij,ij->i", y, y) / self.variance - 0.5 * self.k * math.log(2 * math.pi * self.variance)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        return math.sqrt(self.variance) * gen.standard_normal((count, self.k))


def sub_generator(rng: RngLike, index: int) -> np.random.Generator:
    """Generator for child ``index``; a bare Generator is shared as-is."""
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).child(index).generator()


def sub_stream(rng: RngLike, index: int):
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).child(index)


def path_of(rng: RngLike) -> tuple[int, ...]:
    return () if isinstance(rng, np.random.Generator) else as_stream(rng).seed_path


def replicate_se(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan


def root_stream(rng: RngLike):
    return rng if isinstance(rng, np.random.Generator) else as_stream(rng)


__all__ = ["EstimateReport", "GaussianReference", "QUANTITIES", "Stream"]
