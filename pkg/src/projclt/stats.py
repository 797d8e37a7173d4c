"""Distribution functionals alpha(X), beta_1(X), beta_2(X) and friends.

All Monte Carlo estimates come with batch-means standard errors so that any
inequality checked against them can be given an error bar.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._mc import DEFAULT_BATCHES, batch_mean_se
from .rng import RngLike, as_generator
from .sources import VectorSource, iter_x, sample_x


def _norm_sq_over_n(source: VectorSource, rng: RngLike, n_samples: int) -> np.ndarray:
    gen = as_generator(rng)
    return np.concatenate([np.einsum("ij,ij->i", x, x) / source.n for x in iter_x(source, gen, n_samples)])


def _pair_inner(source: VectorSource, rng: RngLike, n_pairs: int) -> np.ndarray:
    """<X1, X2>/n over independent pairs (2 * n_pairs fresh draws)."""
    gen = as_generator(rng)
    step = max(1, (1 << 21) // source.n)
    out = []
    done = 0
    while done < n_pairs:
        m = min(step, n_pairs - done)
        x = sample_x(source, gen, 2 * m)
        out.append(np.einsum("ij,ij->i", x[:m], x[m:]) / source.n)
        done += m
    return np.concatenate(out)


def _pair_inner_ustat(source: VectorSource, rng: RngLike, n_pairs: int, group: int = 512):
    """Per-group arrays of <Xi, Xj>/n over all unordered pairs within groups."""
    gen = as_generator(rng)
    total = 2 * n_pairs
    groups = []
    while total > 0:
        m = min(group, total)
        if m < 2:
            break
        x = sample_x(source, gen, m)
        gram = x @ x.T / source.n
        groups.append(gram[np.triu_indices(m, 1)])
        total -= m
    return groups


def estimate_alpha(source: VectorSource, n_samples: int, rng: RngLike) -> tuple[float, float]:
    """(1/n) E| ||X||^2 - E||X||^2 |, centred at the exact gamma when known."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    s = _norm_sq_over_n(source, rng, n_samples)
    centre = source.gamma if source.gamma_exact else float(s.mean())
    return batch_mean_se(np.abs(s - centre))


def _power_mean(values, r: int, batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    m, se = batch_mean_se(values, batches)
    if m <= 0:
        return 0.0, se
    return m ** (1.0 / r), se * m ** (1.0 / r - 1.0) / r


def estimate_beta(source: VectorSource, r: int, n_pairs: int, rng: RngLike, ustat: bool = False) -> tuple[float, float]:
    """(1/n) (E|<X1, X2>|^r)^(1/r) for r in {1, 2}.

    The default draws independent pairs.  ``ustat=True`` averages over all
    unordered pairs inside groups of 512 draws: lower variance, correlated
    terms, SE taken from the spread of group averages.
    """
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    if n_pairs < 2:
        raise ValueError("n_pairs must be >= 2")
    if ustat:
        groups = _pair_inner_ustat(source, rng, n_pairs)
        vals = np.array([np.mean(np.abs(g) ** r) for g in groups])
        return _power_mean(vals, r, batches=vals.size)
    return _power_mean(np.abs(_pair_inner(source, rng, n_pairs)) ** r, r)


def estimate_mean_sq_norm(source: VectorSource, n_pairs: int, rng: RngLike) -> tuple[float, float]:
    """Unbiased ||E X||^2 / n via E <X1, X2> / n."""
    return batch_mean_se(_pair_inner(source, rng, n_pairs))


def beta2_exact(second_moment_matrix, n: int) -> float:
    """||(1/n) E[X X^T]||_F from the second-moment matrix."""
    k = np.asarray(second_moment_matrix, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("second-moment matrix must be square")
    if not np.allclose(k, k.T, rtol=1e-10, atol=1e-12 * max(1.0, float(np.abs(k).max()))):
        raise ValueError("second-moment matrix must be symmetric")
    return float(np.linalg.norm(k / n, "fro"))


@dataclass(frozen=True)
class TruncationSet:
    """Frequency of | ||X||^2/n - gamma | > (epsilon/2) gamma."""

    epsilon: float
    gamma: float
    prob_complement: float
    se: float


def truncation_probability(source: VectorSource, epsilon: float, n_samples: int, rng: RngLike) -> TruncationSet:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    s = _norm_sq_over_n(source, rng, n_samples)
    g = source.gamma
    p, se = batch_mean_se((np.abs(s - g) > 0.5 * epsilon * g).astype(float))
    return TruncationSet(epsilon, g, p, se)


@dataclass(frozen=True)
class DistributionStats:
    gamma: float
    alpha: float
    alpha_se: float
    beta1: float
    beta1_se: float
    beta2: float
    beta2_se: float
    mean_sq_norm_over_n: float
    mean_sq_se: float
    n_samples: int
    n_pairs: int
    exact: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def estimate_stats(source: VectorSource, n_samples: int, n_pairs: int, rng: RngLike,
                   use_closed_form: bool = True) -> DistributionStats:
    """All functionals at once; closed forms win when the source declares them."""
    gen = as_generator(rng)
    cf = source.closed_form if use_closed_form else {}
    exact = {}

    if "alpha" in cf:
        alpha, alpha_se, exact["alpha"] = float(cf["alpha"]), 0.0, True
    else:
        alpha, alpha_se = estimate_alpha(source, n_samples, gen)
        exact["alpha"] = False

    need_pairs = any(name not in cf for name in ("beta1", "beta2", "mean_sq_norm_over_n"))
    r = _pair_inner(source, gen, n_pairs) if need_pairs else None

    def pick(name, fn):
        if name in cf:
            exact[name] = True
            return float(cf[name]), 0.0
        exact[name] = False
        return fn(r)

    beta1, beta1_se = pick("beta1", lambda v: _power_mean(np.abs(v), 1))
    beta2, beta2_se = pick("beta2", lambda v: _power_mean(v**2, 2))
    msq, msq_se = pick("mean_sq_norm_over_n", batch_mean_se)
    exact["gamma"] = source.gamma_exact
    return DistributionStats(source.gamma, alpha, alpha_se, beta1, beta1_se, beta2, beta2_se,
                             msq, msq_se, n_samples, n_pairs, exact)
