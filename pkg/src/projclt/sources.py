"""Laws for the high-dimensional vector X and the Gaussian projection channel.

A :class:`VectorSource` bundles a sampler with whatever is known in closed form
about the law (second moment, magnitude spread, inner-product moments).  The
estimators downstream only ever call :func:`sample_x`; the closed forms exist
so that tests and bound evaluations can skip Monte Carlo where the answer is
known exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from .rng import RngLike, as_generator, seed_path_of

KINDS = ("iid-marginal", "sphere-uniform", "orthogonal-support", "deterministic-point", "empirical-dataset")


class SamplingError(ValueError):
    """Raised when a source cannot honour a sampling request."""


# --------------------------------------------------------------------------
# scalar marginals for i.i.d. sources
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Marginal:
    name: str
    params: Mapping[str, float]
    mean: float
    second_moment: float
    fourth_moment: float
    sampler: Callable[[np.random.Generator, tuple], np.ndarray] = field(repr=False, compare=False)

    def sample(self, gen: np.random.Generator, shape) -> np.ndarray:
        return self.sampler(gen, shape)


def _normal(scale: float = 1.0) -> Marginal:
    return Marginal("normal", {"scale": scale}, 0.0, scale**2, 3 * scale**4,
                    lambda g, s: scale * g.standard_normal(s))


def _rademacher(scale: float = 1.0) -> Marginal:
    def draw(g, s):
        return scale * (2.0 * g.integers(0, 2, size=s, dtype=np.int8) - 1.0)
    return Marginal("rademacher", {"scale": scale}, 0.0, scale**2, scale**4, draw)


def _sparse(p: float = 0.1, value: float = math.sqrt(10.0)) -> Marginal:
    # symmetric sign keeps the entries mean-zero
    if not 0.0 < p <= 1.0:
        raise ValueError("sparse marginal needs 0 < p <= 1")

    def draw(g, s):
        on = g.random(s) < p
        sign = 2.0 * g.integers(0, 2, size=s, dtype=np.int8) - 1.0
        return np.where(on, value * sign, 0.0)
    return Marginal("sparse", {"p": p, "value": value}, 0.0, p * value**2, p * value**4, draw)


def _uniform(half_width: float = math.sqrt(3.0)) -> Marginal:
    a = half_width
    return Marginal("uniform", {"half_width": a}, 0.0, a**2 / 3, a**4 / 5,
                    lambda g, s: g.uniform(-a, a, size=s))


def _student_t(df: float = 5.0) -> Marginal:
    m2 = df / (df - 2) if df > 2 else math.inf
    m4 = 3 * df**2 / ((df - 2) * (df - 4)) if df > 4 else math.inf
    return Marginal("student-t", {"df": df}, 0.0, m2, m4, lambda g, s: g.standard_t(df, size=s))


MARGINALS: dict[str, Callable[..., Marginal]] = {
    "normal": _normal,
    "standard-normal": _normal,
    "gaussian": _normal,
    "rademacher": _rademacher,
    "sparse": _sparse,
    "uniform": _uniform,
    "student-t": _student_t,
}


def make_marginal(spec: Union[str, Mapping[str, Any], Marginal]) -> Marginal:
    if isinstance(spec, Marginal):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    try:
        factory = MARGINALS[name]
    except KeyError:
        raise ValueError(f"unknown marginal {name!r}; known: {sorted(MARGINALS)}") from None
    return factory(**spec)


# --------------------------------------------------------------------------
# the source object
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorSource:
    """Law of an n-dimensional random vector X.

    ``closed_form`` may hold any of ``alpha``, ``beta1``, ``beta2``,
    ``mean_sq_norm_over_n`` (that is ``||E X||^2 / n``), ``lam`` and
    ``norm_sq_range`` (the a.s. range of ``||X||^2 / n``).
    """

    n: int
    gamma: float
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    closed_form: Mapping[str, Any] = field(default_factory=dict)
    gamma_exact: bool = True
    transform: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be a positive finite second moment")

    @property
    def constant_norm(self) -> bool:
        r = self.closed_form.get("norm_sq_range")
        return r is not None and math.isclose(r[0], r[1], rel_tol=1e-12)

    @property
    def norm_sq_range(self) -> Optional[tuple[float, float]]:
        r = self.closed_form.get("norm_sq_range")
        return None if r is None else (float(r[0]), float(r[1]))

    def exact(self, name: str) -> Optional[float]:
        v = self.closed_form.get(name)
        return None if v is None else float(v)

    def rotated(self, q: np.ndarray) -> "VectorSource":
        """Law of ``q @ X`` for an orthogonal ``q``; every functional is unchanged."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n, self.n) or not np.allclose(q @ q.T, np.eye(self.n), atol=1e-10):
            raise ValueError("rotation must be an n x n orthogonal matrix")
        t = q if self.transform is None else q @ self.transform
        return replace(self, transform=t, label=(self.label + "+rot").lstrip("+"))

    def scaled(self, c: float) -> "VectorSource":
        """Law of ``c * X``; gamma and every functional pick up a factor c**2."""
        c2 = float(c) ** 2
        cf = {}
        for key, val in self.closed_form.items():
            if key == "lam":
                cf[key] = val
            elif key == "norm_sq_range":
                cf[key] = (val[0] * c2, val[1] * c2)
            else:
                cf[key] = val * c2
        t = np.eye(self.n) * float(c) if self.transform is None else self.transform * float(c)
        return replace(self, gamma=self.gamma * c2, closed_form=cf, transform=t)


def _iid_closed_form(n: int, m: Marginal) -> dict:
    a = m.second_moment - m.mean**2
    b = m.mean**2
    fro2 = n * a * a + 2 * a * b * n + b * b * n * n
    cf: dict[str, Any] = {"beta2": math.sqrt(fro2) / n, "mean_sq_norm_over_n": m.mean**2}
    if m.name == "normal":
        s2 = m.second_moment
        h = n / 2
        # E|chi2_n - n| = 4 h^h e^{-h} / Gamma(h)
        cf["alpha"] = s2 * 4.0 * math.exp(h * math.log(h) - h - special.gammaln(h)) / n
        cf["beta1"] = s2 * (2 / math.sqrt(math.pi)) * math.exp(special.gammaln((n + 1) / 2) - special.gammaln(h)) / n
    elif m.name == "rademacher":
        s2 = m.second_moment
        j = np.arange(n + 1)
        cf["alpha"] = 0.0
        cf["beta1"] = s2 * float(np.sum(stats.binom.pmf(j, n, 0.5) * np.abs(2 * j - n))) / n
        cf["norm_sq_range"] = (s2, s2)
    return cf


def make_iid(n: int, marginal_spec) -> VectorSource:
    """X with i.i.d. entries drawn from ``marginal_spec``."""
    m = make_marginal(marginal_spec)
    if not math.isfinite(m.second_moment):
        raise ValueError(f"marginal {m.name} {dict(m.params)} has no finite second moment")
    return VectorSource(
        n=n, gamma=m.second_moment, kind="iid-marginal",
        params={"marginal": m, "finite_fourth_moment": math.isfinite(m.fourth_moment)},
        closed_form=_iid_closed_form(n, m), label=f"iid-{m.name}",
    )


def make_sphere(n: int, gamma: float = 1.0) -> VectorSource:
    """Uniform on the sphere of radius sqrt(n * gamma)."""
    if n < 2:
        raise ValueError("sphere source needs n >= 2")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    # |<X1,X2>|/(n gamma) = |U| with U^2 ~ Beta(1/2, (n-1)/2)
    e_abs_u = math.exp(special.gammaln(n / 2) - special.gammaln((n + 1) / 2)) / math.sqrt(math.pi)
    cf = {"alpha": 0.0, "beta1": gamma * e_abs_u, "beta2": gamma / math.sqrt(n),
          "mean_sq_norm_over_n": 0.0, "norm_sq_range": (gamma, gamma)}
    return VectorSource(n=n, gamma=gamma, kind="sphere-uniform", params={"radius": math.sqrt(n * gamma)},
                        closed_form=cf, label="sphere")


def make_orthogonal_support(n: int, d: int, weights=None, gamma: float = 1.0) -> VectorSource:
    """X supported on d scaled canonical basis vectors sqrt(n gamma) e_i."""
    if d < 1 or d > n:
        raise ValueError("need 1 <= d <= n")
    w = np.full(d, 1.0 / d) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (d,) or np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("weights must be d non-negative numbers summing to one")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lam = float(np.sum(w**2))
    cf = {"alpha": 0.0, "beta1": gamma * lam, "beta2": gamma * math.sqrt(lam),
          "mean_sq_norm_over_n": gamma * lam, "lam": lam, "norm_sq_range": (gamma, gamma)}
    return VectorSource(n=n, gamma=gamma, kind="orthogonal-support",
                        params={"d": d, "weights": w / w.sum()}, closed_form=cf, label=f"orthogonal-d{d}")


def make_point(x0) -> VectorSource:
    """Deterministic X = x0."""
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    g = float(x0 @ x0) / n
    cf = {"alpha": 0.0, "beta1": g, "beta2": g, "mean_sq_norm_over_n": g, "norm_sq_range": (g, g)}
    return VectorSource(n=n, gamma=g, kind="deterministic-point", params={"x0": x0}, closed_form=cf, label="point")


def make_empirical(rows, replace: bool = False) -> VectorSource:
    """Uniform law on the rows of a sample matrix.

    Without ``replace`` a single draw never repeats a row, which keeps pairs
    independent only approximately; functionals are those of the empirical law.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError("rows must be a non-empty (N, n) matrix")
    big_n, n = rows.shape
    sq = np.einsum("ij,ij->i", rows, rows) / n
    g = float(sq.mean())
    cf: dict[str, Any] = {"alpha": float(np.mean(np.abs(sq - g))),
                          "norm_sq_range": (float(sq.min()), float(sq.max()))}
    mean = rows.mean(axis=0)
    cf["mean_sq_norm_over_n"] = float(mean @ mean) / n
    if big_n <= 4000:
        gram = rows @ rows.T / n
        cf["beta1"] = float(np.mean(np.abs(gram)))
        cf["beta2"] = float(np.sqrt(np.mean(gram**2)))
    return VectorSource(n=n, gamma=g, kind="empirical-dataset", params={"rows": rows, "replace": bool(replace)},
                        closed_form=cf, label="empirical")


def source_from_spec(spec: Mapping[str, Any], n: int) -> VectorSource:
    """Build a source from a JSON-style spec, instantiated at dimension ``n``."""
    spec = dict(spec)
    kind = spec.get("kind")
    if kind == "iid-marginal":
        src = make_iid(n, spec.get("marginal", "normal"))
    elif kind == "sphere-uniform":
        src = make_sphere(n, spec.get("gamma", 1.0))
    elif kind == "orthogonal-support":
        src = make_orthogonal_support(n, spec["d"], spec.get("weights"), spec.get("gamma", 1.0))
    elif kind == "deterministic-point":
        g = spec.get("gamma", 1.0)
        src = make_point(np.full(n, math.sqrt(g)))
    elif kind == "empirical-dataset":
        rows = np.loadtxt(spec["path"], delimiter=",", ndmin=2) if "path" in spec else np.asarray(spec["rows"], float)
        if rows.shape[1] != n:
            raise ValueError(f"dataset has dimension {rows.shape[1]}, grid asks for n={n}")
        src = make_empirical(rows, spec.get("replace", False))
    else:
        raise ValueError(f"unknown source kind {kind!r}")
    if "name" in spec:
        src = replace(src, label=spec["name"])
    return src


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample_x(source: VectorSource, rng: RngLike, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. rows from the law of X, shape ``(count, n)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = as_generator(rng)
    n = source.n
    kind = source.kind
    if kind == "iid-marginal":
        x = source.params["marginal"].sample(gen, (count, n)).astype(float, copy=False)
    elif kind == "sphere-uniform":
        x = gen.standard_normal((count, n))
        x *= source.params["radius"] / np.linalg.norm(x, axis=1, keepdims=True)
    elif kind == "orthogonal-support":
        w = source.params["weights"]
        idx = gen.choice(w.size, size=count, p=w)
        x = np.zeros((count, n))
        x[np.arange(count), idx] = math.sqrt(n * source.gamma)
    elif kind == "deterministic-point":
        x = np.tile(source.params["x0"], (count, 1))
    else:
        rows = source.params["rows"]
        if count > rows.shape[0] and not source.params["replace"]:
            raise SamplingError(f"requested {count} rows from a dataset of {rows.shape[0]} without replacement")
        x = rows[gen.choice(rows.shape[0], size=count, replace=source.params["replace"])]
    if source.transform is not None:
        x = x @ source.transform.T
    return x


def iter_x(source: VectorSource, rng: RngLike, count: int, max_entries: int = 1 << 22):
    """Yield ``sample_x`` output in row chunks whose size depends only on n."""
    gen = as_generator(rng)
    step = max(1, max_entries // source.n)
    done = 0
    while done < count:
        m = min(step, count - done)
        yield sample_x(source, gen, m)
        done += m


@dataclass(frozen=True)
class ProjectionDraw:
    k: int
    n: int
    entries: np.ndarray = field(repr=False)
    seed_path: tuple[int, ...] = ()

    def project(self, x: np.ndarray) -> np.ndarray:
        """Rows of ``x`` mapped to rows of ``x @ entries.T``."""
        return np.asarray(x) @ self.entries.T


@dataclass(frozen=True)
class NoiseChannel:
    t: float
    k: int

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("noise power t must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def sample_theta(k: int, n: int, rng: RngLike) -> ProjectionDraw:
    """k x n matrix with i.i.d. N(0, 1/n) entries."""
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    gen = as_generator(rng)
    entries = gen.standard_normal((k, n)) / math.sqrt(n)
    return ProjectionDraw(k, n, entries, seed_path_of(rng))


def project_and_noise(theta, x, channel: NoiseChannel, rng: RngLike):
    """Return ``(z, y)`` with ``z = theta x`` and ``y = z + sqrt(t) N``.

    ``x`` may be a single vector or a matrix of rows; outputs follow suit.
    """
    entries = theta.entries if isinstance(theta, ProjectionDraw) else np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if entries.shape[0] != channel.k:
        raise ValueError(f"theta has {entries.shape[0]} rows but channel k={channel.k}")
    if x.shape[-1] != entries.shape[1]:
        raise ValueError(f"x has dimension {x.shape[-1]}, theta expects {entries.shape[1]}")
    z = x @ entries.T
    gen = as_generator(rng)
    y = z + math.sqrt(channel.t) * gen.standard_normal(z.shape)
    return z, y


def gaussian_logpdf(y: np.ndarray, variance: float) -> np.ndarray:
    """Log density of N(0, variance I_k) at the rows of ``y``."""
    y = np.atleast_2d(y)
    k = y.shape[1]
    return -0.5 * np.einsum("ij,ij->i", y, y) / variance - 0.5 * k * math.log(2 * math.pi * variance)
