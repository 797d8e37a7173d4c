"""Moments m_p(Y, Theta) and M(Y, Theta) of the conditional-density variance.

m_p is the p-th radial moment of Var(p_{Y|Theta}(y | Theta)), normalised by the
same moment of the squared standard Gaussian density.  Averaging over the
projection in closed form reduces it to an expectation over an independent pair
(X1, X2) through (V_a, V_g, R); this module evaluates that expectation by Monte
Carlo, in closed form for orthogonal-support and spherical laws, and bounds it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from ._mc import batch_mean_se
from .bounds import BoundReport, _from_logs, _log
from .rng import RngLike, as_generator
from .sources import VectorSource, sample_x


class QuadratureError(ArithmeticError):
    """Order doubling failed to reach the requested tolerance."""


@dataclass(frozen=True)
class PairStatistics:
    v_a: np.ndarray
    v_g: np.ndarray
    r: np.ndarray
    # t + ||x1 - x2||^2 / (2n), i.e. v_a - r computed without cancellation
    v_a_minus_r: np.ndarray
    # v_g^2 - r^2 = det of the 2x2 block of Sigma + tI
    det: np.ndarray
    t: float


def pair_stats(x1, x2, t: float, n: Optional[int] = None) -> PairStatistics:
    """(V_a, V_g, R) for one pair of vectors or row-aligned batches of pairs."""
    if not t > 0:
        raise ValueError("t must be positive")
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape:
        raise ValueError(f"pair shapes differ: {x1.shape} vs {x2.shape}")
    n = x1.shape[1] if n is None else n
    if x1.shape[1] != n:
        raise ValueError(f"vectors have dimension {x1.shape[1]}, expected n={n}")
    s1 = np.einsum("ij,ij->i", x1, x1) / n
    s2 = np.einsum("ij,ij->i", x2, x2) / n
    r = np.einsum("ij,ij->i", x1, x2) / n
    diff = x1 - x2
    d2 = np.einsum("ij,ij->i", diff, diff) / n
    return _from_norms(s1, s2, r, d2, t)


def _from_norms(s1, s2, r, d2, t) -> PairStatistics:
    v_a = t + 0.5 * (s1 + s2)
    v_g = np.sqrt((t + s1) * (t + s2))
    det = t * t + t * (s1 + s2) + np.maximum(s1 * s2 - r * r, 0.0)
    return PairStatistics(v_a, v_g, r, t + 0.5 * d2, det, t)


def sample_pair_norms(source: VectorSource, n_pairs: int, rng: RngLike) -> tuple[np.ndarray, ...]:
    """(||X1||^2/n, ||X2||^2/n, <X1,X2>/n, ||X1-X2||^2/n) over independent pairs.

    Reusable across (k, p, t): the Monte Carlo integrand depends on X only
    through these four numbers.
    """
    gen = as_generator(rng)
    n = source.n
    step = max(1, (1 << 21) // n)
    cols = [[], [], [], []]
    done = 0
    while done < n_pairs:
        m = min(step, n_pairs - done)
        x = sample_x(source, gen, 2 * m)
        a, b = x[:m], x[m:]
        diff = a - b
        for c, v in zip(cols, (np.einsum("ij,ij->i", a, a), np.einsum("ij,ij->i", b, b),
                               np.einsum("ij,ij->i", a, b), np.einsum("ij,ij->i", diff, diff))):
            c.append(v / n)
        done += m
    return tuple(np.concatenate(c) for c in cols)


def m_p_integrand(ps: PairStatistics, k: int, p: float) -> np.ndarray:
    """Per-pair value of the m_p expectation, evaluated in log space."""
    log_first = -0.5 * k * np.log(ps.v_a_minus_r) + 0.5 * p * (np.log(ps.det) - np.log(ps.v_a_minus_r))
    log_second = -0.5 * k * np.log(ps.v_a) + 0.5 * p * (2 * np.log(ps.v_g) - np.log(ps.v_a))
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(log_second) * np.expm1(log_first - log_second)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(
            f"m_p integrand overflowed for k={k}, p={p}, t={ps.t}: max log term {float(np.max(log_first)):.1f}")
    return out


@dataclass(frozen=True)
class MomentEstimate:
    k: int
    p: float
    t: float
    value: float
    se: float
    method: str


def m_p_from_norms(norms, k: int, p: float, t: float) -> MomentEstimate:
    if k + p <= 0:
        raise ValueError("need k + p > 0")
    ps = _from_norms(*norms, t)
    value, se = batch_mean_se(m_p_integrand(ps, k, p))
    return MomentEstimate(k, p, t, value, se, "mc")


def m_p_mc(source: VectorSource, k: int, p: float, t: float, n_pairs: int, rng: RngLike) -> MomentEstimate:
    """Monte Carlo m_p over ``n_pairs`` independent pairs."""
    if not t > 0:
        raise ValueError("t must be positive")
    return m_p_from_norms(sample_pair_norms(source, n_pairs, rng), k, p, t)


def m_p_orthogonal(lam: float, gamma: float, t: float, k: int, p: float) -> float:
    """Closed form for X uniform-or-not on orthogonal atoms of squared norm n*gamma."""
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    if t <= 0 or gamma <= 0:
        raise ValueError("t and gamma must be positive")
    first = math.exp(0.5 * p * math.log(t + 2 * gamma) - 0.5 * k * math.log(t))
    second = math.exp(0.5 * (p - k) * math.log(t + gamma))
    return lam * (first - second)


def g_kp(u, k: int, p: float):
    """(1-u)^(-k/2) (1+u)^(p/2) - 1 on (-1, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(np.abs(u_arr) >= 1):
        raise ValueError("g_kp needs |u| < 1")
    out = np.expm1(-0.5 * k * np.log1p(-u_arr) + 0.5 * p * np.log1p(u_arr))
    return float(out) if out.ndim == 0 else out


def g_kp_upper(r, t: float, gamma: float, k: int, p: float, as_printed: bool = False):
    """Quadratic majorant of g_kp(r / (t + gamma)) valid for |r| <= gamma.

    The quadratic coefficient carries a factor t^(-k/2) coming from
    (1 - gamma/(t+gamma))^(-k/2).  ``as_printed=True`` drops it, which gives
    the commonly quoted form; that form coincides at t = 1 and fails for
    small t, so it is kept only for comparison.
    """
    r_arr = np.asarray(r, dtype=float)
    if t <= 0 or gamma <= 0:
        raise ValueError("t and gamma must be positive")
    if np.any(np.abs(r_arr) > gamma * (1 + 1e-12)):
        raise ValueError("need |r| <= gamma")
    log_quad = 0.5 * p * math.log(t + 2 * gamma) + 0.5 * (k - p) * math.log(t + gamma)
    if not as_printed:
        log_quad -= 0.5 * k * math.log(t)
    out = 0.5 * (k + p) * r_arr / (t + gamma) + math.exp(log_quad) * r_arr**2 / gamma**2
    return float(out) if out.ndim == 0 else out


def _sphere_quadrature(n: int, gamma: float, t: float, k: int, p: float, order: int, reflect: bool = False) -> float:
    a = 0.5 * (n - 3)
    nodes, weights = special.roots_jacobi(order, a, a)
    weights = weights / weights.sum()
    u = -nodes if reflect else nodes
    vals = g_kp(gamma * u / (t + gamma), k, p)
    return float(np.dot(weights, vals)) * (t + gamma) ** (0.5 * (p - k))


def m_p_sphere(n: int, gamma: float, t: float, k: int, p: float, quadrature_order: int = 32,
               rtol: float = 1e-10, max_order: int = 4096, reflect: bool = False) -> float:
    """m_p for X uniform on the sphere of radius sqrt(n gamma).

    The cosine U between two independent draws has density proportional to
    (1 - u^2)^((n-3)/2), i.e. U^2 ~ Beta(1/2, (n-1)/2); the expectation is a
    Gauss-Jacobi rule whose order is doubled until successive values agree to
    ``rtol``.
    """
    if n < 2:
        raise ValueError("sphere needs n >= 2")
    if quadrature_order < 16:
        raise ValueError("quadrature_order must be >= 16")
    order = quadrature_order
    prev = _sphere_quadrature(n, gamma, t, k, p, order, reflect)
    while order < max_order:
        order *= 2
        cur = _sphere_quadrature(n, gamma, t, k, p, order, reflect)
        if abs(cur - prev) <= rtol * abs(cur) or cur == prev:
            return cur
        prev = cur
    raise QuadratureError(f"m_p_sphere did not converge by order {order}: last change {abs(cur - prev):.3e}")


def m_p_sphere_bound(mean_sq_norm_over_n: float, beta2: float, gamma: float, t: float, k: int, p: float) -> float:
    """Upper bound on m_p for constant-magnitude X from the g_kp majorant."""
    first = 0.5 * (k + p) * (t + gamma) ** (0.5 * (p - k) - 1) * mean_sq_norm_over_n
    second = (1 + 2 * gamma / t) ** (0.5 * p) * t ** (0.5 * (p - k)) * beta2**2 / gamma**2
    return first + second


def big_m(m_km1: float, m_kp1: float) -> float:
    """Geometric mean of m_{k-1} and m_{k+1}; negative MC inputs are floored at 0."""
    vals = []
    for name, v in (("m_{k-1}", m_km1), ("m_{k+1}", m_kp1)):
        if v < 0:
            warnings.warn(f"{name} estimate {v:.3g} is negative; flooring at 0", RuntimeWarning, stacklevel=2)
            v = 0.0
        vals.append(v)
    return math.sqrt(vals[0] * vals[1])


def big_m_se(m_km1: MomentEstimate, m_kp1: MomentEstimate) -> tuple[float, float]:
    """M and a delta-method SE, treating the two estimates as independent."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = big_m(m_km1.value, m_kp1.value)
    a, b = max(m_km1.value, 0.0), max(m_kp1.value, 0.0)
    if m == 0:
        return 0.0, math.sqrt(m_km1.se * m_kp1.se)
    se = 0.5 * math.sqrt((b / a) * m_km1.se**2 + (a / b) * m_kp1.se**2) if a > 0 and b > 0 else math.nan
    return m, se


def m_bound_k1(beta1: float, t: float) -> float:
    """Bound on M for one-dimensional projections: beta_1 / t."""
    if not t > 0:
        raise ValueError("t must be positive")
    return beta1 / t


def m_bound_bounded(gamma_min: float, gamma_max: float, beta1: float, beta2: float, t: float, k: int,
                    mean_sq_norm_over_n: Optional[float] = None) -> BoundReport:
    """Bound on M when gamma_min <= ||X||^2/n <= gamma_max almost surely.

    With gamma_min == gamma_max and ``mean_sq_norm_over_n`` given, the
    constant-magnitude form is used (||E X||^2/n in place of beta_1).
    """
    if gamma_min <= 0 or gamma_max < gamma_min:
        raise ValueError("need 0 < gamma_min <= gamma_max")
    if not t > 0:
        raise ValueError("t must be positive")
    constant = math.isclose(gamma_min, gamma_max, rel_tol=1e-12) and mean_sq_norm_over_n is not None
    first = mean_sq_norm_over_n if constant else beta1
    log_pref = 0.25 * math.log(2 * gamma_max / gamma_min)
    logs = [log_pref + _log(k * first / gamma_min),
            log_pref + 0.5 * k * math.log1p(2 * gamma_max / t) + 2 * _log(beta2) - 2 * math.log(gamma_min)]
    value, log_value = _from_logs(logs)
    return BoundReport("lemma_m_bounded", {"gamma_min": gamma_min, "gamma_max": gamma_max, "beta1": beta1,
                                           "beta2": beta2, "t": t, "k": k,
                                           "mean_sq_norm_over_n": mean_sq_norm_over_n},
                       value, log_value, {"magnitude_bounded": True, "t_positive": True})
