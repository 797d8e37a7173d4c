"""Nested Monte Carlo for conditional densities, relative entropies and mutual informations.

The conditional density of Y = Theta X + sqrt(t) N given Theta = theta is the
Gaussian-kernel mixture E[phi_t(y - theta X)]; it is estimated by averaging the
kernel over an inner sample of X and evaluated in log space.  Outer points are
drawn independently of the inner sample, so log-density errors average out to
first order and only the (downward) Jensen bias of order 1/m_inner remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .._mc import batch_mean_se, combined_se, jackknife_se
from ..rng import RngLike
from ..sources import VectorSource, sample_theta, sample_x
from ._common import (INNER, INNER_EXTRA, MARGINAL_INNER, MARGINAL_OUTER, NOISE, OUTER_X, THETA,
                      EstimateReport, GaussianReference, path_of, replicate_se, sub_generator, sub_stream)

DEFAULT_M_INNER = 4096
_CHUNK_ENTRIES = 1 << 22


def _entries(theta) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(theta, "entries", theta), dtype=float))


def _log_kernel_sums(y: np.ndarray, centres: np.ndarray, t: float, squares: bool = False):
    """log sum_m phi_t(y_i - c_m) (and of phi_t^2 when ``squares``) for each row y_i."""
    y = np.atleast_2d(y)
    k = y.shape[1]
    m = centres.shape[0]
    cc = np.einsum("ij,ij->i", centres, centres)
    log_norm = -0.5 * k * math.log(2 * math.pi * t)
    out = np.empty(y.shape[0])
    out_sq = np.empty(y.shape[0]) if squares else None
    step = max(1, _CHUNK_ENTRIES // max(m, 1))
    for s in range(0, y.shape[0], step):
        yc = y[s:s + step]
        if k == 1:
            d2 = (yc - centres.T) ** 2
        else:
            d2 = np.einsum("ij,ij->i", yc, yc)[:, None] + cc[None, :] - 2.0 * yc @ centres.T
            np.maximum(d2, 0.0, out=d2)
        logk = -0.5 * d2 / t
        out[s:s + step] = special.logsumexp(logk, axis=1) + log_norm
        if squares:
            out_sq[s:s + step] = special.logsumexp(2 * logk, axis=1) + 2 * log_norm
    return out, out_sq


@dataclass(frozen=True)
class DensityEstimate:
    density: np.ndarray
    se: np.ndarray
    log_density: np.ndarray
    underflow: np.ndarray

    def __iter__(self):
        return iter((self.density, self.se))


def conditional_density_y(theta, t: float, x_samples, y) -> DensityEstimate:
    """Monte Carlo p_{Y|Theta}(y | theta) from draws of X.

    Where the linear density underflows, ``log_density`` is still accurate and
    ``underflow`` marks the affected points.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    a = _entries(theta)
    x = np.atleast_2d(np.asarray(x_samples, dtype=float))
    if x.shape[1] != a.shape[1]:
        raise ValueError(f"x has dimension {x.shape[1]}, theta expects {a.shape[1]}")
    y = np.asarray(y, dtype=float).reshape(-1, a.shape[0])
    m = x.shape[0]
    ls, lsq = _log_kernel_sums(y, x @ a.T, t, squares=True)
    log_p = ls - math.log(m)
    # relative variance of a single kernel draw, then of the mean
    rel = np.maximum(np.exp(lsq - math.log(m) - 2 * log_p) - 1.0, 0.0)
    with np.errstate(under="ignore"):
        dens = np.exp(log_p)
    se = dens * np.sqrt(rel / max(m - 1, 1))
    return DensityEstimate(dens, se, log_p, dens == 0.0)


def _log_density(y, centres, t) -> np.ndarray:
    ls, _ = _log_kernel_sums(y, centres, t)
    return ls - math.log(centres.shape[0])


def _inner_centres(source: VectorSource, a: np.ndarray, m: int, gen) -> np.ndarray:
    out = []
    step = max(1, _CHUNK_ENTRIES // source.n)
    for s in range(0, m, step):
        out.append(sample_x(source, gen, min(step, m - s)) @ a.T)
    return np.concatenate(out)


def _marginal_centres(source: VectorSource, k: int, m: int, gen) -> np.ndarray:
    """Draws of Theta X for fresh (Theta, X): sqrt(||X||^2 / n) times a standard k-vector."""
    out = []
    step = max(1, _CHUNK_ENTRIES // source.n)
    for s in range(0, m, step):
        x = sample_x(source, gen, min(step, m - s))
        r = np.sqrt(np.einsum("ij,ij->i", x, x) / source.n)
        out.append(r[:, None] * gen.standard_normal((x.shape[0], k)))
    return np.concatenate(out)


def _conditional_outputs(source, a, t, count, rng):
    z = _inner_centres(source, a, count, sub_generator(rng, OUTER_X))
    noise = sub_generator(rng, NOISE).standard_normal(z.shape)
    return z + math.sqrt(t) * noise, noise


@dataclass(frozen=True)
class ConditionalKL:
    value: float
    se: float
    bias_estimate: Optional[float] = None
    corrected: Optional[float] = None

    def __iter__(self):
        return iter((self.value, self.se))


def kl_conditional(theta, source: VectorSource, t: float, n_outer: int, m_inner: int = DEFAULT_M_INNER,
                   rng: RngLike = 0, richardson: bool = False) -> ConditionalKL:
    """D(P_{Y|theta} || G_Y) by nested Monte Carlo.

    The estimate is biased low by roughly (inner relative variance) / (2 m_inner).
    ``richardson=True`` re-evaluates with 2 m_inner inner draws (the original
    ones plus m_inner fresh ones) and reports the difference as a bias estimate
    together with the extrapolated value 2 D(2m) - D(m).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    a = _entries(theta)
    k = a.shape[0]
    ref = GaussianReference(k, source.gamma + t)
    centres = _inner_centres(source, a, m_inner, sub_generator(rng, INNER))
    y, _ = _conditional_outputs(source, a, t, n_outer, rng)
    log_g = ref.logpdf(y)
    vals = _log_density(y, centres, t) - log_g
    value, se = batch_mean_se(vals)
    if not richardson:
        return ConditionalKL(value, se)
    more = _inner_centres(source, a, m_inner, sub_generator(rng, INNER_EXTRA))
    v2 = float(np.mean(_log_density(y, np.concatenate([centres, more]), t) - log_g))
    return ConditionalKL(value, se, v2 - value, 2 * v2 - value)


def _theta_reps(source, k, reps, rng, thetas=None):
    """(stream, theta) per replicate; ``thetas`` pins the projections while
    every other draw still comes from the replicate's own stream."""
    if thetas is not None:
        if len(thetas) != reps:
            raise ValueError(f"got {len(thetas)} thetas for {reps} replicates")
        for r, th in enumerate(thetas):
            yield sub_stream(rng, r), th
        return
    for r in range(reps):
        s = sub_stream(rng, r)
        yield s, sample_theta(k, source.n, sub_generator(s, THETA))


def draw_thetas(source: VectorSource, k: int, reps: int, rng: RngLike) -> list:
    """Projection draws to share between estimators for paired comparisons."""
    return [th for _, th in _theta_reps(source, k, reps, rng)]


def expected_kl(source: VectorSource, t: float, k: int, reps: int, n_outer: int, m_inner: int = DEFAULT_M_INNER,
                rng: RngLike = 0, richardson: bool = False, thetas=None) -> EstimateReport:
    """E over Theta of D(P_{Y|Theta} || G_Y); SE from the spread over Theta replicates."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    vals, biases = [], []
    for s, th in _theta_reps(source, k, reps, rng, thetas):
        est = kl_conditional(th, source, t, n_outer, m_inner, s, richardson)
        vals.append(est.value)
        if richardson:
            biases.append(est.bias_estimate)
    se = replicate_se(vals) if reps > 1 else est.se
    extras = {"per_rep": vals, "bias_note": "inner Monte Carlo biases the estimate downward"}
    if richardson:
        extras["bias_estimate"] = float(np.mean(biases))
        extras["corrected"] = float(np.mean(vals) + 2 * np.mean(biases))
    return EstimateReport("expected_kl", float(np.mean(vals)), se, reps, m_inner, "nested-mc", path_of(rng), extras)


def marginal_kl(source: VectorSource, t: float, k: int, reps: int, n_outer: int, m_inner: int = DEFAULT_M_INNER,
                rng: RngLike = 0) -> EstimateReport:
    """D(P_Y || G_Y) with P_Y the output law averaged over Theta."""
    if not t > 0:
        raise ValueError("t must be positive")
    ref = GaussianReference(k, source.gamma + t)
    vals, ses = [], []
    for r in range(reps):
        s = sub_stream(rng, r)
        centres = _marginal_centres(source, k, m_inner, sub_generator(s, MARGINAL_INNER))
        gen = sub_generator(s, MARGINAL_OUTER)
        y = _marginal_centres(source, k, n_outer, gen)
        y = y + math.sqrt(t) * gen.standard_normal(y.shape)
        v, e = batch_mean_se(_log_density(y, centres, t) - ref.logpdf(y))
        vals.append(v)
        ses.append(e)
    se = replicate_se(vals) if reps > 1 else ses[0]
    return EstimateReport("marginal_kl", float(np.mean(vals)), se, reps, m_inner, "nested-mc", path_of(rng),
                          {"per_rep": vals})


def mi_y_theta(source: VectorSource, t: float, k: int, reps: int, n_outer: int, m_inner: int = DEFAULT_M_INNER,
               rng: RngLike = 0, method: str = "direct", thetas=None) -> EstimateReport:
    """I(Y; Theta).

    ``direct`` averages log(p_{Y|theta} / p_Y) over y drawn given theta, with
    independent inner samples for each density.  ``identity`` subtracts
    marginal_kl from expected_kl, each run on its own sub-stream.  ``both``
    reports the direct value and stores the identity value in extras.
    """
    if method not in ("direct", "identity", "both"):
        raise ValueError(f"unknown method {method!r}")
    extras = {}
    if method in ("identity", "both"):
        ekl = expected_kl(source, t, k, reps, n_outer, m_inner, sub_stream(rng, 1))
        mkl = marginal_kl(source, t, k, reps, n_outer, m_inner, sub_stream(rng, 2))
        ident, ident_se = ekl.value - mkl.value, combined_se(ekl.se, mkl.se)
        extras.update(identity_value=ident, identity_se=ident_se)
        if method == "identity":
            extras["negative_flag"] = ident < -3 * ident_se
            return EstimateReport("mi_y_theta", ident, ident_se, reps, m_inner, "identity", path_of(rng), extras)
    vals = []
    direct_rng = sub_stream(rng, 0)
    for s, th in _theta_reps(source, k, reps, direct_rng, thetas):
        a = th.entries
        centres = _inner_centres(source, a, m_inner, sub_generator(s, INNER))
        marg = _marginal_centres(source, k, m_inner, sub_generator(s, MARGINAL_INNER))
        y, _ = _conditional_outputs(source, a, t, n_outer, s)
        vals.append(float(np.mean(_log_density(y, centres, t) - _log_density(y, marg, t))))
    value = float(np.mean(vals))
    se = replicate_se(vals)
    extras.update(per_rep=vals, negative_flag=bool(value < -3 * se) if math.isfinite(se) else False)
    return EstimateReport("mi_y_theta", value, se, reps, m_inner, "direct", path_of(rng), extras)


def mi_x_y(source: VectorSource, t: float, k: int, reps: int, n_outer: int, m_inner: int = DEFAULT_M_INNER,
           rng: RngLike = 0, thetas=None) -> EstimateReport:
    """I(X; Y | Theta) as E log(phi_t(Y - Theta X) / p_{Y|Theta}(Y))."""
    if not t > 0:
        raise ValueError("t must be positive")
    vals = []
    log_norm = -0.5 * k * math.log(2 * math.pi * t)
    for s, th in _theta_reps(source, k, reps, rng, thetas):
        centres = _inner_centres(source, th.entries, m_inner, sub_generator(s, INNER))
        y, noise = _conditional_outputs(source, th.entries, t, n_outer, s)
        log_kernel = -0.5 * np.einsum("ij,ij->i", noise, noise) + log_norm
        vals.append(float(np.mean(log_kernel - _log_density(y, centres, t))))
    return EstimateReport("mi_x_y", float(np.mean(vals)), replicate_se(vals), reps, m_inner, "nested-mc",
                          path_of(rng), {"per_rep": vals})


class GridError(RuntimeError):
    """The y-grid does not carry enough of the output density's mass."""


def var_density_integral(source: VectorSource, t: float, reps: int, m_inner: int = DEFAULT_M_INNER,
                         rng: RngLike = 0, half_width: float = 8.0, nodes: int = 801,
                         min_mass: float = 0.999, thetas=None) -> EstimateReport:
    """Integral over y of sqrt(Var_Theta p_{Y|Theta}(y | Theta)) for k = 1.

    Each Theta replicate contributes an inner-sample density curve on a grid
    spanning +-half_width sqrt(gamma + t).  The across-replicate variance is
    corrected for inner Monte Carlo noise (mean inner variance subtracted,
    floored at zero) before the square root; the trapezoid rule integrates.
    SE is a delete-one-replicate jackknife.  ``thetas`` pins the projections
    as in :func:`expected_kl`.
    """
    if reps < 3:
        raise ValueError("need at least 3 Theta replicates")
    if nodes < 400:
        raise ValueError("grid needs at least 400 nodes")
    widened = False
    while True:
        grid = np.linspace(-1, 1, nodes) * half_width * math.sqrt(source.gamma + t)
        dens = np.empty((reps, nodes))
        inner_var = np.empty((reps, nodes))
        for r, (s, th) in enumerate(_theta_reps(source, 1, reps, rng, thetas)):
            x = sample_x(source, sub_generator(s, INNER), m_inner)
            est = conditional_density_y(th, t, x, grid[:, None])
            dens[r] = est.density
            inner_var[r] = est.se**2
        mass = _trapezoid(dens.mean(axis=0), grid)
        if mass >= min_mass:
            break
        if widened:
            raise GridError(f"grid +-{half_width} sqrt(gamma+t) holds mass {mass:.5f} < {min_mass}")
        half_width *= 1.5
        widened = True

    def integral(rows):
        d, v = rows[:, 0], rows[:, 1]
        var = np.maximum(d.var(axis=0, ddof=1) - v.mean(axis=0), 0.0)
        return _trapezoid(np.sqrt(var), grid)

    stacked = np.stack([dens, inner_var], axis=1)
    value = integral(stacked)
    se = jackknife_se(stacked, integral)
    return EstimateReport("var_density_integral", float(value), se, reps, m_inner, "grid-trapezoid", path_of(rng),
                          {"mass": mass, "half_width": half_width, "nodes": nodes})


def _trapezoid(y, x) -> float:
    fn = getattr(np, "trapezoid", None) or np.trapz
    return float(fn(y, x))
