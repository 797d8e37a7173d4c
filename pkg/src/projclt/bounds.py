"""Closed-form upper bounds on the distance between projections and Gaussians.

Every evaluator returns a :class:`BoundReport` holding the value, its natural
logarithm and the inputs.  Sums of positive terms are accumulated in log
space so that factors such as (1 + 2 gamma / t)^(k/4) stay comparable when
they overflow a double.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from ._mc import batch_mean_se

_LOG_MAX = math.log(np.finfo(float).max)

THM1_CONSTANT = 40.0
THM2_CONSTANT = 3.0
THM5_CONSTANT = 10.0


@dataclass(frozen=True)
class BoundReport:
    bound_name: str
    params: dict
    value: float
    log_value: float
    assumptions_ok: dict = field(default_factory=dict)

    @property
    def citable(self) -> bool:
        return all(self.assumptions_ok.values())

    def __float__(self) -> float:
        return self.value

    def as_dict(self) -> dict:
        return {"bound_name": self.bound_name, "params": dict(self.params), "value": self.value,
                "log_value": self.log_value, "assumptions_ok": dict(self.assumptions_ok)}


def _log(x: float) -> float:
    """log(x) with log(0) = -inf; negative input is a caller error."""
    if x < 0:
        raise ValueError(f"expected a non-negative quantity, got {x}")
    return math.log(x) if x > 0 else -math.inf


def _from_logs(logs) -> tuple[float, float]:
    """(value, log_value) of a sum of positive terms given their logs."""
    logs = [float(v) for v in logs]
    if all(v == -math.inf for v in logs):
        return 0.0, -math.inf
    lv = float(special.logsumexp(logs))
    return (math.exp(lv) if lv < _LOG_MAX else math.inf), lv


def _nonneg(**kw):
    for name, v in kw.items():
        if v < 0 or math.isnan(v):
            raise ValueError(f"{name} must be non-negative, got {v}")


def _positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def _kappa_objective(x: float) -> float:
    return math.log1p(x) / math.sqrt(x)


@functools.lru_cache(maxsize=1)
def _kappa_argmax() -> float:
    res = optimize.minimize_scalar(lambda x: -_kappa_objective(x), bracket=(1.0, 4.0, 20.0),
                                   method="golden", tol=1e-12)
    return float(res.x)


def kappa() -> float:
    """sup_{x > 0} log(1 + x) / sqrt(x)."""
    return _kappa_objective(_kappa_argmax())


def kappa_argmax() -> float:
    return _kappa_argmax()


def mi_bound_from_m(m_value: float, k: int) -> BoundReport:
    """Mutual-information bound kappa (pi k / 2)^(1/4) sqrt(M)."""
    _nonneg(M=m_value)
    lv = math.log(kappa()) + 0.25 * math.log(math.pi * k / 2) + 0.5 * _log(m_value)
    value, lv = _from_logs([lv])
    return BoundReport("mi_from_m", {"M": m_value, "k": k, "kappa": kappa()}, value, lv, {"M_finite": math.isfinite(m_value)})


def kl_marginal_bound(alpha: float, gamma: float, t: float, k: int) -> BoundReport:
    """D(P_Y || G_Y) <= (k/2) log(1 + gamma/t) alpha / gamma."""
    _positive(gamma=gamma, t=t)
    _nonneg(alpha=alpha)
    value, lv = _from_logs([math.log(0.5 * k) + math.log(math.log1p(gamma / t)) + _log(alpha) - math.log(gamma)])
    return BoundReport("kl_marginal", {"alpha": alpha, "gamma": gamma, "t": t, "k": k}, value, lv, {"t_positive": True})


def thm1_w2_bound(alpha: float, beta1: float, beta2: float, gamma: float, k: int,
                  constant: float = THM1_CONSTANT) -> BoundReport:
    """Bound on E[W_2^2(P_{Z|Theta}, G_Z)]."""
    _positive(gamma=gamma, k=k)
    _nonneg(alpha=alpha, beta1=beta1, beta2=beta2)
    base = math.log(gamma) + math.log(constant)
    logs = [base + math.log(k) + _log(alpha / gamma),
            base + 0.75 * math.log(k) + 0.5 * _log(beta1 / gamma),
            base + math.log(k) + 4.0 / (k + 4) * _log(beta2 / gamma)]
    value, lv = _from_logs(logs)
    return BoundReport("thm1_w2", {"alpha": alpha, "beta1": beta1, "beta2": beta2, "gamma": gamma, "k": k,
                                   "C": constant}, value, lv, {"gamma_positive": True})


def thm2_terms(alpha, beta1, beta2, gamma, t, epsilon, k) -> list[float]:
    """Logs of the three bracketed terms of the expected-KL bound (before C)."""
    return [math.log(k) + math.log(math.log1p(gamma / t)) + _log(alpha) - math.log(epsilon) - math.log(gamma),
            0.75 * math.log(k) + 0.5 * _log(beta1 / gamma),
            0.25 * math.log(k) + 0.25 * k * math.log1p((2 + epsilon) * gamma / t) + _log(beta2 / gamma)]


def thm2_kl_bound(alpha: float, beta1: float, beta2: float, gamma: float, t: float, epsilon: float, k: int,
                  constant: float = THM2_CONSTANT) -> BoundReport:
    """Bound on E[D(P_{Y|Theta} || G_Y)] for noise level t and truncation width epsilon."""
    _positive(gamma=gamma, t=t, k=k)
    _nonneg(alpha=alpha, beta1=beta1, beta2=beta2)
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    value, lv = _from_logs([math.log(constant) + v for v in thm2_terms(alpha, beta1, beta2, gamma, t, epsilon, k)])
    return BoundReport("thm2_kl", {"alpha": alpha, "beta1": beta1, "beta2": beta2, "gamma": gamma, "t": t,
                                   "epsilon": epsilon, "k": k, "C": constant}, value, lv,
                       {"t_positive": True, "epsilon_in_unit_interval": True})


def thm2_optimize_epsilon(alpha: float, beta1: float, beta2: float, gamma: float, t: float, k: int,
                          constant: float = THM2_CONSTANT, eps_floor: float = 1e-3) -> tuple[float, BoundReport]:
    """Minimise the expected-KL bound over epsilon in [eps_floor, 1]."""
    def f(log_eps):
        return thm2_kl_bound(alpha, beta1, beta2, gamma, t, math.exp(log_eps), k, constant).log_value

    grid = np.linspace(math.log(eps_floor), 0.0, 61)
    vals = [f(g) for g in grid]
    i = int(np.argmin(vals))
    best_log, best_val = grid[i], vals[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo and math.isfinite(best_val):
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        if res.fun < best_val:
            best_log = float(res.x)
    eps = min(1.0, math.exp(best_log))
    return eps, thm2_kl_bound(alpha, beta1, beta2, gamma, t, eps, k, constant)


def thm2_conditional_mi_bound(beta1: float, beta2: float, gamma: float, t: float, epsilon: float, k: int) -> BoundReport:
    """Bound on the MI restricted to the set where ||X||^2/n is within epsilon/2 of gamma.

    kappa (pi k / 2)^(1/4) times the square root of the moment bound with
    gamma_min = (1 - eps/2) gamma and gamma_max = (1 + eps/2) gamma, simplified
    with (1 - eps/2)^(-1) <= 2 and (2 gamma_max / gamma_min) <= 6.
    """
    _positive(gamma=gamma, t=t)
    _nonneg(beta1=beta1, beta2=beta2)
    inner, _ = _from_logs([math.log(k) + _log(beta1 / gamma),
                           0.5 * k * math.log1p((2 + epsilon) * gamma / t) + 2 * _log(beta2 / gamma)])
    log_m = 2.25 * math.log(2) + 0.25 * math.log(3) + _log(inner) if math.isfinite(inner) else math.inf
    lv = math.log(kappa()) + 0.25 * math.log(math.pi * k / 2) + 0.5 * log_m
    value, lv = _from_logs([lv])
    return BoundReport("thm2_conditional_mi", {"beta1": beta1, "beta2": beta2, "gamma": gamma, "t": t,
                                               "epsilon": epsilon, "k": k}, value, lv, {"epsilon_in_unit_interval": 0 < epsilon <= 1})


def cor1_w2_bound(n: int, k: int, c_prime: float) -> BoundReport:
    """C' (n^(-1/4) + k n^(-2/(k+4))), normalised by gamma."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    _positive(c_prime=c_prime)
    logs = [math.log(c_prime) - 0.25 * math.log(n), math.log(c_prime) + math.log(k) - 2.0 / (k + 4) * math.log(n)]
    value, lv = _from_logs(logs)
    return BoundReport("cor1_w2", {"n": n, "k": k, "C_prime": c_prime}, value, lv, {})


def thm3_kl_k1_bound(alpha: float, beta1: float, t: float) -> BoundReport:
    """Expected KL for one-dimensional projections: alpha/(2t) + sqrt(beta_1/t)."""
    _positive(t=t)
    _nonneg(alpha=alpha, beta1=beta1)
    value, lv = _from_logs([_log(alpha / (2 * t)), 0.5 * _log(beta1 / t)])
    return BoundReport("thm3_kl_k1", {"alpha": alpha, "beta1": beta1, "t": t, "k": 1}, value, lv, {"k_is_one": True})


def thm4_kl_sphere_bound(mean_sq_norm_over_n: float, beta2: float, gamma: float, t: float, k: int,
                         constant_norm: bool = True) -> BoundReport:
    """Expected KL when ||X||^2/n = gamma almost surely."""
    _positive(gamma=gamma, t=t, k=k)
    _nonneg(mean_sq_norm_over_n=mean_sq_norm_over_n, beta2=beta2)
    if mean_sq_norm_over_n > gamma * (1 + 1e-12):
        raise ValueError("||E X||^2/n cannot exceed gamma")
    logs = [0.75 * math.log(k) + 0.5 * _log(mean_sq_norm_over_n / gamma),
            0.25 * math.log(k) + 0.25 * k * math.log1p(2 * gamma / t) + _log(beta2 / gamma)]
    value, lv = _from_logs(logs)
    return BoundReport("thm4_kl_sphere", {"mean_sq_norm_over_n": mean_sq_norm_over_n, "beta2": beta2,
                                          "gamma": gamma, "t": t, "k": k}, value, lv,
                       {"constant_norm": bool(constant_norm)})


def thm5_t_star(beta2: float, gamma: float, k: int) -> float:
    """Noise level that balances the two terms of the W_2 composition."""
    return 1.5 * gamma * (k**0.25 * beta2 / (4 * gamma)) ** (4.0 / (k + 4))


def thm5_w2_sphere_bound(mean_sq_norm_over_n: float, beta2: float, gamma: float, k: int,
                         constant: float = THM5_CONSTANT, constant_norm: bool = True) -> tuple[BoundReport, float]:
    """E[W_2^2] bound for constant-magnitude X; also returns the balancing t."""
    _positive(gamma=gamma, k=k)
    _nonneg(mean_sq_norm_over_n=mean_sq_norm_over_n, beta2=beta2)
    base = math.log(constant) + math.log(gamma)
    logs = [base + 0.75 * math.log(k) + 0.5 * _log(mean_sq_norm_over_n / gamma),
            base + math.log(k) + 4.0 / (k + 4) * _log(beta2 / gamma)]
    value, lv = _from_logs(logs)
    report = BoundReport("thm5_w2_sphere", {"mean_sq_norm_over_n": mean_sq_norm_over_n, "beta2": beta2,
                                            "gamma": gamma, "k": k, "C": constant}, value, lv,
                         {"constant_norm": bool(constant_norm)})
    return report, thm5_t_star(beta2, gamma, k)


def thm5_balance_constant(k: int) -> float:
    """Constant c_k multiplying k (beta2/gamma)^(4/(k+4)) in the composed bound at t*."""
    return 6 * (1 + 4.0 / k) * (k**0.25 / 4) ** (4.0 / (k + 4))


def w2_from_kl(kl_value: float, t: float, gamma: float, k: int) -> BoundReport:
    """W_2^2(P_{Z|theta}, G_Z) <= 4 t k + 4 (t + gamma) D(P_{Y|theta} || G_Y)."""
    _positive(t=t, gamma=gamma)
    _nonneg(kl=kl_value)
    value, lv = _from_logs([math.log(4 * t * k), math.log(4 * (t + gamma)) + _log(kl_value)])
    return BoundReport("w2_from_kl", {"kl": kl_value, "t": t, "gamma": gamma, "k": k}, value, lv, {"t_positive": True})


def mi_truncation_bound(k: int, t: float, gamma: float, alpha: float, prob_complement: float,
                        mi_conditional_bound: float) -> BoundReport:
    """MI split over a set E and its complement; the conditional term is already weighted by P(E)."""
    _positive(t=t, gamma=gamma)
    _nonneg(alpha=alpha, mi_conditional_bound=mi_conditional_bound)
    if not 0 <= prob_complement <= 1:
        raise ValueError("prob_complement must lie in [0, 1]")
    first = 0.5 * k * math.log1p(gamma / t) * (prob_complement + alpha / gamma)
    value, lv = _from_logs([_log(first), _log(mi_conditional_bound)])
    return BoundReport("mi_truncation", {"k": k, "t": t, "gamma": gamma, "alpha": alpha,
                                         "prob_complement": prob_complement, "conditional": mi_conditional_bound},
                       value, lv, {"t_positive": True})


def int_moment_bound(mu_km1: float, mu_kp1: float, k: int) -> BoundReport:
    """Bound on int sqrt(f) over R^k from the (k-1)th and (k+1)th radial moments of f."""
    _nonneg(mu_km1=mu_km1, mu_kp1=mu_kp1)
    lc = 0.5 * (math.log(2) + (0.5 * k + 1) * math.log(math.pi) - special.gammaln(0.5 * k))
    value, lv = _from_logs([lc + 0.25 * (_log(mu_km1) + _log(mu_kp1))])
    return BoundReport("int_moment", {"mu_km1": mu_km1, "mu_kp1": mu_kp1, "k": k}, value, lv, {"f_nonnegative": True})


def awgn_capacity(snr: float) -> float:
    """Capacity 0.5 log(1 + snr) in nats."""
    _nonneg(snr=snr)
    return 0.5 * math.log1p(snr)


@dataclass(frozen=True)
class CapacityGap:
    mutual_information: float
    capacity_total: float
    negative: bool


def cs_gap(expected_kl: float, k: int, gamma: float, t: float) -> CapacityGap:
    """I(X; Y | Theta) implied by k C(gamma/t) - E[D(P_{Y|Theta} || G_Y)].

    ``negative`` flags a result below zero, i.e. Monte Carlo error larger than
    the true gap.
    """
    _positive(gamma=gamma, t=t)
    cap = k * awgn_capacity(gamma / t)
    mi = cap - expected_kl
    return CapacityGap(mi, cap, mi < 0)


@dataclass(frozen=True)
class LogDeviationCheck:
    lhs: float
    rhs: float
    se: float
    holds: bool


def check_log_dev(samples, mu: float, set_indicator=None, n_se: float = 3.0) -> LogDeviationCheck:
    """E[log((1+mu)/(1+X)) 1_E(X)] <= (log(1+mu)/mu) E|mu - X| for X >= 0 with mean mu.

    ``set_indicator`` is a boolean array or a predicate on the samples; None
    means E is everything.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if np.any(x < 0):
        raise ValueError("samples must be non-negative")
    _positive(mu=mu)
    if set_indicator is None:
        ind = np.ones_like(x, dtype=bool)
    elif callable(set_indicator):
        ind = np.asarray(set_indicator(x), dtype=bool)
    else:
        ind = np.asarray(set_indicator, dtype=bool)
    lhs_terms = np.where(ind, np.log1p(mu) - np.log1p(x), 0.0)
    rhs_terms = math.log1p(mu) / mu * np.abs(mu - x)
    diff_mean, diff_se = batch_mean_se(rhs_terms - lhs_terms) if x.size > 1 else (float(np.mean(rhs_terms - lhs_terms)), 0.0)
    lhs, rhs = float(lhs_terms.mean()), float(rhs_terms.mean())
    se = 0.0 if not math.isfinite(diff_se) else diff_se
    return LogDeviationCheck(lhs, rhs, se, diff_mean >= -n_se * se - 1e-15)
