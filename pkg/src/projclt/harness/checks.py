"""Registered inequality and identity checks.

A check turns one work unit (a source at one grid point, a source across the n
grid, or nothing at all for global checks) into verification rows comparing a
Monte Carlo left-hand side against a bound or an identity partner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import bounds as B
from .. import moments as M
from .._mc import batch_mean_se, combined_se
from ..estimators import density as D
from ..estimators import transport as T
from ..estimators._common import replicate_se
from ..rng import Stream
from ..sources import VectorSource, sample_theta, sample_x, source_from_spec
from ..stats import DistributionStats, estimate_stats, truncation_probability

MARGINAL_BAND = 3.0


@dataclass(frozen=True)
class VerificationRow:
    check: str
    variant: str
    source: str
    params: dict
    relation: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_log: float
    se: float
    margin: float
    verdict: str
    seed_path: tuple

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["params"] = dict(self.params)
        d["seed_path"] = "/".join(str(s) for s in self.seed_path)
        return d


def verdict_for(relation: str, lhs: float, rhs: float, se: float) -> tuple[float, str]:
    """Margin in SE units and the verdict it implies.

    For inequalities margin = (rhs - lhs) / se: holds when >= 0, holds-marginal
    down to -3, violated below.  For identities margin = -|lhs - rhs| / se and
    anything within 3 SE holds.
    """
    if relation in ("<=", "<"):
        diff = rhs - lhs
    elif relation == "==":
        diff = -abs(lhs - rhs)
    else:
        raise ValueError(f"unknown relation {relation!r}")
    if math.isnan(diff):
        return math.nan, "violated"
    if se > 0 and math.isfinite(se):
        margin = diff / se
    elif se == 0:
        margin = math.inf if diff >= 0 else -math.inf
    else:
        return math.nan, "violated"
    if relation == "==":
        return margin, "holds" if margin >= -MARGINAL_BAND else "violated"
    if margin >= 0:
        return margin, "holds"
    return margin, "holds-marginal" if margin >= -MARGINAL_BAND else "violated"


@dataclass
class UnitContext:
    check: str
    source_name: str
    source_spec: Optional[dict]
    point: dict
    budgets: dict
    constants: dict
    stream: Stream
    _src: Optional[VectorSource] = field(default=None, repr=False)
    _stats: Optional[DistributionStats] = field(default=None, repr=False)

    @property
    def src(self) -> VectorSource:
        if self._src is None:
            self._src = source_from_spec(self.source_spec, self.point["n"])
        return self._src

    @property
    def stats(self) -> DistributionStats:
        if self._stats is None:
            b = self.budgets
            self._stats = estimate_stats(self.src, b["n_samples"], b["n_pairs"], self.stream.child(90))
        return self._stats

    def row(self, relation, lhs, rhs, se, *, rhs_log=None, variant="", lhs_se=None, extra=None) -> VerificationRow:
        lhs, rhs, se = float(lhs), float(rhs), float(se)
        if rhs_log is None:
            rhs_log = math.log(rhs) if rhs > 0 else (-math.inf if rhs == 0 else math.nan)
        margin, verdict = verdict_for(relation, lhs, rhs, se)
        params = {**self.point, **(extra or {})}
        return VerificationRow(self.check, variant, self.source_name, params, relation, lhs,
                               float(se if lhs_se is None else lhs_se), rhs, float(rhs_log), se, margin, verdict,
                               self.stream.seed_path)


@dataclass(frozen=True)
class Check:
    name: str
    scope: str  # "point", "series" or "global"
    run: Callable[[UnitContext], list]
    cost: Callable[[UnitContext], float]
    requires: tuple = ()

    def applicable(self, ctx: UnitContext) -> tuple[bool, str]:
        for req in self.requires:
            if req == "k1" and ctx.point.get("k") != 1:
                return False, "needs k = 1"
            if req == "constant_norm" and not ctx.src.constant_norm:
                return False, "needs ||X||^2/n constant"
            if req == "bounded_norm":
                rng = ctx.src.norm_sq_range
                if rng is None or rng[0] <= 0:
                    return False, "needs ||X||^2/n bounded away from 0 and infinity"
        return True, ""


# ---------------------------------------------------------------- cost model

def _kl_cost(ctx, passes=1):
    b, p = ctx.budgets, ctx.point
    return passes * b["reps"] * (b["n_outer"] * b["m_inner"] * p["k"] * 1.5e-8
                                 + (b["n_outer"] + b["m_inner"]) * p["n"] * 2e-8)


def _w2_cost(ctx):
    b, p = ctx.budgets, ctx.point
    per = b["m_samples"] * p["n"] * p["k"] * 2.5e-8
    if p["k"] > 1:
        per += (min(b["m_samples"], T.EXACT_MAX_M) ** 3) * 2e-9
    return b["reps"] * per


def _var_cost(ctx):
    b = ctx.budgets
    return b["var_reps"] * (801 * b["m_inner"] * 1e-8 + b["m_inner"] * ctx.point["n"] * 2e-8)


def _m_cost(ctx):
    return ctx.budgets["n_pairs"] * ctx.point["n"] * 4e-8


# ---------------------------------------------------------------- helpers

def _big_m(ctx) -> tuple[float, float, str]:
    src, p = ctx.src, ctx.point
    k, t = p["k"], p["t"]
    if src.kind == "orthogonal-support":
        lam = src.closed_form["lam"]
        return M.big_m(M.m_p_orthogonal(lam, src.gamma, t, k, k - 1), M.m_p_orthogonal(lam, src.gamma, t, k, k + 1)), 0.0, "closed-form"
    if src.kind == "sphere-uniform":
        return M.big_m(M.m_p_sphere(src.n, src.gamma, t, k, k - 1), M.m_p_sphere(src.n, src.gamma, t, k, k + 1)), 0.0, "quadrature"
    norms = M.sample_pair_norms(src, ctx.budgets["n_pairs"], ctx.stream.child(80))
    lo = M.m_p_from_norms(norms, k, k - 1, t)
    hi = M.m_p_from_norms(norms, k, k + 1, t)
    m, se = M.big_m_se(lo, hi)
    return m, se, "mc"


def _w2_from_bias_probe(ctx, stream):
    b, p = ctx.budgets, ctx.point
    est = T.expected_w2(ctx.src, p["k"], b["reps"], b["m_samples"], stream)
    return est.extras["corrected"], est.extras["corrected_se"], est


def _expected_kl(ctx, child, thetas=None):
    b, p = ctx.budgets, ctx.point
    return D.expected_kl(ctx.src, p["t"], p["k"], b["reps"], b["n_outer"], b["m_inner"], ctx.stream.child(child),
                         thetas=thetas)


def _mi_direct(ctx, child, thetas=None):
    b, p = ctx.budgets, ctx.point
    return D.mi_y_theta(ctx.src, p["t"], p["k"], b["reps"], b["n_outer"], b["m_inner"], ctx.stream.child(child),
                        thetas=thetas)


def _shared_thetas(ctx):
    return D.draw_thetas(ctx.src, ctx.point["k"], ctx.budgets["reps"], ctx.stream.child(0))


def _marginal_kl(ctx, child):
    b, p = ctx.budgets, ctx.point
    return D.marginal_kl(ctx.src, p["t"], p["k"], b["reps"], b["n_outer"], b["m_inner"], ctx.stream.child(child))


def _var_integral(ctx, child):
    b, p = ctx.budgets, ctx.point
    return D.var_density_integral(ctx.src, p["t"], b["var_reps"], b["m_inner"], ctx.stream.child(child))


# ---------------------------------------------------------------- checks

def _thm1(ctx):
    st, p = ctx.stats, ctx.point
    lhs, se, _ = _w2_from_bias_probe(ctx, ctx.stream.child(1))
    rep = B.thm1_w2_bound(st.alpha, st.beta1, st.beta2, st.gamma, p["k"], ctx.constants["thm1"])
    return [ctx.row("<=", lhs, rep.value, se, rhs_log=rep.log_value)]


def _thm5(ctx):
    st, p = ctx.stats, ctx.point
    lhs, se, _ = _w2_from_bias_probe(ctx, ctx.stream.child(1))
    rep, t_star = B.thm5_w2_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, p["k"], ctx.constants["thm5"])
    return [ctx.row("<=", lhs, rep.value, se, rhs_log=rep.log_value, extra={"t_star": t_star})]


def _thm2(ctx):
    st, p = ctx.stats, ctx.point
    est = _expected_kl(ctx, 1)
    c = ctx.constants["thm2"]
    fixed = B.thm2_kl_bound(st.alpha, st.beta1, st.beta2, st.gamma, p["t"], p["epsilon"], p["k"], c)
    eps_star, best = B.thm2_optimize_epsilon(st.alpha, st.beta1, st.beta2, st.gamma, p["t"], p["k"], c)
    return [ctx.row("<=", est.value, fixed.value, est.se, rhs_log=fixed.log_value, variant="epsilon_grid"),
            ctx.row("<=", est.value, best.value, est.se, rhs_log=best.log_value, variant="epsilon_opt",
                    extra={"epsilon_star": eps_star})]


def _thm3(ctx):
    st, p = ctx.stats, ctx.point
    est = _expected_kl(ctx, 1)
    rep = B.thm3_kl_k1_bound(st.alpha, st.beta1, p["t"])
    return [ctx.row("<=", est.value, rep.value, est.se, rhs_log=rep.log_value)]


def _thm4(ctx):
    st, p = ctx.stats, ctx.point
    est = _expected_kl(ctx, 1)
    rep = B.thm4_kl_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, p["t"], p["k"])
    return [ctx.row("<=", est.value, rep.value, est.se, rhs_log=rep.log_value)]


def _w2_to_kl(ctx):
    """Per-Theta transfer: empirical W_2^2 against 4tk + 4(t+gamma) D for the same theta."""
    b, p, src = ctx.budgets, ctx.point, ctx.src
    k, t = p["k"], p["t"]
    ref_z = D.GaussianReference(k, src.gamma)
    diffs, lhs_vals, rhs_vals = [], [], []
    for r in range(b["reps"]):
        s = ctx.stream.child(1, r)
        th = sample_theta(k, src.n, s.child(0).generator())
        z = sample_x(src, s.child(1).generator(), b["m_samples"]) @ th.entries.T
        g = ref_z.sample(s.child(2).generator(), b["m_samples"])
        h = b["m_samples"] // 2
        w = 2 * T.w2_empirical(z, g) - T.w2_empirical(z[:h], g[:h])
        kl = D.kl_conditional(th, src, t, b["n_outer"], b["m_inner"], s.child(3)).value
        rhs = B.w2_from_kl(max(kl, 0.0), t, src.gamma, k).value
        lhs_vals.append(w)
        rhs_vals.append(rhs)
        diffs.append(rhs - w)
    return [ctx.row("<=", np.mean(lhs_vals), np.mean(rhs_vals), replicate_se(diffs),
                    lhs_se=replicate_se(lhs_vals))]


def _dpy_to_alpha(ctx):
    st, p = ctx.stats, ctx.point
    est = _marginal_kl(ctx, 1)
    rep = B.kl_marginal_bound(st.alpha, st.gamma, p["t"], p["k"])
    return [ctx.row("<=", est.value, rep.value, est.se, rhs_log=rep.log_value)]


def _edkl_alt(ctx):
    """E D = D(P_Y||G_Y) + I(Y;Theta), with the two Theta-dependent terms paired on shared projections."""
    thetas = _shared_thetas(ctx)
    ekl, mkl, mi = _expected_kl(ctx, 1, thetas), _marginal_kl(ctx, 2), _mi_direct(ctx, 3, thetas)
    paired = np.array(ekl.extras["per_rep"]) - np.array(mi.extras["per_rep"])
    return [ctx.row("==", ekl.value, mkl.value + mi.value, combined_se(replicate_se(paired), mkl.se), lhs_se=ekl.se)]


def _cs_gap(ctx):
    """E D + I(X;Y|Theta) = k C(gamma/t), both estimators run on shared projections."""
    b, p = ctx.budgets, ctx.point
    thetas = _shared_thetas(ctx)
    ekl = _expected_kl(ctx, 1, thetas)
    mxy = D.mi_x_y(ctx.src, p["t"], p["k"], b["reps"], b["n_outer"], b["m_inner"], ctx.stream.child(2), thetas=thetas)
    cap = p["k"] * B.awgn_capacity(ctx.src.gamma / p["t"])
    paired = np.array(ekl.extras["per_rep"]) + np.array(mxy.extras["per_rep"])
    return [ctx.row("==", ekl.value + mxy.value, cap, replicate_se(paired))]


def _dkl_decomp(ctx):
    st, p, b = ctx.stats, ctx.point, ctx.budgets
    mi = _mi_direct(ctx, 1)
    trunc = truncation_probability(ctx.src, p["epsilon"], b["n_samples"], ctx.stream.child(2))
    cond = B.thm2_conditional_mi_bound(st.beta1, st.beta2, st.gamma, p["t"], p["epsilon"], p["k"])
    rep = B.mi_truncation_bound(p["k"], p["t"], st.gamma, st.alpha, trunc.prob_complement, cond.value)
    rhs_se = 0.5 * p["k"] * math.log1p(st.gamma / p["t"]) * trunc.se
    return [ctx.row("<=", mi.value, rep.value, combined_se(mi.se, rhs_se), rhs_log=rep.log_value, lhs_se=mi.se,
                    extra={"prob_complement": trunc.prob_complement})]


def _lemma2(ctx):
    mi, vi = _mi_direct(ctx, 1), _var_integral(ctx, 2)
    kap = B.kappa()
    return [ctx.row("<=", mi.value, kap * vi.value, combined_se(mi.se, kap * vi.se), lhs_se=mi.se)]


def _lemma3(ctx):
    vi = _var_integral(ctx, 2)
    m, m_se, how = _big_m(ctx)
    kap = B.kappa()
    rep = B.mi_bound_from_m(m, 1)
    rhs_se = rep.value * 0.5 * m_se / m if m > 0 else 0.0
    return [ctx.row("<=", kap * vi.value, rep.value, combined_se(kap * vi.se, rhs_se), rhs_log=rep.log_value,
                    lhs_se=kap * vi.se, extra={"M": m, "M_method": how})]


def _lemma4(ctx):
    mi = _mi_direct(ctx, 1)
    m, m_se, how = _big_m(ctx)
    rep = B.mi_bound_from_m(m, ctx.point["k"])
    rhs_se = rep.value * 0.5 * m_se / m if m > 0 else 0.0
    return [ctx.row("<=", mi.value, rep.value, combined_se(mi.se, rhs_se), rhs_log=rep.log_value, lhs_se=mi.se,
                    extra={"M": m, "M_method": how})]


def _lemma6(ctx):
    m, m_se, how = _big_m(ctx)
    st = ctx.stats
    rhs = M.m_bound_k1(st.beta1, ctx.point["t"])
    return [ctx.row("<=", m, rhs, combined_se(m_se, st.beta1_se / ctx.point["t"]), lhs_se=m_se,
                    extra={"M_method": how})]


def _lemma7(ctx):
    m, m_se, how = _big_m(ctx)
    st, p = ctx.stats, ctx.point
    lo, hi = ctx.src.norm_sq_range
    rep = M.m_bound_bounded(lo, hi, st.beta1, st.beta2, p["t"], p["k"],
                            st.mean_sq_norm_over_n if ctx.src.constant_norm else None)
    return [ctx.row("<=", m, rep.value, m_se, rhs_log=rep.log_value, extra={"M_method": how})]


def _moments_closed_form(ctx):
    src, p, b = ctx.src, ctx.point, ctx.budgets
    k, t = p["k"], p["t"]
    norms = M.sample_pair_norms(src, b["n_pairs"], ctx.stream.child(1))
    rows = []
    for q in (k - 1, k + 1):
        if src.kind == "orthogonal-support":
            exact = M.m_p_orthogonal(src.closed_form["lam"], src.gamma, t, k, q)
        elif src.kind == "sphere-uniform":
            exact = M.m_p_sphere(src.n, src.gamma, t, k, q)
        else:
            return []
        est = M.m_p_from_norms(norms, k, q, t)
        rows.append(ctx.row("==", est.value, exact, est.se, variant=f"p={q}"))
    return rows


def _cor1_trend(ctx):
    """Across the n grid: decreasing E[W_2^2]/gamma and dominance by the rate bound."""
    src_spec, b = ctx.source_spec, ctx.budgets
    k = ctx.point["k"]
    ns = sorted(ctx.point["n_series"])
    vals = []
    for i, n in enumerate(ns):
        src = source_from_spec(src_spec, n)
        est = T.expected_w2(src, k, b["reps"], b["m_samples"], ctx.stream.child(1, i))
        vals.append((n, est.extras["corrected"] / src.gamma, est.extras["corrected_se"] / src.gamma))
    rows = []
    for (n0, v0, s0), (n1, v1, s1) in zip(vals, vals[1:]):
        rows.append(ctx.row("<", v1, v0, combined_se(s0, s1), variant=f"n={n0}->{n1}",
                            extra={"n_from": n0, "n_to": n1}))
    for n, v, s in vals:
        rep = B.cor1_w2_bound(n, k, ctx.constants["cor1"])
        rows.append(ctx.row("<=", v, rep.value, s, rhs_log=rep.log_value, variant=f"bound n={n}", extra={"n": n}))
    return rows


def gkp_grid(points: int):
    """(r, t, gamma, k, p) grid with about ``points`` entries."""
    ks = [1, 2, 3, 4, 5]
    gammas = [0.1, 0.5, 1.0, 2.0, 10.0]
    per = max(1, points // (len(ks) * len(gammas) * 2))
    n_t = max(2, int(round(math.sqrt(per / 2))))
    n_r = max(2, per // n_t)
    ts = np.geomspace(1e-2, 1e2, n_t)
    fr = np.linspace(-1.0, 1.0, n_r)
    for k in ks:
        for p in (k - 1, k + 1):
            for g in gammas:
                for t in ts:
                    yield fr * g, float(t), g, k, p


def gkp_violations(points: int, rtol: float = 1e-9) -> tuple[int, int, float]:
    """(violations, points checked, worst relative excess) of the g_kp majorant."""
    bad, total, worst = 0, 0, -math.inf
    for r, t, g, k, p in gkp_grid(points):
        u = r / (t + g)
        lhs = M.g_kp(u, k, p)
        rhs = M.g_kp_upper(r, t, g, k, p)
        excess = (lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
        bad += int(np.sum(lhs > rhs + rtol * np.abs(rhs) + 1e-300))
        total += r.size
        worst = max(worst, float(excess.max()))
    return bad, total, worst


def _gkp(ctx):
    bad, total, worst = gkp_violations(ctx.budgets["gkp_points"])
    return [ctx.row("<=", bad, 0, 0.0, rhs_log=-math.inf, extra={"points": total, "worst_relative_excess": worst})]


LOG_DEV_LAWS = {
    "exponential": (lambda g, m: g.exponential(1.0, m), 1.0),
    "lognormal": (lambda g, m: g.lognormal(0.0, 1.0, m), math.exp(0.5)),
    "uniform02": (lambda g, m: g.uniform(0.0, 2.0, m), 1.0),
}


def _log_dev(ctx):
    rows = []
    for i, (name, (draw, mu)) in enumerate(LOG_DEV_LAWS.items()):
        x = draw(ctx.stream.child(1, i).generator(), ctx.budgets["logdev_samples"])
        res = B.check_log_dev(x, mu)
        rows.append(ctx.row("<=", res.lhs, res.rhs, res.se, variant=name))
    return rows


REGISTRY: dict[str, Check] = {c.name: c for c in [
    Check("thm1_w2", "point", _thm1, _w2_cost),
    Check("thm5_w2", "point", _thm5, _w2_cost, ("constant_norm",)),
    Check("thm2_kl", "point", _thm2, _kl_cost),
    Check("thm3_kl", "point", _thm3, _kl_cost, ("k1",)),
    Check("thm4_kl", "point", _thm4, _kl_cost, ("constant_norm",)),
    Check("w2_to_kl", "point", _w2_to_kl, lambda c: _kl_cost(c) + _w2_cost(c)),
    Check("dpy_to_alpha", "point", _dpy_to_alpha, _kl_cost),
    Check("edkl_alt", "point", _edkl_alt, lambda c: _kl_cost(c, 3)),
    Check("cs_gap", "point", _cs_gap, lambda c: _kl_cost(c, 2)),
    Check("dkl_decomp", "point", _dkl_decomp, _kl_cost),
    Check("lemma2", "point", _lemma2, lambda c: _kl_cost(c) + _var_cost(c), ("k1",)),
    Check("lemma3", "point", _lemma3, lambda c: _var_cost(c) + _m_cost(c), ("k1",)),
    Check("lemma4", "point", _lemma4, lambda c: _kl_cost(c) + _m_cost(c)),
    Check("lemma6", "point", _lemma6, _m_cost, ("k1",)),
    Check("lemma7", "point", _lemma7, _m_cost, ("bounded_norm",)),
    Check("moments_closed_form", "point", _moments_closed_form, _m_cost),
    Check("cor1_trend", "series", _cor1_trend,
          lambda c: sum(c.budgets["reps"] * c.budgets["m_samples"] * n * c.point["k"] * 2.5e-8
                        for n in c.point["n_series"])),
    Check("gkp_inequality", "global", _gkp, lambda c: 1.0),
    Check("log_dev", "global", _log_dev, lambda c: 0.5),
]}
