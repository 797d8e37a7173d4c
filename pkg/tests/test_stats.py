import math

import numpy as np
import pytest
from scipy import stats as sps
from scipy.stats import ortho_group

from projclt._mc import batch_mean_se, combined_se, jackknife_se
from projclt.sources import make_iid, make_orthogonal_support, make_point, make_sphere
from projclt.stats import (beta2_exact, estimate_alpha, estimate_beta, estimate_mean_sq_norm, estimate_stats,
                           truncation_probability)


def within(est, se, truth, n_se=3.0, floor=0.0):
    return abs(est - truth) <= n_se * se + floor


def test_batch_mean_se_matches_iid_se():
    v = np.random.default_rng(1).standard_normal(30_000)
    m, se = batch_mean_se(v)
    assert m == pytest.approx(v.mean())
    assert se == pytest.approx(1 / math.sqrt(v.size), rel=0.35)
    assert combined_se(3.0, 4.0) == pytest.approx(5.0)


def test_jackknife_se_of_mean_equals_classical():
    g = np.random.default_rng(2).standard_normal(50)
    assert jackknife_se(g, np.mean) == pytest.approx(g.std(ddof=1) / math.sqrt(g.size))


def test_alpha_trivial_sources():
    assert estimate_alpha(make_sphere(30), 1000, 1)[0] == pytest.approx(0.0, abs=1e-12)
    assert estimate_alpha(make_point(np.arange(5.0)), 100, 1)[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        estimate_alpha(make_sphere(30), 1, 1)


def test_alpha_gaussian_against_chi_square_oracle():
    # oracle: folded mean of chi2_100/100 - 1 from a large independent chi-square draw
    oracle = np.mean(np.abs(np.random.default_rng(99).chisquare(100, 4_000_000) / 100 - 1))
    assert oracle == pytest.approx(0.1125, abs=5e-4)
    src = make_iid(100, "normal")
    est, se = estimate_alpha(src, 40_000, 3)
    assert within(est, se, oracle, floor=3e-4)
    # the closed form carried by the source agrees with the same oracle
    assert src.closed_form["alpha"] == pytest.approx(oracle, abs=5e-4)


def test_beta_point_source():
    src = make_point(np.full(9, 2.0))
    for r in (1, 2):
        v, se = estimate_beta(src, r, 100, 0)
        assert v == pytest.approx(4.0) and se == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        estimate_beta(src, 3, 100, 0)


@pytest.mark.parametrize("ustat", [False, True])
def test_beta2_gaussian(ustat):
    n = 64
    v, se = estimate_beta(make_iid(n, "normal"), 2, 20_000, 4, ustat=ustat)
    assert within(v, se, 1 / math.sqrt(n))


def test_beta2_orthogonal_support():
    v, se = estimate_beta(make_orthogonal_support(40, 10), 2, 20_000, 5)
    assert within(v, se, math.sqrt(0.1))


def test_beta1_closed_forms_against_mc():
    for src in (make_iid(40, "normal"), make_iid(40, "rademacher"), make_sphere(40)):
        v, se = estimate_beta(src, 1, 20_000, 6)
        assert within(v, se, src.closed_form["beta1"]), src.label


def test_beta2_exact():
    assert beta2_exact(3.0 * np.eye(16), 16) == pytest.approx(3.0 / 4)
    e = np.zeros((16, 16))
    e[0, 0] = 16 * 2.0
    assert beta2_exact(e, 16) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        beta2_exact(np.array([[1.0, 2.0], [0.0, 1.0]]), 2)


def test_beta2_exact_agrees_with_mc_for_iid():
    n = 30
    src = make_iid(n, {"name": "uniform", "half_width": 2.0})
    second = src.gamma * np.eye(n)
    v, se = estimate_beta(src, 2, 20_000, 7)
    assert within(v, se, beta2_exact(second, n))


def test_mean_sq_norm_zero_for_centred():
    v, se = estimate_mean_sq_norm(make_iid(20, "normal"), 20_000, 8)
    assert within(v, se, 0.0)


def test_truncation_sphere_and_markov():
    assert truncation_probability(make_sphere(20), 0.3, 2000, 1).prob_complement == 0.0
    src = make_iid(20, "rademacher")
    assert truncation_probability(src, 0.5, 2000, 1).prob_complement == 0.0
    g = make_iid(10, "normal")
    ts = truncation_probability(g, 0.5, 50_000, 2)
    markov = (2 / 0.5) * g.closed_form["alpha"] / g.gamma
    assert ts.prob_complement <= markov + 3 * ts.se
    with pytest.raises(ValueError):
        truncation_probability(g, 0.0, 10, 1)


def test_truncation_gaussian_against_chi_square_tail():
    # two-sided tail of chi2_100/100 outside [0.5, 1.5]
    tail = sps.chi2.cdf(50, 100) + sps.chi2.sf(150, 100)
    assert tail == pytest.approx(9.1e-4, rel=0.05)
    ts = truncation_probability(make_iid(100, "normal"), 1.0, 200_000, 3)
    assert abs(ts.prob_complement - tail) <= 3 * math.sqrt(tail * (1 - tail) / 200_000)


@pytest.mark.parametrize("src", [make_iid(32, "normal"), make_iid(32, "rademacher"), make_sphere(32),
                                 make_orthogonal_support(32, 8)], ids=lambda s: s.label)
def test_functional_ranges(src):
    st = estimate_stats(src, 20_000, 20_000, 11, use_closed_form=False)
    tol = 3 * (st.beta1_se + st.beta2_se)
    assert -3 * st.alpha_se <= st.alpha / st.gamma <= 2 + 3 * st.alpha_se
    assert 1 / math.sqrt(src.n) - 3 * st.beta2_se <= st.beta2 / st.gamma <= 1 + 3 * st.beta2_se
    assert st.beta1 <= st.beta2 + tol


def test_rotation_invariance():
    n = 16
    q = ortho_group.rvs(n, random_state=3)
    base = make_iid(n, {"name": "sparse", "p": 0.2, "value": math.sqrt(5)})
    a = estimate_stats(base, 20_000, 20_000, 12, use_closed_form=False)
    b = estimate_stats(base.rotated(q), 20_000, 20_000, 13, use_closed_form=False)
    assert abs(a.alpha - b.alpha) <= 3 * math.hypot(a.alpha_se, b.alpha_se)
    assert abs(a.beta1 - b.beta1) <= 3 * math.hypot(a.beta1_se, b.beta1_se)
    assert abs(a.beta2 - b.beta2) <= 3 * math.hypot(a.beta2_se, b.beta2_se)


def test_scaling_by_c():
    c = 3.0
    src = make_iid(16, "normal")
    a = estimate_stats(src, 10_000, 10_000, 14, use_closed_form=False)
    b = estimate_stats(src.scaled(c), 10_000, 10_000, 14, use_closed_form=False)
    # same stream, so the draws are c times the base draws
    assert b.gamma == pytest.approx(c**2 * a.gamma)
    for f in ("beta1", "beta2"):
        assert getattr(b, f) == pytest.approx(c**2 * getattr(a, f), rel=1e-9)
        assert getattr(b, f) / b.gamma == pytest.approx(getattr(a, f) / a.gamma, rel=1e-9)


def test_sphere_beta2_is_gamma_over_root_n():
    n = 50
    src = make_sphere(n, 2.0)
    v, se = estimate_beta(src, 2, 40_000, 15)
    assert within(v, se, 2.0 / math.sqrt(n))


def test_estimate_stats_flags():
    st = estimate_stats(make_sphere(10), 100, 100, 0)
    assert st.exact["alpha"] and st.exact["beta2"]
    st = estimate_stats(make_sphere(10), 100, 100, 0, use_closed_form=False)
    assert not st.exact["beta1"]
    assert set(st.as_dict()) >= {"gamma", "alpha", "beta1", "beta2", "n_samples", "n_pairs", "exact"}
