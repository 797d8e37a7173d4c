import math

import numpy as np
import pytest
from scipy import stats

from projclt.rng import Stream, as_stream
from projclt.sources import (NoiseChannel, SamplingError, make_empirical, make_iid, make_marginal,
                             make_orthogonal_support, make_point, make_sphere, project_and_noise, sample_theta,
                             sample_x, source_from_spec)


def test_stream_paths_are_deterministic_and_distinct():
    a = Stream((7, 1)).generator().standard_normal(5)
    b = Stream((7, 1)).generator().standard_normal(5)
    c = Stream((7, 2)).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert str(Stream((7, 1)).child(3)) == "7/1/3"
    with pytest.raises(TypeError):
        as_stream(np.random.default_rng(0))
    with pytest.raises(ValueError):
        Stream(())


@pytest.mark.parametrize("spec", ["normal", "rademacher", {"name": "sparse", "p": 0.1, "value": math.sqrt(10)}])
def test_iid_gamma_is_marginal_second_moment(spec):
    src = make_iid(64 if isinstance(spec, dict) else 100, spec)
    assert src.gamma == pytest.approx(1.0)


def test_iid_rejects_infinite_second_moment():
    with pytest.raises(ValueError):
        make_iid(10, {"name": "student_t", "df": 2})
    with pytest.raises(ValueError):
        make_marginal("cauchy-ish")


def test_sphere_radius_and_mean():
    src = make_sphere(10, 2.0)
    x = sample_x(src, 1, 1000)
    np.testing.assert_allclose(np.sum(x**2, axis=1), 20.0, rtol=1e-12)
    big = sample_x(make_sphere(10, 1.0), 2, 100_000)
    # each coordinate has variance gamma = 1, so the mean has SE 1/sqrt(m)
    assert np.all(np.abs(big.mean(axis=0)) < 4 / math.sqrt(big.shape[0]))


def test_sphere_cosine_law():
    # U = <X1, X2>/(n gamma): U^2 follows Beta(1/2, (n-1)/2) on the real sphere
    n = 20
    src = make_sphere(n, 1.0)
    x = sample_x(src, 3, 20_000)
    u = np.einsum("ij,ij->i", x[:10_000], x[10_000:]) / n
    assert stats.kstest(u**2, stats.beta(0.5, (n - 1) / 2).cdf).pvalue > 1e-3
    # the same draws are clearly not Beta(1, n-1)
    assert stats.kstest(u**2, stats.beta(1, n - 1).cdf).pvalue < 1e-6
    assert np.mean(u**2) == pytest.approx(1 / n, rel=0.05)


@pytest.mark.parametrize("weights, lam", [(None, 0.1), ([1.0] + [0.0] * 9, 1.0), ([0.5, 0.5], 0.5)])
def test_orthogonal_support_lambda(weights, lam):
    d = 10 if weights is None or len(weights) == 10 else 2
    src = make_orthogonal_support(16, d, weights)
    assert src.closed_form["lam"] == pytest.approx(lam)
    x = sample_x(src, 4, 200)
    np.testing.assert_allclose(np.sum(x**2, axis=1), 16.0)
    gram = x @ x.T
    assert np.all((np.abs(gram) < 1e-12) | np.isclose(gram, 16.0))


def test_orthogonal_support_rejects_bad_input():
    with pytest.raises(ValueError):
        make_orthogonal_support(4, 5)
    with pytest.raises(ValueError):
        make_orthogonal_support(4, 2, [0.7, 0.7])


def test_sampling_determinism_and_gamma():
    for src in (make_iid(50, "normal"), make_iid(50, "rademacher"), make_sphere(50), make_orthogonal_support(50, 10),
                make_point(np.ones(50))):
        a, b = sample_x(src, (5, 1), 10_000), sample_x(src, (5, 1), 10_000)
        assert np.array_equal(a, b)
        s = np.sum(a**2, axis=1) / src.n
        se = s.std(ddof=1) / math.sqrt(s.size)
        assert abs(s.mean() - src.gamma) <= 4 * se + 1e-12


def test_empirical_without_replacement():
    rows = np.random.default_rng(0).standard_normal((30, 5))
    src = make_empirical(rows)
    assert sample_x(src, 1, 30).shape == (30, 5)
    with pytest.raises(SamplingError):
        sample_x(src, 1, 31)
    assert sample_x(make_empirical(rows, replace=True), 1, 100).shape == (100, 5)


def test_theta_entries_variance():
    th = sample_theta(10, 100_000, 9)
    v = th.entries.ravel()
    m = v.size
    # var of sample variance for normal entries: 2 sigma^4 / m
    assert abs(v.var() - 1 / 100_000) < 4 * math.sqrt(2 / m) / 100_000
    assert np.array_equal(th.entries, sample_theta(10, 100_000, 9).entries)


def test_projection_of_fixed_vector_has_unit_variance():
    n = 200
    x = np.ones(n)  # ||x||^2 = n
    vals = np.array([sample_theta(1, n, (11, r)).project(x)[0] for r in range(4000)])
    assert abs(vals.var() - 1.0) < 4 * math.sqrt(2 / vals.size)


def test_project_and_noise():
    th = sample_theta(3, 8, 1)
    x = np.zeros(8)
    z, y = project_and_noise(th, x, NoiseChannel(2.0, 3), 2)
    assert np.all(z == 0)
    with pytest.raises(ValueError):
        project_and_noise(th, np.zeros(7), NoiseChannel(1.0, 3), 2)
    with pytest.raises(ValueError):
        NoiseChannel(0.0, 3)
    z, y = project_and_noise(th, np.ones((4, 8)), NoiseChannel(1e-300, 3), 3)
    np.testing.assert_allclose(y, z, atol=1e-140)


def test_output_covariance_is_gamma_plus_t():
    src = make_sphere(16, 1.5)
    t = 0.5
    ys = []
    for r in range(3000):
        th = sample_theta(2, 16, (12, r, 0))
        _, y = project_and_noise(th, sample_x(src, (12, r, 1), 1), NoiseChannel(t, 2), (12, r, 2))
        ys.append(y[0])
    cov = np.cov(np.array(ys).T)
    # entries of a sample covariance of Gaussians-ish data have SE about var*sqrt(2/m)
    np.testing.assert_allclose(cov, 2.0 * np.eye(2), atol=4 * 2.0 * math.sqrt(2 / 3000))


def test_source_from_spec():
    src = source_from_spec({"kind": "iid-marginal", "marginal": "rademacher", "name": "rad"}, 12)
    assert src.label == "rad" and src.n == 12
    with pytest.raises(ValueError):
        source_from_spec({"kind": "nope"}, 4)
