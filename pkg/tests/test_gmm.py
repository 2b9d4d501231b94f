import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from digmm.errors import (
    DegenerateData,
    DimensionMismatch,
    InvariantViolation,
    NonFiniteValue,
    TooFewSamples,
)
from digmm.gaussian import GaussianComponent, log_pdf
from digmm.gmm import (
    EmConfig,
    GmmParams,
    bic,
    fit_em,
    log_likelihood,
    mixture_log_pdf,
    n_free_parameters,
    responsibilities,
)

from oracles import gaussian_pdf_2x2

LOG_2PI = math.log(2 * math.pi)


def two_component(weights=(0.3, 0.7)):
    return GmmParams.from_arrays(
        weights,
        [[0.0, 0.0], [2.0, -1.0]],
        [np.eye(2), [[1.5, 0.4], [0.4, 0.8]]],
    )


def test_weights_must_be_on_simplex():
    with pytest.raises(ValueError):
        GmmParams.from_arrays([0.5, 0.4], [[0, 0], [1, 1]], [np.eye(2)] * 2)
    with pytest.raises(ValueError):
        GmmParams.from_arrays([1.0, 0.0], [[0, 0], [1, 1]], [np.eye(2)] * 2)


def test_components_share_dimension():
    comps = (
        GaussianComponent.from_params(np.zeros(2), np.eye(2)),
        GaussianComponent.from_params(np.zeros(3), np.eye(3)),
    )
    with pytest.raises(InvariantViolation):
        GmmParams(comps, np.array([0.5, 0.5]))


@pytest.mark.parametrize("bad", [dict(max_iters=0), dict(rel_tol=0.0), dict(n_init=0), dict(reg_covar=-1.0)])
def test_em_config_ranges(bad):
    with pytest.raises(ValueError):
        EmConfig(**bad)


def test_single_component_reduces_to_gaussian():
    gmm = GmmParams.from_arrays([1.0], [[0.0, 0.0]], [np.eye(2)])
    assert mixture_log_pdf(gmm, np.zeros(2)) == pytest.approx(-LOG_2PI, abs=1e-12)
    x = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_array_equal(mixture_log_pdf(gmm, x), log_pdf(gmm.components[0], x))


def test_duplicate_components_cancel():
    single = GmmParams.from_arrays([1.0], [[1.0, 2.0]], [np.eye(2)])
    double = GmmParams.from_arrays([0.5, 0.5], [[1.0, 2.0]] * 2, [np.eye(2)] * 2)
    x = np.array([0.3, -0.4])
    assert mixture_log_pdf(double, x) == pytest.approx(mixture_log_pdf(single, x), abs=1e-15)


def test_mixture_matches_linear_summation():
    gmm = two_component()
    x = np.array([0.7, 0.1])
    direct = 0.3 * gaussian_pdf_2x2(x, gmm.means[0], gmm.covariances[0]) + 0.7 * gaussian_pdf_2x2(
        x, gmm.means[1], gmm.covariances[1]
    )
    assert math.exp(mixture_log_pdf(gmm, x)) == pytest.approx(direct, rel=1e-12)


def test_mixture_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mixture_log_pdf(two_component(), np.zeros(3))


def test_responsibilities_examples():
    one = GmmParams.from_arrays([1.0], [[0.0, 0.0]], [np.eye(2)])
    np.testing.assert_array_equal(responsibilities(one, np.array([3.0, 1.0])), [1.0])

    same = GmmParams.from_arrays([0.25, 0.75], [[0.0, 0.0]] * 2, [np.eye(2)] * 2)
    np.testing.assert_allclose(responsibilities(same, np.array([5.0, -2.0])), [0.25, 0.75], rtol=1e-15)

    far = GmmParams.from_arrays([0.5, 0.5], [[0.0, 0.0], [10.0, 0.0]], [np.eye(2)] * 2)
    r = responsibilities(far, np.zeros(2))
    p1 = gaussian_pdf_2x2([0, 0], [0, 0], np.eye(2))
    p2 = gaussian_pdf_2x2([0, 0], [10, 0], np.eye(2))
    assert r[0] > 0.99
    assert r[0] == pytest.approx(p1 / (p1 + p2), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=10))
def test_responsibilities_sum_to_one(points):
    r = responsibilities(two_component(), np.array(points))
    np.testing.assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)


def test_log_likelihood_examples():
    gmm = GmmParams.from_arrays([1.0], [[0.0, 0.0]], [np.eye(2)])
    assert log_likelihood(gmm, np.empty((0, 2))) == 0.0
    assert log_likelihood(gmm, np.zeros((1, 2))) == pytest.approx(-LOG_2PI, abs=1e-12)
    pts = np.random.default_rng(1).normal(size=(5, 2))
    mix = two_component()
    expected = sum(mixture_log_pdf(mix, p) for p in pts)
    assert log_likelihood(mix, pts) == pytest.approx(expected, abs=1e-12)


def test_parameter_count():
    assert n_free_parameters(2, 2) == 11
    assert n_free_parameters(1, 1) == 2


def test_bic_prefers_single_component():
    x = np.random.default_rng(5).normal(size=(1000, 2))
    cfg = EmConfig(seed=0, n_init=2)
    one, _ = fit_em(x, 1, cfg)
    five, _ = fit_em(x, 5, cfg)
    assert bic(one, x) < bic(five, x)


def test_fit_recovers_single_gaussian():
    x = np.random.default_rng(2).normal(size=(1000, 2))
    gmm, trace = fit_em(x, 1, EmConfig(seed=0))
    assert np.all(np.abs(gmm.means[0]) < 0.1)
    assert np.linalg.norm(gmm.covariances[0] - np.eye(2)) < 0.15
    assert trace.converged


def test_fit_recovers_two_clusters():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(300, 2)) + [-20.0, 0.0]
    b = rng.normal(size=(300, 2)) + [20.0, 5.0]
    gmm, _ = fit_em(np.vstack([a, b]), 2, EmConfig(seed=1))
    np.testing.assert_allclose(gmm.weights, [0.5, 0.5], atol=0.05)
    order = np.argsort(gmm.means[:, 0])
    np.testing.assert_allclose(gmm.means[order[0]], a.mean(axis=0), atol=0.1)
    np.testing.assert_allclose(gmm.means[order[1]], b.mean(axis=0), atol=0.1)


def test_fit_is_deterministic():
    x = np.random.default_rng(4).normal(size=(150, 2))
    x[:50] += 6
    cfg = EmConfig(seed=9)
    g1, t1 = fit_em(x, 3, cfg)
    g2, t2 = fit_em(x, 3, cfg)
    np.testing.assert_array_equal(g1.weights, g2.weights)
    np.testing.assert_array_equal(g1.means, g2.means)
    np.testing.assert_array_equal(g1.covariances, g2.covariances)
    assert t1.log_likelihoods == t2.log_likelihoods


def test_fit_picks_best_restart_and_is_monotone():
    x = np.random.default_rng(6).normal(size=(200, 2))
    x[:70] = x[:70] * 0.3 + [4.0, 4.0]
    params, trace = fit_em(x, 3, EmConfig(seed=2, n_init=4))
    finals = [t[-1] for t in trace.restart_traces if t]
    assert trace.final_log_likelihood == max(finals)
    assert trace.final_log_likelihood == pytest.approx(log_likelihood(params, x), abs=1e-6)
    ll = np.array(trace.log_likelihoods)
    steps = [i for i in range(1, ll.size) if i not in trace.rescues]
    assert all(ll[i] >= ll[i - 1] - 1e-9 for i in steps)
    np.testing.assert_allclose(params.weights.sum(), 1.0, atol=1e-12)


def test_fit_applies_covariance_ridge():
    # Points on a line have singular covariance; the ridge keeps EM going.
    t = np.linspace(-1, 1, 40)
    x = np.column_stack([t, 2 * t])
    gmm, _ = fit_em(x, 1, EmConfig(seed=0, reg_covar=1e-3))
    assert np.linalg.eigvalsh(gmm.covariances[0]).min() > 0


def test_fit_errors():
    with pytest.raises(TooFewSamples):
        fit_em(np.zeros((2, 2)), 3)
    with pytest.raises(DegenerateData):
        fit_em(np.zeros((10, 2)), 2)
    with pytest.raises(NonFiniteValue):
        fit_em(np.array([[0.0, 1.0], [np.inf, 0.0], [1.0, 1.0]]), 1)


def test_component_on_two_points_is_reseeded():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(size=(100, 2)), rng.normal(size=(100, 2)) + [8, 0], [[30, 0], [31, 1]]])
    params, trace = fit_em(x, 3, EmConfig(seed=0, n_init=3))
    assert any(trace.restart_rescues)
    for hist, rescues in zip(trace.restart_traces, trace.restart_rescues):
        assert all(hist[i] >= hist[i - 1] - 1e-9 for i in range(1, len(hist)) if i not in rescues)
    assert np.all(np.linalg.eigvalsh(params.covariances).min(axis=1) > 1e-3)
