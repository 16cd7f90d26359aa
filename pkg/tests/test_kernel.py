import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grftails.kernel import (
    CovarianceModel,
    KernelError,
    NotStandardizedError,
    joint_covariance,
    joint_covariance_indexes,
    rat_quad,
    spectral_moments,
    sq_exp,
    standardize,
    unvech,
    vech,
    vech_pairs,
)
from oracles import fd_fourth, fd_second


def random_scale(rng, d):
    A = rng.normal(size=(d, d))
    return np.linalg.cholesky(A @ A.T + 0.5 * np.eye(d)).T


def test_sq_exp_d1_gamma():
    m = spectral_moments(sq_exp(1))
    assert m.mu20[0] == pytest.approx(-1.0)
    assert m.mu22[0, 0] == pytest.approx(3.0)
    assert m.det_gamma == pytest.approx(2.0)


def test_rat_quad_d1_moments():
    # g(q) = (1 + q/a)^-a: fourth derivative at 0 is 3 g''(0) = 3 (a+1)/a
    a = 5.0
    m = spectral_moments(rat_quad(a, 1))
    assert m.mu22[0, 0] == pytest.approx(3 * (a + 1) / a)
    assert m.det_gamma == pytest.approx(3 * (a + 1) / a - 1)


def test_rat_quad_alpha_bound_message():
    with pytest.raises(KernelError, match=r"d/2 \+ 3"):
        rat_quad(3.4, 1)
    rat_quad(3.6, 1)


@pytest.mark.parametrize("family", ["sq_exp", "rat_quad"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_derivatives_match_finite_differences(family, d):
    rng = np.random.default_rng(d)
    L = random_scale(rng, d)
    model = sq_exp(d, L) if family == "sq_exp" else rat_quad(d / 2 + 4.5, d, L)
    H = model.hessian_at_zero()
    F = model.fourth_at_zero()
    h = 0.2 / np.sqrt(np.linalg.eigvalsh(model.metric).max())  # step relative to the shortest length scale
    for i in range(d):
        for j in range(d):
            assert fd_second(model, d, i, j, h) == pytest.approx(H[i, j], rel=1e-7, abs=1e-9 * np.abs(H).max())
            assert fd_fourth(model, d, i, j, h) == pytest.approx(F[i, i, j, j], rel=1e-6)


def test_gradient_and_hessian_away_from_zero():
    model = rat_quad(6.0, 2, [[1.2, 0.4], [0.0, 0.7]])
    t = np.array([0.3, -0.5])
    h = 1e-5
    grad_fd = [(model(t + h * e) - model(t - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(model.gradient(t), grad_fd, rtol=1e-8)
    hess_fd = np.array([(model.gradient(t + h * e) - model.gradient(t - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(model.hessian(t), hess_fd, rtol=1e-7, atol=1e-10)


@given(d=st.integers(1, 4))
def test_vech_round_trip(d):
    rng = np.random.default_rng(d)
    A = rng.normal(size=(d, d))
    S = A + A.T
    assert len(vech(S)) == d * (d + 1) // 2
    np.testing.assert_array_equal(unvech(vech(S), d), S)
    assert vech_pairs(d)[:d] == [(i, i) for i in range(d)]


def test_not_standardized_is_rejected():
    with pytest.raises(NotStandardizedError):
        spectral_moments(sq_exp(1, [[2.0]]))
    spectral_moments(sq_exp(1, [[2.0]]), require_standardized=False)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3), rq=st.booleans())
def test_standardize_gives_identity_hessian(seed, d, rq):
    rng = np.random.default_rng(seed)
    L = random_scale(rng, d)
    raw = rat_quad(d / 2 + 4, d, L) if rq else sq_exp(d, L)
    model, affine = standardize(raw)
    assert model.is_standardized()
    np.testing.assert_allclose(-model.hessian_at_zero(), np.eye(d), atol=1e-10)
    # standardized C at Sigma^{1/2} t equals the raw covariance at t
    t = rng.normal(size=d)
    assert model(affine.sigma_half @ t) == pytest.approx(raw(t), rel=1e-10)
    assert affine.measure_factor == pytest.approx(np.linalg.det(raw.metric) ** -0.5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3))
def test_gamma_positive_definite(seed, d):
    rng = np.random.default_rng(seed)
    model, _ = standardize(rat_quad(d / 2 + 3.5, d, random_scale(rng, d)))
    m = spectral_moments(model)
    assert np.all(np.linalg.eigvalsh(m.gamma) > 0)
    assert m.det_gamma > 0


def test_joint_covariance_is_psd_and_consistent():
    model, _ = standardize(sq_exp(2, [[1.0, 0.2], [0.0, 1.5]]))
    pts = np.array([[0.3, 0.1], [-0.4, 0.6]])
    J = joint_covariance(model, pts)
    idx = joint_covariance_indexes(2)
    assert np.allclose(J, J.T)
    assert np.linalg.eigvalsh(J).min() > -1e-10
    np.testing.assert_allclose(J[idx["df0"], idx["df0"]], np.eye(2), atol=1e-12)
    m = spectral_moments(model)
    np.testing.assert_allclose(J[idx["f0"], idx["d2f0"]].ravel(), m.mu20, atol=1e-12)
    np.testing.assert_allclose(J[idx["d2f0"], idx["d2f0"]], m.mu22, atol=1e-12)


def test_json_round_trip_and_errors():
    m = rat_quad(5.0, 2, [[1.0, 0.1], [0.0, 2.0]])
    again = CovarianceModel.from_json(json.dumps(m.to_dict()))
    assert again.family == m.family and again.alpha == m.alpha
    np.testing.assert_array_equal(again.scale, m.scale)
    with pytest.raises(KernelError):
        CovarianceModel.from_json("{not json")
    with pytest.raises(KernelError):
        CovarianceModel.from_dict({"family": "matern", "d": 1})
    with pytest.raises(KernelError):
        CovarianceModel.from_dict({"family": "sq_exp", "d": 2, "L": [1, 2, 3]})
    with pytest.raises(KernelError):
        CovarianceModel.from_dict({"family": "sq_exp", "d": 1, "L": [[0.0]]})
