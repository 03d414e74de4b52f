import numpy as np
import pytest

from generator import (
    LEFT, RIGHT, DensitySpec, GaussianFactor, ProductTerm, adjoint_continuous, adjoint_discrete,
    adjoint_discrete_partial, continuous_drift, drift_field, drift_from_density, gaussian_density,
    verify_stationarity,
)
from model import GAUSSIAN, POINT_MASS, JumpMeasureSpec, ModelSpec
from priors import PriorZero
from quadrature import QuadratureSpec
from utils import QuadratureError, make_rng


@pytest.mark.parametrize("d", [1, 3])
def test_gaussian_drift_oracle(d):
    g = gaussian_density(d)
    F = JumpMeasureSpec(intensity=0.0, dim=d)
    points = make_rng(1, d).uniform(-3.0, 3.0, (100, d))
    worst = 0.0
    for x in points:
        for i in range(d):
            b = drift_from_density(g, np.eye(d), np.eye(d), F, i, x)
            worst = max(worst, abs(b + x[i] / 2.0))
    assert worst < 1e-9


def test_continuous_drift_is_vectorised():
    g = gaussian_density(2)
    X = make_rng(2).uniform(-2.0, 2.0, (7, 2))
    np.testing.assert_allclose(continuous_drift(g, np.eye(2), X), -X / 2.0, atol=1e-12)
    np.testing.assert_allclose(continuous_drift(g, np.eye(2), X[0]), -X[0] / 2.0, atol=1e-12)


@pytest.mark.parametrize("intensity", [0.05, 1.0])
def test_adjoint_sum_identity(intensity):
    d = 3
    g = PriorZero(0.25, np.eye(d)).density()
    F = JumpMeasureSpec(intensity=intensity, law=GAUSSIAN, covariance=np.eye(d))
    quad = QuadratureSpec(hermite_nodes=6)
    for x in make_rng(3).uniform(-4.0, 4.0, (50, d)):
        pieces = [adjoint_discrete_partial(g, np.eye(d), F, i, x, quad) for i in range(d)]
        total = adjoint_discrete(g, np.eye(d), F, x, quad)
        scale = max(abs(total), max(abs(p) for p in pieces), 1e-300)
        assert abs(sum(pieces) - total) <= 1e-8 * scale


def test_adjoint_index_checks():
    g = gaussian_density(2)
    F = JumpMeasureSpec(intensity=1.0, law=GAUSSIAN, covariance=np.eye(2))
    with pytest.raises(ValueError):
        adjoint_discrete_partial(g, np.eye(2), F, 2, [0.0, 0.0])
    with pytest.raises(ValueError):
        drift_from_density(g, np.eye(2), np.eye(2), F, -1, [0.0, 0.0])
    with pytest.raises(ValueError):
        drift_from_density(g, np.eye(2), np.eye(2), F, 0, [0.0, 0.0], side="middle")


def test_node_doubling_check_flags_coarse_rules():
    g = gaussian_density(1)
    F = JumpMeasureSpec(intensity=1.0, law=GAUSSIAN, covariance=np.eye(1))
    with pytest.raises(QuadratureError):
        adjoint_discrete(g, np.eye(1), F, [0.3], QuadratureSpec(hermite_nodes=1, check=True))


def test_left_and_right_drift_agree():
    d = 2
    g = PriorZero(0.25, np.eye(d)).density()
    F = JumpMeasureSpec(intensity=1.0, law=GAUSSIAN, covariance=0.5 * np.eye(d))
    quad = QuadratureSpec(hermite_nodes=6)
    for x in [np.array([0.3, -1.0]), np.array([-2.5, 4.0]), np.array([6.0, 0.1])]:
        for i in range(d):
            left = drift_from_density(g, np.eye(d), np.eye(d), F, i, x, quad, side=LEFT)
            right = drift_from_density(g, np.eye(d), np.eye(d), F, i, x, quad, side=RIGHT)
            assert left == pytest.approx(right, abs=1e-7)


def test_point_mass_drift_matches_vector_field():
    d = 2
    g = PriorZero(0.25, np.eye(d)).density()
    F = JumpMeasureSpec(intensity=0.5, law=POINT_MASS, atom=[1.0, -0.5])
    field_ = drift_field(g, np.eye(d), np.eye(d), F)
    x = np.array([0.7, -2.0])
    vector = field_(x)
    for i in range(d):
        assert vector[i] == pytest.approx(drift_from_density(g, np.eye(d), np.eye(d), F, i, x), rel=1e-12)
    assert field_(np.stack([x, x])).shape == (2, 2)


def _stationarity_model(d, intensity, quad):
    prior = PriorZero(0.25, np.eye(d))
    F = JumpMeasureSpec(intensity=intensity, law=GAUSSIAN, covariance=np.eye(d))
    drift = drift_field(prior.density(), np.eye(d), np.eye(d), F, quad)
    return prior.density(), ModelSpec(d, drift, np.eye(d), np.eye(d), F)


def test_stationarity_residual_small_dimension():
    quad = QuadratureSpec(hermite_nodes=6)
    g, model = _stationarity_model(2, 0.05, quad)
    points = make_rng(4).uniform(-3.0, 3.0, (10, 2))
    coarse = verify_stationarity(g, model, points, quad)
    fine = verify_stationarity(g, model, points, quad.doubled())
    assert coarse.max_relative < 1e-3
    assert fine.max_relative <= max(coarse.max_relative / 2.0, 1e-5)
    assert len(coarse.to_dict()["points"]) == 10


@pytest.mark.slow
def test_stationarity_residual():
    quad = QuadratureSpec(hermite_nodes=8)
    g, model = _stationarity_model(3, 0.05, quad)
    points = make_rng(5).uniform(-3.0, 3.0, (20, 3))
    coarse = verify_stationarity(g, model, points, quad)
    fine = verify_stationarity(g, model, points, quad.doubled())
    assert coarse.max_relative < 1e-3
    assert fine.max_relative <= max(coarse.max_relative / 2.0, 1e-5)


def test_wrong_drift_is_detected():
    g = gaussian_density(2)
    model = ModelSpec(2, lambda x: -x, np.eye(2), np.eye(2), JumpMeasureSpec(intensity=0.0, dim=2))
    points = [[0.0, 0.0], [1.5, 1.5], [0.2, -0.3]]
    report = verify_stationarity(g, model, points, drift=lambda x: -x)
    assert report.max_relative > 0.1
    exact = verify_stationarity(g, model, points)
    assert exact.max_relative < 1e-6


def test_gaussian_adjoint_vanishes():
    g = gaussian_density(3)
    for x in make_rng(7).uniform(-2.0, 2.0, (5, 3)):
        value = adjoint_continuous(g, lambda y: -np.asarray(y) / 2.0, np.eye(3), x)
        assert abs(value) < 1e-8


def test_density_spec():
    g = gaussian_density(2)
    assert g.c_n == pytest.approx(1.0)
    assert g.integral(8.0) == pytest.approx(1.0, abs=1e-10)
    x = np.array([0.3, -0.4])
    assert g(x) == pytest.approx(np.exp(-0.125) / (2.0 * np.pi))
    np.testing.assert_allclose(g.gradient(x)[0], -x * g(x))
    hess = g.hessian(x)[0]
    np.testing.assert_allclose(hess, (np.outer(x, x) - np.eye(2)) * g(x))
    report = g.check_working_box(8.0)
    assert report["positive"] and report["normalized"] and report["boundary_decay"]
    with pytest.raises(ValueError):
        DensitySpec(2, [ProductTerm(1.0, [GaussianFactor()])])
    with pytest.raises(ValueError):
        g.value(np.zeros(3))


def test_prior_zero_working_box():
    prior = PriorZero(0.4, np.eye(2))
    report = prior.density().check_working_box(prior.working_radius)
    assert report["positive"]
    assert report["boundary_decay"]
    assert report["mass"] == pytest.approx(1.0, abs=1e-8)


def _gaussian(y):
    y = np.atleast_2d(y)
    return np.exp(-0.5 * np.sum(y * y, axis=1)) / (2.0 * np.pi) ** (y.shape[1] / 2.0)


def test_point_mass_adjoint_closed_form():
    d = 2
    g = gaussian_density(d)
    gamma = np.array([[1.0, 0.5], [0.0, 1.0]])
    F = JumpMeasureSpec(intensity=1.3, law=POINT_MASS, atom=[0.4, -0.6])
    shift = gamma @ np.array([0.4, -0.6])
    for x in make_rng(8).uniform(-2.0, 2.0, (6, d)):
        gx = _gaussian(x)[0]
        expected = 1.3 * (_gaussian(x - shift)[0] - gx + float(shift @ (-x * gx)))
        assert adjoint_discrete(g, gamma, F, x) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_partial_adjoint_cancels_on_plateau():
    d = 3
    g = PriorZero(0.25, np.eye(d)).density()
    F = JumpMeasureSpec(intensity=2.0, law=POINT_MASS, atom=[0.5, 0.5, 0.5])
    x = np.array([0.1, 0.2, -0.3])
    for i in range(d):
        assert adjoint_discrete_partial(g, np.eye(d), F, i, x) == 0.0
    assert adjoint_discrete(g, np.eye(d), F, x) == 0.0
    edge = np.array([1.9, 0.0, 0.0])
    F_out = JumpMeasureSpec(intensity=2.0, law=POINT_MASS, atom=[-0.5, 0.0, 0.0])
    assert adjoint_discrete_partial(g, np.eye(d), F_out, 0, edge) != 0.0


def test_adjoint_matches_dense_riemann_sum():
    g = gaussian_density(1)
    F = JumpMeasureSpec(intensity=0.8, law=GAUSSIAN, covariance=[[0.5]])
    z = np.linspace(-12.0, 12.0, 240_001)
    dz = z[1] - z[0]
    law = np.exp(-z * z) / np.sqrt(np.pi)
    for x in [-1.5, 0.0, 0.4, 2.2]:
        gx = _gaussian(np.array([x]))[0]
        integrand = _gaussian((x - z)[:, None]) - gx - z * x * gx
        expected = 0.8 * float(np.sum(integrand * law) * dz)
        value = adjoint_discrete(g, np.eye(1), F, [x], QuadratureSpec(hermite_nodes=40))
        assert value == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("a", [np.eye(3), np.diag([2.0, 1.0, 1.0])])
def test_prior_zero_tail_drift(a):
    eta = 0.25
    prior = PriorZero(eta, a)
    F = JumpMeasureSpec(intensity=0.0, dim=3)
    x = np.array([30.0, -5.0, 10.0])
    for i in range(3):
        b = drift_from_density(prior.density(), a, np.eye(3), F, i, x)
        assert b == pytest.approx(-eta * np.sign(x[i]) / 2.0, rel=1e-12)
