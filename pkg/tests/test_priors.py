import math

import numpy as np
import pytest

from bandwidth import SmoothnessSpec
from estimator import BandwidthVector
from generator import drift_field
from kernels import build_bump_kernel
from model import GAUSSIAN, POINT_MASS, JumpMeasureSpec
from priors import (
    C2, PriorOne, PriorZero, calibrate, check_ad_conditions, drift_gap, eval_pi0, eval_pi1, holder_quotients,
    l2_drift_distance, max_epsilon, most_negative_product, positivity_margin, profile, profile_bounds,
    quadrature_check, smooth_step,
)
from utils import CalibrationInfeasibleError


def test_smooth_step():
    value, first, second = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    np.testing.assert_array_equal(value[[0, 1, 3, 4]], [0.0, 0.0, 1.0, 1.0])
    assert value[2] == pytest.approx(0.5)
    assert first[2] == pytest.approx(2.0)
    assert second[2] == pytest.approx(0.0, abs=1e-12)
    t = np.linspace(0.0, 1.0, 1001)
    assert np.all(np.diff(smooth_step(t)[0]) >= 0.0)


def test_profile_shape():
    r = np.array([0.0, 0.25, 0.5])
    np.testing.assert_array_equal(profile(r)[0], 1.0)
    tail = np.array([1.0, 2.0, 7.5])
    np.testing.assert_allclose(profile(tail)[0], np.exp(-tail), rtol=1e-14)
    np.testing.assert_allclose(profile(tail)[1], -np.exp(-tail), rtol=1e-14)
    bounds = profile_bounds()
    assert bounds["monotone"]
    assert bounds["gap_range"]
    assert bounds["lower"] >= 1.0 - 1e-12
    assert bounds["upper"] <= math.e


def test_prior_zero():
    prior = PriorZero(0.25, np.eye(3))
    assert prior.k1 == prior.k3 == 1.0
    assert prior.working_radius == pytest.approx(100.0)
    assert eval_pi0(prior, [0.0, 0.0, 0.0]) == pytest.approx(prior.c_eta)
    assert eval_pi0(prior, [1.0, -1.0, 0.5]) == pytest.approx(prior.c_eta)
    assert prior.density().integral(prior.working_radius, panels=800) == pytest.approx(1.0, abs=1e-8)
    for eta in [0.0, 0.5, -0.1]:
        with pytest.raises(ValueError):
            PriorZero(eta, np.eye(3))


def test_prior_zero_uses_inverse_diffusion():
    a = np.diag([1.0, 2.0])
    prior = PriorZero(0.4, a)
    np.testing.assert_allclose(prior.scales, [0.4, 0.1])
    assert prior.k1 == pytest.approx(1.0)
    assert prior.k3 == pytest.approx(0.25)


@pytest.mark.parametrize("eta", [0.1, 0.25, 0.4])
def test_ad_conditions(eta):
    report = check_ad_conditions(PriorZero(eta, np.eye(3)))
    assert report.passed, report.to_dict()
    names = [c["name"] for c in report.conditions]
    assert names == ["decay", "shift", "tail", "log_slope_tail", "log_slope", "hessian"]
    assert report.constants["c2"] == C2
    assert report.c_hat_ok is None


def test_ad_report_with_jumps():
    F = JumpMeasureSpec(intensity=1.0, law=GAUSSIAN, covariance=np.eye(3))
    report = check_ad_conditions(PriorZero(0.25, np.eye(3)), n_points=201, F=F)
    assert report.constants["c_hat"] > 0
    assert report.c_hat_ok in (True, False)
    assert report.constants["eps0"] == pytest.approx(2.0 * 0.25 * 3)


@pytest.mark.parametrize("T", [1e3, 1e6, 1e9])
def test_calibration_constraints(T):
    calibration = calibrate(T, SmoothnessSpec.isotropic(2.0, 3))
    assert all(calibration.constraints.values())
    assert calibration.M_T == pytest.approx(T ** 0.4)
    h = calibration.h.as_array()
    assert h[0] == h[1]
    assert calibration.values["holder_ratio"] == pytest.approx(1.0)
    assert np.all(h < 0.5)


def test_calibration_infeasible():
    with pytest.raises(CalibrationInfeasibleError) as info:
        calibrate(10.0, SmoothnessSpec.isotropic(2.0, 3))
    assert info.value.constraint == "bandwidth_cap"
    with pytest.raises(ValueError):
        calibrate(1e6, SmoothnessSpec((1.0, 2.0, 2.0)))
    with pytest.raises(ValueError):
        calibrate(1e6, SmoothnessSpec.isotropic(2.0, 3), epsilon=0.0)


def _prior_pair(T=1e6):
    base = PriorZero(0.4, np.eye(3))
    return base, PriorOne.from_calibration(base, calibrate(T, SmoothnessSpec.isotropic(2.0, 3)))


def _box_grid(lo, hi, n=41):
    axes = [np.linspace(lo[m], hi[m], n) for m in range(len(lo))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


@pytest.mark.parametrize("T", [1e6, 1e9, 1e12])
def test_prior_one_suite(T):
    base, p1 = _prior_pair(T)
    lo, hi = p1.bump_box()
    rng = np.random.default_rng(0)
    width = hi - lo
    points = rng.uniform(lo - 2 * width, hi + 2 * width, (400, 3))
    outside = points[~np.all((points >= lo) & (points <= hi), axis=1)]
    assert outside.shape[0] > 0
    np.testing.assert_array_equal(p1.density().value(outside), base.density().value(outside))
    peak = eval_pi1(p1, p1.x0) - eval_pi0(base, p1.x0)
    assert peak * p1.M_T == pytest.approx(1.0, abs=1e-9)
    assert abs(quadrature_check(p1)) <= 1e-10
    assert p1.is_positive()
    assert p1.margin > 0


def test_bump_extrema():
    k_min, k_max = build_bump_kernel().extrema()
    assert k_min == pytest.approx(-2.0 * (8.0 / 11.0) ** 4, rel=1e-12)
    assert k_max == pytest.approx(1.0, rel=1e-12)
    assert most_negative_product(k_min, k_max, 1) == k_min
    assert most_negative_product(-0.5, 1.0, 3) == -0.5
    assert most_negative_product(-2.0, 1.0, 3) == -8.0


def test_positivity_margin_bounds_pi1_on_the_box():
    base, p1 = _prior_pair(1e6)
    values = p1.density().value(_box_grid(*p1.bump_box()))
    assert np.min(values) >= p1.margin - 1e-15
    assert np.min(values) > 0.0
    assert p1.margin == pytest.approx(
        positivity_margin(base, p1.M_T, p1.h, p1.x0, p1.bump), rel=1e-15
    )


def test_small_T_is_infeasible():
    spec = SmoothnessSpec.isotropic(2.0, 3)
    base = PriorZero(0.4, np.eye(3))
    calibration = calibrate(1e3, spec)
    bump = build_bump_kernel()
    x0 = np.full(3, 0.5)
    # pi_1 assembled by hand from its two terms
    X = _box_grid(x0 - calibration.h.as_array(), x0 + calibration.h.as_array())
    bumps = np.prod(bump((X - x0) / calibration.h.as_array()), axis=1)
    values = base.density().value(X) + bumps / calibration.M_T
    margin = positivity_margin(base, calibration.M_T, calibration.h, x0, bump)
    assert np.min(values) < 0.0
    assert np.min(values) >= margin - 1e-15
    with pytest.raises(CalibrationInfeasibleError) as info:
        PriorOne.from_calibration(base, calibration)
    assert info.value.constraint == "positivity"
    with pytest.raises(CalibrationInfeasibleError) as info:
        calibrate(1e3, spec, base=base)
    assert info.value.constraint == "positivity"


def test_calibration_with_positivity():
    spec = SmoothnessSpec.isotropic(2.0, 3)
    calibration = calibrate(1e6, spec, base=PriorZero(0.4, np.eye(3)))
    assert calibration.constraints["positivity"]
    assert calibration.values["positivity_margin"] > 0.0
    assert "positivity" not in calibrate(1e6, spec).constraints
    with pytest.raises(ValueError):
        calibrate(1e6, spec, base=PriorZero(0.4, np.eye(2)))


def test_prior_one_validation():
    base = PriorZero(0.4, np.eye(3))
    with pytest.raises(ValueError):
        PriorOne(base, 1000.0, BandwidthVector((0.1, 0.1)))
    with pytest.raises(ValueError):
        PriorOne(base, 0.0, BandwidthVector((0.1, 0.1, 0.1)))
    with pytest.raises(CalibrationInfeasibleError):
        PriorOne(base, 10.0, BandwidthVector((0.1, 0.1, 0.1)), x0=[0.0, 0.0, 0.0])
    p1 = PriorOne(base, 1000.0, BandwidthVector((0.1, 0.1, 0.1)), x0=[0.0, 0.0, 0.0])
    np.testing.assert_array_equal(p1.x0, 0.0)


def test_prior_one_holder_class():
    spec = SmoothnessSpec.isotropic(2.0, 3)
    epsilon = max_epsilon(spec)
    assert 0.0 < epsilon < 1.0
    base = PriorZero(0.4, np.eye(3))
    p1 = PriorOne.from_calibration(base, calibrate(1e16, spec, epsilon))
    h = p1.h.as_array()
    rng = np.random.default_rng(1)
    points = p1.x0 + rng.uniform(-1.0, 1.0, (50, 3)) * h
    steps = [1e-3 * h[0], 0.1 * h[0], 0.5 * h[0], -0.3 * h[0]]
    quotients = holder_quotients(p1.density(), spec, points, steps)
    assert np.all(quotients <= 2.0)


def test_drift_gap_without_jumps():
    base, p1 = _prior_pair()
    report = drift_gap(base, p1, n=50)
    assert report.outside == 0.0
    assert report.integrated == 0.0
    assert report.inside > 0.0
    assert report.stable
    assert set(report.to_dict()["ratios"]) == {"inside", "outside", "integrated"}


def test_drift_gap_with_jumps():
    base, p1 = _prior_pair()
    F = JumpMeasureSpec(intensity=0.5, law=POINT_MASS, atom=[0.3, 0.0, 0.0])
    report = drift_gap(base, p1, F=F, n=8)
    assert report.inside > 0.0
    assert report.outside >= 0.0
    assert report.integrated >= 0.0
    assert isinstance(report.stable, bool)
    assert set(report.ratios_fine) == {"inside", "outside", "integrated"}
    # a jump of 0.3 along x_1 carries the bump into a point right of the box
    b0 = drift_field(base.density(), base.a, np.eye(3), F)
    b1 = drift_field(p1.density(), base.a, np.eye(3), F)
    x = np.array([0.75, 0.5, 0.5])
    lo, hi = p1.bump_box()
    assert not np.all((x >= lo) & (x <= hi))
    assert abs(b1(x)[0] - b0(x)[0]) > 0.0
    np.testing.assert_allclose(b1(x)[1:], b0(x)[1:], rtol=1e-12, atol=1e-15)


def test_drift_gap_scales_with_bump_height():
    base = PriorZero(0.4, np.eye(3))
    h = BandwidthVector((0.1, 0.1, 0.1))
    tall = drift_gap(base, PriorOne(base, 1e5, h), n=40)
    short = drift_gap(base, PriorOne(base, 2e5, h), n=40)
    assert tall.inside / short.inside == pytest.approx(2.0, rel=0.05)


def test_l2_drift_distance():
    base, p1 = _prior_pair()
    assert l2_drift_distance(base, base, 1e6) == 0.0
    distance = l2_drift_distance(base, p1, 1e6)
    assert distance > 0.0
    assert math.isfinite(distance)


def test_l2_drift_distance_between_base_priors():
    wide, narrow = PriorZero(0.4, np.eye(3)), PriorZero(0.25, np.eye(3))
    assert l2_drift_distance(wide, PriorZero(0.4, np.eye(3)), 1e3) == 0.0
    distance = l2_drift_distance(wide, narrow, 1e3)
    # beyond |x_k| = 4 both drifts sit on their tails and differ by (0.4 - 0.25) / 2 in coordinate k
    factor = wide.factors[0]
    tail_mass = 2.0 * float(factor.right_tail(np.array([4.0]))[0]) / factor.mass
    assert distance >= 0.8 * 1e3 * 3 * 0.075 ** 2 * tail_mass
    assert math.isfinite(distance)
    with pytest.raises(ValueError):
        l2_drift_distance(wide, PriorZero(0.25, np.eye(2)), 1e3)


def test_l2_drift_distance_is_stable_under_calibration():
    base = PriorZero(0.4, np.eye(3))
    spec = SmoothnessSpec.isotropic(2.0, 3)
    low = l2_drift_distance(base, PriorOne.from_calibration(base, calibrate(1e9, spec)), 1e9)
    high = l2_drift_distance(base, PriorOne.from_calibration(base, calibrate(4e9, spec)), 4e9)
    assert 0.5 <= high / low <= 2.0


def test_l2_drift_distance_grows_linearly_without_calibration():
    base = PriorZero(0.4, np.eye(3))
    p1 = PriorOne(base, 1000.0, BandwidthVector((0.1, 0.1, 0.1)))
    one = l2_drift_distance(base, p1, 1e3)
    assert l2_drift_distance(base, p1, 2e3) == pytest.approx(2.0 * one, rel=1e-12)
    assert l2_drift_distance(base, p1, 1e4) == pytest.approx(10.0 * one, rel=1e-12)
