import numpy as np
import pandas as pd
import pytest

from estimator import (
    BandwidthVector, SortedPath, estimate_density_at, estimate_density_bandwidths, estimate_density_grid,
    save_grid_csv,
)
from kernels import ESTIMATION, KernelSpec, build_bump_kernel, build_estimation_kernel
from model import PathRecord, euler_maruyama_jump, reference_model
from quadrature import composite_legendre
from utils import make_rng


def _constant_path(point, n_steps=10, dt=0.1):
    return PathRecord(dt, np.tile(point, (n_steps + 1, 1)), seed=0, model_fingerprint="constant")


def test_bandwidth_vector():
    h = BandwidthVector((0.1, 0.2))
    assert h.dim == 2
    np.testing.assert_array_equal(h.as_array(), [0.1, 0.2])
    for bad in [(0.0, 0.1), (0.1, 0.5), (-0.1,), ()]:
        with pytest.raises(ValueError):
            BandwidthVector(bad)


def test_constant_path_estimate():
    kernel = build_estimation_kernel(2)
    path = _constant_path([0.2, 0.3])
    h = BandwidthVector((0.1, 0.2))
    estimate = estimate_density_at(path, kernel, h, [0.2, 0.3])
    assert estimate.value == pytest.approx(kernel(0.0) ** 2 / 0.02, rel=1e-12)
    assert estimate.n_points_used == 10
    assert estimate.T == pytest.approx(1.0)
    strided = estimate_density_at(path, kernel, h, [0.2, 0.3], stride=3)
    assert strided.value == pytest.approx(kernel(0.0) ** 2 / 0.02 * 4 * 3 * 0.1 / 1.0, rel=1e-12)


def test_far_point_is_zero():
    kernel = build_estimation_kernel(2)
    estimate = estimate_density_at(_constant_path([0.0, 0.0]), kernel, BandwidthVector((0.1, 0.1)), [1.0, 0.0])
    assert estimate.value == 0.0
    assert estimate.n_points_used == 0


def test_sorted_path_neighbours():
    states = np.array([[0.0, 0.0], [0.5, 0.1], [-0.05, 0.02], [0.04, 0.3], [0.0, 0.0]])
    index = SortedPath(PathRecord(1.0, states, 0, "x"))
    near = index.neighbours(np.array([0.0, 0.0]), np.array([0.1, 0.1]))
    assert sorted(map(tuple, near.tolist())) == [(-0.05, 0.02), (0.0, 0.0)]
    assert index.weight == 1.0
    with pytest.raises(ValueError):
        SortedPath(PathRecord(1.0, states, 0, "x"), stride=0)


def test_bandwidth_batch_matches_pointwise():
    path = euler_maruyama_jump(reference_model(), [0.0] * 3, 5.0, 1e-2, seed=3)
    kernel = build_estimation_kernel(2)
    hs = [BandwidthVector((0.05, 0.1, 0.3)), BandwidthVector((0.2, 0.2, 0.2)), BandwidthVector((0.4, 0.01, 0.3))]
    batch = estimate_density_bandwidths(path, kernel, hs, [0.1, 0.0, -0.1])
    for h, estimate in zip(hs, batch):
        single = estimate_density_at(path, kernel, h, [0.1, 0.0, -0.1])
        assert estimate.value == pytest.approx(single.value, rel=1e-12, abs=1e-300)
        assert estimate.n_points_used == single.n_points_used
    assert estimate_density_bandwidths(path, kernel, [], [0.0] * 3) == []


def test_grid(tmp_path):
    path = euler_maruyama_jump(reference_model(), [0.0] * 3, 2.0, 1e-2, seed=4)
    kernel = build_estimation_kernel(2)
    h = BandwidthVector((0.3, 0.3, 0.3))
    grid = [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [5.0, 5.0, 5.0]]
    estimates = estimate_density_grid(path, kernel, h, grid)
    assert len(estimates) == 3
    assert estimates[0].value == pytest.approx(estimate_density_at(path, kernel, h, grid[0]).value)
    assert estimates[2].value == 0.0
    assert estimate_density_grid(path, kernel, h, []) == []
    save_grid_csv(estimates, str(tmp_path / "grid.csv"))
    frame = pd.read_csv(tmp_path / "grid.csv")
    assert list(frame.columns) == ["x1", "x2", "x3", "value"]
    assert len(frame) == 3


def test_estimator_input_checks():
    path = _constant_path([0.0, 0.0])
    with pytest.raises(ValueError):
        estimate_density_at(path, build_bump_kernel(), BandwidthVector((0.1, 0.1)), [0.0, 0.0])
    with pytest.raises(ValueError):
        estimate_density_at(path, build_estimation_kernel(2), BandwidthVector((0.1, 0.1, 0.1)), [0.0, 0.0])
    with pytest.raises(ValueError):
        estimate_density_at(path, build_estimation_kernel(2), BandwidthVector((0.1, 0.1)), [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        estimate_density_at(_constant_path([0.0, 0.0], n_steps=0), build_estimation_kernel(2),
                            BandwidthVector((0.1, 0.1)), [0.0, 0.0])



def test_concatenated_path_averages_its_halves():
    model = reference_model()
    first = euler_maruyama_jump(model, [0.0] * 3, 5.0, 1e-2, seed=21)
    second = euler_maruyama_jump(model, [0.3, 0.0, -0.2], 5.0, 1e-2, seed=22)
    joined = first.concatenate(second)
    kernel = build_estimation_kernel(2)
    h = BandwidthVector((0.3, 0.2, 0.4))
    for x in [[0.0, 0.0, 0.0], [0.2, -0.1, 0.1]]:
        halves = [estimate_density_at(p, kernel, h, x).value for p in (first, second)]
        assert estimate_density_at(joined, kernel, h, x).value == pytest.approx(np.mean(halves), abs=1e-12)


def test_estimate_integrates_to_one():
    states = make_rng(5).standard_normal((401, 1))
    path = PathRecord(0.05, states, seed=5, model_fingerprint="gaussian")
    h = BandwidthVector((0.2,))
    knots, weights = composite_legendre(states.min() - 0.2, states.max() + 0.2, panels=2000, nodes=4)
    estimates = estimate_density_grid(path, build_estimation_kernel(2), h, knots[:, None])
    total = float(np.sum(weights * np.array([e.value for e in estimates])))
    assert total == pytest.approx(1.0, rel=0.02)


def test_estimate_is_linear_in_the_kernel():
    path = euler_maruyama_jump(reference_model(), [0.0] * 3, 5.0, 1e-2, seed=6)
    kernel = build_estimation_kernel(2)
    scaled = KernelSpec(kernel.order, tuple(3.5 * c for c in kernel.coefficients), ESTIMATION)
    h = BandwidthVector((0.3, 0.3, 0.3))
    base = estimate_density_at(path, kernel, h, [0.0, 0.1, 0.0])
    assert base.value != 0.0
    assert estimate_density_at(path, scaled, h, [0.0, 0.1, 0.0]).value == pytest.approx(3.5 * base.value, rel=1e-12)


def _block_estimates(path, kernel, h, x, blocks):
    n = path.n_steps // blocks
    return np.array([
        estimate_density_at(
            PathRecord(path.dt, path.states[k * n: (k + 1) * n + 1], path.seed, path.model_fingerprint), kernel, h, x
        ).value
        for k in range(blocks)
    ])


@pytest.mark.slow
def test_independent_paths_agree():
    model = reference_model()
    kernel = build_estimation_kernel(2)
    h = BandwidthVector((0.3, 0.3, 0.3))
    x = [0.0, 0.0, 0.0]
    means, errors = [], []
    for seed in (31, 32):
        blocks = _block_estimates(euler_maruyama_jump(model, [0.0] * 3, 100.0, 1e-2, seed=seed), kernel, h, x, 10)
        means.append(blocks.mean())
        errors.append(blocks.std(ddof=1) / np.sqrt(blocks.shape[0]))
    assert abs(means[0] - means[1]) <= 4.0 * np.hypot(*errors)
