import os
from dataclasses import dataclass
from typing import Any, List, Sequence, Tuple

import numpy as np
import pandas as pd

from kernels import ESTIMATION, KernelSpec, eval_product_kernel
from model import PathRecord
from utils import as_point


@dataclass(frozen=True)
class BandwidthVector:
    """Per-coordinate bandwidths, each in (0, 1/2)."""
    h: tuple

    def __post_init__(self) -> None:
        h = tuple(float(v) for v in np.asarray(self.h, dtype=float).reshape(-1))
        if len(h) == 0:
            raise ValueError("Bandwidth vector is empty")
        if any(not (0.0 < v < 0.5) for v in h):
            raise ValueError(f"Bandwidths must lie in (0, 1/2), got {h}")
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return len(self.h)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.h)

    def to_dict(self) -> dict:
        return {"h": list(self.h)}


@dataclass(frozen=True)
class DensityEstimate:
    x: tuple
    value: float
    T: float
    h: BandwidthVector
    n_points_used: int

    def to_dict(self) -> dict:
        return {"x": list(self.x), "value": self.value, "T": self.T, "h": list(self.h.h),
                "n_points_used": self.n_points_used}


class SortedPath:
    """Left-endpoint sample points of a path, sorted along the first axis.

    Sorting once lets every evaluation point restrict itself to the slab
    |X^1 - x^1| <= h_1 by binary search before the full box test.
    """
    def __init__(self, path: PathRecord, stride: int = 1) -> None:
        if path.n_steps < 1:
            raise ValueError("Path has no time steps")
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        points = path.states[:-1:stride]
        order = np.argsort(points[:, 0], kind="stable")
        self.points = points[order]
        self.keys = self.points[:, 0]
        self.weight = stride * path.dt
        self.T = path.T
        self.dim = path.dim

    def neighbours(self, x: np.ndarray, half_widths: np.ndarray) -> np.ndarray:
        lo = np.searchsorted(self.keys, x[0] - half_widths[0], side="left")
        hi = np.searchsorted(self.keys, x[0] + half_widths[0], side="right")
        slab = self.points[lo:hi]
        inside = np.all(np.abs(slab - x) <= half_widths, axis=1)
        return slab[inside]


def kernel_sum(index: SortedPath, kernel: KernelSpec, h: BandwidthVector, x: np.ndarray) -> Tuple[float, int]:
    """(1/T) sum_k K_h(x - X_{t_k}) * weight and the number of points inside the bandwidth box."""
    near = index.neighbours(x, h.as_array())
    if near.shape[0] == 0:
        return 0.0, 0
    values = eval_product_kernel(kernel, h.h, x, near)
    return float(np.sum(values) * index.weight / index.T), int(near.shape[0])


def _check_inputs(path: PathRecord, kernel: KernelSpec, h: BandwidthVector) -> None:
    if kernel.kind != ESTIMATION:
        raise ValueError(f"Density estimation needs an estimation kernel, got kind '{kernel.kind}'")
    if h.dim != path.dim:
        raise ValueError(f"Bandwidth has dimension {h.dim}, path has {path.dim}")
    if path.n_steps < 1:
        raise ValueError("Path has no time steps")


def estimate_density_at(
    path: PathRecord,
    kernel: KernelSpec,
    h: BandwidthVector,
    x: Any,
    stride: int = 1,
) -> DensityEstimate:
    _check_inputs(path, kernel, h)
    x = as_point(x, path.dim, "x")
    value, used = kernel_sum(SortedPath(path, stride), kernel, h, x)
    return DensityEstimate(tuple(x), value, path.T, h, used)


def estimate_density_grid(
    path: PathRecord,
    kernel: KernelSpec,
    h: BandwidthVector,
    grid: Sequence[Any],
    stride: int = 1,
) -> List[DensityEstimate]:
    _check_inputs(path, kernel, h)
    if len(grid) == 0:
        return []
    index = SortedPath(path, stride)
    estimates = []
    for point in grid:
        x = as_point(point, path.dim, "x")
        value, used = kernel_sum(index, kernel, h, x)
        estimates.append(DensityEstimate(tuple(x), value, path.T, h, used))
    return estimates


def estimate_density_bandwidths(
    path: PathRecord,
    kernel: KernelSpec,
    hs: Sequence[BandwidthVector],
    x: Any,
    stride: int = 1,
) -> List[DensityEstimate]:
    """Estimates at one point for many bandwidths from a single pre-filtered pass."""
    if len(hs) == 0:
        return []
    for h in hs:
        _check_inputs(path, kernel, h)
    x = as_point(x, path.dim, "x")
    index = SortedPath(path, stride)
    widest = np.max(np.stack([h.as_array() for h in hs]), axis=0)
    near = index.neighbours(x, widest)
    estimates = []
    for h in hs:
        inside = np.all(np.abs(near - x) <= h.as_array(), axis=1)
        points = near[inside]
        value = 0.0
        if points.shape[0] > 0:
            value = float(np.sum(eval_product_kernel(kernel, h.h, x, points)) * index.weight / index.T)
        estimates.append(DensityEstimate(tuple(x), value, path.T, h, int(points.shape[0])))
    return estimates


def save_grid_csv(estimates: Sequence[DensityEstimate], path: str) -> None:
    if len(estimates) == 0:
        raise ValueError("No estimates to save")
    if os.path.dirname(path) != "":
        os.makedirs(os.path.dirname(path), exist_ok=True)
    d = len(estimates[0].x)
    columns = {f"x{m + 1}": [e.x[m] for e in estimates] for m in range(d)}
    columns["value"] = [e.value for e in estimates]
    pd.DataFrame(columns).to_csv(path, index=False, float_format="%.17g")
