import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import special

from kernels import KernelSpec
from model import JumpMeasureSpec, ModelSpec
from quadrature import QuadratureSpec, checked, composite_legendre, halfline_integral, jump_nodes
from utils import as_point

LEFT = "left"
RIGHT = "right"
AUTO = "auto"
SIDES = (LEFT, RIGHT, AUTO)

FD_STEP = 1e-4
RELATIVE_FLOOR = 1e-300


class MarginalFactor:
    """Scalar factor pi_j of a product density with derivatives and half-line integrals.

    Subclasses provide value/first/second; the tails default to adaptive quadrature.
    """
    quad: QuadratureSpec = QuadratureSpec()

    def value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def first(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def second(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def left_tail(self, y: np.ndarray) -> np.ndarray:
        """int_{-inf}^{y} pi_j."""
        return halfline_integral(self.value, y, LEFT, self.quad)

    def right_tail(self, y: np.ndarray) -> np.ndarray:
        """int_{y}^{inf} pi_j."""
        return halfline_integral(self.value, y, RIGHT, self.quad)

    @property
    def mass(self) -> float:
        zero = np.zeros(1)
        return float(self.left_tail(zero)[0] + self.right_tail(zero)[0])


class GaussianFactor(MarginalFactor):
    """Standard normal density."""
    def value(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)

    def first(self, y: np.ndarray) -> np.ndarray:
        return -np.asarray(y, dtype=float) * self.value(y)

    def second(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y * y - 1.0) * self.value(y)

    def left_tail(self, y: np.ndarray) -> np.ndarray:
        return special.ndtr(np.asarray(y, dtype=float))

    def right_tail(self, y: np.ndarray) -> np.ndarray:
        return special.ndtr(-np.asarray(y, dtype=float))


class BumpFactor(MarginalFactor):
    """y -> K((y - center) / width) for a compactly supported polynomial kernel K."""
    def __init__(self, kernel: KernelSpec, center: float, width: float) -> None:
        self.kernel = kernel
        self.center = float(center)
        self.width = float(width)

    def _u(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.center) / self.width

    def value(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.kernel(self._u(y)), dtype=float)

    def first(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.kernel.derivative(self._u(y), 1), dtype=float) / self.width

    def second(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.kernel.derivative(self._u(y), 2), dtype=float) / self.width ** 2

    def left_tail(self, y: np.ndarray) -> np.ndarray:
        return self.width * np.asarray(self.kernel.cumulative(self._u(y)), dtype=float)

    def right_tail(self, y: np.ndarray) -> np.ndarray:
        total = self.kernel.cumulative(1.0)
        return self.width * (total - np.asarray(self.kernel.cumulative(self._u(y)), dtype=float))


@dataclass(eq=False)
class ProductTerm:
    coef: float
    factors: List[MarginalFactor]

    def values(self, X: np.ndarray) -> np.ndarray:
        """(n, d) array of pi_j(X[:, j])."""
        return np.stack([f.value(X[:, j]) for j, f in enumerate(self.factors)], axis=1)

    def firsts(self, X: np.ndarray) -> np.ndarray:
        return np.stack([f.first(X[:, j]) for j, f in enumerate(self.factors)], axis=1)

    def seconds(self, X: np.ndarray) -> np.ndarray:
        return np.stack([f.second(X[:, j]) for j, f in enumerate(self.factors)], axis=1)

    @property
    def mass(self) -> float:
        return self.coef * float(np.prod([f.mass for f in self.factors]))


def _prod_except(V: np.ndarray, skip: Sequence[int]) -> np.ndarray:
    keep = [j for j in range(V.shape[1]) if j not in skip]
    if not keep:
        return np.ones(V.shape[0])
    return np.prod(V[:, keep], axis=1)


@dataclass(eq=False)
class DensitySpec:
    """g(x) = c_n sum_r coef_r prod_j pi_{r,j}(x_j).

    c_n is 1 / int sum_r ... when not given.
    """
    dim: int
    terms: List[ProductTerm]
    c_n: Optional[float] = None
    name: str = "density"

    def __post_init__(self) -> None:
        for term in self.terms:
            if len(term.factors) != self.dim:
                raise ValueError(f"Product term has {len(term.factors)} factors, density has dimension {self.dim}")
        if self.c_n is None:
            total = sum(term.mass for term in self.terms)
            if not total > 0:
                raise ValueError(f"Density has non-positive mass {total}")
            self.c_n = 1.0 / total

    def _points(self, x: Any) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        X = X.reshape(1, -1) if X.ndim == 1 else X
        if X.shape[1] != self.dim:
            raise ValueError(f"Points have dimension {X.shape[1]}, density has {self.dim}")
        return X

    def value(self, x: Any) -> np.ndarray:
        X = self._points(x)
        total = np.zeros(X.shape[0])
        for term in self.terms:
            total += term.coef * np.prod(term.values(X), axis=1)
        return self.c_n * total

    def __call__(self, x: Any) -> Any:
        values = self.value(x)
        return float(values[0]) if np.ndim(x) == 1 else values

    def gradient(self, x: Any) -> np.ndarray:
        X = self._points(x)
        grad = np.zeros(X.shape)
        for term in self.terms:
            V, D1 = term.values(X), term.firsts(X)
            for i in range(self.dim):
                grad[:, i] += term.coef * (_prod_except(V, [i]) * D1[:, i])
        return self.c_n * grad

    def hessian(self, x: Any) -> np.ndarray:
        X = self._points(x)
        hess = np.zeros((X.shape[0], self.dim, self.dim))
        for term in self.terms:
            V, D1, D2 = term.values(X), term.firsts(X), term.seconds(X)
            for i in range(self.dim):
                hess[:, i, i] += term.coef * (_prod_except(V, [i]) * D2[:, i])
                for k in range(i + 1, self.dim):
                    off = term.coef * (_prod_except(V, [i, k]) * D1[:, i] * D1[:, k])
                    hess[:, i, k] += off
                    hess[:, k, i] += off
        return self.c_n * hess

    def integral(self, radius: float, panels: int = 400, nodes: int = 8) -> float:
        """Tensor composite Gauss-Legendre integral over [-radius, radius]^d."""
        knots, weights = composite_legendre(-radius, radius, panels, nodes)
        total = 0.0
        for term in self.terms:
            total += term.coef * float(np.prod([np.sum(weights * f.value(knots)) for f in term.factors]))
        return self.c_n * total

    def check_working_box(self, radius: float, grid_size: int = 41, decay_tol: float = 1e-6) -> Dict[str, Any]:
        """Positivity on a grid, decay of every factor and derivative at the box edge, normalisation."""
        axis = np.linspace(-radius, radius, grid_size)
        mesh = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        positive = bool(np.all(self.value(mesh) > 0))
        fine = np.linspace(-radius, radius, 20 * grid_size + 1)
        edge = np.array([-radius, radius])
        decay = True
        for term in self.terms:
            for f in term.factors:
                for fn in (f.value, f.first):
                    peak = np.max(np.abs(fn(fine)))
                    if peak > 0 and np.max(np.abs(fn(edge))) >= decay_tol * peak:
                        decay = False
        mass = self.integral(radius)
        return {
            "positive": positive,
            "boundary_decay": decay,
            "mass": mass,
            "normalized": abs(mass - 1.0) <= 1e-6,
        }


def gaussian_density(d: int) -> DensitySpec:
    return DensitySpec(d, [ProductTerm(1.0, [GaussianFactor() for _ in range(d)])], name="gaussian")


def adjoint_continuous(
    g: DensitySpec,
    b: Callable[[np.ndarray], np.ndarray],
    a: np.ndarray,
    x: Any,
    divergence: Optional[np.ndarray] = None,
) -> float:
    """(1/2) sum_ij (a a^T)_ij d_ij g - sum_i (g d_i b^i + b^i d_i g)."""
    return float(sum(continuous_parts(g, b, a, x, divergence).values()))


def continuous_parts(
    g: DensitySpec,
    b: Callable[[np.ndarray], np.ndarray],
    a: np.ndarray,
    x: Any,
    divergence: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    x = as_point(x, g.dim)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    diffusion = a @ a.T
    drift = np.asarray(b(x), dtype=float).reshape(-1)
    if divergence is None:
        divergence = np.array([_partial(b, x, i) for i in range(g.dim)])
    value = float(g.value(x)[0])
    grad = g.gradient(x)[0]
    hess = g.hessian(x)[0]
    return {
        "diffusion": 0.5 * float(np.sum(diffusion * hess)),
        "stretch": -value * float(np.sum(divergence)),
        "transport": -float(np.dot(drift, grad)),
    }


def _partial(b: Callable[[np.ndarray], np.ndarray], x: np.ndarray, i: int, step: float = FD_STEP) -> float:
    """Central difference of the i-th component of b along x_i."""
    shift = np.zeros_like(x)
    shift[i] = step
    forward = np.asarray(b(x + shift), dtype=float).reshape(-1)[i]
    backward = np.asarray(b(x - shift), dtype=float).reshape(-1)[i]
    return float((forward - backward) / (2.0 * step))


def _shifts(gamma: np.ndarray, F: JumpMeasureSpec, quad: QuadratureSpec):
    nodes, weights = jump_nodes(F, quad)
    return nodes @ np.atleast_2d(np.asarray(gamma, dtype=float)).T, weights


def _discrete_partial(g: DensitySpec, gamma: np.ndarray, F: JumpMeasureSpec, i: int,
                      x: np.ndarray, quad: QuadratureSpec) -> float:
    shifts, weights = _shifts(gamma, F, quad)
    if weights.shape[0] == 0:
        return 0.0
    upto_i = np.zeros_like(shifts)
    upto_i[:, : i + 1] = shifts[:, : i + 1]
    before_i = np.zeros_like(shifts)
    before_i[:, :i] = shifts[:, :i]
    grad_i = g.gradient(x)[0, i]
    integrand = g.value(x - upto_i) - g.value(x - before_i) + shifts[:, i] * grad_i
    return float(np.dot(weights, integrand))


def adjoint_discrete_partial(
    g: DensitySpec,
    gamma: np.ndarray,
    F: JumpMeasureSpec,
    i: int,
    x: Any,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Coordinate piece i (0-based) of the jump part of the adjoint generator."""
    if not 0 <= i < g.dim:
        raise ValueError(f"Coordinate index {i} out of range for dimension {g.dim}")
    x = as_point(x, g.dim)
    value = _discrete_partial(g, gamma, F, i, x, quad)
    fine = _discrete_partial(g, gamma, F, i, x, quad.doubled()) if quad.check else None
    return checked(value, fine, quad, f"A*_(d,{i})")


def _discrete(g: DensitySpec, gamma: np.ndarray, F: JumpMeasureSpec, x: np.ndarray, quad: QuadratureSpec) -> float:
    shifts, weights = _shifts(gamma, F, quad)
    if weights.shape[0] == 0:
        return 0.0
    integrand = g.value(x - shifts) - g.value(x)[0] + shifts @ g.gradient(x)[0]
    return float(np.dot(weights, integrand))


def adjoint_discrete(
    g: DensitySpec,
    gamma: np.ndarray,
    F: JumpMeasureSpec,
    x: Any,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """int [g(x - gamma z) - g(x) + gamma z . grad g(x)] F(z) dz."""
    x = as_point(x, g.dim)
    value = _discrete(g, gamma, F, x, quad)
    fine = _discrete(g, gamma, F, x, quad.doubled()) if quad.check else None
    return checked(value, fine, quad, "A*_d")


def _halfline_jump_integral(
    g: DensitySpec,
    shifts: np.ndarray,
    weights: np.ndarray,
    i: int,
    x: np.ndarray,
    side: str,
) -> float:
    """Half-line integral of A*_(d,i) g along coordinate i, reduced to 1-D tails of the i-th factors."""
    total = 0.0
    for term in g.terms:
        shifted = x[None, :] - shifts
        before = np.ones(shifts.shape[0])
        for j in range(i):
            before *= term.factors[j].value(shifted[:, j])
        after = 1.0
        for j in range(i + 1, g.dim):
            after *= float(term.factors[j].value(x[j : j + 1])[0])
        factor = term.factors[i]
        points = np.concatenate([shifted[:, i], x[i : i + 1]])
        if side == LEFT:
            tails = factor.left_tail(points)
            increment = tails[:-1] - tails[-1]
        else:
            tails = factor.right_tail(points)
            increment = -(tails[:-1] - tails[-1])
        total += term.coef * after * float(np.dot(weights, before * increment))
    mean_shift = float(np.dot(weights, shifts[:, i]))
    return g.c_n * total + float(g.value(x)[0]) * mean_shift


def continuous_drift(g: DensitySpec, a: np.ndarray, x: Any) -> np.ndarray:
    """(1/(2g)) (a a^T) grad g at one or many points; b_g when there are no jumps."""
    X = np.asarray(x, dtype=float)
    points = X.reshape(1, -1) if X.ndim == 1 else X
    a = np.atleast_2d(np.asarray(a, dtype=float))
    values = g.value(points)
    if not np.all(values > 0):
        raise ValueError("Density must be positive at every drift evaluation point")
    drift = 0.5 * g.gradient(points) @ (a @ a.T).T / values[:, None]
    return drift[0] if X.ndim == 1 else drift


def _drift_vector(
    g: DensitySpec,
    a: np.ndarray,
    gamma: np.ndarray,
    F: JumpMeasureSpec,
    x: np.ndarray,
    quad: QuadratureSpec,
    side: str,
    coords: Optional[Sequence[int]] = None,
) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    coords = range(g.dim) if coords is None else coords
    value = float(g.value(x)[0])
    if not value > 0:
        raise ValueError(f"Density must be positive at x={x}, got {value}")
    grad = g.gradient(x)[0]
    drift = 0.5 * (a @ a.T) @ grad / value
    if F.intensity == 0.0:
        return drift
    shifts, weights = _shifts(gamma, F, quad)
    for i in coords:
        chosen = side if side != AUTO else (LEFT if x[i] < 0 else RIGHT)
        drift[i] += _halfline_jump_integral(g, shifts, weights, i, x, chosen) / value
    return drift


def drift_from_density(
    g: DensitySpec,
    a: np.ndarray,
    gamma: np.ndarray,
    F: JumpMeasureSpec,
    i: int,
    x: Any,
    quad: QuadratureSpec = QuadratureSpec(),
    side: str = AUTO,
) -> float:
    """Component i (0-based) of the drift b_g that makes g stationary.

    side="left" integrates A*_(d,i) g over (-inf, x_i], side="right" uses minus the integral
    over [x_i, inf); "auto" picks left for x_i < 0.
    """
    if side not in SIDES:
        raise ValueError(f"Unknown side: {side}. Available sides: {SIDES}")
    if not 0 <= i < g.dim:
        raise ValueError(f"Coordinate index {i} out of range for dimension {g.dim}")
    x = as_point(x, g.dim)
    return float(_drift_vector(g, a, gamma, F, x, quad, side, [i])[i])


@dataclass(eq=False)
class DriftField:
    """b_g as a drift map usable by ModelSpec; accepts one point or an (n, d) array."""
    g: DensitySpec
    a: np.ndarray
    gamma: np.ndarray
    F: JumpMeasureSpec
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    side: str = AUTO

    def __call__(self, x: Any) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        if self.F.intensity == 0.0:
            return continuous_drift(self.g, self.a, X)
        if X.ndim == 1:
            return _drift_vector(self.g, self.a, self.gamma, self.F, X, self.quad, self.side)
        return np.stack([_drift_vector(self.g, self.a, self.gamma, self.F, p, self.quad, self.side) for p in X])

    def component(self, x: np.ndarray, i: int, side: str) -> float:
        return float(_drift_vector(self.g, self.a, self.gamma, self.F, x, self.quad, side, [i])[i])

    def divergence(self, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        """d_i b^i by central differences, both evaluations on the side chosen at x."""
        out = np.zeros(self.g.dim)
        for i in range(self.g.dim):
            side = self.side if self.side != AUTO else (LEFT if x[i] < 0 else RIGHT)
            shift = np.zeros_like(x)
            shift[i] = step
            out[i] = (self.component(x + shift, i, side) - self.component(x - shift, i, side)) / (2.0 * step)
        return out


def drift_field(
    g: DensitySpec,
    a: np.ndarray,
    gamma: np.ndarray,
    F: JumpMeasureSpec,
    quad: QuadratureSpec = QuadratureSpec(),
) -> DriftField:
    return DriftField(g, np.atleast_2d(np.asarray(a, dtype=float)), np.atleast_2d(np.asarray(gamma, dtype=float)), F, quad)


@dataclass
class ResidualReport:
    points: List[Dict[str, Any]]
    max_residual: float
    max_relative: float

    def to_dict(self) -> Dict[str, Any]:
        return {"points": self.points, "max_residual": self.max_residual, "max_relative": self.max_relative}


def verify_stationarity(
    g: DensitySpec,
    model: ModelSpec,
    points: Sequence[Any],
    quad: QuadratureSpec = QuadratureSpec(),
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ResidualReport:
    """A*_(b_g) g at each point, relative to the largest constituent term.

    `drift` replaces b_g; a wrong drift must produce a large residual.
    """
    field_ = drift_field(g, model.a, model.gamma, model.jumps, quad)
    rows = []
    for point in points:
        x = as_point(point, g.dim)
        if drift is None:
            parts = continuous_parts(g, field_, model.a, x, field_.divergence(x))
        else:
            parts = continuous_parts(g, drift, model.a, x)
        discrete = adjoint_discrete(g, model.gamma, model.jumps, x, quad)
        continuous = float(sum(parts.values()))
        residual = continuous + discrete
        scale = max(max(abs(v) for v in parts.values()), abs(discrete), RELATIVE_FLOOR)
        rows.append({
            "x": x.tolist(),
            "residual": residual,
            "relative": abs(residual) / scale,
            "continuous_part": continuous,
            "discrete_part": discrete,
        })
    return ResidualReport(
        rows,
        max((abs(r["residual"]) for r in rows), default=0.0),
        max((r["relative"] for r in rows), default=0.0),
    )
