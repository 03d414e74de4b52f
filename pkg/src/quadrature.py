import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate

from kernels import gauss_legendre
from model import GAUSSIAN, POINT_MASS, JumpMeasureSpec
from utils import QuadratureError


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and tolerances for jump-space and half-line integrals.

    hermite_nodes / legendre_nodes are per dimension; the jump rule is their tensor product.
    """
    hermite_nodes: int = 8
    legendre_nodes: int = 12
    radius: float = 8.0
    halfline_epsabs: float = 1e-13
    halfline_epsrel: float = 1e-11
    halfline_limit: int = 2000
    check: bool = False
    check_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.hermite_nodes < 1 or self.legendre_nodes < 1:
            raise ValueError("Node counts must be positive")
        if self.radius <= 0:
            raise ValueError(f"Truncation radius must be positive, got {self.radius}")

    def doubled(self) -> "QuadratureSpec":
        return replace(
            self,
            hermite_nodes=2 * self.hermite_nodes,
            legendre_nodes=2 * self.legendre_nodes,
            halfline_limit=2 * self.halfline_limit,
            check=False,
        )

    def to_dict(self) -> dict:
        return {
            "hermite_nodes": self.hermite_nodes,
            "legendre_nodes": self.legendre_nodes,
            "radius": self.radius,
            "halfline_epsabs": self.halfline_epsabs,
            "halfline_epsrel": self.halfline_epsrel,
            "check": self.check,
        }


def _tensor(knots: np.ndarray, weights: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes = np.array(list(itertools.product(knots, repeat=d)))
    tensor_weights = np.array([np.prod(w) for w in itertools.product(weights, repeat=d)])
    return nodes, tensor_weights


def jump_nodes(F: JumpMeasureSpec, quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes z_k and weights w_k with sum_k w_k phi(z_k) ~ int phi(z) F(z) dz; sum w_k = intensity."""
    d = F.dim
    if F.intensity == 0.0:
        return np.zeros((0, d)), np.zeros(0)
    if F.law == GAUSSIAN:
        knots, weights = hermite_e.hermegauss(quad.hermite_nodes)
        weights = weights / math.sqrt(2.0 * math.pi)
        nodes, tensor_weights = _tensor(knots, weights, d)
        return nodes @ F.covariance_root().T, F.intensity * tensor_weights
    if F.law == POINT_MASS:
        return F.atom[None, :].copy(), np.array([F.intensity])
    knots, weights = gauss_legendre(-quad.radius, quad.radius, quad.legendre_nodes)
    nodes, tensor_weights = _tensor(knots, weights, d)
    return nodes, F.intensity * tensor_weights * np.asarray(F.density(nodes), dtype=float)


def halfline_integral(
    fn: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    side: str,
    quad: QuadratureSpec,
) -> np.ndarray:
    """int_{-inf}^{y} fn (side="left") or int_{y}^{inf} fn (side="right"), vectorised over y.

    Uses w = y -+ (1 - u)/u on u in (0, 1] with adaptive Gauss-Kronrod.
    """
    y = np.asarray(y, dtype=float)
    sign = -1.0 if side == "left" else 1.0
    if side not in ("left", "right"):
        raise ValueError(f"Unknown side: {side}")

    def integrand(u: float) -> np.ndarray:
        if u <= 0.0:
            return np.zeros_like(y)
        with np.errstate(over="ignore", under="ignore"):
            return fn(y + sign * (1.0 - u) / u) / (u * u)

    value, error, info = integrate.quad_vec(
        integrand, 0.0, 1.0,
        epsabs=quad.halfline_epsabs, epsrel=quad.halfline_epsrel,
        norm="max", limit=quad.halfline_limit, full_output=True,
    )
    if info.status != 0 or not np.all(np.isfinite(value)):
        raise QuadratureError(
            "Half-line integral did not converge",
            {"status": int(info.status), "error": float(error), "intervals": int(info.intervals.shape[0])},
        )
    return value


def composite_legendre(a: float, b: float, panels: int = 400, nodes: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [a, b]."""
    edges = np.linspace(a, b, panels + 1)
    knots, weights = gauss_legendre(-1.0, 1.0, nodes)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    all_knots = (mid[:, None] + half[:, None] * knots[None, :]).reshape(-1)
    all_weights = (half[:, None] * weights[None, :]).reshape(-1)
    return all_knots, all_weights


def checked(value: float, fine: Optional[float], quad: QuadratureSpec, what: str) -> float:
    """Compare a result against its doubled-node counterpart when the self-consistency check is on."""
    if fine is None:
        return value
    gap = abs(fine - value)
    if gap > quad.check_tol * max(1.0, abs(fine)):
        raise QuadratureError(
            f"{what} is not stable under node doubling",
            {"coarse": value, "fine": fine, "gap": gap, "tolerance": quad.check_tol},
        )
    return value
