import math
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from numpy.polynomial import legendre

ESTIMATION = "estimation"
BUMP = "bump"
KINDS = (ESTIMATION, BUMP)

QUADRATURE_NODES = 64
SUP_GRID_SIZE = 10_000
MOMENT_TOL = 1e-10


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    knots, weights = legendre.leggauss(n)
    return 0.5 * (b - a) * knots + 0.5 * (b + a), 0.5 * (b - a) * weights


@dataclass(frozen=True)
class KernelSpec:
    """Polynomial kernel on [-1, 1], zero outside.

    `coefficients` are in the Legendre basis: K(u) = sum_k c_k P_k(u) for |u| <= 1.
    """
    order: int
    coefficients: tuple
    kind: str = ESTIMATION

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"Unknown kernel kind: {self.kind}. Available kinds: {KINDS}")
        if self.order < 1:
            raise ValueError(f"Kernel order must be >= 1, got {self.order}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def polynomial(self) -> Legendre:
        return Legendre(np.asarray(self.coefficients))

    def __call__(self, u: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return eval_kernel(self, u)

    def derivative(self, u: Union[float, np.ndarray], k: int = 1) -> Union[float, np.ndarray]:
        """k-th derivative of K, zero outside [-1, 1]."""
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        values = np.where(inside, self.polynomial.deriv(k)(np.clip(u, -1.0, 1.0)), 0.0)
        return values if values.ndim else float(values)

    def cumulative(self, u: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Integral of K over [-1, u]."""
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        values = self.polynomial.integ(lbnd=-1.0)(u)
        return values if np.ndim(values) else float(values)

    def moments(self, max_power: int) -> np.ndarray:
        nodes, weights = gauss_legendre(-1.0, 1.0, QUADRATURE_NODES)
        values = self.polynomial(nodes)
        return np.array([np.sum(weights * values * nodes ** l) for l in range(max_power + 1)])

    def sup_norm(self, k: int = 0) -> float:
        grid = np.linspace(-1.0, 1.0, SUP_GRID_SIZE)
        values = self.derivative(grid, k) if k > 0 else eval_kernel(self, grid)
        return float(np.max(np.abs(values)))

    def extrema(self) -> Tuple[float, float]:
        """(min K, max K) on [-1, 1] from the real critical points and the endpoints."""
        roots = self.polynomial.deriv().roots()
        real = roots[np.abs(roots.imag) <= 1e-12].real
        candidates = np.concatenate([real[np.abs(real) <= 1.0], [-1.0, 1.0]])
        values = eval_kernel(self, candidates)
        return float(np.min(values)), float(np.max(values))

    def validate(self) -> None:
        """Check the invariants of the kernel kind, raising ValueError on failure."""
        sup = self.sup_norm()
        if not (np.isfinite(sup) and sup > 0):
            raise ValueError(f"Kernel sup-norm must be finite and positive, got {sup}")
        if self.kind == ESTIMATION:
            moments = self.moments(self.order)
            if abs(moments[0] - 1.0) > MOMENT_TOL:
                raise ValueError(f"Zeroth moment is {moments[0]}, expected 1")
            worst = np.max(np.abs(moments[1:]))
            if worst > MOMENT_TOL:
                raise ValueError(f"Moments 1..{self.order} do not vanish (max {worst:.3e})")
        else:
            if abs(eval_kernel(self, 0.0) - 1.0) > MOMENT_TOL:
                raise ValueError("Bump kernel must satisfy K(0) = 1")
            if abs(self.moments(0)[0]) > MOMENT_TOL:
                raise ValueError("Bump kernel must integrate to 0")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "order": self.order, "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "KernelSpec":
        if "coefficients" not in payload:
            return build_kernel(payload.get("kind", ESTIMATION), payload.get("order", 2))
        spec = cls(int(payload["order"]), tuple(payload["coefficients"]), payload.get("kind", ESTIMATION))
        spec.validate()
        return spec


def build_estimation_kernel(M: int) -> KernelSpec:
    """Even polynomial kernel of order M on [-1, 1].

    The Legendre projection of the point evaluation at 0 reproduces every polynomial
    of degree <= M, which gives int K = 1 and int K u^l = 0 for l = 1..M. One more even
    Legendre term of degree > M pins K(+-1) = 0 without touching those moments.
    """
    if M < 1:
        raise ValueError(f"Kernel order must be >= 1, got {M}")
    top = M + 1 if M % 2 == 1 else M + 2
    coefficients = np.zeros(top + 1)
    for k in range(0, M + 1, 2):
        unit = np.zeros(k + 1)
        unit[k] = 1.0
        coefficients[k] = 0.5 * (2 * k + 1) * legendre.legval(0.0, unit)
    # P_k(1) = 1 for every k
    coefficients[top] = -coefficients.sum()
    spec = KernelSpec(M, tuple(coefficients), ESTIMATION)
    spec.validate()
    return spec


def build_bump_kernel() -> KernelSpec:
    """K(u) = (1 - u^2)^4 (1 + c u^2) with c fixed by int K = 0; K(0) = 1."""
    base = Polynomial([1.0, 0.0, -1.0]) ** 4
    u2 = Polynomial([0.0, 0.0, 1.0])

    def integral(p: Polynomial) -> float:
        antiderivative = p.integ()
        return float(antiderivative(1.0) - antiderivative(-1.0))

    c = -integral(base) / integral(base * u2)
    bump = (base * (1.0 + c * u2)).convert(kind=Legendre)
    spec = KernelSpec(1, tuple(bump.coef), BUMP)
    spec.validate()
    return spec


def build_kernel(kind: str, order: int = 2) -> KernelSpec:
    if kind == ESTIMATION:
        return build_estimation_kernel(order)
    if kind == BUMP:
        return build_bump_kernel()
    raise ValueError(f"Unknown kernel kind: {kind}. Available kinds: {KINDS}")


def default_order(beta: Sequence[float]) -> int:
    return max(1, int(math.ceil(max(beta))))


def eval_kernel(spec: KernelSpec, u: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    values = np.where(inside, legendre.legval(np.clip(u, -1.0, 1.0), np.asarray(spec.coefficients)), 0.0)
    return values if values.ndim else float(values)


def _bandwidth_array(h: Any) -> np.ndarray:
    h = np.asarray(getattr(h, "h", h), dtype=float).reshape(-1)
    if np.any(h <= 0.0) or np.any(h >= 0.5):
        raise ValueError(f"Bandwidths must lie in (0, 1/2), got {h}")
    return h


def eval_product_kernel(spec: KernelSpec, h: Any, x: Sequence[float], y: Any) -> Union[float, np.ndarray]:
    """(prod h_l)^-1 prod_m K((x_m - y_m) / h_m); `y` may be a single point or an (n, d) array."""
    h = _bandwidth_array(h)
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != h.shape[0] or y.shape[-1] != h.shape[0]:
        raise ValueError(
            f"Dimension mismatch: x has {x.shape[0]}, y has {y.shape[-1]}, h has {h.shape[0]}"
        )
    values = np.prod(eval_kernel(spec, (x - y) / h), axis=-1) / np.prod(h)
    return values if np.ndim(values) else float(values)
