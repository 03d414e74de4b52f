import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from estimator import BandwidthVector

LOG_REGIME = "log_regime"
NO_LOG_REGIME = "no_log_regime"
SLACK = "slack"
EQUAL = "equal"
RULES = (SLACK, EQUAL)

CLIP = 0.499


@dataclass(frozen=True)
class SmoothnessSpec:
    """Ascending Hölder exponents beta and radii L of an anisotropic class."""
    beta: tuple
    L: tuple = None

    def __post_init__(self) -> None:
        beta = tuple(float(b) for b in self.beta)
        L = tuple(1.0 for _ in beta) if self.L is None else tuple(float(v) for v in self.L)
        if len(beta) == 0:
            raise ValueError("beta is empty")
        if len(L) != len(beta):
            raise ValueError(f"L has {len(L)} entries, beta has {len(beta)}")
        if any(b < 1.0 or not math.isfinite(b) for b in beta):
            raise ValueError(f"Smoothness exponents must be finite and >= 1, got {beta}")
        if any(b1 > b2 for b1, b2 in zip(beta, beta[1:])):
            raise ValueError(f"beta must be sorted ascending, got {beta}")
        if any(v <= 0 for v in L):
            raise ValueError(f"Radii must be positive, got {L}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "L", L)

    @classmethod
    def isotropic(cls, beta: float, d: int, L: float = 1.0) -> "SmoothnessSpec":
        return cls(tuple([beta] * d), tuple([L] * d))

    @property
    def dim(self) -> int:
        return len(self.beta)

    def to_dict(self) -> Dict[str, Any]:
        return {"beta": list(self.beta), "L": list(self.L)}


@dataclass(frozen=True)
class BandwidthPlan:
    T: float
    exponents: tuple
    h: BandwidthVector
    regime: str
    clipped: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "exponents": list(self.exponents),
            "h": list(self.h.h),
            "regime": self.regime,
            "clipped": self.clipped,
        }


def _require_dim3(d: int) -> None:
    if d < 3:
        raise ValueError(f"Anisotropic bandwidth selection needs d >= 3, got d={d}")


def harmonic_mean_beta3(spec: SmoothnessSpec) -> float:
    """Harmonic mean of beta_3, ..., beta_d."""
    _require_dim3(spec.dim)
    tail = spec.beta[2:]
    return len(tail) / sum(1.0 / b for b in tail)


def harmonic_mean_beta(spec: SmoothnessSpec) -> float:
    return spec.dim / sum(1.0 / b for b in spec.beta)


def rate_exponent(spec: SmoothnessSpec) -> float:
    beta3 = harmonic_mean_beta3(spec)
    return 2.0 * beta3 / (2.0 * beta3 + spec.dim - 2)


def mse_rate(spec: SmoothnessSpec, T: float) -> float:
    if T <= math.e:
        raise ValueError(f"T must exceed e, got {T}")
    return (math.log(T) / T) ** rate_exponent(spec)


def cond_beta(spec: SmoothnessSpec) -> bool:
    """(1/2)(1/beta_1 + 1/beta_2) > 1/beta_bar_3, the condition that puts the optimal plan in the log regime."""
    return 0.5 * (1.0 / spec.beta[0] + 1.0 / spec.beta[1]) > 1.0 / harmonic_mean_beta3(spec)


def exponent_thresholds(spec: SmoothnessSpec) -> np.ndarray:
    beta3 = harmonic_mean_beta3(spec)
    beta = np.asarray(spec.beta)
    return beta3 / (beta * (2.0 * beta3 + spec.dim - 2))


def regime(h: Any) -> str:
    """Log regime iff h_1 h_2 < (prod_{l>=3} h_l)^{2/(d-2)}; equality goes to the no-log regime."""
    h = np.asarray(getattr(h, "h", h), dtype=float)
    _require_dim3(h.shape[0])
    rest = float(np.prod(h[2:])) ** (2.0 / (h.shape[0] - 2))
    return LOG_REGIME if h[0] * h[1] < rest else NO_LOG_REGIME


def _clip(h: np.ndarray) -> Tuple[np.ndarray, bool]:
    clipped = bool(np.any(h >= 0.5))
    if clipped:
        warnings.warn(f"Bandwidths {h} clipped to {CLIP}")
    return np.minimum(h, CLIP), clipped


def optimal_bandwidths(
    spec: SmoothnessSpec,
    T: float,
    slack: float = 0.1,
    rule: str = SLACK,
) -> BandwidthPlan:
    """h_l(T) = (log T / T)^{a_l}; a_1, a_2 sit strictly above their thresholds."""
    if T <= math.e:
        raise ValueError(f"T must exceed e, got {T}")
    if slack <= 0:
        raise ValueError(f"slack must be positive, got {slack}")
    if rule not in RULES:
        raise ValueError(f"Unknown rule: {rule}. Available rules: {RULES}")
    exponents = exponent_thresholds(spec).copy()
    if rule == SLACK:
        exponents[:2] = (1.0 + slack) * exponents[:2]
    else:
        exponents[:2] = (1.0 + slack) * np.max(exponents[:2])
    h, clipped = _clip((math.log(T) / T) ** exponents)
    h = BandwidthVector(tuple(h))
    return BandwidthPlan(float(T), tuple(float(a) for a in exponents), h, regime(h), clipped)


def isotropic_bandwidth(beta: float, d: int, T: float) -> BandwidthVector:
    if T <= 1:
        raise ValueError(f"T must exceed 1, got {T}")
    _require_dim3(d)
    value = T ** (-1.0 / (2.0 * beta + d - 2)) if math.isfinite(beta) else 1.0
    h, _ = _clip(np.full(d, value))
    return BandwidthVector(tuple(h))


def variance_bound(h: Any, T: float, c: float = 1.0) -> Tuple[float, str]:
    h = np.asarray(getattr(h, "h", h), dtype=float)
    if T <= 0 or c <= 0:
        raise ValueError(f"T and c must be positive, got T={T}, c={c}")
    tag = regime(h)
    rest = float(np.prod(h[2:]))
    if tag == LOG_REGIME:
        return c / T * float(np.sum(np.abs(np.log(h)))) / rest, tag
    return c / T / rest, tag


def bias_envelope(h: Any, spec: SmoothnessSpec) -> float:
    """sum_j h_j^{beta_j}."""
    h = np.asarray(getattr(h, "h", h), dtype=float)
    return float(np.sum(h ** np.asarray(spec.beta)))


def parse_beta(beta: Sequence[Any]) -> SmoothnessSpec:
    return SmoothnessSpec(tuple(float(b) for b in beta))
