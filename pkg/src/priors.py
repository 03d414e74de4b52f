import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from bandwidth import SmoothnessSpec, harmonic_mean_beta3
from estimator import BandwidthVector
from generator import BumpFactor, DensitySpec, DriftField, MarginalFactor, ProductTerm, drift_field
from kernels import KernelSpec, build_bump_kernel, gauss_legendre
from model import GAUSSIAN, POINT_MASS, JumpMeasureSpec
from quadrature import QuadratureSpec, composite_legendre, jump_nodes
from utils import CalibrationInfeasibleError, as_point, make_rng

DEFAULT_ETA = 0.4
WORKING_BOX_FACTOR = 25.0

# Ad constants achieved by the profile below
C2 = 4.0
C5 = 40.0
C5_NOMINAL = 16.0
MARGIN_TOL = 1e-9


def smooth_step(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity step S with S = 0 for t <= 0 and S = 1 for t >= 1, and its first two derivatives."""
    t = np.asarray(t, dtype=float)
    inner = (t > 0.0) & (t < 1.0)
    ti = np.where(inner, t, 0.5)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        v = 1.0 / (1.0 - ti) - 1.0 / ti
        v1 = 1.0 / (1.0 - ti) ** 2 + 1.0 / ti ** 2
        v2 = 2.0 / (1.0 - ti) ** 3 - 2.0 / ti ** 3
        s = special.expit(v)
        ds = s * (1.0 - s)
        s1 = ds * v1
        s2 = ds * (1.0 - 2.0 * s) * v1 ** 2 + ds * v2
    value = np.where(inner, s, np.where(t >= 1.0, 1.0, 0.0))
    first = np.where(inner, np.nan_to_num(s1), 0.0)
    second = np.where(inner, np.nan_to_num(s2), 0.0)
    return value, first, second


def profile(r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """f(r) = exp(-phi(r)) for r >= 0 with phi = r sigma(r), sigma(r) = S(2r - 1), and f', f''.

    f = 1 on [0, 1/2], f = e^{-r} on [1, inf).
    """
    r = np.asarray(r, dtype=float)
    sigma, s1, s2 = smooth_step(2.0 * r - 1.0)
    phi = r * sigma
    phi1 = sigma + 2.0 * r * s1
    phi2 = 4.0 * s1 + 4.0 * r * s2
    f = np.exp(-phi)
    return f, -phi1 * f, (phi1 ** 2 - phi2) * f


def profile_bounds(r_max: float = 20.0, n: int = 200_001) -> Dict[str, Any]:
    """Constants achieved by f on [0, r_max]."""
    r = np.linspace(0.0, r_max, n)
    f, f1, f2 = profile(r)
    envelope = np.exp(r)
    gap = (r > 0.5) & (r < 1.0)
    return {
        "lower": float(np.min(f * envelope)),
        "upper": float(np.max(f * envelope)),
        "first": float(np.max(np.abs(f1) * envelope)),
        "second": float(np.max(np.abs(f2) * envelope)),
        "monotone": bool(np.all(np.diff(f) <= 0.0)),
        "gap_range": bool(np.all((f[gap] >= math.exp(-1.0)) & (f[gap] <= 1.0))),
    }


class ProfileFactor(MarginalFactor):
    """y -> f(scale |y|)."""
    def __init__(self, scale: float, quad: Optional[QuadratureSpec] = None) -> None:
        self.scale = float(scale)
        if quad is not None:
            self.quad = quad

    def value(self, y: np.ndarray) -> np.ndarray:
        return profile(self.scale * np.abs(np.asarray(y, dtype=float)))[0]

    def first(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.scale * np.sign(y) * profile(self.scale * np.abs(y))[1]

    def second(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.scale ** 2 * profile(self.scale * np.abs(y))[2]


@dataclass(eq=False)
class PriorZero:
    """pi_0(x) = c_eta prod_k f(eta (a a^T)^{-1}_kk |x_k|)."""
    eta: float = DEFAULT_ETA
    a: np.ndarray = field(default_factory=lambda: np.eye(3))
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self) -> None:
        if not 0.0 < self.eta < 0.5:
            raise ValueError(f"eta must lie in (0, 1/2), got {self.eta}")
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.inverse_diffusion = np.linalg.inv(self.a @ self.a.T)
        self.scales = self.eta * np.diag(self.inverse_diffusion)
        self.factors = [ProfileFactor(s, self.quad) for s in self.scales]
        self._density = DensitySpec(self.dim, [ProductTerm(1.0, self.factors)], name="pi0")

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def c_eta(self) -> float:
        return self._density.c_n

    @property
    def k1(self) -> float:
        return float(np.max(np.diag(self.inverse_diffusion)))

    @property
    def k3(self) -> float:
        return float(np.min(np.diag(self.inverse_diffusion)))

    @property
    def working_radius(self) -> float:
        return WORKING_BOX_FACTOR / (self.eta * self.k3)

    def density(self) -> DensitySpec:
        return self._density

    def to_dict(self) -> Dict[str, Any]:
        return {"eta": self.eta, "a": self.a.tolist(), "c_eta": self.c_eta}


@dataclass(eq=False)
class PriorOne:
    """pi_1 = pi_0 + (1/M_T) prod_l K((x_l - x0_l) / h_l)."""
    base: PriorZero
    M_T: float
    h: BandwidthVector
    x0: Optional[np.ndarray] = None
    bump: KernelSpec = field(default_factory=build_bump_kernel)

    def __post_init__(self) -> None:
        d = self.base.dim
        self.x0 = np.full(d, 0.5) if self.x0 is None else as_point(self.x0, d, "x0")
        if self.h.dim != d:
            raise ValueError(f"Bandwidth has dimension {self.h.dim}, prior has {d}")
        if not self.M_T > 0:
            raise ValueError(f"M_T must be positive, got {self.M_T}")
        self.margin = positivity_margin(self.base, self.M_T, self.h, self.x0, self.bump)
        if not self.margin > 0:
            raise CalibrationInfeasibleError(
                "positivity",
                f"pi_1 can turn negative on the bump box: margin {self.margin:.3e} at M_T={self.M_T:.4g}",
            )
        bumps: List[MarginalFactor] = [
            BumpFactor(self.bump, c, w) for c, w in zip(self.x0, self.h.h)
        ]
        self._density = DensitySpec(
            d,
            [ProductTerm(self.base.c_eta, self.base.factors), ProductTerm(1.0 / self.M_T, bumps)],
            c_n=1.0,
            name="pi1",
        )

    @classmethod
    def from_calibration(cls, base: PriorZero, calibration: "Calibration", x0: Any = None) -> "PriorOne":
        return cls(base, calibration.M_T, calibration.h, x0)

    def density(self) -> DensitySpec:
        return self._density

    def bump_box(self) -> Tuple[np.ndarray, np.ndarray]:
        h = self.h.as_array()
        return self.x0 - h, self.x0 + h

    def is_positive(self) -> bool:
        return bool(self.margin > 0)

    def to_dict(self) -> Dict[str, Any]:
        return {"base": self.base.to_dict(), "M_T": self.M_T, "h": list(self.h.h), "x0": self.x0.tolist()}


def most_negative_product(k_min: float, k_max: float, d: int) -> float:
    """Smallest value of a product of d numbers drawn from [k_min, k_max], k_min < 0 < k_max."""
    return min(-(abs(k_min) ** j) * k_max ** (d - j) for j in range(1, d + 1, 2))


def positivity_margin(base: PriorZero, M_T: float, h: BandwidthVector, x0: Any, bump: KernelSpec) -> float:
    """Lower bound of pi_1 on the bump box: min pi_0 there plus the deepest bump product over M_T.

    pi_0 decreases in every |x_k|, so its minimum sits at the box corner farthest from the origin.
    """
    x0 = as_point(x0, base.dim, "x0")
    w = h.as_array()
    far = np.maximum(np.abs(x0 - w), np.abs(x0 + w))
    k_min, k_max = bump.extrema()
    return float(base.density()(far) + most_negative_product(k_min, k_max, base.dim) / M_T)


def eval_pi0(p: PriorZero, x: Any) -> float:
    return p.density()(as_point(x, p.dim))


def eval_pi1(p: PriorOne, x: Any) -> float:
    return p.density()(as_point(x, p.base.dim))


@dataclass
class Calibration:
    T: float
    M_T: float
    h: BandwidthVector
    epsilon: float
    constraints: Dict[str, bool]
    values: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "M_T": self.M_T,
            "h": list(self.h.h),
            "epsilon": self.epsilon,
            "constraints": self.constraints,
            "values": self.values,
        }


def calibrate(
    T: float,
    spec: SmoothnessSpec,
    epsilon: float = DEFAULT_ETA,
    base: Optional[PriorZero] = None,
    x0: Any = None,
    bump: Optional[KernelSpec] = None,
) -> Calibration:
    """M_T = T^{beta3/(2 beta3 + d - 2)}; h_j saturates 1/M_T = eps h_j^{beta_j} for j >= 2, h_1 = h_2.

    Given `base`, pi_1 built on it at x0 (default (1/2, ..., 1/2)) must also stay positive.
    """
    if T <= 1:
        raise ValueError(f"T must exceed 1, got {T}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if any(b <= 1.0 for b in spec.beta):
        raise ValueError(f"Calibration needs every beta_i > 1, got {spec.beta}")
    d = spec.dim
    beta3 = harmonic_mean_beta3(spec)
    beta = np.asarray(spec.beta)
    M_T = T ** (beta3 / (2.0 * beta3 + d - 2))
    h = (1.0 / (epsilon * M_T)) ** (1.0 / beta)
    h[0] = h[1]
    if np.any(h >= 0.5):
        raise CalibrationInfeasibleError(
            "bandwidth_cap", f"Calibrated bandwidths {h} reach 1/2 at T={T}, epsilon={epsilon}"
        )
    holder = float(np.max(1.0 / (M_T * epsilon * h ** beta)))
    b_ratio = float(np.sum(1.0 / h) / M_T)
    finale = float(T / M_T ** 2 * np.prod(h) * np.sum(1.0 / h ** 2))
    finale_bound = float(d * epsilon ** (-np.sum(1.0 / beta[2:])))
    constraints = {
        "calib_holder": holder <= 1.0 + 1e-12,
        "calib_b": b_ratio < 1.0,
        "calib_finale": finale <= finale_bound * (1.0 + 1e-12),
    }
    values = {"holder_ratio": holder, "calib_b_ratio": b_ratio, "finale": finale, "finale_bound": finale_bound}
    bandwidth = BandwidthVector(tuple(h))
    if base is not None:
        if base.dim != d:
            raise ValueError(f"Prior has dimension {base.dim}, smoothness has {d}")
        x0 = np.full(d, 0.5) if x0 is None else x0
        margin = positivity_margin(base, M_T, bandwidth, x0, build_bump_kernel() if bump is None else bump)
        constraints["positivity"] = margin > 0
        values["positivity_margin"] = margin
    for name, ok in constraints.items():
        if not ok:
            raise CalibrationInfeasibleError(name)
    return Calibration(float(T), float(M_T), bandwidth, float(epsilon), constraints, values)


def bump_holder_constant(bump: KernelSpec, beta_i: float, d: int) -> float:
    """||K||^{d-1} ||K^{(k+1)}||^{frac} (2 ||K^{(k)}||)^{1 - frac}, k the largest integer below beta_i."""
    k = int(math.ceil(beta_i)) - 1
    frac = beta_i - k
    return (
        bump.sup_norm() ** (d - 1)
        * bump.sup_norm(k + 1) ** frac
        * (2.0 * bump.sup_norm(k)) ** (1.0 - frac)
    )


def max_epsilon(spec: SmoothnessSpec, bump: Optional[KernelSpec] = None) -> float:
    """Largest epsilon for which the bump keeps pi_1 inside the Hölder class with radii 2L."""
    bump = build_bump_kernel() if bump is None else bump
    d = spec.dim
    bounds = []
    for L_i, beta_i in zip(spec.L, spec.beta):
        bounds.append(L_i / bump_holder_constant(bump, beta_i, d))
        for k in range(int(math.ceil(beta_i))):
            bounds.append(L_i / (bump.sup_norm() ** (d - 1) * bump.sup_norm(k)))
    return float(min(bounds))


def _axis_derivative(density: DensitySpec, X: np.ndarray, i: int, k: int) -> np.ndarray:
    if k == 0:
        return density.value(X)
    if k == 1:
        return density.gradient(X)[:, i]
    if k == 2:
        return density.hessian(X)[:, i, i]
    raise ValueError(f"Hölder quotients support derivative orders up to 2, got {k}")


def holder_quotients(density: DensitySpec, spec: SmoothnessSpec, points: Any, steps: Sequence[float]) -> np.ndarray:
    """Per axis, max over points and steps of |D^k g(x + t e_i) - D^k g(x)| / |t|^{beta_i - k}."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    quotients = np.zeros(density.dim)
    for i, beta_i in enumerate(spec.beta):
        k = int(math.ceil(beta_i)) - 1
        base = _axis_derivative(density, X, i, k)
        for t in steps:
            shifted = X.copy()
            shifted[:, i] += t
            diff = np.abs(_axis_derivative(density, shifted, i, k) - base)
            quotients[i] = max(quotients[i], float(np.max(diff)) / abs(t) ** (beta_i - k))
    return quotients


@dataclass
class AdReport:
    conditions: List[Dict[str, Any]]
    constants: Dict[str, float]
    c_hat_ok: Optional[bool] = None
    c_hat_ok_profile: Optional[bool] = None

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.conditions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "conditions": self.conditions,
            "constants": self.constants,
            "passed": self.passed,
            "c_hat_ok": self.c_hat_ok,
            "c_hat_ok_profile": self.c_hat_ok_profile,
        }


def _condition(name: str, observed: float, bound: float) -> Dict[str, Any]:
    margin = 1.0 - observed / bound if bound > 0 else -observed
    return {"name": name, "observed": observed, "bound": bound, "worst_margin": margin, "pass": margin >= -MARGIN_TOL}


def check_ad_conditions(
    p: PriorZero,
    n_points: int = 801,
    F: Optional[JumpMeasureSpec] = None,
    gamma: Optional[np.ndarray] = None,
    epsilon0: Optional[float] = None,
) -> AdReport:
    """Sample the five conditions on pi_0 factor by factor over the working box."""
    B = p.working_radius
    y = np.linspace(-B, B, n_points)
    z = np.linspace(-B, B, n_points // 2 + 1)
    eps = p.eta
    k1, k3 = p.k1, p.k3
    c3 = 4.0 / (eps * k3)
    c4 = 4.0 * eps * k1
    R = math.sqrt(p.dim) / (eps * k3)
    worst = {name: 0.0 for name in ("decay", "shift", "tail", "log_slope_tail", "log_slope", "hessian")}
    hessian_bound = 0.0
    log_slopes, curvatures = [], []
    for j, factor in enumerate(p.factors):
        s = factor.scale
        inv_jj = p.inverse_diffusion[j, j]
        values, firsts, seconds = factor.value(y), factor.first(y), factor.second(y)
        edge = np.array([-B, B])
        worst["decay"] = max(
            worst["decay"],
            float(np.max(np.abs(factor.value(edge)))) / float(np.max(values)),
            float(np.max(np.abs(factor.first(edge)))) / float(np.max(np.abs(firsts))),
        )
        base = factor.value(y)[:, None]
        growth = np.exp(eps * inv_jj * np.abs(z))[None, :]
        for sign in (1.0, -1.0):
            shifted = factor.value(y[:, None] + sign * z[None, :])
            worst["shift"] = max(worst["shift"], float(np.max(shifted / (growth * base))))
        left = y[y < 0]
        right = y[y > 0]
        worst["tail"] = max(
            worst["tail"],
            float(np.max(factor.left_tail(left) / factor.value(left))),
            float(np.max(factor.right_tail(right) / factor.value(right))),
        )
        ratio = firsts / values
        tail = np.abs(y) > R / math.sqrt(p.dim)
        excess = ratio[tail] + eps * inv_jj * np.sign(y[tail])
        worst["log_slope_tail"] = max(worst["log_slope_tail"], float(np.max(excess)) if excess.size else 0.0)
        worst["log_slope"] = max(worst["log_slope"], float(np.max(np.abs(ratio))))
        log_slopes.append(float(np.max(np.abs(ratio))) / (inv_jj * eps))
        curvatures.append(float(np.max(np.abs(seconds / values))) / (inv_jj * eps) ** 2)
        hessian_bound = max(hessian_bound, float(np.max(np.abs(seconds))), float(np.max(np.abs(firsts))) ** 2)
    hessian_ratio = max(max(curvatures), max(a * b for a in log_slopes for b in log_slopes))
    c5_tilde = p.c_eta * hessian_bound
    conditions = [
        _condition("decay", worst["decay"], 1e-6),
        _condition("shift", worst["shift"], C2),
        _condition("tail", worst["tail"], c3),
        # on the tail the log-derivative equals the bound exactly
        {"name": "log_slope_tail", "observed": worst["log_slope_tail"], "bound": 0.0,
         "worst_margin": -worst["log_slope_tail"], "pass": worst["log_slope_tail"] <= MARGIN_TOL},
        _condition("log_slope", worst["log_slope"], c4),
        _condition("hessian", hessian_ratio, C5),
    ]
    constants = {
        "k1": k1, "k3": k3, "c2": C2, "c3": c3, "c4": c4, "c5": C5, "c5_nominal": C5_NOMINAL,
        "c5_tilde": c5_tilde, "eps_tilde": eps, "R": R,
    }
    report = AdReport(conditions, constants)
    if F is not None:
        gamma = np.eye(p.dim) if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))
        k2 = float(np.max(np.abs(gamma.T @ gamma)))
        row_norm = float(np.max(np.linalg.norm(gamma, axis=1)))
        eps0 = 2.0 * eps * row_norm * p.dim * k1 if epsilon0 is None else float(epsilon0)
        nodes, weights = jump_nodes(F, QuadratureSpec(hermite_nodes=24))
        norms = np.linalg.norm(nodes, axis=1)
        c_hat = float(np.dot(weights, norms ** 2 * np.exp(eps0 * norms)))
        nominal_bound = k3 / (4.0 ** (p.dim + 4) * k1 ** 2 * k2)
        profile_bound = k3 / (16.0 * k1 ** 2 * k2 * C2 ** p.dim * C5)
        constants.update({"k2": k2, "eps0": eps0, "c_hat": c_hat,
                          "c_hat_bound": nominal_bound, "c_hat_bound_profile": profile_bound})
        report.c_hat_ok = c_hat <= nominal_bound
        report.c_hat_ok_profile = c_hat <= profile_bound
        if not report.c_hat_ok:
            warnings.warn(f"Jump moment proxy c_hat={c_hat:.3e} exceeds {nominal_bound:.3e}")
    return report


@dataclass
class GapReport:
    inside: float
    outside: float
    integrated: float
    ratios: Dict[str, float]
    ratios_fine: Dict[str, float]
    stable: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "inside": self.inside,
            "outside": self.outside,
            "integrated": self.integrated,
            "ratios": self.ratios,
            "ratios_fine": self.ratios_fine,
            "stable": self.stable,
        }


def _jump_spread(F: JumpMeasureSpec, gamma: np.ndarray) -> float:
    """Rough reach of gamma z under the jump law; zero without jumps."""
    if F.intensity == 0.0:
        return 0.0
    if F.law == GAUSSIAN:
        reach = 4.0 * math.sqrt(float(np.max(np.diag(F.covariance))))
    elif F.law == POINT_MASS:
        reach = float(np.max(np.abs(F.atom)))
    else:
        reach = 4.0
    return float(np.max(np.sum(np.abs(gamma), axis=1))) * reach


def _outer_box(p1: PriorOne, F: JumpMeasureSpec, gamma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = p1.bump_box()
    spread = 3.0 * p1.h.as_array() + _jump_spread(F, gamma)
    return lo - spread, hi + spread


def _gap_pass(
    b0: DriftField, b1: DriftField, p0: PriorZero, p1: PriorOne, F: JumpMeasureSpec, gamma: np.ndarray,
    n: int, seed: int,
) -> Tuple[float, float, float]:
    rng = make_rng(seed)
    lo, hi = p1.bump_box()
    inside = lo + (hi - lo) * rng.random((n, p1.base.dim))
    outer_lo, outer_hi = _outer_box(p1, F, gamma)
    candidates = outer_lo + (outer_hi - outer_lo) * rng.random((4 * n, p1.base.dim))
    in_box = np.all((candidates >= lo) & (candidates <= hi), axis=1)
    outside = candidates[~in_box][:n]
    gap_inside = np.abs(b1(inside) - b0(inside))
    gap_outside = np.abs(b1(outside) - b0(outside))
    volume = float(np.prod(outer_hi - outer_lo) - np.prod(hi - lo))
    weighted = gap_outside * p0.density().value(outside)[:, None]
    integrated = volume * float(np.max(np.mean(weighted, axis=0)))
    return float(np.max(gap_inside)), float(np.max(gap_outside)), integrated


def drift_gap(
    p0: PriorZero,
    p1: PriorOne,
    gamma: Optional[np.ndarray] = None,
    F: Optional[JumpMeasureSpec] = None,
    quad: QuadratureSpec = QuadratureSpec(),
    n: int = 200,
    seed: int = 0,
) -> GapReport:
    """Drift gap b_{pi_1} - b_{pi_0} on K_T, off K_T and integrated against pi_0, over its envelopes.

    Computed with n and 2n samples; the fitted constants must agree within a factor 2.
    """
    d = p0.dim
    gamma = np.eye(d) if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))
    F = JumpMeasureSpec(intensity=0.0, dim=d) if F is None else F
    b0 = drift_field(p0.density(), p0.a, gamma, F, quad)
    b1 = drift_field(p1.density(), p0.a, gamma, F, quad)
    h = p1.h.as_array()
    envelopes = {
        "inside": float(np.sum(1.0 / h)) / p1.M_T,
        "outside": 1.0 / p1.M_T,
        "integrated": float(np.prod(h)) / p1.M_T,
    }
    coarse = dict(zip(("inside", "outside", "integrated"), _gap_pass(b0, b1, p0, p1, F, gamma, n, seed)))
    fine = dict(zip(("inside", "outside", "integrated"), _gap_pass(b0, b1, p0, p1, F, gamma, 2 * n, seed + 1)))
    ratios = {k: coarse[k] / envelopes[k] for k in envelopes}
    ratios_fine = {k: fine[k] / envelopes[k] for k in envelopes}
    stable = all(
        (ratios[k] == 0.0 and ratios_fine[k] == 0.0)
        or (min(ratios[k], ratios_fine[k]) > 0 and max(ratios[k], ratios_fine[k]) <= 2.0 * min(ratios[k], ratios_fine[k]))
        for k in envelopes
    )
    return GapReport(coarse["inside"], coarse["outside"], coarse["integrated"], ratios, ratios_fine, stable)


def _base_of(p: Any) -> PriorZero:
    return p if isinstance(p, PriorZero) else p.base


def l2_drift_distance(
    p0: PriorZero,
    p1: Any,
    T: float,
    gamma: Optional[np.ndarray] = None,
    F: Optional[JumpMeasureSpec] = None,
    quad: QuadratureSpec = QuadratureSpec(),
    panels: int = 4,
    nodes: int = 6,
    box_panels: int = 16,
) -> float:
    """T int |b_{p1} - b_{p0}|^2 pi_0 dx by tensor composite Gauss-Legendre.

    `p1` may be a PriorOne or another PriorZero. Against a PriorOne without jumps the gap lives
    on the bump box, with jumps that box is widened by the jump spread. Two PriorZero densities
    are compared over the working box of p0 with `box_panels` panels per axis.
    """
    d = p0.dim
    if _base_of(p1).dim != d:
        raise ValueError(f"Priors have dimensions {d} and {_base_of(p1).dim}")
    gamma = np.eye(d) if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))
    F = JumpMeasureSpec(intensity=0.0, dim=d) if F is None else F
    if isinstance(p1, PriorOne):
        lo, hi = p1.bump_box() if F.intensity == 0.0 else _outer_box(p1, F, gamma)
    else:
        radius = p0.working_radius
        lo, hi = np.full(d, -radius), np.full(d, radius)
        panels = box_panels
    axes = [composite_legendre(lo[m], hi[m], panels, nodes) for m in range(d)]
    grids = np.meshgrid(*[knots for knots, _ in axes], indexing="ij")
    weight_grids = np.meshgrid(*[weights for _, weights in axes], indexing="ij")
    X = np.stack([g.reshape(-1) for g in grids], axis=1)
    W = np.prod(np.stack([w.reshape(-1) for w in weight_grids], axis=1), axis=1)
    b0 = drift_field(p0.density(), p0.a, gamma, F, quad)
    b1 = drift_field(p1.density(), p0.a, gamma, F, quad)
    gap = np.sum((b1(X) - b0(X)) ** 2, axis=1)
    return float(T * np.sum(W * gap * p0.density().value(X)))


def quadrature_check(p: PriorOne, nodes: int = 16) -> float:
    """int (pi_1 - pi_0) over the bump box by tensor Gauss-Legendre; exact for the polynomial bump."""
    lo, hi = p.bump_box()
    total = 1.0
    for m, factor in enumerate(p.density().terms[1].factors):
        knots, weights = gauss_legendre(lo[m], hi[m], nodes)
        total *= float(np.sum(weights * factor.value(knots)))
    return total / p.M_T
