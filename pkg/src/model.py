import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from utils import SimulationBlowupError, as_point, derive_seed, make_rng, parallel_map

GAUSSIAN = "gaussian"
POINT_MASS = "point_mass"
TABULATED = "tabulated"
JUMP_LAWS = (GAUSSIAN, POINT_MASS, TABULATED)

DriftMap = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class JumpMeasureSpec:
    """Finite-intensity compound Poisson jump measure F(dz) = intensity * law(dz).

    `tabulated` laws carry a probability density callable and are used by the
    quadrature code only; they cannot be sampled.
    """
    intensity: float = 0.0
    law: str = GAUSSIAN
    covariance: Optional[np.ndarray] = None
    atom: Optional[np.ndarray] = None
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mean: Optional[np.ndarray] = None
    dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.law not in JUMP_LAWS:
            raise ValueError(f"Unsupported jump law: {self.law}. Available laws: {JUMP_LAWS}")
        if not (self.intensity >= 0.0 and math.isfinite(self.intensity)):
            raise ValueError(f"Jump intensity must be finite and >= 0, got {self.intensity}")
        if self.law == GAUSSIAN:
            if self.covariance is None:
                if self.dim is None:
                    # dimension is bound by the owning ModelSpec
                    return
                self.covariance = np.eye(self.dim)
            self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
            if not np.allclose(self.covariance, self.covariance.T):
                raise ValueError("Jump covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(self.covariance)) < -1e-12:
                raise ValueError("Jump covariance must be positive semidefinite")
            self.dim = self.covariance.shape[0]
            self.mean = np.zeros(self.dim)
        elif self.law == POINT_MASS:
            assert self.atom is not None, "Point-mass jumps need an atom"
            self.atom = as_point(self.atom)
            self.dim = self.atom.shape[0]
            self.mean = self.atom.copy()
        else:
            assert self.density is not None, "Tabulated jumps need a density"
            assert self.dim is not None, "Tabulated jumps need a dimension"
            self.mean = np.zeros(self.dim) if self.mean is None else as_point(self.mean, self.dim, "mean")

    @property
    def mean_jump(self) -> np.ndarray:
        return self.mean

    def covariance_root(self) -> np.ndarray:
        """Symmetric square root of the covariance (valid for semidefinite matrices)."""
        eigval, eigvec = np.linalg.eigh(self.covariance)
        return eigvec @ np.diag(np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.T

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"intensity": self.intensity, "law": self.law, "dim": self.dim}
        if self.law == GAUSSIAN:
            payload["covariance"] = self.covariance.tolist()
        elif self.law == POINT_MASS:
            payload["atom"] = self.atom.tolist()
        else:
            payload["density"] = getattr(self.density, "__qualname__", type(self.density).__name__)
            payload["mean"] = self.mean.tolist()
        return payload


@dataclass(eq=False)
class ModelSpec:
    """dX = b(X) dt + a dW + gamma * z mu~(dt, dz) with constant a and gamma."""
    dim: int
    drift: DriftMap
    a: np.ndarray
    gamma: np.ndarray
    jumps: JumpMeasureSpec = field(default_factory=JumpMeasureSpec)
    allow_degenerate: bool = False

    def __post_init__(self) -> None:
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        d = self.dim
        if self.a.shape != (d, d) or self.gamma.shape != (d, d):
            raise ValueError(f"a and gamma must be {d}x{d}, got {self.a.shape} and {self.gamma.shape}")
        if self.jumps.dim is None:
            self.jumps = replace(self.jumps, dim=d)
        if self.jumps.dim != d:
            raise ValueError(f"Jump law has dimension {self.jumps.dim}, model has {d}")
        if not self.allow_degenerate and not math.isfinite(self.ellipticity):
            raise ValueError("a a^T must be positive definite")
        if self.jumps.intensity > 0 and abs(np.linalg.det(self.gamma)) < 1e-14:
            raise ValueError("gamma must be invertible when the jump intensity is positive")

    @property
    def diffusion(self) -> np.ndarray:
        return self.a @ self.a.T

    @property
    def ellipticity(self) -> float:
        """Smallest c >= 1 with spectrum(a a^T) in [1/c, c]; inf when degenerate."""
        eigval = np.linalg.eigvalsh(self.diffusion)
        if eigval[0] <= 0:
            return math.inf
        return max(1.0, eigval[-1], 1.0 / eigval[0])

    @property
    def drift_name(self) -> str:
        return getattr(self.drift, "__qualname__", type(self.drift).__name__)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "drift": self.drift_name,
            "a": self.a.tolist(),
            "gamma": self.gamma.tolist(),
            "jumps": self.jumps.to_dict(),
        }


def model_fingerprint(model: ModelSpec) -> str:
    blob = repr(model.to_dict()).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class PathRecord:
    """Euler path on the grid 0, dt, ..., N dt."""
    dt: float
    states: np.ndarray
    seed: int
    model_fingerprint: str

    def __post_init__(self) -> None:
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("Path states must be finite")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])

    def concatenate(self, other: "PathRecord") -> "PathRecord":
        """Join `other` after this path; the terminal state of this path is dropped."""
        if other.dt != self.dt or other.dim != self.dim:
            raise ValueError("Paths must share dt and dimension")
        if other.model_fingerprint != self.model_fingerprint:
            raise ValueError("Paths come from different models")
        states = np.vstack([self.states[:-1], other.states])
        return PathRecord(self.dt, states, self.seed, self.model_fingerprint)

    def header(self) -> str:
        return (
            f"# d={self.dim} dt={self.dt!r} N={self.states.shape[0]} "
            f"seed={self.seed} fingerprint={self.model_fingerprint}"
        )

    def save_csv(self, path: str) -> None:
        if os.path.dirname(path) != "":
            os.makedirs(os.path.dirname(path), exist_ok=True)
        columns = {"t": self.times}
        for m in range(self.dim):
            columns[f"x{m + 1}"] = self.states[:, m]
        with open(path, "w") as f:
            f.write(self.header() + "\n")
            pd.DataFrame(columns).to_csv(f, index=False, float_format="%.17g")

    @classmethod
    def load_csv(cls, path: str) -> "PathRecord":
        with open(path, "r") as f:
            header = f.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        frame = pd.read_csv(path, skiprows=1, float_precision="round_trip")
        states = frame[[f"x{m + 1}" for m in range(int(meta["d"]))]].to_numpy()
        return cls(float(meta["dt"]), states, int(meta["seed"]), meta["fingerprint"])

    def save_npz(self, path: str) -> None:
        if os.path.dirname(path) != "":
            os.makedirs(os.path.dirname(path), exist_ok=True)
        np.savez(
            path, dt=self.dt, states=self.states, seed=np.uint64(self.seed),
            fingerprint=np.array(self.model_fingerprint)
        )

    @classmethod
    def load_npz(cls, path: str) -> "PathRecord":
        with np.load(path) as data:
            return cls(float(data["dt"]), data["states"], int(data["seed"]), str(data["fingerprint"]))


def reference_drift(x: np.ndarray) -> np.ndarray:
    """b(x) = -4 x/|x| exp(-1/(4|x| - 1)) on |x| > 1/4, zero inside."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    outside = r > 0.25
    safe_r = np.where(outside, r, 1.0)
    with np.errstate(over="ignore", divide="ignore"):
        magnitude = np.where(outside, 4.0 * np.exp(-1.0 / np.where(outside, 4.0 * safe_r - 1.0, 1.0)), 0.0)
    return -magnitude * x / safe_r


def reference_model(intensity: float = 1.0) -> ModelSpec:
    """Three-dimensional simulation model: unit Brownian part, N(0, I_3) jumps."""
    return ModelSpec(
        dim=3,
        drift=reference_drift,
        a=np.eye(3),
        gamma=np.eye(3),
        jumps=JumpMeasureSpec(intensity=intensity, law=GAUSSIAN, covariance=np.eye(3)),
    )


def sample_jumps(spec: JumpMeasureSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.intensity <= 0.0:
        raise ValueError("Cannot sample jumps from a measure with zero intensity")
    if spec.law == GAUSSIAN:
        return rng.standard_normal((n, spec.dim)) @ spec.covariance_root().T
    if spec.law == POINT_MASS:
        return np.tile(spec.atom, (n, 1))
    raise ValueError(f"Jump law '{spec.law}' cannot be sampled")


def sample_jump(spec: JumpMeasureSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_jumps(spec, rng, 1)[0]


def euler_maruyama_jump(
    model: ModelSpec,
    x0: Any,
    T: float,
    dt: float,
    seed: int,
) -> PathRecord:
    """Euler scheme with Poisson(intensity * dt) jump counts per step, compensated."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ValueError(f"T must be at least dt, got T={T}, dt={dt}")
    d = model.dim
    x = as_point(x0, d, "x0")
    n_steps = int(math.floor(T / dt + 1e-9))
    rng = make_rng(seed)

    increments = rng.standard_normal((n_steps, d)) @ (math.sqrt(dt) * model.a).T
    jumps = model.jumps
    if jumps.intensity > 0:
        counts = rng.poisson(jumps.intensity * dt, n_steps)
        sizes = sample_jumps(jumps, rng, int(counts.sum()))
        jump_sums = np.zeros((n_steps, d))
        np.add.at(jump_sums, np.repeat(np.arange(n_steps), counts), sizes)
        compensation = model.gamma @ (jumps.intensity * jumps.mean_jump) * dt
        increments += jump_sums @ model.gamma.T - compensation

    states = np.empty((n_steps + 1, d))
    states[0] = x
    drift = model.drift
    for k in range(n_steps):
        x = x + drift(x) * dt + increments[k]
        if not math.isfinite(float(x.sum())):
            raise SimulationBlowupError(k + 1)
        states[k + 1] = x
    return PathRecord(dt, states, int(seed), model_fingerprint(model))


def _simulate_one(job: tuple) -> PathRecord:
    model, x0, T, dt, seed = job
    return euler_maruyama_jump(model, x0, T, dt, seed)


def simulate_replications(
    model: ModelSpec,
    x0: Any,
    T: float,
    dt: float,
    master_seed: int,
    replications: int,
    workers: Optional[int] = None,
) -> List[PathRecord]:
    jobs = [(model, x0, T, dt, derive_seed(master_seed, r)) for r in range(replications)]
    return parallel_map(_simulate_one, jobs, workers, desc="simulate")
