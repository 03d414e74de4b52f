import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm


class JumpDiffusionError(Exception):
    """Base class for errors raised by the toolkit."""


class ConfigError(JumpDiffusionError):
    pass


class SimulationBlowupError(JumpDiffusionError):
    def __init__(self, step: int, message: str = "") -> None:
        self.step = step
        super().__init__(message or f"Non-finite state at step {step}")


class QuadratureError(JumpDiffusionError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} {self.diagnostics}" if diagnostics else message)


class CalibrationInfeasibleError(JumpDiffusionError):
    def __init__(self, constraint: str, message: str = "") -> None:
        self.constraint = constraint
        super().__init__(message or f"Calibration constraint violated: {constraint}")


def make_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, stream index)."""
    seed_seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return np.random.Generator(np.random.Philox(seed_seq))


def derive_seed(master_seed: int, index: int) -> int:
    seed_seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(seed_seq.generate_state(1, dtype=np.uint64)[0])


def num_workers(requested: Optional[int] = None) -> int:
    if requested is not None and requested > 0:
        return int(requested)
    return max(1, int(os.environ.get("JDE_NUM_WORKERS", "1")))


def fingerprint(payload: Any) -> str:
    blob = json.dumps(to_jsonable(payload), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def to_jsonable(obj: Any) -> Any:
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def save_json(payload: Any, path: str) -> None:
    if os.path.dirname(path) != "":
        os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {path}: {e}") from e


def as_point(x: Iterable[float], d: Optional[int] = None, name: str = "x") -> np.ndarray:
    point = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and point.shape[0] != d:
        raise ValueError(f"{name} has dimension {point.shape[0]}, expected {d}")
    return point


def parallel_map(
    fn: Callable[[Any], Any],
    items: Sequence[Any],
    workers: Optional[int] = None,
    desc: Optional[str] = None,
) -> List[Any]:
    """Order-preserving map over replications; runs inline with one worker."""
    n_workers = num_workers(workers)
    if n_workers == 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=desc is None)]
    with ProcessPoolExecutor(max_workers=n_workers) as executor:
        return list(tqdm(executor.map(fn, items), total=len(items), desc=desc, disable=desc is None))
