import json
import os
import sys
from typing import Callable, Dict, List, Optional

import pandas as pd
import wandb

from args import Args
from bandwidth import optimal_bandwidths, parse_beta
from estimator import BandwidthVector, estimate_density_at, estimate_density_grid, save_grid_csv
from experiments import MSE_RATE, PRIOR_CHECK, STATIONARITY_CHECK, VARIANCE_PLATEAU, ExperimentConfig, run_study
from kernels import build_estimation_kernel
from model import PathRecord, euler_maruyama_jump, reference_model
from utils import (
    CalibrationInfeasibleError, ConfigError, QuadratureError, SimulationBlowupError, to_jsonable,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

STUDY_COMMANDS = {
    "variance-study": VARIANCE_PLATEAU,
    "mse-study": MSE_RATE,
    "prior-check": PRIOR_CHECK,
    "stationarity-check": STATIONARITY_CHECK,
}


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"--{flag} is required")
    return value


def load_path(path: str) -> PathRecord:
    if not os.path.exists(path):
        raise ConfigError(f"Path file not found: {path}")
    return PathRecord.load_npz(path) if path.endswith(".npz") else PathRecord.load_csv(path)


def simulate(args: Args) -> None:
    T = _require(args.T, "T")
    seed = 42 if args.seed is None else args.seed
    model = reference_model(args.intensity)
    x0 = args.x0 if args.x0 is not None else [0.0] * model.dim
    out = args.out or os.path.join(args.result_root, "paths", f"path_T{T:g}_seed{seed}.csv")

    print("=" * 100)
    print(f"Simulating the reference model: T={T}, dt={args.dt}, intensity={args.intensity}, seed={seed}")
    print("=" * 100)
    path = euler_maruyama_jump(model, x0, T, args.dt, seed)
    if out.endswith(".npz"):
        path.save_npz(out)
    else:
        path.save_csv(out)
    print(f"Saved {path.n_steps} steps to {out}")


def estimate(args: Args) -> None:
    path = load_path(_require(args.path, "path"))
    h = BandwidthVector(tuple(_require(args.h, "h")))
    kernel = build_estimation_kernel(args.order)
    if args.grid is not None:
        if not os.path.exists(args.grid):
            raise ConfigError(f"Grid file not found: {args.grid}")
        points = pd.read_csv(args.grid, float_precision="round_trip").to_numpy(dtype=float)
        estimates = estimate_density_grid(path, kernel, h, points, args.stride)
        out = args.out or os.path.join(args.result_root, "estimates", "grid.csv")
        save_grid_csv(estimates, out)
        print(f"Saved {len(estimates)} estimates to {out}")
        return
    estimate_ = estimate_density_at(path, kernel, h, _require(args.x, "x"), args.stride)
    print(json.dumps(to_jsonable(estimate_), indent=2))


def bandwidth(args: Args) -> None:
    spec = parse_beta(_require(args.beta, "beta"))
    plan = optimal_bandwidths(spec, _require(args.T, "T"), args.slack, args.rule)
    print(json.dumps(plan.to_dict(), indent=2))
    if args.out is not None:
        with open(args.out, "w") as f:
            json.dump(plan.to_dict(), f, indent=2)


def study(args: Args, tag: str) -> None:
    cfg = ExperimentConfig.load(_require(args.config, "config"))
    if cfg.study != tag:
        raise ConfigError(f"Config {args.config} describes study '{cfg.study}', not '{tag}'")
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.output = args.out
    if args.workers is not None:
        cfg.workers = args.workers

    if args.wandb:
        run = wandb.init(
            project="Jump Diffusion Density",
            group=cfg.study,
            name=f"{cfg.study}_{cfg.master_seed}",
            config=cfg.to_dict(),
        )

    table = run_study(cfg)
    csv_path, summary_path = table.save(cfg.output_path(args.result_root))
    print("-" * 100)
    for name, ok in table.summary.get("acceptance", {}).items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(f"Saved {csv_path} and {summary_path}")

    if args.wandb:
        run.log(to_jsonable({k: v for k, v in table.summary.items() if k != "acceptance"}))
        run.finish()


COMMANDS: Dict[str, Callable[[Args], None]] = {
    "simulate": simulate,
    "estimate": estimate,
    "bandwidth": bandwidth,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """`main.py <subcommand> [--flags]`; returns 0 on success, 1 on configuration errors, 2 on numerical failures."""
    argv = sys.argv[1:] if argv is None else list(argv)
    commands = sorted(list(COMMANDS) + list(STUDY_COMMANDS))
    if len(argv) == 0 or argv[0] not in commands:
        print(f"Usage: main.py {{{','.join(commands)}}} [options]", file=sys.stderr)
        return EXIT_CONFIG
    command, rest = argv[0], argv[1:]
    try:
        args = Args.from_args(rest)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG

    try:
        if command in STUDY_COMMANDS:
            study(args, STUDY_COMMANDS[command])
        else:
            COMMANDS[command](args)
    except (ConfigError, CalibrationInfeasibleError, ValueError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationBlowupError, QuadratureError) as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run_cli())
