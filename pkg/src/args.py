import os

from classopt import classopt, config


def _floats(x: str) -> list:
    return [float(v) for v in x.split(",")]


@classopt(default_long=True, default_short=False)
class Args:
    """Arguments for the command-line entry point."""
    # Path configurations
    result_root: str = config(
        default=os.path.expanduser("result"),
        help="Path to result root"
    )
    out: str = config(default=None, help="Path to output file")
    path: str = config(default=None, help="Path to a saved sample path (.csv or .npz)")
    grid: str = config(default=None, help="Path to a CSV of evaluation points")

    # Experiment management settings
    seed: int = config(default=None, help="Master seed")
    workers: int = config(default=None, help="Number of worker processes")
    wandb: bool = config(default=False, help="Whether to use wandb")

    # Model configurations
    intensity: float = config(default=1.0, help="Jump intensity of the reference model")
    x0: _floats = config(default=None, help="Initial state, comma separated")
    T: float = config(default=None, help="Time horizon")
    dt: float = config(default=1e-3, help="Euler step")

    # Estimation settings
    x: _floats = config(default=None, help="Evaluation point, comma separated")
    h: _floats = config(default=None, help="Bandwidths, comma separated")
    order: int = config(default=2, help="Kernel order")
    stride: int = config(default=1, help="Use every stride-th sample")

    # Bandwidth selection
    beta: _floats = config(default=None, help="Ascending smoothness exponents, comma separated")
    slack: float = config(default=0.1, help="Relative slack above the first two exponent thresholds")
    rule: str = config(  # slack, equal
        default="slack",
        help="Rule for the first two exponents"
    )

    # Keep last: the field name shadows classopt.config in the class body
    config: str = config(default=None, help="Path to a study config (JSON)")
