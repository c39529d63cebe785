"""Rider-ballbot dynamics, hands-free control schemes and minimum-effort braking optimization."""

from .control import ControlScheme, ControllerState, Gains, balance_gains, lqr_gains
from .metrics import BrakingMetrics, BrakingWeights, compute_metrics
from .model import RiderBallbotParams
from .sim import Trajectory, find_equilibrium, simulate
from .trajopt import BrakingProblem, solve_nlp, sweep, transcribe

__version__ = "0.1.0"

__all__ = [
    "BrakingMetrics", "BrakingProblem", "BrakingWeights", "ControlScheme", "ControllerState", "Gains",
    "RiderBallbotParams", "Trajectory", "balance_gains", "compute_metrics", "find_equilibrium",
    "lqr_gains", "simulate", "solve_nlp", "sweep", "transcribe",
]
