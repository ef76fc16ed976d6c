"""Discrete-event runtime: scheduler, bus, entities and the simulator."""

from .metrics import RunMetrics
from .simulator import Simulator, run, simulate

__all__ = ["RunMetrics", "Simulator", "run", "simulate"]
