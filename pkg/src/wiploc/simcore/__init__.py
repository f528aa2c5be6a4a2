"""Scenario loading, the event engine and experiment metrics."""

from .engine import Simulator
from .metrics import MetricsReport, PositionMetrics, metrics, run, simulate_wpa_window, sweep
from .scenario import Scenario, ScenarioError, ground_truth, load_scenario, parse_scenario

__all__ = [
    "MetricsReport",
    "PositionMetrics",
    "Scenario",
    "ScenarioError",
    "Simulator",
    "ground_truth",
    "load_scenario",
    "metrics",
    "parse_scenario",
    "run",
    "simulate_wpa_window",
    "sweep",
]
