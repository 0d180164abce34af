from .experiment import ExperimentDesign, assign_treatments, parse_arm, run_experiment
from .history import HistorySample, sample_history
from .noise import MeasurementErrorSpec, inject_measurement_error
from .population import Market, MarketSpec, PoolFrame, SignalNoise, pool_frame, sample_market
from .search_sim import SpellRecords, simulate_sequential_search

__all__ = [
    "ExperimentDesign",
    "HistorySample",
    "Market",
    "MarketSpec",
    "MeasurementErrorSpec",
    "PoolFrame",
    "SignalNoise",
    "SpellRecords",
    "assign_treatments",
    "inject_measurement_error",
    "parse_arm",
    "pool_frame",
    "run_experiment",
    "sample_history",
    "sample_market",
    "simulate_sequential_search",
]
