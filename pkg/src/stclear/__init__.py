"""Space-time market clearing with virtual links for flexible data-center loads."""
from .model import (Demand, NetworkModel, Scenario, ScenarioError, SpaceTimeIndex, Supplier,
                    TransmissionLine, VirtualLink, validate)
from .builder import LPInstance, build, build_disaggregation
from .solver import PrimalDualSolution, Status, solve
from .settlement import Settlement, settle
from .verify import VerificationReport, verify_all
from .sweep import capacity_sweep, lmp_stats, surplus_monotonicity
from .scenario_io import SchemaError, dump_scenario, load_scenario

__all__ = [
    "Demand", "NetworkModel", "Scenario", "ScenarioError", "SpaceTimeIndex", "Supplier",
    "TransmissionLine", "VirtualLink", "validate", "LPInstance", "build",
    "build_disaggregation", "PrimalDualSolution", "Status", "solve", "Settlement", "settle",
    "VerificationReport", "verify_all", "capacity_sweep", "lmp_stats", "surplus_monotonicity",
    "SchemaError", "dump_scenario", "load_scenario",
]
