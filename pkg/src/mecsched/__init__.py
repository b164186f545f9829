"""Time-slotted MEC scheduling: latency model, schedulers, exact solver, simulator."""
from .core import (Assignment, InfeasibleBudget, MecServer, ModelError, RadioParams, Schedule, SlotConfig, Task,
                   total_response_time)
from .oracle import OracleLimitError, OracleLimits, gap_report, optimal_schedule
from .radio import ChannelModel, channel_rate
from .schedulers import SCHEDULERS, SlotProblem, mesa_schedule, no_migration_schedule, random_schedule
from .sim import SimRun, ViolationReport, run
from .topology import Topology, TopologyError, builtin_topology, growing_topology, load_topology

__version__ = "0.1.0"

__all__ = [
    "Assignment", "ChannelModel", "InfeasibleBudget", "MecServer", "ModelError", "OracleLimitError",
    "OracleLimits", "RadioParams", "SCHEDULERS", "Schedule", "SimRun", "SlotConfig", "SlotProblem", "Task",
    "Topology", "TopologyError", "ViolationReport", "builtin_topology", "channel_rate", "gap_report",
    "growing_topology", "load_topology", "mesa_schedule", "no_migration_schedule", "optimal_schedule",
    "random_schedule", "run", "total_response_time",
]
