"""Time-slotted simulation loop.

Every slot boundary the controller collects the pending tasks (new
arrivals plus tasks deferred from the previous slot), drops the ones whose
deadline has already run out, schedules the rest, and either defers or
fails whatever the scheduler could not place. Capacity is per slot: every
placed task finishes inside its slot, so each slot starts from full P_k.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import SlotConfig, Task
from .oracle import OracleLimits, optimal_schedule
from .schedulers import InvariantError, SlotProblem, get_scheduler
from .topology import Topology


class SimConfigError(ValueError):
    pass


@dataclass
class SimRun:
    cfg: SlotConfig
    topology: Topology
    tasks: Sequence[Task]
    rates: Mapping[int, float]
    scheduler: str = "mesa"
    seed: int = 0
    horizon: Optional[int] = None   # slots; None = long enough to drain every deferral
    defer: bool = True
    oracle_limits: OracleLimits = field(default_factory=OracleLimits)


@dataclass
class TaskOutcome:
    task_id: int
    slot: int                 # slot in which it was finalized
    server: Optional[int]
    trt_s: float              # measured from arrival
    violated: bool


@dataclass
class ViolationReport:
    total_tasks: int
    violations: int
    per_slot: list[dict]
    utilization: list[list[float]]    # [slot][server] = sum f / P_k
    outcomes: dict[int, TaskOutcome]
    scheduler_time_s: float = 0.0
    proved_optimal: bool = True

    @property
    def violation_pct(self) -> float:
        return 100.0 * self.violations / self.total_tasks if self.total_tasks else 0.0

    @property
    def served(self) -> int:
        return self.total_tasks - self.violations


def capacity_reset(topo: Topology) -> np.ndarray:
    """Residual capacity at the start of a slot."""
    return topo.capacities.copy()


def _slot_seed(seed: int, slot: int) -> int:
    return int(np.random.SeedSequence([seed, slot]).generate_state(1)[0])


def default_horizon(tasks: Sequence[Task], cfg: SlotConfig) -> int:
    if not tasks:
        return 0
    last = max(t.arrival_slot for t in tasks)
    longest = max(t.deadline_s for t in tasks)
    return last + 2 + int(math.ceil(longest / cfg.slot_s))


def run(sim: SimRun) -> ViolationReport:
    cfg, topo = sim.cfg, sim.topology
    tasks = list(sim.tasks)
    cfg.check_deadlines(tasks)
    horizon = default_horizon(tasks, cfg) if sim.horizon is None else sim.horizon
    last = max((t.arrival_slot for t in tasks), default=-1)
    if horizon <= last:
        raise SimConfigError(f"horizon {horizon} slots ends before the last arrival (slot {last})")

    if sim.scheduler == "oracle":
        def schedule(p, seed):
            res = optimal_schedule(p, sim.oracle_limits)
            return res.result
    else:
        schedule = get_scheduler(sim.scheduler)

    arrivals: dict[int, list[Task]] = {}
    for t in tasks:
        arrivals.setdefault(t.arrival_slot, []).append(t)

    outcomes: dict[int, TaskOutcome] = {}
    per_slot = []
    util = []
    carried: list[Task] = []
    sched_time = 0.0
    proved = True

    def fail(task: Task, slot: int, trt: float):
        outcomes[task.id] = TaskOutcome(task.id, slot, None, trt, True)

    for slot in range(horizon):
        now = slot * cfg.slot_s
        pending = carried + arrivals.get(slot, [])
        carried = []
        live, elapsed_of, original = [], {}, {}
        dropped = 0
        for task in pending:
            elapsed = max(0.0, now - task.arrival_s)
            remaining = task.deadline_s - elapsed
            if remaining <= cfg.decision_s:
                fail(task, slot, elapsed + cfg.big_m_s)
                dropped += 1
                continue
            elapsed_of[task.id] = elapsed
            original[task.id] = task
            live.append(replace(task, deadline_s=remaining))

        served = violated = deferred = 0
        residual = capacity_reset(topo)
        if live:
            problem = SlotProblem(live, topo, sim.rates, cfg, slot)
            t0 = time.perf_counter()
            result = schedule(problem, _slot_seed(sim.seed, slot))
            sched_time += time.perf_counter() - t0
            proved = proved and result.stats.get("proved_optimal", True)
            residual = np.array([result.schedule.residual_mips[s.id] for s in topo.servers])
            for a in result.schedule.assignments:
                task = original[a.task_id]
                elapsed = elapsed_of[a.task_id]
                if a.assigned:
                    if a.violated:
                        raise InvariantError(f"slot {slot}: assigned task {a.task_id} violates its deadline")
                    outcomes[a.task_id] = TaskOutcome(a.task_id, slot, a.server, elapsed + a.trt_s, False)
                    served += 1
                elif sim.defer and task.deadline_s - elapsed - cfg.slot_s > cfg.decision_s:
                    carried.append(task)
                    deferred += 1
                else:
                    fail(task, slot, elapsed + a.trt_s)
                    violated += 1
        caps = topo.capacities
        used = (caps - residual) / caps
        if np.any(used > 1 + 1e-9):
            raise InvariantError(f"slot {slot}: utilization above 1")
        util.append(used.tolist())
        per_slot.append({"slot": slot, "pending": len(pending), "served": served,
                         "violated": violated + dropped, "deferred": deferred})

    for task in carried:
        fail(task, horizon, max(0.0, horizon * cfg.slot_s - task.arrival_s) + cfg.big_m_s)

    if len(outcomes) != len(tasks):
        raise InvariantError(f"conservation broken: {len(outcomes)} outcomes for {len(tasks)} tasks")
    violations = sum(o.violated for o in outcomes.values())
    return ViolationReport(len(tasks), violations, per_slot, util, outcomes, sched_time, proved)
