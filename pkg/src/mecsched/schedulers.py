"""Per-slot schedulers: MESA, a host-only baseline and a random baseline.

All three share :class:`DemandTable`, the task x server matrix of
processing budgets and the MIPS each placement would need. It is the
vectorized form of :func:`core.process_budget` / :func:`core.required_mips`
and is what the oracle searches over as well, so every scheduler agrees on
feasibility to the bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import TIME_EPS, Assignment, Schedule, SlotConfig, Task, max_trt, violation_flag
from .topology import Topology


class InvariantError(AssertionError):
    """A produced schedule breaks capacity, uniqueness or deadline guarantees."""


@dataclass
class SlotProblem:
    tasks: Sequence[Task]
    topology: Topology
    rates: Mapping[int, float]  # task id -> MU channel rate (bit/s)
    cfg: SlotConfig
    slot: int = 0

    def __post_init__(self):
        n = self.topology.n
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate task ids in slot problem")
        for t in self.tasks:
            if not 0 <= t.host < n:
                raise ValueError(f"task {t.id}: host {t.host} not in topology")
            if not self.rates.get(t.id, 0) > 0:
                raise ValueError(f"task {t.id}: missing or non-positive channel rate")
        self.cfg.check_deadlines(self.tasks)

    @cached_property
    def demand(self) -> "DemandTable":
        return DemandTable.build(self)


@dataclass
class DemandTable:
    budget: np.ndarray    # (n_tasks, n_servers) seconds, may be <= 0
    mips: np.ndarray      # required MIPS, inf where budget <= 0
    upload: np.ndarray    # (n_tasks,)
    overhead: np.ndarray  # decision + upload + migration + response
    phi: np.ndarray       # c / min(deadline, slot)
    hosts: np.ndarray

    @classmethod
    def build(cls, p: SlotProblem) -> "DemandTable":
        cfg, topo = p.cfg, p.topology
        tasks = p.tasks
        size = np.array([t.data_size_bits for t in tasks], dtype=float)
        instr = np.array([t.instr_millions for t in tasks], dtype=float)
        rate = np.array([p.rates[t.id] for t in tasks], dtype=float)
        alpha = np.array([cfg.alpha_for(t) for t in tasks], dtype=float)
        mu_d = np.array([t.mu_distance_m for t in tasks], dtype=float)
        hosts = np.array([t.host for t in tasks], dtype=int)
        cap_t = np.array([max_trt(t, cfg) for t in tasks], dtype=float)

        upload = size / rate + mu_d / cfg.v_c_mps
        R = topo.rate[hosts] if len(tasks) else np.zeros((0, topo.n))
        D = topo.dist[hosts] if len(tasks) else np.zeros((0, topo.n))
        migration = size[:, None] / R + D / cfg.v_c_mps
        resp_size = alpha * size
        response = resp_size[:, None] / rate[:, None] + resp_size[:, None] / R + D / cfg.v_c_mps
        overhead = cfg.decision_s + upload[:, None] + migration + response
        budget = cap_t[:, None] - overhead
        with np.errstate(divide="ignore"):
            mips = np.where(budget > 0, instr[:, None] / np.where(budget > 0, budget, 1.0), np.inf)
        return cls(budget, mips, upload, overhead, instr / cap_t, hosts)


@dataclass
class SchedulerResult:
    schedule: Schedule
    unassigned: list[int]
    stats: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return self.schedule.violations

    def choice(self) -> dict[int, Optional[int]]:
        return {a.task_id: a.server for a in self.schedule.assignments}


def priority(task: Task, cfg: SlotConfig) -> float:
    """Approximate MIPS demand; smaller goes first."""
    return task.instr_millions / max_trt(task, cfg)


def finalize(problem: SlotProblem, placement: Sequence[Optional[int]], stats: Optional[dict] = None,
             check: bool = True) -> SchedulerResult:
    """Turn a per-task server choice (aligned with ``problem.tasks``) into a checked result."""
    cfg, table = problem.cfg, problem.demand
    caps = problem.topology.capacities
    residual = caps.copy()
    assignments = []
    unassigned = []
    for i, (task, k) in enumerate(zip(problem.tasks, placement)):
        prefix = cfg.decision_s + table.upload[i]
        if k is None:
            unassigned.append(task.id)
            trt = prefix + cfg.big_m_s
            assignments.append(Assignment(task.id, None, None, trt, True))
            continue
        f = table.mips[i, k]
        if not math.isfinite(f):
            raise InvariantError(f"task {task.id} placed on infeasible server {k}")
        residual[k] -= f
        trt = table.overhead[i, k] + task.instr_millions / f
        assignments.append(Assignment(task.id, int(k), float(f), float(trt),
                                      violation_flag(trt, task.deadline_s, TIME_EPS)))
    sched = Schedule(problem.slot, assignments, {s.id: float(r) for s, r in zip(problem.topology.servers, residual)})
    if check:
        check_schedule(problem, sched)
    return SchedulerResult(sched, unassigned, dict(stats or {}))


def check_schedule(problem: SlotProblem, sched: Schedule) -> None:
    caps = {s.id: s.capacity_mips for s in problem.topology.servers}
    for k, used in sched.load().items():
        if used > caps[k] * (1 + 1e-9):
            raise InvariantError(f"slot {sched.slot}: server {k} over capacity ({used} > {caps[k]})")
    seen = set()
    tasks = {t.id: t for t in problem.tasks}
    for a in sched.assignments:
        if a.task_id in seen:
            raise InvariantError(f"task {a.task_id} scheduled twice")
        seen.add(a.task_id)
        if a.assigned and a.trt_s > tasks[a.task_id].deadline_s + TIME_EPS:
            raise InvariantError(f"assigned task {a.task_id} misses its deadline (TRT {a.trt_s})")
        if a.assigned and not a.alloc_mips > 0:
            raise InvariantError(f"task {a.task_id} assigned with no allocation")
    if seen != set(tasks):
        raise InvariantError("schedule does not cover the slot's tasks exactly")


def _candidate_lists(topo: Topology) -> list[list[int]]:
    # host first (distance 0), then by path distance, ties by id
    return [sorted(range(topo.n), key=lambda k: (topo.dist[h, k], k != h, k)) for h in range(topo.n)]


def _greedy(problem: SlotProblem, candidates: Callable[[int], Sequence[int]], name: str) -> SchedulerResult:
    table = problem.demand
    tasks = problem.tasks
    order = sorted(range(len(tasks)), key=lambda i: (table.phi[i], tasks[i].id))
    residual = problem.topology.capacities.tolist()
    mips = table.mips.tolist()
    hosts = table.hosts.tolist()
    placement: list[Optional[int]] = [None] * len(tasks)
    probes = 0
    for i in order:
        row = mips[i]
        for k in candidates(hosts[i]):
            probes += 1
            f = row[k]
            # non-strict: an exact fill is a valid schedule
            if f <= residual[k]:
                residual[k] -= f
                placement[i] = k
                break
    return finalize(problem, placement, {"scheduler": name, "probes": probes})


def mesa_schedule(problem: SlotProblem) -> SchedulerResult:
    """Greedy in ascending priority; each task takes the nearest server that can afford it."""
    cand = _candidate_lists(problem.topology)
    return _greedy(problem, cand.__getitem__, "mesa")


def no_migration_schedule(problem: SlotProblem) -> SchedulerResult:
    return _greedy(problem, lambda h: (h,), "no-migration")


def random_schedule(problem: SlotProblem, seed: int = 0) -> SchedulerResult:
    """Each task, in arrival order, tries exactly one uniformly drawn server.

    Simultaneous arrivals go in priority order, so on a single server the
    result matches the host-only baseline.
    """
    rng = np.random.default_rng(seed)
    tasks = problem.tasks
    phi = problem.demand.phi
    order = sorted(range(len(tasks)), key=lambda i: (tasks[i].arrival_s, phi[i], tasks[i].id))
    draws = rng.integers(0, problem.topology.n, size=len(tasks))
    residual = problem.topology.capacities.tolist()
    mips = problem.demand.mips
    placement: list[Optional[int]] = [None] * len(tasks)
    for pos, i in enumerate(order):
        k = int(draws[pos])
        f = mips[i, k]
        if f <= residual[k]:
            residual[k] -= f
            placement[i] = k
    return finalize(problem, placement, {"scheduler": "random", "probes": len(tasks), "seed": seed})


SCHEDULERS = {
    "mesa": lambda p, seed=0: mesa_schedule(p),
    "no-migration": lambda p, seed=0: no_migration_schedule(p),
    "random": lambda p, seed=0: random_schedule(p, seed),
}


def get_scheduler(name: str):
    try:
        return SCHEDULERS[name]
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}") from None
