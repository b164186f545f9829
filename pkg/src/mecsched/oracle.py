"""Exact per-slot solver: minimum number of violations by exhaustive search.

The search is a depth-first enumeration of task -> server choices with
sound pruning. Feasibility (budget > 0, required MIPS, residual capacity)
comes from the same :class:`DemandTable` the heuristics use.

Among optimal assignments the oracle returns the one with the fewest
migrations, then the lexicographically smallest server vector (tasks in id
order, "unassigned" sorting after every server).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

from .schedulers import SchedulerResult, SlotProblem, finalize, mesa_schedule, no_migration_schedule


class OracleLimitError(ValueError):
    pass


class DominanceError(AssertionError):
    """A heuristic beat the oracle; the oracle or the heuristic is wrong."""


@dataclass(frozen=True)
class OracleLimits:
    max_tasks: int = 12
    max_servers: int = 4
    time_budget_s: float = 60.0
    # node cap: unlike the clock, stopping here is reproducible run to run
    max_nodes: Optional[int] = None


@dataclass
class OracleResult:
    result: SchedulerResult
    proved_optimal: bool
    nodes: int
    elapsed_s: float

    @property
    def violations(self) -> int:
        return self.result.violations


def _lower_bound(rem: list[int], mips: list[list[float]], residual: list[float]) -> int:
    # Pooled-capacity relaxation: a task may use any server it fits on alone,
    # and all residual capacity is treated as one bin.
    need = []
    forced = 0
    for j in rem:
        row = mips[j]
        best = math.inf
        for k, f in enumerate(row):
            if f <= residual[k] and f < best:
                best = f
        if best == math.inf:
            forced += 1
        else:
            need.append(best)
    need.sort()
    pool = sum(residual)
    fits = 0
    for f in need:
        if f > pool:
            break
        pool -= f
        fits += 1
    return forced + len(need) - fits


def optimal_schedule(problem: SlotProblem, limits: OracleLimits = OracleLimits(),
                     prune: bool = True) -> OracleResult:
    tasks = problem.tasks
    n, m = len(tasks), problem.topology.n
    if n > limits.max_tasks or m > limits.max_servers:
        raise OracleLimitError(
            f"instance has {n} tasks x {m} servers; limits are {limits.max_tasks} x {limits.max_servers} "
            f"(raise OracleLimits to at least max_tasks={n}, max_servers={m})")

    table = problem.demand
    mips = table.mips.tolist()
    hosts = table.hosts.tolist()
    by_id = sorted(range(n), key=lambda i: tasks[i].id)
    order = sorted(range(n), key=lambda i: (-mips[i][hosts[i]], tasks[i].id))
    branches = [sorted((k for k in range(m) if math.isfinite(mips[i][k])), key=lambda k: (mips[i][k], k))
                for i in range(n)]

    def key_of(place) -> tuple:
        v = sum(p is None for p in place)
        mig = sum(p is not None and p != hosts[i] for i, p in enumerate(place))
        lex = tuple(m if place[i] is None else place[i] for i in by_id)
        return (v, mig, lex)

    best_place: Optional[list] = None
    best_key = (math.inf, math.inf, ())
    if prune:
        # heuristic incumbents only tighten the bound; the search stays exact
        for seed in (mesa_schedule(problem), no_migration_schedule(problem)):
            ch = seed.choice()
            place = [ch[t.id] for t in tasks]
            k = key_of(place)
            if k < best_key:
                best_key, best_place = k, place

    residual = problem.topology.capacities.tolist()
    place: list[Optional[int]] = [None] * n
    start = time.perf_counter()
    deadline = start + limits.time_budget_s
    nodes = 0
    max_nodes = limits.max_nodes
    timed_out = False

    def dfs(depth: int, viol: int, mig: int) -> None:
        nonlocal nodes, best_key, best_place, timed_out
        nodes += 1
        if timed_out:
            return
        if (max_nodes is not None and nodes > max_nodes) or (nodes % 2048 == 0 and time.perf_counter() > deadline):
            timed_out = True
            return
        if prune:
            lb = viol + _lower_bound(order[depth:], mips, residual) if depth < n else viol
            if (lb, mig) > best_key[:2]:
                return
        if depth == n:
            k = key_of(place)
            if k < best_key:
                best_key, best_place = k, list(place)
            return
        i = order[depth]
        row = mips[i]
        for k in branches[i]:
            f = row[k]
            if f <= residual[k]:
                residual[k] -= f
                place[i] = k
                dfs(depth + 1, viol, mig + (k != hosts[i]))
                residual[k] += f
                place[i] = None
        dfs(depth + 1, viol + 1, mig)

    dfs(0, 0, 0)
    elapsed = time.perf_counter() - start
    if best_place is None:
        best_place = [None] * n
    res = finalize(problem, best_place, {"scheduler": "oracle", "nodes": nodes, "proved_optimal": not timed_out,
                                         "migrations": best_key[1]})
    return OracleResult(res, not timed_out, nodes, elapsed)


@dataclass(frozen=True)
class GapRecord:
    n_tasks: int
    heuristic_violations: int
    oracle_violations: int
    abs_gap_pp: float     # percentage points of the task count
    rel_gap: float        # (heuristic - oracle) / oracle; inf when oracle is 0 and heuristic is not

    def to_dict(self) -> dict:
        return {"n_tasks": self.n_tasks, "heuristic_violations": self.heuristic_violations,
                "oracle_violations": self.oracle_violations, "abs_gap_pp": self.abs_gap_pp,
                "rel_gap": None if math.isinf(self.rel_gap) else self.rel_gap}


def gap_report(heuristic: SchedulerResult, oracle) -> GapRecord:
    oracle_res = oracle.result if isinstance(oracle, OracleResult) else oracle
    h_ids = sorted(a.task_id for a in heuristic.schedule.assignments)
    o_ids = sorted(a.task_id for a in oracle_res.schedule.assignments)
    if h_ids != o_ids or heuristic.schedule.slot != oracle_res.schedule.slot:
        raise ValueError("gap_report needs two results for the same instance")
    n = len(h_ids)
    hv, ov = heuristic.violations, oracle_res.violations
    if hv < ov:
        raise DominanceError(f"heuristic ({hv}) beat the oracle ({ov})")
    pp = 100.0 * (hv - ov) / n if n else 0.0
    if hv == ov:
        rel = 0.0
    else:
        rel = (hv - ov) / ov if ov else math.inf
    return GapRecord(n, hv, ov, pp, rel)
