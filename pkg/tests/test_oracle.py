import itertools
import math
import random

import pytest

from mecsched.core import SlotConfig
from mecsched.oracle import (DominanceError, OracleLimitError, OracleLimits, gap_report, optimal_schedule)
from mecsched.schedulers import SlotProblem, finalize, mesa_schedule, no_migration_schedule, random_schedule

from conftest import gap_instances, line_topology, make_task, problem


def brute_force_min(p):
    """Fewest violations over every assignment in (servers + unassigned)^tasks."""
    mips = p.demand.mips
    caps = p.topology.capacities
    n, m = mips.shape
    best = n
    for place in itertools.product(range(m + 1), repeat=n):
        used = [0.0] * m
        ok = True
        for i, k in enumerate(place):
            if k == m:
                continue
            f = mips[i, k]
            if not math.isfinite(f):
                ok = False
                break
            used[k] += f
        if ok and all(u <= c for u, c in zip(used, caps)):
            best = min(best, sum(k == m for k in place))
    return best


def test_everything_fits():
    topo = line_topology([1e9, 1e9, 1e9])
    tasks = [make_task(i, host=i % 3, s=1e3, c=10.0) for i in range(6)]
    res = optimal_schedule(problem(tasks, topo, rate=1e9))
    assert res.violations == 0 and res.proved_optimal
    # the tie-break prefers no migrations
    assert res.result.stats["migrations"] == 0


def knapsack_capacity_dp(f, caps):
    # max number of identical items (size f) over several bins, by DP per bin
    total = 0
    for cap in caps:
        fits = [0] * (int(cap) + 1)
        for c in range(int(cap) + 1):
            fits[c] = max(fits[c], fits[c - int(f)] + 1 if c >= f else 0)
        total += fits[int(cap)]
    return total


def test_symmetric_double_demand():
    caps = [250.0, 230.0, 110.0]
    topo = line_topology(caps, rates=[1e12, 1e12], spacing=0.0)
    n = 12
    tasks = [make_task(i, host=i % 3, s=1.0, c=100.0, deadline=1.0) for i in range(n)]
    p = problem(tasks, topo, rate=1e30)
    f = p.demand.mips[0, 0]
    assert f == pytest.approx(100.0, rel=1e-9)
    assert n * f >= 2 * sum(caps)
    expected = n - knapsack_capacity_dp(100, caps)
    res = optimal_schedule(p)
    assert res.violations == expected == n - (2 + 2 + 1)
    # greedy fill agrees on this symmetric case
    assert mesa_schedule(p).violations == expected


@pytest.mark.parametrize("idx", range(25))
def test_matches_brute_force(idx):
    p = gap_instances(25, n_tasks=5, seed=99)[idx]
    assert optimal_schedule(p).violations == brute_force_min(p)


def test_dominates_every_heuristic():
    for p in gap_instances(100):
        o = optimal_schedule(p).violations
        assert o <= mesa_schedule(p).violations
        assert o <= no_migration_schedule(p).violations
        assert o <= random_schedule(p, 3).violations


@pytest.mark.parametrize("idx", range(10))
def test_permutation_invariant(idx):
    p = gap_instances(10, n_tasks=9, seed=5)[idx]
    base = optimal_schedule(p)
    tasks = list(p.tasks)
    random.Random(idx).shuffle(tasks)
    again = optimal_schedule(SlotProblem(tasks, p.topology, p.rates, p.cfg))
    assert again.violations == base.violations
    assert again.result.choice() == base.result.choice()


def test_zero_when_host_placement_fits():
    for p in gap_instances(20, n_tasks=6, seed=3):
        caps = [1e12] * p.topology.n
        q = SlotProblem(p.tasks, p.topology.with_capacities(caps), p.rates, p.cfg)
        host_ok = sum(math.isfinite(q.demand.mips[i, q.demand.hosts[i]]) for i in range(len(q.tasks)))
        if host_ok == len(q.tasks):
            assert optimal_schedule(q).violations == 0


@pytest.mark.parametrize("idx", range(50))
def test_pruning_is_sound(idx):
    p = gap_instances(50, n_tasks=6, seed=123)[idx]
    a = optimal_schedule(p, prune=True)
    b = optimal_schedule(p, prune=False)
    assert a.violations == b.violations
    assert a.result.choice() == b.result.choice()
    assert a.nodes <= b.nodes


def test_limits():
    topo = line_topology([1e6] * 2)
    tasks = [make_task(i) for i in range(5)]
    with pytest.raises(OracleLimitError, match="max_tasks=5"):
        optimal_schedule(problem(tasks, topo), OracleLimits(max_tasks=4))
    with pytest.raises(OracleLimitError, match="max_servers=2"):
        optimal_schedule(problem(tasks, topo), OracleLimits(max_servers=1))


def test_time_budget_returns_incumbent():
    p = gap_instances(1, n_tasks=40, seed=2, n_servers=4)[0]
    res = optimal_schedule(p, OracleLimits(max_tasks=40, max_servers=4, time_budget_s=0.0))
    assert res.violations <= mesa_schedule(p).violations
    assert res.result.stats["nodes"] >= 1


def _fixed(n, violated, slot=0):
    topo = line_topology([1e12])
    p = problem([make_task(i, s=1.0, c=1.0) for i in range(n)], topo, rate=1e30, slot=slot)
    return finalize(p, [None if i < violated else 0 for i in range(n)])


def test_gap_identical():
    g = gap_report(_fixed(10, 3), _fixed(10, 3))
    assert g.abs_gap_pp == 0.0 and g.rel_gap == 0.0


def test_gap_points_and_relative():
    g = gap_report(_fixed(50, 9), _fixed(50, 5))
    assert g.abs_gap_pp == pytest.approx(8.0)
    assert g.rel_gap == pytest.approx(0.8)
    assert gap_report(_fixed(4, 1), _fixed(4, 0)).to_dict()["rel_gap"] is None


def test_gap_errors():
    with pytest.raises(ValueError, match="same instance"):
        gap_report(_fixed(5, 1), _fixed(6, 1))
    with pytest.raises(ValueError, match="same instance"):
        gap_report(_fixed(5, 1), _fixed(5, 1, slot=1))
    with pytest.raises(DominanceError):
        gap_report(_fixed(5, 1), _fixed(5, 2))


def test_slot_config_untouched():
    # the oracle reads the cached demand table, it never mutates the problem
    p = gap_instances(1)[0]
    before = p.demand.mips.copy()
    optimal_schedule(p)
    assert (p.demand.mips == before).all()
    assert isinstance(p.cfg, SlotConfig)
