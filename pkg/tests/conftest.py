import pytest

from mecsched.core import RadioParams, SlotConfig, Task
from mecsched.schedulers import SlotProblem
from mecsched.topology import load_topology


def line_topology(caps, rates=None, spacing=1000.0):
    """Servers on a line, link i joins i and i+1."""
    n = len(caps)
    rates = rates or [1e9] * (n - 1)
    return load_topology({
        "nodes": [{"id": i, "x_m": i * spacing, "y_m": 0.0, "capacity_mips": c} for i, c in enumerate(caps)],
        "edges": [{"a": i, "b": i + 1, "rate_bps": r, "distance_m": spacing} for i, r in enumerate(rates)],
    })


def make_task(i, host=0, s=1e6, c=100.0, deadline=1.0, **kw):
    return Task(id=i, host=host, data_size_bits=s, instr_millions=c, deadline_s=deadline, **kw)


def problem(tasks, topo, rate=1e9, cfg=None, **kw):
    return SlotProblem(list(tasks), topo, {t.id: rate for t in tasks}, cfg or SlotConfig(alpha=0.0), **kw)


@pytest.fixture
def cfg0():
    return SlotConfig(slot_s=2.0, alpha=0.0)


@pytest.fixture
def radio():
    return RadioParams()


def gap_instances(count, n_tasks=8, seed=11, n_servers=3):
    """Small single-slot problems drawn like the bundled gap preset."""
    import copy

    from mecsched.experiments import ExperimentConfig, build_instance

    cfg = ExperimentConfig.load("gap")
    raw = copy.deepcopy(cfg.raw)
    raw["workload"]["n_tasks"] = n_tasks
    raw["topology"]["n_servers"] = n_servers
    raw["repetitions"] = count
    raw["seed"] = seed
    out = []
    for s in ExperimentConfig(raw).rep_seeds():
        slot_cfg, topo, tasks, rates = build_instance(raw, s)
        out.append(SlotProblem(tasks, topo, rates, slot_cfg))
    return out


# acceptance lines, printed once at the end of the session
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcd")), k)):
        terminalreporter.write_line(ACCEPTANCE[key])
