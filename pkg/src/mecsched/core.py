"""Domain types and the latency / allocation model.

Units are fixed throughout the package: bits, bits/s, MI (million
instructions), MIPS, meters and seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

SPEED_OF_LIGHT = 3e8
# float-rounding slack when comparing a constructed TRT against its deadline
TIME_EPS = 1e-9


class ModelError(ValueError):
    """Invalid input to a latency or allocation computation."""


class InfeasibleBudget(ModelError):
    """Processing budget is zero or negative: the task cannot run there."""


class NoPathError(ModelError):
    """Two servers are not connected."""


@dataclass(frozen=True)
class RadioParams:
    tx_power_w: float = 1.5
    gain: float = 1e-6
    interference_w: float = 0.0
    noise_w: float = 1e-6

    def __post_init__(self):
        # zero power or gain is allowed (rate 0); such a task cannot upload
        if self.tx_power_w < 0 or self.gain < 0 or self.noise_w <= 0:
            raise ModelError(f"invalid radio parameters: {self}")
        if self.interference_w < 0:
            raise ModelError(f"negative interference: {self.interference_w}")


@dataclass(frozen=True)
class Task:
    id: int
    host: int
    data_size_bits: float
    instr_millions: float
    deadline_s: float
    arrival_slot: int = 0
    mu_distance_m: float = 0.0
    radio: RadioParams = field(default_factory=RadioParams)
    # response/input size ratio; None falls back to SlotConfig.alpha
    alpha: Optional[float] = None
    # absolute arrival time; the wait until the slot boundary eats into the deadline
    arrival_s: float = 0.0

    def __post_init__(self):
        if self.data_size_bits <= 0:
            raise ModelError(f"task {self.id}: data_size_bits must be > 0")
        if self.instr_millions <= 0:
            raise ModelError(f"task {self.id}: instr_millions must be > 0")
        if self.deadline_s <= 0:
            raise ModelError(f"task {self.id}: deadline_s must be > 0")
        if self.mu_distance_m < 0:
            raise ModelError(f"task {self.id}: negative MU distance")


@dataclass(frozen=True)
class MecServer:
    id: int
    position: tuple[float, float]
    capacity_mips: float

    def __post_init__(self):
        if self.capacity_mips <= 0:
            raise ModelError(f"server {self.id}: capacity_mips must be > 0")


@dataclass(frozen=True)
class SlotConfig:
    slot_s: float = 2.0
    decision_s: float = 0.0
    alpha: float = 0.1
    v_c_mps: float = SPEED_OF_LIGHT
    bandwidth_hz: float = 20e6
    big_m_s: float = 1e4

    def __post_init__(self):
        if self.slot_s <= 0:
            raise ModelError("slot_s must be > 0")
        if self.alpha < 0:
            raise ModelError("alpha must be >= 0")
        if self.v_c_mps <= 0:
            raise ModelError("v_c_mps must be > 0")
        if self.bandwidth_hz <= 0:
            raise ModelError("bandwidth_hz must be > 0")
        if self.decision_s < 0:
            raise ModelError("decision_s must be >= 0")

    def check_deadlines(self, tasks: Sequence[Task]) -> None:
        worst = max((t.deadline_s for t in tasks), default=0.0)
        if self.big_m_s <= worst:
            raise ModelError(f"big_m_s={self.big_m_s} must exceed the largest deadline {worst}")

    def alpha_for(self, task: Task) -> float:
        return self.alpha if task.alpha is None else task.alpha


@dataclass(frozen=True)
class Assignment:
    task_id: int
    server: Optional[int]
    alloc_mips: Optional[float]
    trt_s: float
    violated: bool

    @property
    def assigned(self) -> bool:
        return self.server is not None


@dataclass
class Schedule:
    slot: int
    assignments: list[Assignment]
    residual_mips: dict[int, float]

    def by_task(self) -> dict[int, Assignment]:
        return {a.task_id: a for a in self.assignments}

    @property
    def violations(self) -> int:
        return sum(a.violated for a in self.assignments)

    def load(self) -> dict[int, float]:
        out = {k: 0.0 for k in self.residual_mips}
        for a in self.assignments:
            if a.assigned:
                out[a.server] += a.alloc_mips
        return out


# -- latency model --------------------------------------------------------

def upload_time(task: Task, rate_bps: float, v_c_mps: float = SPEED_OF_LIGHT) -> float:
    """MU -> host transfer: serialization over the radio plus propagation."""
    if not rate_bps > 0:
        raise ModelError(f"channel rate must be > 0, got {rate_bps}")
    return task.data_size_bits / rate_bps + task.mu_distance_m / v_c_mps


def _link(topo, a: int, b: int) -> tuple[float, float]:
    rate = topo.effective_rate(a, b)
    if rate <= 0 or math.isnan(rate):
        raise NoPathError(f"no path between servers {a} and {b}")
    return rate, topo.distance(a, b)


def migration_time(task: Task, src: int, dst: int, topo, v_c_mps: float = SPEED_OF_LIGHT) -> float:
    if src == dst:
        return 0.0
    rate, dist = _link(topo, src, dst)
    return task.data_size_bits / rate + dist / v_c_mps


def response_time(task: Task, exec_server: int, topo, rate_bps: float, cfg: SlotConfig) -> float:
    """Send the result back: executing server -> host -> MU.

    The result is ``alpha * s`` bits. The inter-server terms vanish when the
    task runs on its host.
    """
    if not rate_bps > 0:
        raise ModelError(f"channel rate must be > 0, got {rate_bps}")
    size = cfg.alpha_for(task) * task.data_size_bits
    t = size / rate_bps
    if exec_server != task.host:
        rate, dist = _link(topo, task.host, exec_server)
        t += size / rate + dist / cfg.v_c_mps
    return t


def transfer_overhead(task: Task, exec_server: int, topo, rate_bps: float, cfg: SlotConfig) -> float:
    """Decision + upload + migration + response: everything except processing."""
    return (cfg.decision_s
            + upload_time(task, rate_bps, cfg.v_c_mps)
            + migration_time(task, task.host, exec_server, topo, cfg.v_c_mps)
            + response_time(task, exec_server, topo, rate_bps, cfg))


def max_trt(task: Task, cfg: SlotConfig) -> float:
    return min(task.deadline_s, cfg.slot_s)


def process_budget(task: Task, exec_server: int, topo, rate_bps: float, cfg: SlotConfig) -> float:
    """Longest processing time that still meets min(deadline, slot).

    May be <= 0; callers treat that as "this server is infeasible".
    """
    return max_trt(task, cfg) - transfer_overhead(task, exec_server, topo, rate_bps, cfg)


def required_mips(task: Task, budget_s: float) -> float:
    if not budget_s > 0:
        raise InfeasibleBudget(f"task {task.id}: non-positive budget {budget_s}")
    return task.instr_millions / budget_s


def total_response_time(task: Task, assignment: Optional[Assignment], topo, rate_bps: float,
                        cfg: SlotConfig) -> float:
    """TRT of a task under an assignment; unassigned tasks pay the big-M penalty."""
    prefix = cfg.decision_s + upload_time(task, rate_bps, cfg.v_c_mps)
    if assignment is None or not assignment.assigned:
        return prefix + cfg.big_m_s
    k = assignment.server
    process = task.instr_millions / assignment.alloc_mips
    return (prefix
            + migration_time(task, task.host, k, topo, cfg.v_c_mps)
            + process
            + response_time(task, k, topo, rate_bps, cfg))


def violation_flag(trt_s: float, deadline_s: float, eps: float = 0.0) -> bool:
    return trt_s > deadline_s + eps
