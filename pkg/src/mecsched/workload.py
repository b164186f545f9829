"""Task generation: application profiles, instruction demand, MU placement."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import ModelError, RadioParams, Task
from .radio import ChannelModel, channel_rate, db_to_watts, gain_from_distance
from .topology import Topology

MB_BITS = 8e6


@dataclass(frozen=True)
class AppProfile:
    name: str
    deadline_ms: tuple[float, float]
    size_mb: tuple[float, float]
    alpha: float = 0.1

    def __post_init__(self):
        lo, hi = self.deadline_ms
        if not 0 < lo <= hi:
            raise ModelError(f"{self.name}: bad deadline range {self.deadline_ms}")
        lo, hi = self.size_mb
        if not 0 < lo <= hi:
            raise ModelError(f"{self.name}: bad size range {self.size_mb}")


# latency-sensitive application classes (deadline in ms, input size in MB)
APP_CLASSES = (
    AppProfile("augmented-reality", (75, 75), (1, 7)),
    AppProfile("online-gaming", (100, 100), (1, 10)),
    AppProfile("face-recognition", (100, 100), (0.09, 7.5)),
    AppProfile("web-browser", (100, 800), (0.3, 5)),
    AppProfile("big-data", (200, 900), (0.1, 1)),
)
PROFILES = {p.name: p for p in APP_CLASSES}


@dataclass(frozen=True)
class Hotspot:
    centers: tuple[int, ...]          # server ids the crowds gather around
    concentration: float = 0.8        # share of MUs placed in a hotspot
    spread_m: float = 60.0            # std-dev of the crowd around its center

    def __post_init__(self):
        if not self.centers:
            raise ModelError("hotspot placement needs at least one center")
        if not 0 <= self.concentration <= 1:
            raise ModelError("concentration must lie in [0, 1]")


@dataclass(frozen=True)
class RadioSetup:
    tx_power_w: float = 1.5
    noise_db: float = -60.0
    interference_w: float = 0.0
    channel: ChannelModel = field(default_factory=ChannelModel)
    fixed_gain: Optional[float] = None  # same g for every MU instead of the distance law


@dataclass(frozen=True)
class WorkloadSpec:
    n_tasks: int
    area_m: tuple[float, float] = (1000.0, 500.0)
    instr_mean: float = 23000.0
    instr_std: float = 3500.0
    app_mix: tuple[tuple[AppProfile, float], ...] = tuple((p, 0.2) for p in APP_CLASSES)
    placement: Union[str, Hotspot] = "uniform"
    seed: int = 0
    arrival_window_s: float = 0.0
    radio: RadioSetup = field(default_factory=RadioSetup)

    def __post_init__(self):
        if self.n_tasks < 0:
            raise ModelError("n_tasks must be >= 0")
        if min(self.area_m) <= 0:
            raise ModelError("area must be positive")
        if not self.app_mix:
            raise ModelError("app_mix is empty")
        w = sum(wt for _, wt in self.app_mix)
        if any(wt < 0 for _, wt in self.app_mix) or not math.isclose(w, 1.0, rel_tol=1e-9):
            raise ModelError(f"app_mix weights must be non-negative and sum to 1 (got {w})")
        if isinstance(self.placement, str) and self.placement != "uniform":
            raise ModelError(f"unknown placement {self.placement!r}")
        if self.instr_std < 0 or self.arrival_window_s < 0:
            raise ModelError("negative spread or arrival window")


def app_profile_sample(app_mix, rng: np.random.Generator) -> tuple[float, float, float]:
    """One (deadline_s, size_bits, alpha) draw from a weighted mix."""
    profiles = [p for p, _ in app_mix]
    weights = np.array([w for _, w in app_mix], dtype=float)
    p = profiles[int(rng.choice(len(profiles), p=weights / weights.sum()))]
    deadline = rng.uniform(*p.deadline_ms) / 1000.0
    size = rng.uniform(*p.size_mb) * MB_BITS
    return float(deadline), float(size), p.alpha


def _place(spec: WorkloadSpec, topo: Topology, rng: np.random.Generator) -> np.ndarray:
    w, h = spec.area_m
    n = spec.n_tasks
    pts = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])
    if isinstance(spec.placement, Hotspot):
        hs = spec.placement
        for c in hs.centers:
            if not 0 <= c < topo.n:
                raise ModelError(f"hotspot center {c} is not a server")
        crowd = rng.random(n) < hs.concentration
        which = rng.integers(0, len(hs.centers), n)
        centers = topo.positions[np.array(hs.centers)[which]]
        jitter = rng.normal(0.0, hs.spread_m, (n, 2))
        near = np.clip(centers + jitter, [0, 0], [w, h])
        pts = np.where(crowd[:, None], near, pts)
    return pts


def generate(spec: WorkloadSpec, topo: Topology) -> list[Task]:
    if spec.n_tasks == 0:
        return []
    rng = np.random.default_rng(spec.seed)
    n = spec.n_tasks
    profiles = [p for p, _ in spec.app_mix]
    weights = np.array([w for _, w in spec.app_mix], dtype=float)
    which = rng.choice(len(profiles), size=n, p=weights / weights.sum())
    u_dead = rng.random(n)
    u_size = rng.random(n)
    instr = np.maximum(rng.normal(spec.instr_mean, spec.instr_std, n), 1.0)
    pts = _place(spec, topo, rng)
    arrivals = rng.uniform(0, spec.arrival_window_s, n) if spec.arrival_window_s > 0 else np.zeros(n)

    srv = topo.positions
    d_all = np.hypot(pts[:, None, 0] - srv[None, :, 0], pts[:, None, 1] - srv[None, :, 1])
    hosts = np.argmin(d_all, axis=1)  # first minimum = lowest id on ties
    dist = d_all[np.arange(n), hosts]

    r = spec.radio
    noise = db_to_watts(r.noise_db)
    tasks = []
    for i in range(n):
        p = profiles[which[i]]
        lo, hi = p.deadline_ms
        deadline = (lo + (hi - lo) * u_dead[i]) / 1000.0
        lo, hi = p.size_mb
        size = (lo + (hi - lo) * u_size[i]) * MB_BITS
        gain = r.fixed_gain if r.fixed_gain is not None else gain_from_distance(float(dist[i]), r.channel)
        tasks.append(Task(
            id=i, host=int(hosts[i]), data_size_bits=float(size), instr_millions=float(instr[i]),
            deadline_s=float(deadline), mu_distance_m=float(dist[i]),
            radio=RadioParams(r.tx_power_w, gain, r.interference_w, noise),
            alpha=p.alpha, arrival_s=float(arrivals[i]),
        ))
    return tasks


def bind_slots(tasks: Sequence[Task], slot_s: float) -> list[Task]:
    """Attach each task to the first slot boundary at or after its arrival."""
    from dataclasses import replace
    return [replace(t, arrival_slot=int(math.ceil(t.arrival_s / slot_s - 1e-12))) for t in tasks]


def rates_for(tasks: Sequence[Task], channel: ChannelModel) -> dict[int, float]:
    return {t.id: channel_rate(t.radio, channel) for t in tasks}


# -- replayable record files ---------------------------------------------

def save_workload(tasks: Sequence[Task], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps([asdict(t) for t in tasks], indent=1))


def load_workload(path: Union[str, Path]) -> list[Task]:
    out = []
    for rec in json.loads(Path(path).read_text()):
        rec["radio"] = RadioParams(**rec["radio"])
        out.append(Task(**rec))
    return out
