"""Configuration-driven experiment sweeps and their output files.

One experiment = one sweep variable x its values x schedulers x
repetitions. Repetition ``r`` draws its workload from the same seed at
every sweep value, so the points of a series are paired.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from .core import SlotConfig
from .oracle import DominanceError, OracleLimits
from .radio import ChannelModel
from .schedulers import SCHEDULERS
from .sim import SimRun, run
from .topology import Topology, builtin_topology, chain_topology, growing_topology, load_topology
from .workload import APP_CLASSES, PROFILES, AppProfile, Hotspot, RadioSetup, WorkloadSpec, bind_slots, generate, rates_for

log = logging.getLogger(__name__)

SWEEP_VARIABLES = ("n_servers", "n_tasks", "slot_s", "placement", "topology")
PRESET_DIR = Path(__file__).parent / "presets"


class ExperimentError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "description": "",
    "schedulers": ["mesa", "no-migration", "random"],
    "repetitions": 20,
    "seed": 0,
    "area_m": [1000.0, 500.0],
    "slot": {"slot_s": 2.0, "decision_s": 0.0, "alpha": 0.1, "v_c_mps": 3e8, "big_m_s": 1e4},
    "radio": {"bandwidth_hz": 20e6, "pathloss_exponent": 4.0, "reference_gain": 1.0,
              "tx_power_w": 1.5, "noise_db": -60.0, "interference_w": 0.0, "fixed_gain": None},
    "topology": {"kind": "grown", "name": None, "path": None, "n_servers": 5, "link_rate_bps": 1e9,
                 "capacity_set_mips": [2e7, 3e7, 4e7], "capacity_mode": "fresh",
                 "total_capacity_mips": None, "seed": 0, "reseed_per_repetition": False,
                 "override_capacities": False},
    "workload": {"n_tasks": 1000, "instr_mean": 23000.0, "instr_std": 3500.0, "apps": None,
                 "profiles": None, "placement": "uniform", "arrival_window_s": 0.0},
    "simulation": {"horizon": None, "defer": True},
    "oracle": {"enabled": False, "max_tasks": 12, "max_servers": 4, "time_budget_s": 60.0, "max_nodes": None},
    "gap_thresholds": {"mean_pp": 15.0, "max_pp": 25.0},
    "sweep": {"variable": None, "values": []},
    "workers": 1,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists() and (PRESET_DIR / f"{path}.yaml").exists():
            p = PRESET_DIR / f"{path}.yaml"
        return cls.from_dict(yaml.safe_load(p.read_text()))

    def validate(self) -> None:
        r = self.raw
        sw = r["sweep"]
        if sw.get("variable") not in SWEEP_VARIABLES:
            raise ExperimentError(f"sweep.variable must be one of {SWEEP_VARIABLES}, got {sw.get('variable')!r}")
        if not sw.get("values"):
            raise ExperimentError("sweep.values is empty")
        if int(r["repetitions"]) < 1:
            raise ExperimentError("repetitions must be >= 1")
        for s in r["schedulers"]:
            if s not in SCHEDULERS:
                raise ExperimentError(f"unknown scheduler {s!r}")
        if r["topology"]["kind"] not in ("grown", "chain", "builtin", "file"):
            raise ExperimentError(f"unknown topology kind {r['topology']['kind']!r}")
        if r["topology"]["capacity_mode"] not in ("fresh", "fixed_total"):
            raise ExperimentError("capacity_mode must be 'fresh' or 'fixed_total'")

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def sweep_variable(self) -> str:
        return self.raw["sweep"]["variable"]

    @property
    def sweep_values(self) -> list:
        return list(self.raw["sweep"]["values"])

    @property
    def repetitions(self) -> int:
        return int(self.raw["repetitions"])

    def canonical(self) -> str:
        # workers does not affect results
        d = {k: v for k, v in self.raw.items() if k != "workers"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def oracle_limits(self) -> OracleLimits:
        o = self.raw["oracle"]
        nodes = o.get("max_nodes")
        return OracleLimits(int(o["max_tasks"]), int(o["max_servers"]), float(o["time_budget_s"]),
                            None if nodes is None else int(nodes))

    def rep_seeds(self) -> list[int]:
        ss = np.random.SeedSequence(int(self.raw["seed"]))
        return [int(c.generate_state(1)[0]) for c in ss.spawn(self.repetitions)]


# -- building one point ---------------------------------------------------

def _point_settings(cfg: ExperimentConfig, value) -> dict:
    r = copy.deepcopy(cfg.raw)
    var = cfg.sweep_variable
    if var == "n_servers":
        r["topology"]["n_servers"] = int(value)
    elif var == "n_tasks":
        r["workload"]["n_tasks"] = int(value)
    elif var == "slot_s":
        r["slot"]["slot_s"] = float(value)
    elif var == "placement":
        r["workload"]["placement"] = value
    elif var == "topology":
        if isinstance(value, str) and value.lower() in ("renam", "cesnet", "spiralight"):
            r["topology"]["kind"], r["topology"]["name"] = "builtin", value
        else:
            r["topology"]["kind"], r["topology"]["path"] = "file", value
    return r


def _capacities(t: dict, n: int, seed: int) -> list[float]:
    if t["capacity_mode"] == "fixed_total":
        total = t["total_capacity_mips"]
        if not total:
            raise ExperimentError("capacity_mode fixed_total needs total_capacity_mips")
        return [float(total) / n] * n
    rng = np.random.default_rng(seed)
    cap_set = [float(c) for c in t["capacity_set_mips"]]
    # draw a long fixed sequence so server k's capacity does not depend on n
    seq = rng.choice(cap_set, size=max(n, 64))
    return [float(c) for c in seq[:n]]


def build_topology(r: dict, rep_seed: int) -> Topology:
    t = r["topology"]
    area = tuple(float(x) for x in r["area_m"])
    tseed = int(t["seed"])
    if t.get("reseed_per_repetition"):
        tseed = int(np.random.SeedSequence([tseed, rep_seed]).generate_state(1)[0])
    if t["kind"] == "grown":
        n = int(t["n_servers"])
        return growing_topology(n, area, _capacities(t, n, tseed), float(t["link_rate_bps"]), seed=tseed)
    if t["kind"] == "chain":
        n = int(t["n_servers"])
        return chain_topology(n, area, _capacities(t, n, tseed), float(t["link_rate_bps"]))
    if t["kind"] == "builtin":
        from .topology import BUILTIN
        name = str(t["name"]).lower()
        if name not in BUILTIN:
            raise ExperimentError(f"unknown built-in topology {t['name']!r}")
        n = len(BUILTIN[name]["pos"])
        return builtin_topology(name, area, _capacities(t, n, tseed), float(t["link_rate_bps"]))
    topo = load_topology(t["path"])
    if t.get("capacity_set_mips") and t.get("override_capacities"):
        topo = topo.with_capacities(_capacities(t, topo.n, tseed))
    return topo


def _app_mix(w: dict):
    if w.get("profiles"):
        mix = []
        for p in w["profiles"]:
            prof = AppProfile(p["name"], tuple(p["deadline_ms"]), tuple(p["size_mb"]), float(p.get("alpha", 0.1)))
            mix.append((prof, float(p["weight"])))
        return tuple(mix)
    if w.get("apps"):
        try:
            return tuple((PROFILES[k], float(v)) for k, v in w["apps"].items())
        except KeyError as e:
            raise ExperimentError(f"unknown application profile {e.args[0]!r}") from None
    return tuple((p, 1.0 / len(APP_CLASSES)) for p in APP_CLASSES)


def _placement(p):
    if p == "uniform" or p is None:
        return "uniform"
    if isinstance(p, dict) and "hotspot" in p:
        h = p["hotspot"]
        return Hotspot(tuple(int(c) for c in h["centers"]), float(h.get("concentration", 0.8)),
                       float(h.get("spread_m", 60.0)))
    raise ExperimentError(f"bad placement {p!r}")


def _placement_label(p) -> str:
    if p == "uniform" or p is None:
        return "uniform"
    h = p["hotspot"]
    return "hotspot" + "-".join(str(c) for c in h["centers"])


def sweep_label(var: str, value) -> str:
    if var == "placement":
        return _placement_label(value)
    if var == "topology":
        return str(value)
    return repr(float(value)) if var == "slot_s" else str(int(value))


def build_instance(r: dict, rep_seed: int):
    """(SlotConfig, Topology, bound tasks, rates) for one repetition of one point."""
    s, rad, w = r["slot"], r["radio"], r["workload"]
    cfg = SlotConfig(slot_s=float(s["slot_s"]), decision_s=float(s["decision_s"]), alpha=float(s["alpha"]),
                     v_c_mps=float(s["v_c_mps"]), bandwidth_hz=float(rad["bandwidth_hz"]),
                     big_m_s=float(s["big_m_s"]))
    channel = ChannelModel(float(rad["bandwidth_hz"]), float(rad["pathloss_exponent"]), float(rad["reference_gain"]))
    topo = build_topology(r, rep_seed)
    spec = WorkloadSpec(
        n_tasks=int(w["n_tasks"]), area_m=tuple(float(x) for x in r["area_m"]),
        instr_mean=float(w["instr_mean"]), instr_std=float(w["instr_std"]), app_mix=_app_mix(w),
        placement=_placement(w["placement"]), seed=rep_seed, arrival_window_s=float(w["arrival_window_s"]),
        radio=RadioSetup(float(rad["tx_power_w"]), float(rad["noise_db"]), float(rad["interference_w"]), channel,
                         None if rad["fixed_gain"] is None else float(rad["fixed_gain"])),
    )
    tasks = bind_slots(generate(spec, topo), cfg.slot_s)
    return cfg, topo, tasks, rates_for(tasks, channel)


def _fits_oracle(r: dict, tasks, topo, limits: OracleLimits) -> bool:
    if topo.n > limits.max_servers:
        return False
    per_slot: dict[int, int] = {}
    for t in tasks:
        per_slot[t.arrival_slot] = per_slot.get(t.arrival_slot, 0) + 1
    # deferrals can stack two slots' arrivals
    worst = max((per_slot.get(k, 0) + per_slot.get(k - 1, 0) for k in per_slot), default=0)
    if not r["simulation"]["defer"]:
        worst = max(per_slot.values(), default=0)
    return worst <= limits.max_tasks


def run_point(args) -> dict:
    """One (sweep value, repetition): every scheduler on the same instance."""
    cfg_raw, index, value, rep, rep_seed = args
    cfg = ExperimentConfig(cfg_raw)
    r = _point_settings(cfg, value)
    slot_cfg, topo, tasks, rates = build_instance(r, rep_seed)
    sim = r["simulation"]
    out = {"sweep_index": index, "rep": rep, "seed": rep_seed, "n_tasks": len(tasks),
           "capacities_mips": topo.capacities.tolist(), "topology": topo.name, "schedulers": {}}
    reports = {}
    for name in cfg.raw["schedulers"]:
        rep_ = run(SimRun(slot_cfg, topo, tasks, rates, name, rep_seed, sim["horizon"], bool(sim["defer"])))
        reports[name] = rep_
        out["schedulers"][name] = {"violation_pct": rep_.violation_pct, "violations": rep_.violations,
                                   "runtime_ms": 1000.0 * rep_.scheduler_time_s}
    if cfg.raw["oracle"]["enabled"]:
        limits = cfg.oracle_limits()
        if _fits_oracle(r, tasks, topo, limits):
            o = run(SimRun(slot_cfg, topo, tasks, rates, "oracle", rep_seed, sim["horizon"], bool(sim["defer"]),
                           limits))
            out["schedulers"]["oracle"] = {"violation_pct": o.violation_pct, "violations": o.violations,
                                           "runtime_ms": 1000.0 * o.scheduler_time_s,
                                           "proved_optimal": o.proved_optimal}
            for name, rep_ in reports.items():
                if o.proved_optimal and rep_.violations < o.violations and _single_slot(tasks):
                    raise DominanceError(f"{name} beat the oracle at point {value!r}, rep {rep}")
                n = len(tasks)
                out["schedulers"][name]["oracle_gap_pp"] = 100.0 * (rep_.violations - o.violations) / n if n else 0.0
        else:
            out["oracle_skipped"] = True
    return out


def _single_slot(tasks) -> bool:
    return all(t.arrival_slot == 0 for t in tasks)


# -- aggregation ----------------------------------------------------------

@dataclass
class ResultRecord:
    config_hash: str
    sweep_value: Any
    scheduler: str
    violation_pct: list[float]
    runtime_ms: list[float]
    oracle_gap_pp: Optional[list[float]] = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.violation_pct))

    @property
    def min(self) -> float:
        return float(np.min(self.violation_pct))

    @property
    def max(self) -> float:
        return float(np.max(self.violation_pct))

    def to_dict(self) -> dict:
        d = {"config_hash": self.config_hash, "sweep_value": self.sweep_value, "scheduler": self.scheduler,
             "violation_pct": self.violation_pct, "mean": self.mean, "min": self.min, "max": self.max,
             "runtime_ms": self.runtime_ms}
        if self.oracle_gap_pp is not None:
            d["oracle_gap_pp"] = self.oracle_gap_pp
        return d


@dataclass
class ExperimentResults:
    config: ExperimentConfig
    points: list[dict]          # raw per (value, rep) records, in sweep/rep order
    records: list[ResultRecord] = field(default_factory=list)

    def series(self, scheduler: str) -> list[float]:
        return [rec.mean for rec in self.records if rec.scheduler == scheduler]

    def record(self, value, scheduler: str) -> ResultRecord:
        for rec in self.records:
            if rec.sweep_value == value and rec.scheduler == scheduler:
                return rec
        raise KeyError((value, scheduler))


def _aggregate(cfg: ExperimentConfig, points: list[dict]) -> list[ResultRecord]:
    names = list(cfg.raw["schedulers"]) + (["oracle"] if cfg.raw["oracle"]["enabled"] else [])
    recs = []
    for idx, value in enumerate(cfg.sweep_values):
        pts = [p for p in points if p["sweep_index"] == idx]
        for name in names:
            got = [p["schedulers"][name] for p in pts if name in p["schedulers"]]
            if not got:
                continue
            if len(got) != cfg.repetitions:
                log.warning("point %r: %s ran on %d/%d repetitions", value, name, len(got), cfg.repetitions)
            gaps = [g["oracle_gap_pp"] for g in got if "oracle_gap_pp" in g]
            recs.append(ResultRecord(cfg.config_hash, value, name, [g["violation_pct"] for g in got],
                                     [g["runtime_ms"] for g in got], gaps or None))
    return recs


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   seed: Optional[int] = None) -> ExperimentResults:
    if seed is not None:
        raw = copy.deepcopy(cfg.raw)
        raw["seed"] = int(seed)
        cfg = ExperimentConfig(raw)
    seeds = cfg.rep_seeds()
    jobs = [(cfg.raw, i, v, rep, seeds[rep])
            for i, v in enumerate(cfg.sweep_values) for rep in range(cfg.repetitions)]
    if cfg.raw["oracle"]["enabled"]:
        _warn_oversized(cfg, seeds)
    workers = int(workers if workers is not None else cfg.raw.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(run_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        points = [run_point(j) for j in jobs]
    points.sort(key=lambda p: (p["sweep_index"], p["rep"]))
    return ExperimentResults(cfg, points, _aggregate(cfg, points))


def _warn_oversized(cfg: ExperimentConfig, seeds) -> None:
    limits = cfg.oracle_limits()
    for v in cfg.sweep_values:
        r = _point_settings(cfg, v)
        n = int(r["workload"]["n_tasks"])
        if n > limits.max_tasks:
            warnings.warn(f"{cfg.name}: oracle may be skipped at {cfg.sweep_variable}={v!r} "
                          f"({n} tasks > max_tasks {limits.max_tasks})", stacklevel=3)


# -- outputs --------------------------------------------------------------

class OutputError(OSError):
    pass


TABLE_COLUMNS = ["sweep_value", "scheduler", "mean", "min", "max", "n", "config_hash"]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def tabular_text(results: ExperimentResults) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    var = results.config.sweep_variable
    for rec in results.records:
        w.writerow([sweep_label(var, rec.sweep_value), rec.scheduler, _fmt(rec.mean), _fmt(rec.min),
                    _fmt(rec.max), len(rec.violation_pct), rec.config_hash])
    return buf.getvalue()


def runtime_text(results: ExperimentResults) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep_value", "scheduler", "mean_ms", "min_ms", "max_ms", "n", "config_hash"])
    var = results.config.sweep_variable
    for rec in results.records:
        w.writerow([sweep_label(var, rec.sweep_value), rec.scheduler, _fmt(float(np.mean(rec.runtime_ms))),
                    _fmt(float(np.min(rec.runtime_ms))), _fmt(float(np.max(rec.runtime_ms))),
                    len(rec.runtime_ms), rec.config_hash])
    return buf.getvalue()


def emit_outputs(results: ExperimentResults, out_dir: Union[str, Path]) -> dict[str, Path]:
    if not results.records:
        raise ExperimentError("no results to write")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise OutputError(f"cannot write to {out}: {e}") from e

    cfg = results.config
    name = cfg.name
    table = tabular_text(results)
    paths = {
        "records": out / f"{name}.json",
        "table": out / f"{name}.csv",
        "runtime": out / f"{name}_runtime.csv",
        "manifest": out / f"{name}_plot.json",
    }
    doc = {
        "name": name,
        "config_hash": cfg.config_hash,
        "config": cfg.raw,
        "seeds": cfg.rep_seeds(),
        "table_sha256": hashlib.sha256(table.encode()).hexdigest(),
        "records": [r.to_dict() for r in results.records],
        "points": results.points,
    }
    names = sorted({r.scheduler for r in results.records}, key=lambda s: (s == "oracle", s))
    manifest = {
        "name": name, "config_hash": cfg.config_hash, "seeds": cfg.rep_seeds(),
        "description": cfg.raw.get("description", ""),
        "x": {"column": "sweep_value", "label": cfg.sweep_variable},
        "y": {"column": "mean", "band": ["min", "max"], "label": "Deadline violation (%)"},
        "series": [{"scheduler": s, "file": paths["table"].name} for s in names],
        "runtime_file": paths["runtime"].name,
    }
    paths["records"].write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default))
    paths["table"].write_text(table)
    paths["runtime"].write_text(runtime_text(results))
    paths["manifest"].write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return paths


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def replay(results_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None,
           workers: Optional[int] = None) -> tuple[bool, ExperimentResults]:
    """Re-run an experiment from its record file; True when the table is byte-identical."""
    doc = json.loads(Path(results_path).read_text())
    cfg = ExperimentConfig.from_dict(doc["config"])
    res = run_experiment(cfg, workers=workers)
    table = tabular_text(res)
    if out_dir is not None:
        emit_outputs(res, out_dir)
    return hashlib.sha256(table.encode()).hexdigest() == doc["table_sha256"], res


# -- gap verification -----------------------------------------------------

@dataclass
class GapSummary:
    n_instances: int
    mean_abs_pp: float
    max_abs_pp: float
    mean_rel: Optional[float]
    max_rel: Optional[float]
    thresholds: dict
    unproved: int = 0

    @property
    def within_thresholds(self) -> bool:
        return self.mean_abs_pp <= self.thresholds["mean_pp"] and self.max_abs_pp <= self.thresholds["max_pp"]

    def to_dict(self) -> dict:
        return {"n_instances": self.n_instances, "mean_abs_pp": self.mean_abs_pp, "max_abs_pp": self.max_abs_pp,
                "mean_rel": self.mean_rel, "max_rel": self.max_rel, "thresholds": self.thresholds,
                "within_thresholds": self.within_thresholds, "unproved": self.unproved}


def verify_gap(cfg: ExperimentConfig, workers: Optional[int] = None) -> GapSummary:
    """MESA vs oracle over every (point, repetition) of a config."""
    raw = copy.deepcopy(cfg.raw)
    raw["oracle"]["enabled"] = True
    if "mesa" not in raw["schedulers"]:
        raw["schedulers"] = ["mesa"] + list(raw["schedulers"])
    res = run_experiment(ExperimentConfig(raw), workers=workers)
    abs_gaps, rel_gaps, unproved = [], [], 0
    for p in res.points:
        if "oracle" not in p["schedulers"]:
            continue
        o, m = p["schedulers"]["oracle"], p["schedulers"]["mesa"]
        if not o.get("proved_optimal", True):
            unproved += 1
        if m["violations"] < o["violations"]:
            raise DominanceError(f"MESA beat the oracle (seed {p['seed']})")
        abs_gaps.append(m["oracle_gap_pp"])
        if o["violations"]:
            rel_gaps.append((m["violations"] - o["violations"]) / o["violations"])
        elif m["violations"] == 0:
            rel_gaps.append(0.0)
    if not abs_gaps:
        raise ExperimentError("no point fit within the oracle limits")
    return GapSummary(len(abs_gaps), float(np.mean(abs_gaps)), float(np.max(abs_gaps)),
                      float(np.mean(rel_gaps)) if rel_gaps else None,
                      float(np.max(rel_gaps)) if rel_gaps else None,
                      dict(raw["gap_thresholds"]), unproved)


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
