"""Server graphs and the all-pairs effective rate / distance tables.

A multi-hop transfer is collapsed to a single (rate, distance) pair so the
migration formula keeps its one-link form: the route is the minimum-hop
path, its rate is the harmonic composition of the hop rates (store and
forward) and its distance the sum of hop distances.

Topology document (JSON)::

    {
      "name": "Renam",
      "defaults": {"link_rate_bps": 1e9, "capacity_mips": 2e7},
      "nodes": [{"id": 0, "label": "A", "x_m": 0.0, "y_m": 0.0, "capacity_mips": 2e7}, ...],
      "edges": [{"a": 0, "b": 1, "rate_bps": 1e9, "distance_m": 350.0}, ...]
    }

Node ids must be the integers 0..n-1. ``rate_bps`` falls back to
``defaults.link_rate_bps`` (1 Gbps) and ``distance_m`` to the Euclidean
distance between the endpoints.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import networkx as nx
import numpy as np

from .core import MecServer, ModelError, NoPathError

DEFAULT_LINK_RATE_BPS = 1e9


class TopologyError(ModelError):
    pass


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    rate_bps: float
    distance_m: float


@dataclass(frozen=True, eq=False)
class Topology:
    servers: tuple[MecServer, ...]
    links: tuple[Link, ...]
    name: str = "custom"
    rate: np.ndarray = field(init=False, repr=False)
    dist: np.ndarray = field(init=False, repr=False)
    _paths: dict = field(init=False, repr=False)

    def __post_init__(self):
        ids = [s.id for s in self.servers]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise TopologyError(f"duplicate node ids: {dup}")
        if not ids:
            raise TopologyError("topology needs at least one server")
        if sorted(ids) != list(range(len(ids))):
            raise TopologyError(f"node ids must be 0..{len(ids) - 1}, got {sorted(ids)}")
        object.__setattr__(self, "servers", tuple(sorted(self.servers, key=lambda s: s.id)))
        for ln in self.links:
            if ln.a not in range(len(ids)) or ln.b not in range(len(ids)):
                raise TopologyError(f"link {ln.a}-{ln.b} references an unknown node")
            if ln.a == ln.b:
                raise TopologyError(f"self-loop on node {ln.a}")
            if ln.rate_bps <= 0 or ln.distance_m < 0:
                raise TopologyError(f"bad link parameters on {ln.a}-{ln.b}")
        g = self.graph()
        comps = list(nx.connected_components(g))
        if len(comps) > 1:
            comps = sorted((sorted(c) for c in comps), key=lambda c: c[0])
            raise TopologyError(f"topology is disconnected; components: {comps}")
        rate, dist, paths = all_pairs(len(ids), self.links)
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "_paths", paths)

    @property
    def n(self) -> int:
        return len(self.servers)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([s.capacity_mips for s in self.servers], dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.servers], dtype=float).reshape(-1, 2)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(s.id for s in self.servers)
        for ln in self.links:
            g.add_edge(ln.a, ln.b, rate_bps=ln.rate_bps, distance_m=ln.distance_m)
        return g

    def effective_rate(self, a: int, b: int) -> float:
        try:
            return float(self.rate[a, b])
        except IndexError:
            raise NoPathError(f"unknown server pair ({a}, {b})") from None

    def distance(self, a: int, b: int) -> float:
        return float(self.dist[a, b])

    def path(self, a: int, b: int) -> tuple[int, ...]:
        if a == b:
            return (a,)
        p = self._paths[(min(a, b), max(a, b))]
        return p if a < b else tuple(reversed(p))

    def with_capacities(self, caps: Sequence[float]) -> "Topology":
        if len(caps) != self.n:
            raise TopologyError(f"need {self.n} capacities, got {len(caps)}")
        servers = [replace(s, capacity_mips=float(c)) for s, c in zip(self.servers, caps)]
        return Topology(tuple(servers), self.links, self.name)

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "nodes": [{"id": s.id, "x_m": s.position[0], "y_m": s.position[1],
                       "capacity_mips": s.capacity_mips} for s in self.servers],
            "edges": [{"a": ln.a, "b": ln.b, "rate_bps": ln.rate_bps, "distance_m": ln.distance_m}
                      for ln in self.links],
        }


def all_pairs(n: int, links: Iterable[Link]):
    """Effective rate and distance between every server pair.

    Route choice: fewest hops, then smallest sum of 1/rate, then the
    lexicographically smallest node sequence (from the lower id). Returns
    ``(rate, dist, paths)`` with ``rate[k, k] = inf`` and ``dist[k, k] = 0``.
    """
    adj: dict[int, list[tuple[int, float, float]]] = {i: [] for i in range(n)}
    direct: dict[tuple[int, int], float] = {}
    for ln in links:
        key = (min(ln.a, ln.b), max(ln.a, ln.b))
        direct[key] = max(direct.get(key, 0.0), ln.rate_bps)
        adj[ln.a].append((ln.b, ln.rate_bps, ln.distance_m))
        adj[ln.b].append((ln.a, ln.rate_bps, ln.distance_m))

    rate = np.full((n, n), np.nan)
    dist = np.full((n, n), np.nan)
    np.fill_diagonal(rate, np.inf)
    np.fill_diagonal(dist, 0.0)
    paths: dict[tuple[int, int], tuple[int, ...]] = {}

    for src in range(n):
        best: dict[int, tuple] = {}
        heap = [(0, 0.0, (src,), 0.0)]
        while heap:
            hops, inv, path, d = heapq.heappop(heap)
            node = path[-1]
            if node in best:
                continue
            best[node] = (hops, inv, path, d)
            for nxt, r, ld in adj[node]:
                if nxt not in best:
                    heapq.heappush(heap, (hops + 1, inv + 1.0 / r, path + (nxt,), d + ld))
        for dst, (hops, inv, path, d) in best.items():
            if dst <= src:
                continue
            # one hop keeps the link rate exactly instead of 1 / (1 / r)
            rate[src, dst] = rate[dst, src] = direct[(src, dst)] if hops == 1 else 1.0 / inv
            dist[src, dst] = dist[dst, src] = d
            paths[(src, dst)] = path
    return rate, dist, paths


# -- documents -------------------------------------------------------------

def _read_doc(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        return json.loads(Path(source).read_text())
    return json.loads(source)


def _euclid(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def load_topology(source: Union[dict, str, Path], sidecar: Optional[Union[dict, str, Path]] = None) -> Topology:
    """Build a Topology from a document, optionally merging a sidecar.

    Sidecar node entries (keyed by id or label) fill in attributes the main
    document lacks; they never override values that are present.
    """
    doc = _read_doc(source)
    side = _read_doc(sidecar) if sidecar is not None else {}
    defaults = {**doc.get("defaults", {}), **side.get("defaults", {})}
    link_rate = float(defaults.get("link_rate_bps", DEFAULT_LINK_RATE_BPS))
    side_nodes = {str(k): v for k, v in side.get("nodes", {}).items()}

    nodes = doc.get("nodes", [])
    if not nodes:
        raise TopologyError("topology document has no nodes")
    seen = set()
    servers = []
    for nd in nodes:
        nid = int(nd["id"])
        if nid in seen:
            raise TopologyError(f"duplicate node id {nid}")
        seen.add(nid)
        extra = side_nodes.get(str(nid)) or side_nodes.get(str(nd.get("label", ""))) or {}
        merged = {**extra, **{k: v for k, v in nd.items() if v is not None}}
        try:
            pos = (float(merged["x_m"]), float(merged["y_m"]))
        except KeyError:
            raise TopologyError(f"node {nid} has no position (x_m, y_m)") from None
        cap = merged.get("capacity_mips", defaults.get("capacity_mips"))
        if cap is None:
            raise TopologyError(f"node {nid} has no capacity_mips and no default")
        servers.append(MecServer(nid, pos, float(cap)))

    pos_of = {s.id: s.position for s in servers}
    side_edges = {(min(e["a"], e["b"]), max(e["a"], e["b"])): e for e in side.get("edges", [])}
    links = []
    for e in doc.get("edges", []):
        a, b = int(e["a"]), int(e["b"])
        if a not in pos_of or b not in pos_of:
            raise TopologyError(f"edge {a}-{b} references an unknown node")
        extra = side_edges.get((min(a, b), max(a, b)), {})
        r = e.get("rate_bps", extra.get("rate_bps", link_rate))
        d = e.get("distance_m", extra.get("distance_m"))
        if d is None:
            d = _euclid(pos_of[a], pos_of[b])
        links.append(Link(a, b, float(r), float(d)))
    return Topology(tuple(servers), tuple(links), str(doc.get("name", "custom")))


def convert_graphml(graphml: Union[str, Path], sidecar: Optional[Union[dict, str, Path]] = None) -> dict:
    """Topology Zoo GraphML -> topology document.

    Zoo files carry Latitude/Longitude but no capacities or link rates, so
    those come from the sidecar (or its defaults). Positions are projected
    to meters with an equirectangular projection around the mean latitude
    unless the sidecar gives x_m/y_m.
    """
    g = nx.read_graphml(str(graphml))
    g = nx.Graph(g)  # collapse parallel links
    side = _read_doc(sidecar) if sidecar is not None else {}
    order = sorted(g.nodes, key=lambda v: (str(g.nodes[v].get("label", "")), str(v)))
    index = {v: i for i, v in enumerate(order)}

    lats = [g.nodes[v].get("Latitude") for v in order]
    lons = [g.nodes[v].get("Longitude") for v in order]
    have_geo = all(x is not None for x in lats + lons)
    lat0 = math.radians(sum(lats) / len(lats)) if have_geo and lats else 0.0
    earth = 6_371_000.0

    nodes = []
    for v in order:
        attrs = g.nodes[v]
        nd = {"id": index[v], "label": str(attrs.get("label", v))}
        if have_geo:
            nd["x_m"] = math.radians(float(attrs["Longitude"])) * math.cos(lat0) * earth
            nd["y_m"] = math.radians(float(attrs["Latitude"])) * earth
        nodes.append(nd)
    edges = [{"a": min(index[u], index[v]), "b": max(index[u], index[v])}
             for u, v in g.edges if u != v]
    edges.sort(key=lambda e: (e["a"], e["b"]))
    doc = {"name": g.graph.get("label") or g.graph.get("Network") or Path(str(graphml)).stem,
           "defaults": dict(side.get("defaults", {})), "nodes": nodes, "edges": edges}
    # resolve against the sidecar now so the emitted document is self-contained
    topo = load_topology(doc, side)
    out = topo.to_document()
    out["name"] = doc["name"]
    for nd, src in zip(out["nodes"], nodes):
        nd["label"] = src["label"]
    return out


# -- built-in graphs -------------------------------------------------------
# Node and link counts match the Topology Zoo graphs of the same name
# (Renam 5/4, CESNET 10/9, SpiraLight 15/16). Coordinates are normalized to
# the unit square and stretched over the experiment area by fit_to_area.

BUILTIN = {
    "renam": {
        "pos": [(0.15, 0.30), (0.40, 0.55), (0.65, 0.75), (0.70, 0.30), (0.90, 0.60)],
        "edges": [(0, 1), (1, 2), (1, 3), (3, 4)],
        "label": "Renam",
    },
    "cesnet": {
        "pos": [(0.45, 0.50), (0.10, 0.40), (0.25, 0.80), (0.30, 0.15), (0.60, 0.85),
                (0.75, 0.55), (0.95, 0.70), (0.85, 0.20), (0.55, 0.10), (0.05, 0.85)],
        "edges": [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (5, 6), (5, 7), (0, 8), (2, 9)],
        "label": "CESNET",
    },
    "spiralight": {
        "pos": [(0.05, 0.50), (0.15, 0.80), (0.30, 0.92), (0.48, 0.85), (0.62, 0.95),
                (0.80, 0.85), (0.95, 0.60), (0.88, 0.30), (0.72, 0.10), (0.52, 0.18),
                (0.35, 0.08), (0.18, 0.22), (0.40, 0.50), (0.62, 0.55), (0.80, 0.50)],
        "edges": [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9),
                  (9, 10), (10, 11), (11, 0), (3, 12), (12, 13), (13, 14), (14, 6)],
        "label": "SpiraLight",
    },
}


def fit_to_area(unit_pos: Sequence[tuple[float, float]], area_m: tuple[float, float],
                margin: float = 0.05) -> list[tuple[float, float]]:
    w, h = area_m
    return [((margin + (1 - 2 * margin) * x) * w, (margin + (1 - 2 * margin) * y) * h)
            for x, y in unit_pos]


def builtin_topology(name: str, area_m: tuple[float, float], capacities: Sequence[float],
                     link_rate_bps: float = DEFAULT_LINK_RATE_BPS) -> Topology:
    try:
        spec = BUILTIN[name.lower()]
    except KeyError:
        raise TopologyError(f"unknown built-in topology {name!r}; have {sorted(BUILTIN)}") from None
    pos = fit_to_area(spec["pos"], area_m)
    if len(capacities) != len(pos):
        raise TopologyError(f"{name}: need {len(pos)} capacities, got {len(capacities)}")
    doc = {
        "name": spec["label"],
        "defaults": {"link_rate_bps": link_rate_bps},
        "nodes": [{"id": i, "x_m": p[0], "y_m": p[1], "capacity_mips": c}
                  for i, (p, c) in enumerate(zip(pos, capacities))],
        "edges": [{"a": a, "b": b} for a, b in spec["edges"]],
    }
    return load_topology(doc)


def _radical_inverse(i: int, base: int) -> float:
    f, r = 1.0, 0.0
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def growing_topology(n: int, area_m: tuple[float, float], capacities: Sequence[float],
                     link_rate_bps: float = DEFAULT_LINK_RATE_BPS, seed: int = 0) -> Topology:
    """Nested synthetic graph: the first k servers of a size-n build are the size-k build.

    Positions follow a Halton sequence (bases 2 and 3) under a seeded random
    shift, so coverage improves evenly as servers are added. Each new server
    links to its nearest predecessor, so growing n only adds servers and links.
    """
    if n < 1:
        raise TopologyError("need at least one server")
    rng = np.random.default_rng(seed)
    shift = rng.random(2)
    w, h = area_m
    pts = []
    for i in range(1, n + 1):
        u = (_radical_inverse(i, 2) + shift[0]) % 1.0
        v = (_radical_inverse(i, 3) + shift[1]) % 1.0
        pts.append(((0.05 + 0.9 * u) * w, (0.05 + 0.9 * v) * h))
    nodes = [{"id": i, "x_m": p[0], "y_m": p[1], "capacity_mips": float(c)}
             for i, (p, c) in enumerate(zip(pts, capacities))]
    edges = []
    for i in range(1, n):
        j = min(range(i), key=lambda j: (_euclid(pts[i], pts[j]), j))
        edges.append({"a": j, "b": i})
    doc = {"name": f"grown-{n}", "defaults": {"link_rate_bps": link_rate_bps},
           "nodes": nodes, "edges": edges}
    return load_topology(doc)


def chain_topology(n: int, area_m: tuple[float, float], capacities: Sequence[float],
                   link_rate_bps: float = DEFAULT_LINK_RATE_BPS) -> Topology:
    """Servers evenly spaced along the long axis of the area, linked in a line.

    Every server covers an equal strip, so uniformly placed MUs split evenly
    across hosts whatever n is.
    """
    if n < 1:
        raise TopologyError("need at least one server")
    w, h = area_m
    long_x = w >= h
    nodes = []
    for i in range(n):
        c = (i + 0.5) / n
        x, y = (c * w, h / 2) if long_x else (w / 2, c * h)
        nodes.append({"id": i, "x_m": x, "y_m": y, "capacity_mips": float(capacities[i])})
    edges = [{"a": i, "b": i + 1} for i in range(n - 1)]
    doc = {"name": f"chain-{n}", "defaults": {"link_rate_bps": link_rate_bps},
           "nodes": nodes, "edges": edges}
    return load_topology(doc)
