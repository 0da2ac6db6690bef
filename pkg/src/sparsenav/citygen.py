"""Seeded gridded city maps: road network, sparse landmarks and start/goal pairs.

Maps are square grids whose row and column spacings are drawn i.i.d. from the
block range. A fraction of nodes is pruned into cul-de-sacs (dead ends) and a
fraction of the remaining segments is made one-way, following an alternating
street pattern; segments that would split the map into strongly connected
pieces revert to two-way by default.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

TWO_WAY = "two-way"
FORWARD = "one-way-forward"
REVERSE = "one-way-reverse"
DIRECTIONS = (TWO_WAY, FORWARD, REVERSE)


class ConfigError(ValueError):
    """Parameters that cannot produce a valid scenario."""


class SamplingExhausted(RuntimeError):
    """Rejection sampling gave up before finding a valid candidate."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class MapParams:
    area_km2: float = 4.0
    block_range: tuple[float, float] = (50.0, 300.0)
    dead_end_fraction: float = 0.05
    one_way_fraction: float = 0.05
    # revert one-way segments that split the map into strongly connected pieces
    strongly_connected: bool = True

    def validate(self) -> None:
        lo, hi = self.block_range
        if not 1.0 <= self.area_km2 <= 100.0:
            raise ConfigError(f"area_km2 must lie in [1, 100], got {self.area_km2}")
        if not 50.0 <= lo <= hi <= 300.0:
            raise ConfigError(f"block_range must be within [50, 300] m, got {self.block_range}")
        if not 0.0 <= self.dead_end_fraction < 1.0:
            raise ConfigError("dead_end_fraction must lie in [0, 1)")
        # 1.0 is accepted: every segment directional (pair with strongly_connected=False)
        if not 0.0 <= self.one_way_fraction <= 1.0:
            raise ConfigError("one_way_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class Intersection:
    id: int
    x: float
    y: float
    arity: int


@dataclass(frozen=True)
class Segment:
    a: int
    b: int
    length: float
    direction: str = TWO_WAY

    def allows(self, frm: int, to: int) -> bool:
        if self.direction == TWO_WAY:
            return True
        if self.direction == FORWARD:
            return frm == self.a and to == self.b
        return frm == self.b and to == self.a


@dataclass(frozen=True)
class RoadNetwork:
    nodes: tuple[Intersection, ...]
    edges: tuple[Segment, ...]
    bounds: tuple[float, float, float, float]
    block_range: tuple[float, float]

    @property
    def area_km2(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0) / 1e6

    @property
    def diagonal(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(n.x, n.y) for n in self.nodes], dtype=float).reshape(-1, 2)

    @cached_property
    def exits(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per node, the legal (neighbor, edge index) moves respecting one-way rules."""
        out: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        for k, e in enumerate(self.edges):
            if e.allows(e.a, e.b):
                out[e.a].append((e.b, k))
            if e.allows(e.b, e.a):
                out[e.b].append((e.a, k))
        return tuple(tuple(sorted(o)) for o in out)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in self.nodes]
        for k, e in enumerate(self.edges):
            inc[e.a].append(k)
            inc[e.b].append(k)
        return tuple(tuple(i) for i in inc)

    @cached_property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def _directed_csr(self):
        n = len(self.nodes)
        rows, cols = [], []
        for u, moves in enumerate(self.exits):
            for v, _ in moves:
                rows.append(u)
                cols.append(v)
        data = np.ones(len(rows))
        return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def _csr(self):
        return self._directed_csr()

    def reachable_from(self, node: int) -> np.ndarray:
        """Boolean mask of nodes reachable from ``node`` along legal directions."""
        order = breadth_first_order(self._csr, node, directed=True, return_predecessors=False)
        mask = np.zeros(len(self.nodes), dtype=bool)
        mask[order] = True
        return mask

    def is_dead_end(self, node: int) -> bool:
        return self.nodes[node].arity == 1


@dataclass(frozen=True)
class Landmark:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class LandmarkSet:
    entries: tuple[Landmark, ...] = ()
    density: float = 0.0

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(m.x, m.y) for m in self.entries], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class ScenarioEndpoints:
    start_node: int
    goal_node: int
    start: tuple[float, float]
    heading: float
    goal: tuple[float, float]
    separation: float = field(default=0.0)


def _grid_lines(rng: np.random.Generator, side: float, lo: float, hi: float) -> list[float]:
    lines = [0.0]
    while True:
        step = lo if hi == lo else float(rng.uniform(lo, hi))
        nxt = lines[-1] + step
        if nxt > side + 1e-9:
            return lines
        lines.append(nxt)


def generate_map(params: MapParams, seed) -> RoadNetwork:
    """Build a seeded gridded road network.

    The same ``(params, seed)`` always yields an identical network.
    """
    params.validate()
    rng = np.random.default_rng(seed)
    lo, hi = params.block_range
    side = math.sqrt(params.area_km2) * 1000.0
    if side < lo:
        raise ConfigError(f"a {params.area_km2} km^2 map cannot hold a {lo} m block")
    xs = _grid_lines(rng, side, lo, hi)
    ys = _grid_lines(rng, side, lo, hi)
    nx_, ny_ = len(xs), len(ys)
    if nx_ < 2 or ny_ < 2:
        raise ConfigError("grid needs at least two lines per axis")

    def nid(i: int, j: int) -> int:
        return j * nx_ + i

    # edge -> (a, b, axis, line index); axis 0 runs along x (a row), axis 1 along y
    edges: list[tuple[int, int, int, int]] = []
    for j in range(ny_):
        for i in range(nx_ - 1):
            edges.append((nid(i, j), nid(i + 1, j), 0, j))
    for i in range(nx_):
        for j in range(ny_ - 1):
            edges.append((nid(i, j), nid(i, j + 1), 1, i))
    n_nodes = nx_ * ny_
    alive = np.ones(len(edges), dtype=bool)
    incident: list[list[int]] = [[] for _ in range(n_nodes)]
    for k, (a, b, _, _) in enumerate(edges):
        incident[a].append(k)
        incident[b].append(k)
    arity = np.array([len(i) for i in incident])

    # cul-de-sacs: keep one incident edge; neighbors must keep arity >= 2
    n_dead = round_half_up(params.dead_end_fraction * n_nodes)
    dead = np.zeros(n_nodes, dtype=bool)
    for node in rng.permutation(n_nodes):
        if n_dead == 0:
            break
        if dead[node] or arity[node] < 2:
            continue
        live = [k for k in incident[node] if alive[k]]
        keep = live[int(rng.integers(len(live)))]
        drop = [k for k in live if k != keep]
        others = [edges[k][0] if edges[k][1] == node else edges[k][1] for k in drop]
        kept_nbr = edges[keep][0] if edges[keep][1] == node else edges[keep][1]
        if dead[kept_nbr] or any(dead[o] or arity[o] - 1 < 2 for o in others):
            continue
        for k, o in zip(drop, others):
            alive[k] = False
            arity[o] -= 1
        arity[node] = 1
        dead[node] = True
        n_dead -= 1

    direction = np.zeros(len(edges), dtype=np.int8)  # index into DIRECTIONS
    eligible = [k for k in range(len(edges))
                if alive[k] and not dead[edges[k][0]] and not dead[edges[k][1]]]
    n_oneway = round_half_up(params.one_way_fraction * len(eligible))
    if n_oneway:
        phase = rng.integers(2, size=2)
        chosen = rng.choice(len(eligible), size=n_oneway, replace=False)
        for c in chosen:
            k = eligible[int(c)]
            axis, line = edges[k][2], edges[k][3]
            # alternating one-way streets: direction depends on the row/column parity
            direction[k] = 1 if (line + phase[axis]) % 2 == 0 else 2

    # keep the largest connected piece, then repair strong connectivity
    live_idx = np.flatnonzero(alive)
    a_arr = np.array([edges[k][0] for k in live_idx])
    b_arr = np.array([edges[k][1] for k in live_idx])
    adj = coo_matrix((np.ones(len(live_idx)), (a_arr, b_arr)), shape=(n_nodes, n_nodes))
    _, labels = connected_components(adj, directed=False)
    counts = np.bincount(labels)
    main = int(np.argmax(counts))
    keep_node = labels == main
    while True:
        rows, cols = [], []
        for k in live_idx:
            a, b = edges[k][0], edges[k][1]
            if not keep_node[a]:
                continue
            if direction[k] in (0, 1):
                rows.append(a)
                cols.append(b)
            if direction[k] in (0, 2):
                rows.append(b)
                cols.append(a)
        g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_nodes))
        _, scc = connected_components(g, directed=True, connection="strong")
        bad = [k for k in live_idx if keep_node[edges[k][0]] and direction[k] != 0
               and scc[edges[k][0]] != scc[edges[k][1]]]
        if not bad or not params.strongly_connected:
            break
        for k in bad:
            direction[k] = 0

    remap = -np.ones(n_nodes, dtype=int)
    remap[keep_node] = np.arange(int(keep_node.sum()))
    coords = [(xs[i], ys[j]) for j in range(ny_) for i in range(nx_)]
    segs: list[Segment] = []
    for k in live_idx:
        a, b = edges[k][0], edges[k][1]
        if not keep_node[a]:
            continue
        (xa, ya), (xb, yb) = coords[a], coords[b]
        segs.append(Segment(int(remap[a]), int(remap[b]), math.hypot(xb - xa, yb - ya),
                            DIRECTIONS[direction[k]]))
    deg = np.zeros(int(keep_node.sum()), dtype=int)
    for s in segs:
        deg[s.a] += 1
        deg[s.b] += 1
    nodes = tuple(Intersection(int(remap[n]), coords[n][0], coords[n][1], int(deg[remap[n]]))
                  for n in range(n_nodes) if keep_node[n])
    return RoadNetwork(nodes=nodes, edges=tuple(segs), bounds=(0.0, 0.0, side, side),
                       block_range=(float(lo), float(hi)))


def place_landmarks(net: RoadNetwork, density: float, seed) -> LandmarkSet:
    """Scatter ``round(density * area)`` landmarks uniformly over road length."""
    if density < 0:
        raise ConfigError("landmark density must be non-negative")
    rng = np.random.default_rng(seed)
    count = round_half_up(density * net.area_km2)
    if count == 0 or not net.edges:
        return LandmarkSet((), float(density))
    lengths = np.array([e.length for e in net.edges])
    picks = rng.choice(len(lengths), size=count, p=lengths / lengths.sum())
    ts = rng.uniform(0.0, 1.0, size=count)
    pos = net.positions
    entries = []
    for i, (k, t) in enumerate(zip(picks, ts)):
        e = net.edges[int(k)]
        p = pos[e.a] + t * (pos[e.b] - pos[e.a])
        entries.append(Landmark(i, float(p[0]), float(p[1])))
    return LandmarkSet(tuple(entries), float(density))


def initial_heading(net: RoadNetwork, node: int, rng: np.random.Generator) -> float:
    moves = net.exits[node]
    if not moves:
        raise ConfigError(f"node {node} has no legal exit")
    nbr, _ = moves[int(rng.integers(len(moves)))]
    (x0, y0), (x1, y1) = net.positions[node], net.positions[nbr]
    return math.atan2(y1 - y0, x1 - x0)


def sample_endpoints(net: RoadNetwork, seed, min_separation: float | None = None,
                     max_rejections: int = 1000, start_node: int | None = None,
                     max_separation: float | None = None) -> ScenarioEndpoints:
    """Draw a start/goal node pair that is far enough apart and reachable.

    ``start_node`` pins the start (used when chaining goals). Raises
    :class:`SamplingExhausted` after ``max_rejections`` rejected pairs.
    """
    rng = np.random.default_rng(seed)
    if min_separation is None:
        min_separation = 0.25 * net.diagonal
    n = len(net.nodes)
    pos = net.positions
    reach_cache: dict[int, np.ndarray] = {}
    for _ in range(max_rejections):
        s = int(start_node) if start_node is not None else int(rng.integers(n))
        g = int(rng.integers(n))
        if s == g:
            continue
        sep = float(math.hypot(*(pos[g] - pos[s])))
        if sep < min_separation or (max_separation is not None and sep > max_separation):
            continue
        if not net.exits[s]:
            continue
        if s not in reach_cache:
            reach_cache[s] = net.reachable_from(s)
        if not reach_cache[s][g]:
            continue
        heading = initial_heading(net, s, rng)
        return ScenarioEndpoints(s, g, (float(pos[s][0]), float(pos[s][1])), heading,
                                 (float(pos[g][0]), float(pos[g][1])), sep)
    raise SamplingExhausted(f"no valid start/goal pair after {max_rejections} candidates")


def bfs_reachable(net: RoadNetwork, start: int) -> set[int]:
    """Plain breadth-first search over legal moves (independent of the sparse path)."""
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, _ in net.exits[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


# --- JSON map documents -------------------------------------------------------

def map_to_dict(net: RoadNetwork, landmarks: LandmarkSet | None = None) -> dict:
    lms = landmarks or LandmarkSet()
    return {
        "nodes": [{"id": n.id, "x_m": n.x, "y_m": n.y} for n in net.nodes],
        "edges": [{"a": e.a, "b": e.b, "dir": e.direction} for e in net.edges],
        "bounds": list(net.bounds),
        "block_range": list(net.block_range),
        "landmarks": [{"id": m.id, "x_m": m.x, "y_m": m.y} for m in lms.entries],
        "landmark_density": lms.density,
    }


def map_from_dict(doc: dict) -> tuple[RoadNetwork, LandmarkSet]:
    raw = sorted(doc["nodes"], key=lambda n: n["id"])
    if [n["id"] for n in raw] != list(range(len(raw))):
        raise ConfigError("node ids must be 0..n-1")
    xy = [(float(n["x_m"]), float(n["y_m"])) for n in raw]
    deg = [0] * len(xy)
    segs = []
    for e in doc["edges"]:
        a, b, d = int(e["a"]), int(e["b"]), e.get("dir", TWO_WAY)
        if d not in DIRECTIONS:
            raise ConfigError(f"unknown edge direction {d!r}")
        segs.append(Segment(a, b, math.hypot(xy[b][0] - xy[a][0], xy[b][1] - xy[a][1]), d))
        deg[a] += 1
        deg[b] += 1
    nodes = tuple(Intersection(i, x, y, deg[i]) for i, (x, y) in enumerate(xy))
    block = tuple(doc.get("block_range", (50.0, 300.0)))
    net = RoadNetwork(nodes, tuple(segs), tuple(float(v) for v in doc["bounds"]),
                      (float(block[0]), float(block[1])))
    lms = LandmarkSet(tuple(Landmark(int(m["id"]), float(m["x_m"]), float(m["y_m"]))
                            for m in doc.get("landmarks", [])),
                      float(doc.get("landmark_density", 0.0)))
    return net, lms


def save_map(path: str | Path, net: RoadNetwork, landmarks: LandmarkSet | None = None) -> None:
    Path(path).write_text(json.dumps(map_to_dict(net, landmarks), indent=1))


def load_map(path: str | Path) -> tuple[RoadNetwork, LandmarkSet]:
    return map_from_dict(json.loads(Path(path).read_text()))
