"""Trials, studies, persistence.

A trial builds a random city, places landmarks, picks start and goal, then
drives the vehicle with the jitted kernel and handles decisions, landmark
passes and termination in Python. Studies fan trials out over cells
(strategy, density, rate or compass case) with common random worlds per
trial index.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import multiprocessing as mp
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import _kernel as K
from .citygen import (ConfigError, MapParams, RoadNetwork, SamplingExhausted, generate_map,
                      place_landmarks, sample_endpoints)
from .estimator import (LandmarkFix, NoiseConfig, PoseBelief, belief_record, landmark_distance,
                        update_landmark)
from .geometry import wrap_angle
from .navigator import (HYBRID, LANDMARK_TO_LANDMARK, STRAIGHT_TO_GOAL, IntersectionMemory,
                        NavConfig, StrategyConfig, build_options, decide_intersection,
                        decision_record, record_visit, target_landmark)
from .scenestim import ApproachConfig, IntersectionTruth, run_approach
from .vehicle import ControllerGains, VehicleParams, build_path, gains_vector, params_vector, \
    turn_positions

REACHED, LOST, TIMEOUT = "reached", "lost", "timeout"
TRIAL_FIELDS = ("seed", "outcome", "manhattan_m", "euclidean_m", "final_axis_m",
                "landmark_updates", "decisions")
SCENE_MODES = ("truth", "estimated")

_BUF_ROWS = 4096
_PATH_EXTENSION = 60.0


# --- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    map: MapParams = field(default_factory=MapParams)
    area_range_km2: tuple[float, float] | None = None  # per-trial uniform map area
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    nav: NavConfig = field(default_factory=NavConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    landmark_density: float = 0.0
    detection_rate: float = 1.0
    sensing_radius: float = 25.0
    gate_sigma: float = 2.0
    lost_threshold: float = 100.0
    seed: int = 0
    timeout_factor: float = 4.0
    timeout_steps: int | None = None
    max_distance_m: float | None = None  # chain new goals until lost or this odometer reading
    min_separation_m: float | None = None
    max_separation_m: float | None = None
    approach_distance: float = 30.0
    scene_mode: str = "truth"

    def validate(self) -> "ScenarioConfig":
        self.map.validate()
        self.noise.validate()
        if self.area_range_km2 is not None:
            lo, hi = self.area_range_km2
            if not 1.0 <= lo <= hi <= 100.0:
                raise ConfigError("area_range_km2 must lie within [1, 100]")
        if self.landmark_density < 0:
            raise ConfigError("landmark_density must be non-negative")
        if not 0.0 <= self.detection_rate <= 1.0:
            raise ConfigError("detection_rate must lie in [0, 1]")
        if not (self.sensing_radius > 0 and self.gate_sigma > 0 and self.lost_threshold > 0):
            raise ConfigError("sensing_radius, gate_sigma and lost_threshold must be positive")
        if not self.timeout_factor > 0:
            raise ConfigError("timeout_factor must be positive")
        if self.timeout_steps is not None and self.timeout_steps <= 0:
            raise ConfigError("timeout_steps must be positive")
        if self.max_distance_m is not None and not self.max_distance_m > 0:
            raise ConfigError("max_distance_m must be positive")
        if not self.approach_distance > 0:
            raise ConfigError("approach_distance must be positive")
        if self.scene_mode not in SCENE_MODES:
            raise ConfigError(f"scene_mode must be one of {SCENE_MODES}")
        if not 0 <= self.seed < 2 ** 63:
            raise ConfigError("seed must be a non-negative 63-bit integer")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"].pop("compass_2sigma")
        c = self.noise.compass_2sigma
        d["noise"]["compass_2sigma_deg"] = None if c is None else math.degrees(c)
        return d


_SECTIONS = {"map": MapParams, "noise": NoiseConfig, "vehicle": VehicleParams,
             "gains": ControllerGains, "nav": NavConfig, "strategy": StrategyConfig}


def _build(cls, doc: dict, where: str):
    names = {f.name for f in fields(cls)}
    doc = dict(doc)
    if cls is NoiseConfig and "compass_2sigma_deg" in doc:
        deg = doc.pop("compass_2sigma_deg")
        doc["compass_2sigma"] = None if deg is None else math.radians(deg)
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    for k, v in doc.items():
        if isinstance(v, list):
            doc[k] = tuple(v)
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(doc: dict) -> ScenarioConfig:
    doc = dict(doc)
    doc.pop("study", None)
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kw[name] = _build(cls, doc.pop(name) or {}, name)
    cfg = _build(ScenarioConfig, doc, "scenario")
    return replace(cfg, **kw).validate()


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class StudyGrid:
    strategies: tuple[str, ...] = (STRAIGHT_TO_GOAL, LANDMARK_TO_LANDMARK, HYBRID)
    densities: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 10.0)
    rates: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    compass_cases_deg: tuple[float | None, ...] = (None, 30.0, 20.0, 10.0)
    bucket_m: float = 500.0
    min_bucket: int = 10


def load_study_grid(path) -> StudyGrid:
    with open(path) as fh:
        doc = json.load(fh)
    return _build(StudyGrid, doc.get("study") or {}, "study")


# --- records -------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    seed: int
    outcome: str
    manhattan_m: float
    euclidean_m: float
    final_axis_m: float
    landmark_updates: int
    decisions: int
    trial: int = 0
    cell: int = 0
    goals_reached: int = 0
    steps: int = 0
    turns: int = 0

    def row(self) -> list:
        return [getattr(self, f) for f in TRIAL_FIELDS]


def trial_seed(master: int, trial: int) -> int:
    """Per-trial seed shared by every cell of a study (common random worlds)."""
    return int(np.random.SeedSequence([master, trial]).generate_state(2, np.uint64)[0] >> 1)


# --- world ----------------------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _cached_map(params: MapParams, key: int) -> RoadNetwork:
    return generate_map(params, key)


@dataclass
class World:
    net: RoadNetwork
    landmarks: np.ndarray  # (M, 2)
    start_node: int
    first_node: int
    goal_node: int
    euclidean: float


def _bearing(p, q) -> float:
    return math.atan2(q[1] - p[1], q[0] - p[0])


def build_world(cfg: ScenarioConfig) -> World:
    ss = np.random.SeedSequence([cfg.seed, 0])
    s_area, s_map, s_lm, s_ends = ss.spawn(4)
    params = cfg.map
    if cfg.area_range_km2 is not None:
        lo, hi = cfg.area_range_km2
        params = replace(params, area_km2=float(np.random.default_rng(s_area).uniform(lo, hi)))
    net = _cached_map(params, int(s_map.generate_state(1, np.uint64)[0]))
    lms = place_landmarks(net, cfg.landmark_density, s_lm)
    ends = sample_endpoints(net, s_ends, cfg.min_separation_m,
                            max_separation=cfg.max_separation_m)
    pos = net.positions
    first = min(net.exits[ends.start_node],
                key=lambda m: abs(wrap_angle(_bearing(pos[ends.start_node], pos[m[0]])
                                             - ends.heading)))[0]
    return World(net, lms.positions, ends.start_node, first, ends.goal_node, ends.separation)


# --- trial loop --------------------------------------------------------------------------

def _segment_distance(pts, a, b):
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.hypot(*(pts - a).T)
    t = np.clip(((pts - a) @ ab) / L2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(pts - proj).T)


class _Trial:
    def __init__(self, cfg: ScenarioConfig, world: World, cell: int = 0, trace=None,
                 chooser=None):
        self.cfg, self.w, self.trace, self.cell = cfg, world, trace, cell
        self.chooser = chooser
        net = world.net
        self.pos = net.positions
        ns = np.random.SeedSequence([cfg.seed, 1, cell])
        s_buf, s_det, s_init, s_scene = ns.spawn(4)
        self.rng = np.random.default_rng(s_buf)
        self.det_rng = np.random.default_rng(s_det)
        self.scene_rng = np.random.default_rng(s_scene)
        noise = cfg.noise
        p0 = self.pos[world.start_node]
        th0 = _bearing(p0, self.pos[world.first_node])
        self.truth = np.array([p0[0], p0[1], th0, 0.0])
        init = np.random.default_rng(s_init).standard_normal(3)
        self.mean = np.array([p0[0] + noise.init_pos_sigma * init[0],
                              p0[1] + noise.init_pos_sigma * init[1],
                              wrap_angle(th0 + noise.init_heading_sigma * init[2])])
        self.cov = PoseBelief.initial(0, 0, 0, noise).cov.copy()
        self.ctrl = np.zeros(5)
        self.ist = np.zeros(5, dtype=np.int64)
        self.acc = np.zeros(2)
        every = max(1, int(round(1.0 / (noise.compass_rate_hz * cfg.vehicle.dt)))) \
            if noise.compass_rate_hz > 0 else 1
        csig = -1.0 if (noise.compass_sigma is None or noise.compass_rate_hz <= 0) \
            else noise.compass_sigma
        self.npar = np.array([noise.track, noise.slip_sigma,
                              noise.tick if noise.quantization else 0.0,
                              1.0 if noise.quantization else 0.0, csig, float(every),
                              noise.q_theta])
        self.gains = gains_vector(cfg.gains)
        self.vp = params_vector(cfg.vehicle)
        self.buf = np.zeros((0, 5))
        self.lm_pos = np.ascontiguousarray(world.landmarks, dtype=float).reshape(-1, 2)
        self.lm_state = np.zeros((len(self.lm_pos), 3))
        self.cand = np.zeros(0, dtype=np.int64)
        cap = math.inf if cfg.max_distance_m is None else cfg.max_distance_m
        g = self.pos[world.goal_node]
        self.stop = np.array([0.0, 0.0, cfg.approach_distance, g[0], g[1],
                              cfg.strategy.goal_radius, cfg.lost_threshold, cap,
                              cfg.sensing_radius])
        self.goal_node = world.goal_node
        self.prev_node, self.next_node = world.start_node, world.first_node
        self.memory = IntersectionMemory()
        self.excluded: set[int] = set()
        self.target: int | None = None
        self.last_est = self.mean[:2].copy()
        self.decisions = self.updates = self.goals = self.turns = 0
        self._set_path([p0, self.pos[world.first_node]])
        self._arm(world.first_node)
        self._update_candidates()

    # path and stop bookkeeping
    def _set_path(self, waypoints):
        wp = [np.asarray(p, dtype=float) for p in waypoints]
        u = wp[-1] - wp[-2]
        wp.append(wp[-1] + _PATH_EXTENSION * u / np.linalg.norm(u))
        self.path = np.ascontiguousarray(build_path(wp, self.cfg.gains.turn_radius))
        self.cum_s, self.slow_s = turn_positions(self.path)
        self.ist[K.I_CURSOR] = 0

    def _arm(self, node):
        self.stop[K.S_NODE_X], self.stop[K.S_NODE_Y] = self.pos[node]

    def _update_candidates(self):
        if not len(self.lm_pos):
            return
        reach = self.cfg.sensing_radius + 2.0 * self.cfg.gains.turn_radius + 5.0
        near = np.zeros(len(self.lm_pos), dtype=bool)
        for a, b in zip(self.path[:-1], self.path[1:]):
            near |= _segment_distance(self.lm_pos, a, b) <= reach
        new = np.flatnonzero(near).astype(np.int64)
        dropped = np.setdiff1d(self.cand, new)
        self.lm_state[dropped, 0] = 0.0
        self.cand = new

    def _refill(self):
        n = self.rng.standard_normal((_BUF_ROWS, 3))
        u = self.rng.random((_BUF_ROWS, 2)) - 0.5
        self.buf = np.column_stack([n[:, 0], n[:, 1], u[:, 0], u[:, 1], n[:, 2]])
        self.ist[K.I_BUF] = 0

    @property
    def belief(self) -> PoseBelief:
        return PoseBelief(self.mean, self.cov)

    def _load(self, b: PoseBelief):
        self.mean[:] = b.mean
        self.cov[:] = b.cov

    # event handlers
    def _landmark(self, m: int):
        cfg = self.cfg
        lx, ly = self.lm_pos[m]
        sig = cfg.noise.landmark_fix_sigma
        # the 2-sigma mask on the position block decides association; no second gate
        if landmark_distance(self.belief, lx, ly) > cfg.gate_sigma * (1.0 + 1e-12):
            return
        if self.det_rng.random() >= cfg.detection_rate:
            return
        self._load(update_landmark(self.belief, LandmarkFix(int(m), lx, ly, sig), math.inf))
        self.updates += 1
        self.excluded.add(int(m))

    def _moves(self, v, u):
        moves = [m for m in self.w.net.exits[v] if m[0] != u]
        if not moves or self.cfg.nav.uturn_at_through_nodes:
            moves += [m for m in self.w.net.exits[v] if m[0] == u]
        return moves

    def _scene_filter(self, v, u, moves, rel):
        """Keep exits the scene estimator believes in (ground truth fallback)."""
        kind = ["S" if abs(r) < math.pi / 4 else ("L" if r > 0 else "R")
                if abs(r) < 3 * math.pi / 4 else "U" for r in rel]
        r = self.scene_rng
        truth = IntersectionTruth(left="L" in kind, straight="S" in kind, right="R" in kind,
                                  stop_sign=bool(r.random() < 0.4),
                                  cross_traffic_left=bool(r.random() < 0.5),
                                  cross_traffic_right=bool(r.random() < 0.5),
                                  lanes=bool(r.random() < 0.5))
        res = run_approach(truth, r, ApproachConfig(start_distance=60.0))
        keep = [i for i, k in enumerate(kind) if k == "U" or res.final.p(k) > 0.5]
        return keep or list(range(len(moves)))

    def _decide(self):
        cfg, pos = self.cfg, self.pos
        v, u = self.next_node, self.prev_node
        moves = self._moves(v, u)
        if not moves:
            return False
        b_in = _bearing(pos[u], pos[v])
        rel = [wrap_angle(_bearing(pos[v], pos[w]) - b_in) for w, _ in moves]
        x, y = self.truth[0], self.truth[1]
        remaining = math.hypot(pos[v][0] - x, pos[v][1] - y)
        th = self.mean[2]
        est = self.mean[:2] + remaining * np.array([math.cos(th), math.sin(th)])
        if self.chooser is not None:
            k = self.chooser(v, u, moves)
            options = []
        else:
            if cfg.scene_mode == "estimated":
                idx = self._scene_filter(v, u, moves, rel)
            else:
                idx = list(range(len(moves)))
            bearings = [wrap_angle(th + rel[i]) for i in idx]
            belief = self.belief
            if self.target is not None and self.target not in self.excluded:
                d = _segment_distance(self.lm_pos[[self.target]], self.last_est, est)[0]
                if d <= cfg.sensing_radius:
                    self.excluded.add(self.target)
            self.target = target_landmark(cfg.strategy, belief, self.lm_pos,
                                          pos[self.goal_node], self.excluded)
            aim = pos[self.goal_node] if self.target is None else self.lm_pos[self.target]
            options = build_options(est, bearings, aim, self.memory, cfg.nav)
            k = idx[decide_intersection(options)]
            self.memory = record_visit(self.memory, est, wrap_angle(th + rel[k]),
                                       cfg.nav.match_radius, cfg.nav.same_exit_tol)
        self.last_est = est
        self.decisions += 1
        if abs(rel[k]) > math.radians(10):
            self.turns += 1
        w = moves[k][0]
        if self.trace is not None:
            rec = decision_record(est, options, int(k))
            rec.update({"step": int(self.ist[K.I_STEP]), "node": int(v), "next": int(w),
                        "target": None if self.target is None else int(self.target)})
            self.trace.setdefault("decisions", []).append(rec)
        here = self._projection()
        self._set_path([here, pos[v], pos[w]])
        self.prev_node, self.next_node = v, w
        self._arm(w)
        self._update_candidates()
        return True

    def _projection(self):
        i = min(int(self.ist[K.I_CURSOR]), len(self.path) - 2)
        a, b = self.path[i], self.path[i + 1]
        ab = b - a
        t = float(np.clip(((self.truth[:2] - a) @ ab) / (ab @ ab), 0.0, 1.0))
        return a + t * ab

    def _new_goal(self) -> bool:
        try:
            ends = sample_endpoints(self.w.net, self.det_rng.integers(2 ** 63),
                                    self.cfg.min_separation_m, start_node=self.next_node,
                                    max_separation=self.cfg.max_separation_m)
        except SamplingExhausted:
            return False
        self.goal_node = ends.goal_node
        self.stop[K.S_GOAL_X], self.stop[K.S_GOAL_Y] = self.pos[ends.goal_node]
        self.excluded.clear()
        self.target = None
        return True

    def run(self) -> TrialRecord:
        cfg = self.cfg
        if cfg.timeout_steps is not None:
            budget = cfg.timeout_steps
        elif cfg.max_distance_m is not None:
            budget = int(20 * cfg.max_distance_m / (cfg.vehicle.v_cruise * cfg.vehicle.dt))
        else:
            budget = int(math.ceil(cfg.timeout_factor * self.w.euclidean
                                   / (cfg.vehicle.v_cruise * cfg.vehicle.dt)))
        chunk = 1 if self.trace is not None else budget
        outcome = TIMEOUT
        while True:
            left = budget - int(self.ist[K.I_STEP])
            if left <= 0:
                break
            ev = K.drive(self.truth, self.mean, self.cov, self.ctrl, self.ist, self.acc,
                         self.stop, self.npar, self.path, self.cum_s, self.slow_s, self.gains,
                         self.vp, self.buf, self.lm_pos, self.lm_state, self.cand,
                         min(chunk, left))
            if self.trace is not None and ev != K.EV_BUFFER:
                self._trace_step()
            if ev == K.EV_BUFFER:
                self._refill()
            elif ev == K.EV_LOST:
                outcome = LOST
                break
            elif ev == K.EV_GOAL:
                self.goals += 1
                if cfg.max_distance_m is None or not self._new_goal():
                    outcome = REACHED
                    break
            elif ev == K.EV_LANDMARK:
                self._landmark(int(self.ist[K.I_LM]))
            elif ev == K.EV_DECIDE:
                if not self._decide():
                    break
            elif ev in (K.EV_CAP, K.EV_STALL):
                break
        return TrialRecord(
            seed=int(cfg.seed), outcome=outcome, manhattan_m=float(self.acc[0]),
            euclidean_m=float(self.w.euclidean), final_axis_m=float(K.major_axis_of(self.cov)),
            landmark_updates=self.updates, decisions=self.decisions, cell=self.cell,
            goals_reached=self.goals,
            steps=int(self.ist[K.I_STEP]), turns=self.turns)

    def _trace_step(self):
        rec = belief_record(self.belief, int(self.ist[K.I_STEP]), self.cfg.lost_threshold)
        rec["truth"] = {"x": float(self.truth[0]), "y": float(self.truth[1]),
                        "theta": float(self.truth[2]), "v": float(self.truth[3])}
        self.trace.setdefault("steps", []).append(rec)


def run_trial(cfg: ScenarioConfig, cell: int = 0, trace: dict | None = None,
              world: World | None = None) -> TrialRecord:
    """Simulate one trial; deterministic in (cfg.seed, cell).

    Pass a dict as ``trace`` to collect per-step belief records ("steps") and
    decision records ("decisions").
    """
    cfg.validate()
    world = world or build_world(cfg)
    return _Trial(cfg, world, cell, trace).run()


# --- scripted routes (shape of the uncertainty ellipse) -------------------------------------

def grid_route(net: RoadNetwork, start: int, length: float, leg: float | None) -> list[int]:
    """Node route heading east, switching east/north every ``leg`` metres (None: straight)."""
    pos = net.positions
    heading = 0.0
    route = [start]
    travelled = since_turn = 0.0
    while travelled < length:
        v = route[-1]
        best = None
        for w, _ in net.exits[v]:
            if abs(wrap_angle(_bearing(pos[v], pos[w]) - heading)) < 0.1:
                best = w
        if best is None:
            raise ConfigError("grid route ran off the map")
        step = float(math.hypot(*(pos[best] - pos[v])))
        route.append(best)
        travelled += step
        since_turn += step
        if leg is not None and since_turn >= leg:
            heading = math.pi / 2 if heading == 0.0 else 0.0
            since_turn = 0.0
    return route


def run_route(cfg: ScenarioConfig, turns: bool, length: float = 5000.0, leg: float = 450.0,
              cell: int = 0) -> TrialRecord:
    """Drive a scripted straight or staircase route until ``length`` metres; no goal."""
    params = replace(cfg.map, dead_end_fraction=0.0, one_way_fraction=0.0)
    ss = np.random.SeedSequence([cfg.seed, 0])
    s_map, s_start = ss.spawn(2)
    net = _cached_map(params, int(s_map.generate_state(1, np.uint64)[0]))
    pos = net.positions
    x0, y0, x1, y1 = net.bounds
    # the route runs 200 m past ``length`` and may overshoot a leg by one block
    extent = (length if not turns else length / 2 + leg) + 200.0 + 2 * net.block_range[1]
    ok = np.flatnonzero((pos[:, 0] < x1 - extent) & (pos[:, 1] < y1 - extent))
    if not len(ok):
        raise ConfigError("map too small for the requested route")
    start = int(ok[np.random.default_rng(s_start).integers(len(ok))])
    route = grid_route(net, start, length + 200.0, leg if turns else None)
    world = World(net, np.zeros((0, 2)), start, route[1], route[-1], 0.0)
    cfg = replace(cfg, max_distance_m=length, landmark_density=0.0)
    nxt = {route[i]: route[i + 1] for i in range(len(route) - 1)}

    def chooser(v, u, moves):
        return [m[0] for m in moves].index(nxt[v])

    t = _Trial(cfg, world, cell, None, chooser)
    t.stop[K.S_GOAL_R] = -1.0
    return t.run()


# --- statistics ------------------------------------------------------------------------------

def percentile(values, q: float) -> float | None:
    v = sorted(values)
    if not v:
        return None
    return float(np.percentile(np.array(v, dtype=float), q))


def success_by_range(records, bucket_m: float = 500.0) -> list[dict]:
    buckets: dict[int, list[int]] = {}
    for r in records:
        k = int(r.euclidean_m // bucket_m)
        buckets.setdefault(k, [0, 0])
        buckets[k][0] += 1
        buckets[k][1] += r.outcome == REACHED
    return [{"lo_m": k * bucket_m, "hi_m": (k + 1) * bucket_m, "n": n, "reached": s,
             "success_rate": s / n} for k, (n, s) in sorted(buckets.items())]


def range_at_success(records, level: float = 0.8, bucket_m: float = 500.0,
                     min_count: int = 10) -> float:
    """Upper edge of the farthest bucket whose success rate is at least ``level``."""
    best = 0.0
    for b in success_by_range(records, bucket_m):
        if b["n"] >= min_count and b["success_rate"] >= level:
            best = max(best, b["hi_m"])
    return best


def summarize(records, bucket_m: float = 500.0, min_bucket: int = 10) -> dict:
    """Counts, success rate, means and percentiles; rates are None for an empty set."""
    recs = sorted(records, key=lambda r: (r.cell, r.trial, r.seed))
    n = len(recs)
    out = {"n": n, "reached": sum(r.outcome == REACHED for r in recs),
           "lost": sum(r.outcome == LOST for r in recs),
           "timeout": sum(r.outcome == TIMEOUT for r in recs)}
    if n == 0:
        out.update({"success_rate": None, "mean_manhattan_m": None, "mean_euclidean_m": None,
                    "mean_final_axis_m": None, "p50_manhattan_m": None, "range80_m": None})
        return out
    man = [r.manhattan_m for r in recs]
    out.update({
        "success_rate": out["reached"] / n,
        "mean_manhattan_m": math.fsum(man) / n,
        "mean_euclidean_m": math.fsum(r.euclidean_m for r in recs) / n,
        "mean_final_axis_m": math.fsum(r.final_axis_m for r in recs) / n,
        "p10_manhattan_m": percentile(man, 10),
        "p50_manhattan_m": percentile(man, 50),
        "p90_manhattan_m": percentile(man, 90),
        "mean_landmark_updates": math.fsum(r.landmark_updates for r in recs) / n,
        "range80_m": range_at_success(recs, 0.8, bucket_m, min_bucket),
    })
    return out


# --- studies ------------------------------------------------------------------------------------

@dataclass
class StudyTable:
    keys: tuple[str, ...]
    cells: list[dict]  # key values + summary stats
    records: list[TrialRecord]
    meta: dict = field(default_factory=dict)
    cell_configs: list = field(default_factory=list, repr=False)

    def cell_records(self, i: int) -> list[TrialRecord]:
        return [r for r in self.records if r.cell == i]

    def __len__(self) -> int:
        return len(self.cells)


def _run_cells(task):
    cfgs, trial = task
    return [run_trial(c, cell=i) for i, c in enumerate(cfgs)]


def _execute(cell_cfgs, master: int, n: int, parallel: int = 1) -> list[TrialRecord]:
    tasks = [([replace(c, seed=trial_seed(master, t)) for c in cell_cfgs], t) for t in range(n)]
    if parallel > 1 and n > 1:
        with mp.get_context("fork").Pool(parallel) as pool:
            chunks = pool.map(_run_cells, tasks, chunksize=max(1, n // (4 * parallel)))
    else:
        chunks = [_run_cells(t) for t in tasks]
    recs = [replace(r, trial=t) for t, chunk in enumerate(chunks) for r in chunk]
    return sorted(recs, key=lambda r: (r.cell, r.trial))


def _table(keys, cell_keys, recs, grid: StudyGrid, meta) -> StudyTable:
    cells = []
    for i, kv in enumerate(cell_keys):
        stats = summarize([r for r in recs if r.cell == i], grid.bucket_m, grid.min_bucket)
        cells.append({**dict(zip(keys, kv)), **stats})
    return StudyTable(tuple(keys), cells, recs, meta)


def run_range_study(cfg: ScenarioConfig, n: int = 200, grid: StudyGrid = StudyGrid(),
                    parallel: int = 1) -> StudyTable:
    """Distance travelled before getting lost, one cell per compass case (no landmarks)."""
    cap = cfg.max_distance_m or 50_000.0
    base = replace(cfg, landmark_density=0.0, max_distance_m=cap)
    cell_cfgs, cell_keys = [], []
    for deg in grid.compass_cases_deg:
        noise = replace(base.noise, compass_2sigma=None if deg is None else math.radians(deg))
        cell_cfgs.append(replace(base, noise=noise).validate())
        cell_keys.append(("none" if deg is None else f"{deg:g}",))
    recs = _execute(cell_cfgs, cfg.seed, n, parallel)
    table = _table(("compass_2sigma_deg",), cell_keys, recs, grid,
                   {"study": "range", "n": n, "cap_m": cap, "master_seed": cfg.seed})
    table.cell_configs = cell_cfgs
    for i, c in enumerate(table.cells):
        lost = [r.manhattan_m for r in table.cell_records(i) if r.outcome == LOST]
        c["lost_fraction"] = (len(lost) / c["n"]) if c["n"] else None
        c["mean_lost_only_m"] = (math.fsum(lost) / len(lost)) if lost else None
    return table


def run_landmark_study(cfg: ScenarioConfig, n: int = 300, grid: StudyGrid = StudyGrid(),
                       parallel: int = 1) -> StudyTable:
    """Success versus start-goal range over strategy x density x rate cells."""
    cell_cfgs, cell_keys = [], []
    for s in grid.strategies:
        for d in grid.densities:
            for r in grid.rates:
                cell_cfgs.append(replace(cfg, strategy=replace(cfg.strategy, kind=s),
                                         landmark_density=d, detection_rate=r).validate())
                cell_keys.append((s, d, r))
    recs = _execute(cell_cfgs, cfg.seed, n, parallel)
    table = _table(("strategy", "density_per_km2", "detection_rate"), cell_keys, recs, grid,
                   {"study": "landmark", "n": n, "bucket_m": grid.bucket_m,
                    "min_bucket": grid.min_bucket, "master_seed": cfg.seed})
    table.cell_configs = cell_cfgs
    return table


# --- persistence -----------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def write_trials_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        for r in records:
            w.writerow([_fmt(v) for v in r.row()])


def read_trials_csv(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for i, row in enumerate(rows):
        out.append(TrialRecord(int(row["seed"]), row["outcome"], float(row["manhattan_m"]),
                               float(row["euclidean_m"]), float(row["final_axis_m"]),
                               int(row["landmark_updates"]), int(row["decisions"]), trial=i))
    return out


def write_study(out_dir, table: StudyTable) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials_csv(out / "trials.csv", table.records)
    stat_cols = ["n", "reached", "lost", "timeout", "success_rate", "mean_manhattan_m",
                 "mean_euclidean_m", "mean_final_axis_m", "p50_manhattan_m", "range80_m"]
    extra = [k for k in ("lost_fraction", "mean_lost_only_m") if table.cells and k in table.cells[0]]
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(table.keys) + stat_cols + extra)
        for c in table.cells:
            w.writerow([_fmt(c.get(k)) for k in list(table.keys) + stat_cols + extra])
    with open(out / "trial_index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "cell", "trial"] + list(table.keys) + ["goals_reached", "steps"])
        for i, r in enumerate(table.records):
            kv = [table.cells[r.cell][k] for k in table.keys]
            w.writerow([i, r.cell, r.trial] + [_fmt(v) for v in kv] + [r.goals_reached, r.steps])
    bucket_m = table.meta.get("bucket_m")
    if bucket_m:
        with open(out / "success_by_range.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(table.keys) + ["lo_m", "hi_m", "n", "reached", "success_rate"])
            for i, c in enumerate(table.cells):
                for b in success_by_range(table.cell_records(i), bucket_m):
                    w.writerow([_fmt(c[k]) for k in table.keys]
                               + [_fmt(b[k]) for k in ("lo_m", "hi_m", "n", "reached",
                                                        "success_rate")])
    with open(out / "meta.json", "w") as fh:
        json.dump(table.meta, fh, indent=2, sort_keys=True)
