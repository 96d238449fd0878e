"""Exogenous world definition: network, transit, vehicles, population.

A scenario directory is a flat set of CSV files plus a key=value config file.
All times are integer seconds after midnight, coordinates are meters in a
local plane, and the simulated day is [0, 86400] seconds.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DAY_SECONDS = 86400

REQUIRED_FILES = (
    "nodes.csv",
    "network.csv",
    "vehicle_types.csv",
    "routes.csv",
    "population.csv",
    "plans.csv",
    "config.txt",
)


class ScenarioError(Exception):
    """Raised when a scenario file is missing, malformed, or inconsistent."""

    def __init__(self, file: str, row: object, rule: str):
        self.file = file
        self.row = row
        self.rule = rule
        super().__init__(f"{file} (row {row}): {rule}")


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length_m: float
    speed_mps: float
    capacity_vph: float
    modes: frozenset


@dataclass(frozen=True)
class Network:
    nodes: dict
    links: dict

    def subgraph_adjacency(self, mode: str) -> dict:
        """Adjacency map node -> [(neighbor, link)] restricted to one mode."""
        adj = {nid: [] for nid in self.nodes}
        for link in self.links.values():
            if mode in link.modes:
                adj[link.from_node].append((link.to_node, link))
        return adj


@dataclass(frozen=True)
class VehicleType:
    id: str
    fuel_type: str
    joules_per_meter: float
    cost_per_hour: float
    seats: int
    standing: int

    @property
    def capacity(self) -> int:
        return self.seats + self.standing


@dataclass(frozen=True)
class ServicePeriod:
    start: int
    end: int
    headway: int


@dataclass(frozen=True)
class TransitRoute:
    route_id: str
    agency_id: str
    stops: tuple          # node ids, in travel order
    dwell_secs: tuple     # per-stop dwell, same length as stops
    periods: tuple        # default ServicePeriods
    vehicle_type_id: str


@dataclass(frozen=True)
class Household:
    id: str
    income_usd: float
    home_node: str


@dataclass(frozen=True)
class Person:
    id: str
    age: int
    household_id: str


@dataclass(frozen=True)
class Activity:
    type: str             # Home | Work | Secondary
    node: str
    end_time: int         # planned end, seconds after midnight


@dataclass
class Leg:
    mode: str | None = None


@dataclass(frozen=True)
class Plan:
    person_id: str
    elements: tuple       # alternating Activity / Leg, starts and ends with Activity

    @property
    def activities(self) -> tuple:
        return tuple(e for e in self.elements if isinstance(e, Activity))

    @property
    def n_legs(self) -> int:
        return sum(1 for e in self.elements if isinstance(e, Leg))


# Config keys with defaults; unknown keys in config.txt are rejected so typos
# surface at load rather than silently falling back.
CONFIG_DEFAULTS = {
    "ridehail_fleet_fraction": 0.02,
    "ridehail_base_usd": 2.0,
    "ridehail_per_mile_usd": 1.0,
    "ridehail_per_minute_usd": 0.25,
    "fuel_price_diesel_usd_per_mj": 0.025,
    "fuel_price_gasoline_usd_per_mj": 0.03,
    "vot_usd_per_hour": 18.0,
    "walk_speed_mps": 1.4,
    "car_opex_usd_per_mile": 0.4,
    "car_joules_per_meter": 2500.0,
    "car_fuel_type": "gasoline",
    "ridehail_joules_per_meter": 2500.0,
    "ridehail_fuel_type": "gasoline",
    "bus_default_fare_usd": 1.5,
    "pm25_g_per_mile_car": 0.02,
    "pm25_g_per_mile_ridehail": 0.02,
    "pm25_g_per_mile_bus": 0.12,
    "ghg_g_per_mj_diesel": 74.0,
    "ghg_g_per_mj_gasoline": 70.0,
    # behavioral parameters of the day simulator
    "beta_time_per_hour": 12.0,
    "beta_cost_per_usd": 1.0,
    "asc_car": 0.0,
    "asc_walk": -0.8,
    "asc_bus": -0.4,
    "asc_ridehail": -1.0,
    "replan_rate": 0.2,
    "plan_memory_size": 4,
    "plan_selection_temperature": 1.0,
    "max_transit_wait_secs": 1800,
    "max_pickup_wait_secs": 900,
    "transit_access_radius_m": 800.0,
    "default_dwell_secs": 20,
    "accessibility_threshold_secs": 900,
    "incentive_cost_floor": 1,
    "convergence_window": 5,
    "convergence_tol": 1e-3,
}

_INT_KEYS = {
    "plan_memory_size", "max_transit_wait_secs", "max_pickup_wait_secs",
    "default_dwell_secs", "accessibility_threshold_secs", "incentive_cost_floor",
    "convergence_window",
}


@dataclass(frozen=True)
class GlobalConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    def with_overrides(self, **kwargs) -> "GlobalConfig":
        bad = set(kwargs) - set(CONFIG_DEFAULTS)
        if bad:
            raise KeyError(f"unknown config keys: {sorted(bad)}")
        merged = dict(self.values)
        merged.update(kwargs)
        return GlobalConfig(merged)


@dataclass(frozen=True)
class Scenario:
    network: Network
    routes: dict            # route_id -> TransitRoute
    vehicle_types: dict     # id -> VehicleType
    households: dict        # id -> Household
    persons: dict           # id -> Person
    plans: dict             # person_id -> Plan
    config: GlobalConfig

    @property
    def n_agents(self) -> int:
        return len(self.persons)

    def person_home(self, person_id: str) -> str:
        return self.households[self.persons[person_id].household_id].home_node

    def activity_locations(self, activity_type: str) -> set:
        locs = set()
        for plan in self.plans.values():
            for act in plan.activities:
                if act.type == activity_type:
                    locs.add(act.node)
        return locs


# ---------------------------------------------------------------------------
# Loading


def _read_csv(path: Path, required_cols):
    if not path.exists():
        raise ScenarioError(path.name, "-", "file missing")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in required_cols if c not in cols]
        if missing:
            raise ScenarioError(path.name, 0, f"missing columns {missing}")
        return list(reader)


def _parse_config(path: Path) -> GlobalConfig:
    if not path.exists():
        raise ScenarioError(path.name, "-", "file missing")
    values = dict(CONFIG_DEFAULTS)
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(path.name, i, f"expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in CONFIG_DEFAULTS:
            raise ScenarioError(path.name, i, f"unknown config key {key!r}")
        try:
            values[key] = int(raw) if key in _INT_KEYS else float(raw)
        except ValueError:
            raise ScenarioError(path.name, i, f"bad value for {key}: {raw!r}")
    if not (0.0 < values["ridehail_fleet_fraction"] <= 1.0):
        raise ScenarioError(path.name, "-", "ridehail_fleet_fraction must be in (0, 1]")
    return GlobalConfig(values)


def _strongly_connected(adj: dict, seeds: set, targets: set, mode: str):
    """Check every target is reachable from and can reach every seed via BFS."""
    plain = {n: [m for m, _ in nbrs] for n, nbrs in adj.items()}
    rev = {n: [] for n in plain}
    for n, nbrs in plain.items():
        for m in nbrs:
            rev[m].append(n)
    for graph, label in ((plain, "forward"), (rev, "reverse")):
        for seed in seeds:
            seen = {seed}
            queue = deque([seed])
            while queue:
                cur = queue.popleft()
                for nxt in graph.get(cur, ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
            unreached = targets - seen
            if unreached:
                raise ScenarioError(
                    "network.csv", "-",
                    f"{mode} subgraph not connected ({label}): "
                    f"{sorted(unreached)[:3]} unreachable from {seed}")
            break  # strong connectivity over one seed implies the rest via both passes


def load_scenario(directory) -> Scenario:
    """Load and fully validate a scenario directory."""
    directory = Path(directory)

    config = _parse_config(directory / "config.txt")

    nodes = {}
    for i, row in enumerate(_read_csv(directory / "nodes.csv", ["node_id", "x_m", "y_m"]), 2):
        nid = row["node_id"]
        if nid in nodes:
            raise ScenarioError("nodes.csv", i, f"duplicate node {nid}")
        nodes[nid] = Node(nid, float(row["x_m"]), float(row["y_m"]))

    links = {}
    cols = ["link_id", "from", "to", "length_m", "speed_mps", "capacity_vph", "modes"]
    for i, row in enumerate(_read_csv(directory / "network.csv", cols), 2):
        lid = row["link_id"]
        if lid in links:
            raise ScenarioError("network.csv", i, f"duplicate link {lid}")
        for endpoint in (row["from"], row["to"]):
            if endpoint not in nodes:
                raise ScenarioError("network.csv", i, f"link {lid} references unknown node {endpoint}")
        length = float(row["length_m"])
        speed = float(row["speed_mps"])
        cap = float(row["capacity_vph"])
        if length <= 0:
            raise ScenarioError("network.csv", i, f"link {lid}: length must be > 0")
        if speed <= 0:
            raise ScenarioError("network.csv", i, f"link {lid}: free speed must be > 0")
        if cap <= 0:
            raise ScenarioError("network.csv", i, f"link {lid}: capacity must be > 0")
        links[lid] = Link(lid, row["from"], row["to"], length, speed, cap,
                          frozenset(row["modes"].split("|")))
    network = Network(nodes, links)

    vehicle_types = {}
    cols = ["id", "fuel_type", "joules_per_meter", "cost_per_hour", "seats", "standing"]
    for i, row in enumerate(_read_csv(directory / "vehicle_types.csv", cols), 2):
        vt = VehicleType(row["id"], row["fuel_type"], float(row["joules_per_meter"]),
                         float(row["cost_per_hour"]), int(row["seats"]), int(row["standing"]))
        if vt.seats < 1:
            raise ScenarioError("vehicle_types.csv", i, f"{vt.id}: seats must be >= 1")
        if vt.standing < 0:
            raise ScenarioError("vehicle_types.csv", i, f"{vt.id}: standing must be >= 0")
        if vt.joules_per_meter <= 0:
            raise ScenarioError("vehicle_types.csv", i, f"{vt.id}: fuel consumption must be > 0")
        if vt.cost_per_hour < 0:
            raise ScenarioError("vehicle_types.csv", i, f"{vt.id}: cost must be >= 0")
        vehicle_types[vt.id] = vt

    car_adj = network.subgraph_adjacency("car")

    routes = {}
    cols = ["route_id", "agency_id", "stops", "dwell_secs", "service_periods", "vehicle_type"]
    for i, row in enumerate(_read_csv(directory / "routes.csv", cols), 2):
        rid = row["route_id"]
        stops = tuple(row["stops"].split("|"))
        if len(stops) < 2:
            raise ScenarioError("routes.csv", i, f"route {rid}: needs at least 2 stops")
        for s in stops:
            if s not in nodes:
                raise ScenarioError("routes.csv", i, f"route {rid}: unknown stop node {s}")
        dwell = tuple(int(x) for x in row["dwell_secs"].split("|"))
        if len(dwell) != len(stops):
            raise ScenarioError("routes.csv", i, f"route {rid}: dwell list length mismatch")
        periods = []
        for triple in row["service_periods"].split("|"):
            parts = triple.split(":")
            if len(parts) != 3:
                raise ScenarioError("routes.csv", i, f"route {rid}: bad service period {triple!r}")
            periods.append(ServicePeriod(int(parts[0]), int(parts[1]), int(parts[2])))
        periods.sort(key=lambda p: p.start)
        for p in periods:
            if not (0 <= p.start < p.end <= DAY_SECONDS):
                raise ScenarioError("routes.csv", i, f"route {rid}: period outside [0, 86400]")
        for a, b in zip(periods, periods[1:]):
            if b.start < a.end:
                raise ScenarioError("routes.csv", i, f"route {rid}: overlapping service periods")
        if row["vehicle_type"] not in vehicle_types:
            raise ScenarioError("routes.csv", i, f"route {rid}: unknown vehicle type {row['vehicle_type']}")
        # consecutive stops must be connected in the car subgraph
        for a, b in zip(stops, stops[1:]):
            if not _car_reachable(car_adj, a, b):
                raise ScenarioError("routes.csv", i, f"route {rid}: no car path from {a} to {b}")
        routes[rid] = TransitRoute(rid, row["agency_id"], stops, dwell, tuple(periods),
                                   row["vehicle_type"])

    households = {}
    persons = {}
    cols = ["person_id", "age", "household_id", "income_usd", "home_node"]
    for i, row in enumerate(_read_csv(directory / "population.csv", cols), 2):
        hid = row["household_id"]
        income = float(row["income_usd"])
        if income <= 0:
            raise ScenarioError("population.csv", i, f"household {hid}: income must be > 0")
        if row["home_node"] not in nodes:
            raise ScenarioError("population.csv", i, f"household {hid}: unknown home node")
        if hid not in households:
            households[hid] = Household(hid, income, row["home_node"])
        age = int(row["age"])
        if not (0 <= age <= 120):
            raise ScenarioError("population.csv", i, f"person {row['person_id']}: age out of [0, 120]")
        pid = row["person_id"]
        if pid in persons:
            raise ScenarioError("population.csv", i, f"duplicate person {pid}")
        persons[pid] = Person(pid, age, hid)

    plans = _load_plans(directory / "plans.csv", persons, nodes)

    scenario = Scenario(network, routes, vehicle_types, households, persons, plans, config)
    _validate_connectivity(scenario)
    return scenario


def _car_reachable(adj, a, b):
    if a == b:
        return True
    seen = {a}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        for nxt, _ in adj[cur]:
            if nxt == b:
                return True
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def _load_plans(path: Path, persons: dict, nodes: dict) -> dict:
    rows = _read_csv(path, ["person_id", "element_index", "kind", "activity_type", "node", "end_time"])
    by_person = {}
    for i, row in enumerate(rows, 2):
        pid = row["person_id"]
        if pid not in persons:
            raise ScenarioError("plans.csv", i, f"unknown person {pid}")
        by_person.setdefault(pid, []).append((int(row["element_index"]), i, row))

    plans = {}
    for pid, elements in by_person.items():
        elements.sort(key=lambda t: t[0])
        parsed = []
        age = persons[pid].age
        for seq, (idx, line, row) in enumerate(elements):
            if row["kind"] == "activity":
                atype = row["activity_type"]
                if atype not in ("Home", "Work", "Secondary"):
                    raise ScenarioError("plans.csv", line, f"person {pid}: unknown activity type {atype}")
                if atype == "Work" and age < 18:
                    raise ScenarioError(
                        "plans.csv", line,
                        f"person {pid} (age {age}): agents under 18 may not have a Work activity")
                if row["node"] not in nodes:
                    raise ScenarioError("plans.csv", line, f"person {pid}: unknown node {row['node']}")
                end = int(row["end_time"]) if row["end_time"] else DAY_SECONDS
                parsed.append(Activity(atype, row["node"], end))
            elif row["kind"] == "leg":
                mode = row["activity_type"] or None
                if mode == "car" and age < 16:
                    raise ScenarioError(
                        "plans.csv", line,
                        f"person {pid} (age {age}): agents under 16 may not drive")
                parsed.append(Leg(mode))
            else:
                raise ScenarioError("plans.csv", line, f"person {pid}: unknown element kind {row['kind']!r}")
        _check_plan_shape(pid, parsed)
        plans[pid] = Plan(pid, tuple(parsed))

    for pid in persons:
        if pid not in plans:
            raise ScenarioError("plans.csv", "-", f"person {pid} has no plan")
    return plans


def _check_plan_shape(pid: str, elements: list):
    if not elements:
        raise ScenarioError("plans.csv", "-", f"person {pid}: empty plan")
    if not (isinstance(elements[0], Activity) and elements[0].type == "Home"):
        raise ScenarioError("plans.csv", "-", f"person {pid}: plan must begin with Home")
    if not (isinstance(elements[-1], Activity) and elements[-1].type == "Home"):
        raise ScenarioError("plans.csv", "-", f"person {pid}: plan must end with Home")
    for i, el in enumerate(elements):
        expected = Activity if i % 2 == 0 else Leg
        if not isinstance(el, expected):
            raise ScenarioError("plans.csv", "-", f"person {pid}: elements must alternate activity/leg")
    acts = [e for e in elements if isinstance(e, Activity)]
    ends = [a.end_time for a in acts[:-1]]
    if any(b <= a for a, b in zip(ends, ends[1:])):
        raise ScenarioError("plans.csv", "-", f"person {pid}: activity end times must be strictly increasing")


def _validate_connectivity(scenario: Scenario):
    activity_nodes = set()
    for plan in scenario.plans.values():
        for act in plan.activities:
            activity_nodes.add(act.node)
    if not activity_nodes:
        return
    for mode in ("car", "walk"):
        adj = scenario.network.subgraph_adjacency(mode)
        seed = next(iter(sorted(activity_nodes)))
        _strongly_connected(adj, {seed}, activity_nodes, mode)


# ---------------------------------------------------------------------------
# Fixture generation

# Table values for the four bus models available to the fleet-mix lever.
BUS_TYPES = (
    ("BUS-DEFAULT", "diesel", 20048.0, 89.88, 37, 20),
    ("BUS-SMALL-HD", "diesel", 18043.2, 90.18, 27, 10),
    ("BUS-STD-HD", "diesel", 20048.0, 90.18, 35, 20),
    ("BUS-STD-ART", "diesel", 26663.84, 97.26, 54, 25),
)

# Piecewise-uniform approximations of the fixture's demographic shapes:
# (low, high, weight); ages inclusive, incomes continuous.
AGE_BANDS = ((0, 15, 0.19), (16, 17, 0.03), (18, 40, 0.34), (41, 64, 0.27), (65, 95, 0.17))
INCOME_BANDS = ((12000, 35000, 0.30), (35000, 75000, 0.45), (75000, 160000, 0.25))

GRID_SPACING_M = 500.0
LINK_SPEED_MPS = 12.5
LINK_CAPACITY_VPH = 600.0
DEFAULT_HEADWAY_S = 1200
SERVICE_START_S = 21600
SERVICE_END_S = 79200


def generate_sioux_micro(seed: int, n_agents: int, grid_dim: int, directory) -> Path:
    """Write the synthetic grid fixture to `directory` and return its path.

    Deterministic: the same (seed, n_agents, grid_dim) always produces
    byte-identical files.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    if grid_dim < 2:
        raise ValueError("grid_dim must be >= 2")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    node_ids = []
    with open(directory / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "x_m", "y_m"])
        for r in range(grid_dim):
            for c in range(grid_dim):
                nid = f"n{r}_{c}"
                node_ids.append(nid)
                w.writerow([nid, f"{c * GRID_SPACING_M:.1f}", f"{r * GRID_SPACING_M:.1f}"])

    with open(directory / "network.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link_id", "from", "to", "length_m", "speed_mps", "capacity_vph", "modes"])
        k = 0
        for r in range(grid_dim):
            for c in range(grid_dim):
                here = f"n{r}_{c}"
                for dr, dc in ((0, 1), (1, 0)):
                    rr, cc = r + dr, c + dc
                    if rr < grid_dim and cc < grid_dim:
                        there = f"n{rr}_{cc}"
                        for a, b in ((here, there), (there, here)):
                            w.writerow([f"l{k}", a, b, f"{GRID_SPACING_M:.1f}",
                                        f"{LINK_SPEED_MPS}", f"{LINK_CAPACITY_VPH:.1f}",
                                        "car|walk|bus"])
                            k += 1

    with open(directory / "vehicle_types.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "fuel_type", "joules_per_meter", "cost_per_hour", "seats", "standing"])
        for row in BUS_TYPES:
            w.writerow(row)

    mid = grid_dim // 2
    row_stops = "|".join(f"n{mid}_{c}" for c in range(grid_dim))
    col_stops = "|".join(f"n{r}_{mid}" for r in range(grid_dim))
    dwell = "|".join(["20"] * grid_dim)
    period = f"{SERVICE_START_S}:{SERVICE_END_S}:{DEFAULT_HEADWAY_S}"
    with open(directory / "routes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route_id", "agency_id", "stops", "dwell_secs", "service_periods", "vehicle_type"])
        w.writerow(["1340", "metro", row_stops, dwell, period, "BUS-DEFAULT"])
        w.writerow(["1341", "metro", col_stops, dwell, period, "BUS-DEFAULT"])

    ages = _draw_banded_ints(rng, AGE_BANDS, n_agents)
    incomes = _draw_banded_floats(rng, INCOME_BANDS, n_agents)
    homes = rng.integers(0, len(node_ids), n_agents)

    with open(directory / "population.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["person_id", "age", "household_id", "income_usd", "home_node"])
        for i in range(n_agents):
            w.writerow([f"p{i:05d}", ages[i], f"h{i:05d}", f"{incomes[i]:.0f}",
                        node_ids[homes[i]]])

    with open(directory / "plans.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["person_id", "element_index", "kind", "activity_type", "node", "end_time"])
        for i in range(n_agents):
            pid = f"p{i:05d}"
            home = node_ids[homes[i]]
            elements = _draw_plan(rng, ages[i], home, node_ids)
            for j, el in enumerate(elements):
                if isinstance(el, Activity):
                    end = "" if j == len(elements) - 1 else str(el.end_time)
                    w.writerow([pid, j, "activity", el.type, el.node, end])
                else:
                    w.writerow([pid, j, "leg", "", "", ""])

    (directory / "config.txt").write_text(
        "# generated fixture configuration (defaults apply for absent keys)\n"
        "ridehail_fleet_fraction=0.02\n")
    return directory


def _draw_banded_ints(rng, bands, n):
    weights = np.array([b[2] for b in bands])
    idx = rng.choice(len(bands), size=n, p=weights / weights.sum())
    lows = np.array([b[0] for b in bands])
    highs = np.array([b[1] for b in bands])
    return [int(rng.integers(lows[i], highs[i] + 1)) for i in idx]


def _draw_banded_floats(rng, bands, n):
    weights = np.array([b[2] for b in bands])
    idx = rng.choice(len(bands), size=n, p=weights / weights.sum())
    return [float(rng.uniform(bands[i][0], bands[i][1])) for i in idx]


def _draw_plan(rng, age, home, node_ids):
    def other_node():
        while True:
            nid = node_ids[int(rng.integers(0, len(node_ids)))]
            if nid != home:
                return nid

    worker = age >= 18 and rng.random() < 0.75
    if worker:
        home_end = int(rng.integers(6 * 3600 + 1800, 9 * 3600))
        work_end = int(rng.integers(15 * 3600 + 1800, 18 * 3600))
        elements = [Activity("Home", home, home_end), Leg(),
                    Activity("Work", other_node(), work_end), Leg()]
        if rng.random() < 0.6:
            sec_end = work_end + int(rng.integers(2700, 7200))
            elements += [Activity("Secondary", other_node(), sec_end), Leg()]
        elements.append(Activity("Home", home, DAY_SECONDS))
    else:
        home_end = int(rng.integers(8 * 3600, 11 * 3600))
        sec_end = int(rng.integers(12 * 3600, 17 * 3600))
        elements = [Activity("Home", home, home_end), Leg(),
                    Activity("Secondary", other_node(), sec_end), Leg(),
                    Activity("Home", home, DAY_SECONDS)]
    return elements
