"""Policy-lever input tables: parsing, business rules, repair, and the
fixed-dimension numeric encoding searched by the optimizers.

The four tables (frequency adjustment, fleet mix, fares, incentives) form
the decision vector. `validate` is the constraint function: a decision is
feasible iff it returns no violations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADWAY_MIN_S = 180
HEADWAY_MAX_S = 7200
MAX_SERVICE_PERIODS = 5
FARE_MIN = 0.0
FARE_MAX = 10.0
MIN_AGE_SPAN = 4          # inclusive ranges: max - min >= 4 covers five ages
MIN_INCOME_SPAN = 5000.0
INCENTIVE_MIN = 0.0
INCENTIVE_MAX = 50.0
INCENTIVE_MODES = ("ride_hail", "walk_transit", "drive_transit")


class TemplateMismatch(Exception):
    """Decision vector cannot be represented by the search-space template."""


@dataclass(frozen=True, order=True)
class FrequencyRow:
    route_id: str
    start_time: int
    end_time: int
    headway_secs: int
    exact_times: int = 1


@dataclass(frozen=True, order=True)
class FleetMixRow:
    route_id: str
    vehicle_type_id: str


@dataclass(frozen=True, order=True)
class FareRow:
    route_id: str
    age_min: int
    age_max: int
    fare: float


@dataclass(frozen=True, order=True)
class IncentiveRow:
    mode: str
    age_min: int
    age_max: int
    income_min: float
    income_max: float
    amount: float


@dataclass(frozen=True)
class DecisionVector:
    frequency: tuple = ()
    fleet_mix: tuple = ()
    fares: tuple = ()
    incentives: tuple = ()

    def canonical(self) -> "DecisionVector":
        return DecisionVector(tuple(sorted(self.frequency)), tuple(sorted(self.fleet_mix)),
                              tuple(sorted(self.fares)), tuple(sorted(self.incentives)))

    @property
    def is_empty(self) -> bool:
        return not (self.frequency or self.fleet_mix or self.fares or self.incentives)


BAU = DecisionVector()


@dataclass(frozen=True)
class Violation:
    table: str
    row: int
    rule: str
    message: str

    def __str__(self):
        return f"{self.table}[{self.row}] {self.rule}: {self.message}"


# ---------------------------------------------------------------------------
# Validation (the constraint function)


def validate(d: DecisionVector, scenario) -> list:
    """Return all business-rule violations; an empty list means feasible."""
    d = d.canonical()
    out = []

    by_route = {}
    for i, row in enumerate(d.frequency):
        if row.route_id not in scenario.routes:
            out.append(Violation("FrequencyAdjustment", i, "RULE_ROUTE_UNKNOWN",
                                 f"route {row.route_id} not in scenario"))
        if row.start_time >= row.end_time:
            out.append(Violation("FrequencyAdjustment", i, "RULE_PERIOD_ORDER",
                                 f"start {row.start_time} must precede end {row.end_time}"))
        if not (0 <= row.start_time and row.end_time <= 86400):
            out.append(Violation("FrequencyAdjustment", i, "RULE_PERIOD_BOUNDS",
                                 "service period must lie within [0, 86400]"))
        if row.headway_secs < HEADWAY_MIN_S:
            out.append(Violation("FrequencyAdjustment", i, "RULE_HEADWAY_MIN",
                                 f"headway {row.headway_secs} below {HEADWAY_MIN_S} s"))
        if row.headway_secs > HEADWAY_MAX_S:
            out.append(Violation("FrequencyAdjustment", i, "RULE_HEADWAY_MAX",
                                 f"headway {row.headway_secs} above {HEADWAY_MAX_S} s"))
        by_route.setdefault(row.route_id, []).append((i, row))
    for rid, rows in by_route.items():
        if len(rows) > MAX_SERVICE_PERIODS:
            out.append(Violation("FrequencyAdjustment", rows[0][0], "RULE_MAX_PERIODS",
                                 f"route {rid} has {len(rows)} service periods (max {MAX_SERVICE_PERIODS})"))
        rows = sorted(rows, key=lambda t: t[1].start_time)
        for (_, a), (j, b) in zip(rows, rows[1:]):
            if b.start_time < a.end_time:
                out.append(Violation("FrequencyAdjustment", j, "RULE_PERIOD_OVERLAP",
                                     f"route {rid}: periods overlap at {b.start_time}"))

    seen_routes = set()
    for i, row in enumerate(d.fleet_mix):
        if row.route_id not in scenario.routes:
            out.append(Violation("VehicleFleetMix", i, "RULE_ROUTE_UNKNOWN",
                                 f"route {row.route_id} not in scenario"))
        if row.vehicle_type_id not in scenario.vehicle_types:
            out.append(Violation("VehicleFleetMix", i, "RULE_VEHICLE_UNKNOWN",
                                 f"vehicle type {row.vehicle_type_id} not in catalog"))
        if row.route_id in seen_routes:
            out.append(Violation("VehicleFleetMix", i, "RULE_FLEET_DUP",
                                 f"route {row.route_id} assigned more than one vehicle type"))
        seen_routes.add(row.route_id)

    fares_by_route = {}
    for i, row in enumerate(d.fares):
        if row.route_id not in scenario.routes:
            out.append(Violation("MassTransitFares", i, "RULE_ROUTE_UNKNOWN",
                                 f"route {row.route_id} not in scenario"))
        if not (FARE_MIN <= row.fare <= FARE_MAX):
            out.append(Violation("MassTransitFares", i, "RULE_FARE_RANGE",
                                 f"fare {row.fare} outside [{FARE_MIN}, {FARE_MAX}]"))
        if row.age_max - row.age_min < MIN_AGE_SPAN:
            out.append(Violation("MassTransitFares", i, "RULE_AGE_SPAN",
                                 f"age range [{row.age_min}, {row.age_max}] spans fewer than five years"))
        fares_by_route.setdefault(row.route_id, []).append((i, row))
    for rid, rows in fares_by_route.items():
        rows = sorted(rows, key=lambda t: t[1].age_min)
        for (_, a), (j, b) in zip(rows, rows[1:]):
            if b.age_min <= a.age_max:
                out.append(Violation("MassTransitFares", j, "RULE_FARE_OVERLAP",
                                     f"route {rid}: age ranges overlap at {b.age_min}"))

    for i, row in enumerate(d.incentives):
        if row.mode not in INCENTIVE_MODES:
            out.append(Violation("ModeIncentives", i, "RULE_MODE_UNKNOWN",
                                 f"mode {row.mode!r} not one of {INCENTIVE_MODES}"))
        if row.age_max - row.age_min < MIN_AGE_SPAN:
            out.append(Violation("ModeIncentives", i, "RULE_AGE_SPAN",
                                 f"age range [{row.age_min}, {row.age_max}] spans fewer than five years"))
        if row.income_max - row.income_min < MIN_INCOME_SPAN:
            out.append(Violation("ModeIncentives", i, "RULE_INCOME_SPAN",
                                 f"income range [{row.income_min}, {row.income_max}] "
                                 f"narrower than ${MIN_INCOME_SPAN:.0f}"))
        if not (INCENTIVE_MIN <= row.amount <= INCENTIVE_MAX):
            out.append(Violation("ModeIncentives", i, "RULE_INCENTIVE_RANGE",
                                 f"amount {row.amount} outside [{INCENTIVE_MIN}, {INCENTIVE_MAX}]"))
    return out


def repair(d: DecisionVector) -> DecisionVector:
    """Clip violated numeric bounds and drop surplus service periods.

    Surplus rows beyond the per-route period cap are dropped shortest-first;
    overlapping rows keep the earlier (canonical-order) entry.
    """
    freq = []
    for row in sorted(d.frequency):
        start = max(0, min(row.start_time, 86399))
        end = max(start + 1, min(row.end_time, 86400))
        headway = max(HEADWAY_MIN_S, min(row.headway_secs, HEADWAY_MAX_S))
        freq.append(FrequencyRow(row.route_id, start, end, headway, 1))
    by_route = {}
    for row in freq:
        by_route.setdefault(row.route_id, []).append(row)
    freq = []
    for rid in sorted(by_route):
        rows = by_route[rid]
        if len(rows) > MAX_SERVICE_PERIODS:
            rows = sorted(rows, key=lambda r: (-(r.end_time - r.start_time), r.start_time))
            rows = sorted(rows[:MAX_SERVICE_PERIODS])
        kept = []
        for row in sorted(rows, key=lambda r: r.start_time):
            if kept and row.start_time < kept[-1].end_time:
                continue
            kept.append(row)
        freq.extend(kept)

    seen = set()
    fleet = []
    for row in sorted(d.fleet_mix):
        if row.route_id in seen:
            continue
        seen.add(row.route_id)
        fleet.append(row)

    fares = []
    last_by_route = {}
    for row in sorted(d.fares, key=lambda r: (r.route_id, r.age_min)):
        age_min = max(0, min(row.age_min, 120 - MIN_AGE_SPAN))
        age_max = max(age_min + MIN_AGE_SPAN, min(row.age_max, 120))
        fare = max(FARE_MIN, min(row.fare, FARE_MAX))
        prev = last_by_route.get(row.route_id)
        if prev is not None and age_min <= prev:
            continue
        last_by_route[row.route_id] = age_max
        fares.append(FareRow(row.route_id, age_min, age_max, fare))

    incentives = []
    for row in sorted(d.incentives):
        age_min = max(0, min(row.age_min, 120 - MIN_AGE_SPAN))
        age_max = max(age_min + MIN_AGE_SPAN, min(row.age_max, 120))
        inc_min = max(0.0, row.income_min)
        inc_max = max(inc_min + MIN_INCOME_SPAN, row.income_max)
        amount = max(INCENTIVE_MIN, min(row.amount, INCENTIVE_MAX))
        incentives.append(IncentiveRow(row.mode, age_min, age_max, inc_min, inc_max, amount))

    return DecisionVector(tuple(freq), tuple(fleet), tuple(fares), tuple(incentives)).canonical()


# ---------------------------------------------------------------------------
# CSV round-trips (headers are the wire format shared with the CLI)

FREQUENCY_HEADER = ["route_id", "start_time", "end_time", "headway_secs", "exact_times"]
FLEET_HEADER = ["route_id", "vehicle_type_id"]
FARE_HEADER = ["route_id", "age_min", "age_max", "fare"]
INCENTIVE_HEADER = ["mode", "age_min", "age_max", "income_min", "income_max", "amount"]

FREQUENCY_FILE = "FrequencyAdjustment.csv"
FLEET_FILE = "VehicleFleetMix.csv"
FARE_FILE = "MassTransitFares.csv"
INCENTIVE_FILE = "ModeIncentives.csv"


def _read_rows(path: Path, header):
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in header if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path.name}: missing columns {missing}")
        return list(reader)


def load_decision_vector(directory) -> DecisionVector:
    """Read the four policy CSVs from a directory (absent file = empty table)."""
    directory = Path(directory)
    freq = tuple(
        FrequencyRow(r["route_id"], int(r["start_time"]), int(r["end_time"]),
                     int(r["headway_secs"]), int(r["exact_times"] or 1))
        for r in _read_rows(directory / FREQUENCY_FILE, FREQUENCY_HEADER))
    fleet = tuple(
        FleetMixRow(r["route_id"], r["vehicle_type_id"])
        for r in _read_rows(directory / FLEET_FILE, FLEET_HEADER))
    fares = tuple(
        FareRow(r["route_id"], int(r["age_min"]), int(r["age_max"]), float(r["fare"]))
        for r in _read_rows(directory / FARE_FILE, FARE_HEADER))
    incentives = tuple(
        IncentiveRow(r["mode"], int(r["age_min"]), int(r["age_max"]),
                     float(r["income_min"]), float(r["income_max"]), float(r["amount"]))
        for r in _read_rows(directory / INCENTIVE_FILE, INCENTIVE_HEADER))
    return DecisionVector(freq, fleet, fares, incentives).canonical()


def save_decision_vector(d: DecisionVector, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    d = d.canonical()
    with open(directory / FREQUENCY_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FREQUENCY_HEADER)
        for r in d.frequency:
            w.writerow([r.route_id, r.start_time, r.end_time, r.headway_secs, r.exact_times])
    with open(directory / FLEET_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FLEET_HEADER)
        for r in d.fleet_mix:
            w.writerow([r.route_id, r.vehicle_type_id])
    with open(directory / FARE_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FARE_HEADER)
        for r in d.fares:
            w.writerow([r.route_id, r.age_min, r.age_max, f"{r.fare:.2f}"])
    with open(directory / INCENTIVE_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INCENTIVE_HEADER)
        for r in d.incentives:
            w.writerow([r.mode, r.age_min, r.age_max, f"{r.income_min:.0f}",
                        f"{r.income_max:.0f}", f"{r.amount:.2f}"])


# ---------------------------------------------------------------------------
# Search-space template

FARE_AGE_BINS = ((0, 15), (16, 60), (61, 120))
INCENTIVE_AGE_BINS = ((0, 15), (16, 60), (61, 120))
INCENTIVE_INCOME_BINS = ((0.0, 40000.0), (40000.0, 100000.0), (100000.0, 200000.0))


@dataclass(frozen=True)
class Dim:
    name: str
    kind: str          # "int" or "float"
    low: float
    high: float
    block: int         # crossover unit for the genetic algorithm


@dataclass(frozen=True)
class SearchSpaceTemplate:
    """Fixed-dimension numeric view of the decision space.

    Per route: one categorical vehicle-type slot (0 = keep route default),
    one headway coordinate over the template service window (values below the
    legal minimum mean "no adjustment"), and one fare per fixed age bin
    (0 = no fare row, route default applies). Plus `n_incentive_slots`
    incentive slots (mode 0 = slot inactive).
    """
    route_ids: tuple
    vehicle_type_ids: tuple
    window: tuple              # (start, end) applied to every frequency row
    n_incentive_slots: int
    dims: tuple

    @property
    def dimension(self) -> int:
        return len(self.dims)

    @property
    def bounds(self) -> np.ndarray:
        return np.array([(d.low, d.high) for d in self.dims])


def build_template(scenario, n_incentive_slots: int = 4) -> SearchSpaceTemplate:
    route_ids = tuple(sorted(scenario.routes))
    vt_ids = tuple(scenario.vehicle_types)
    starts = [p.start for r in scenario.routes.values() for p in r.periods]
    ends = [p.end for r in scenario.routes.values() for p in r.periods]
    window = (min(starts), max(ends)) if starts else (0, 86400)

    dims = []
    block = 0
    for rid in route_ids:
        dims.append(Dim(f"route_{rid}_vehicle_type", "int", 0, len(vt_ids), block))
        dims.append(Dim(f"route_{rid}_headway", "float", 0.0, HEADWAY_MAX_S, block))
        for lo, hi in FARE_AGE_BINS:
            dims.append(Dim(f"route_{rid}_fare_{lo}_{hi}", "float", 0.0, FARE_MAX, block))
        block += 1
    for k in range(n_incentive_slots):
        dims.append(Dim(f"incentive_{k}_mode", "int", 0, len(INCENTIVE_MODES), block))
        dims.append(Dim(f"incentive_{k}_age_bin", "int", 0, len(INCENTIVE_AGE_BINS) - 1, block))
        dims.append(Dim(f"incentive_{k}_income_bin", "int", 0, len(INCENTIVE_INCOME_BINS) - 1, block))
        dims.append(Dim(f"incentive_{k}_amount", "float", 0.0, INCENTIVE_MAX, block))
        block += 1
    return SearchSpaceTemplate(route_ids, vt_ids, window, n_incentive_slots, tuple(dims))


def sample_point(template: SearchSpaceTemplate, rng: np.random.Generator) -> np.ndarray:
    point = np.empty(template.dimension)
    for i, dim in enumerate(template.dims):
        if dim.kind == "int":
            point[i] = rng.integers(int(dim.low), int(dim.high) + 1)
        else:
            point[i] = rng.uniform(dim.low, dim.high)
    return point


def clip_point(template: SearchSpaceTemplate, point: np.ndarray) -> np.ndarray:
    out = np.asarray(point, dtype=float).copy()
    for i, dim in enumerate(template.dims):
        out[i] = min(max(out[i], dim.low), dim.high)
        if dim.kind == "int":
            out[i] = round(out[i])
    return out


def decode(point, template: SearchSpaceTemplate, scenario) -> DecisionVector:
    """Map any in-bounds numeric point to a feasible DecisionVector."""
    point = clip_point(template, point)
    i = 0
    freq, fleet, fares = [], [], []
    start, end = template.window
    for rid in template.route_ids:
        vt = int(point[i]); i += 1
        if vt > 0:
            fleet.append(FleetMixRow(rid, template.vehicle_type_ids[vt - 1]))
        headway = point[i]; i += 1
        if headway >= HEADWAY_MIN_S:
            freq.append(FrequencyRow(rid, start, end, int(round(headway)), 1))
        for lo, hi in FARE_AGE_BINS:
            fare = point[i]; i += 1
            if fare > 0:
                fares.append(FareRow(rid, lo, hi, round(float(fare), 2)))
    incentives = []
    for _ in range(template.n_incentive_slots):
        mode = int(point[i]); i += 1
        age_bin = int(point[i]); i += 1
        income_bin = int(point[i]); i += 1
        amount = point[i]; i += 1
        if mode > 0 and amount > 0:
            alo, ahi = INCENTIVE_AGE_BINS[age_bin]
            ilo, ihi = INCENTIVE_INCOME_BINS[income_bin]
            incentives.append(IncentiveRow(INCENTIVE_MODES[mode - 1], alo, ahi,
                                           ilo, ihi, round(float(amount), 2)))
    return DecisionVector(tuple(freq), tuple(fleet), tuple(fares), tuple(incentives)).canonical()


def encode(d: DecisionVector, template: SearchSpaceTemplate) -> np.ndarray:
    """Inverse of decode for template-conforming decision vectors."""
    d = d.canonical()
    point = np.zeros(template.dimension)
    freq_by_route = {}
    for row in d.frequency:
        if row.route_id in freq_by_route:
            raise TemplateMismatch(f"route {row.route_id}: multiple frequency rows")
        if (row.start_time, row.end_time) != template.window:
            raise TemplateMismatch(
                f"route {row.route_id}: window ({row.start_time}, {row.end_time}) "
                f"differs from template {template.window}")
        freq_by_route[row.route_id] = row
    fleet_by_route = {r.route_id: r for r in d.fleet_mix}
    fares_by_route = {}
    for row in d.fares:
        if (row.age_min, row.age_max) not in FARE_AGE_BINS:
            raise TemplateMismatch(f"fare age range ({row.age_min}, {row.age_max}) "
                                   "is not a template bin")
        if row.fare <= 0:
            raise TemplateMismatch("zero fare rows are not representable")
        fares_by_route.setdefault(row.route_id, {})[(row.age_min, row.age_max)] = row.fare

    unknown = (set(freq_by_route) | set(fleet_by_route) | set(fares_by_route)) - set(template.route_ids)
    if unknown:
        raise TemplateMismatch(f"routes outside the template: {sorted(unknown)}")

    i = 0
    for rid in template.route_ids:
        if rid in fleet_by_route:
            vt_id = fleet_by_route[rid].vehicle_type_id
            if vt_id not in template.vehicle_type_ids:
                raise TemplateMismatch(f"vehicle type {vt_id} not in template catalog")
            point[i] = template.vehicle_type_ids.index(vt_id) + 1
        i += 1
        if rid in freq_by_route:
            point[i] = freq_by_route[rid].headway_secs
        i += 1
        for bin_key in FARE_AGE_BINS:
            point[i] = fares_by_route.get(rid, {}).get(bin_key, 0.0)
            i += 1

    if len(d.incentives) > template.n_incentive_slots:
        raise TemplateMismatch(f"{len(d.incentives)} incentive rows exceed "
                               f"{template.n_incentive_slots} template slots")
    for row in d.incentives:
        if (row.age_min, row.age_max) not in INCENTIVE_AGE_BINS:
            raise TemplateMismatch(f"incentive age range ({row.age_min}, {row.age_max}) "
                                   "is not a template bin")
        if (row.income_min, row.income_max) not in INCENTIVE_INCOME_BINS:
            raise TemplateMismatch(f"incentive income range ({row.income_min}, {row.income_max}) "
                                   "is not a template bin")
        if row.amount <= 0:
            raise TemplateMismatch("zero-amount incentive rows are not representable")
    for k, row in enumerate(d.incentives):
        point[i] = INCENTIVE_MODES.index(row.mode) + 1
        point[i + 1] = INCENTIVE_AGE_BINS.index((row.age_min, row.age_max))
        point[i + 2] = INCENTIVE_INCOME_BINS.index((row.income_min, row.income_max))
        point[i + 3] = row.amount
        i += 4
    return point
