"""Timetable generation: service periods x frequency adjustments -> vehicle runs.

Each departure spawns one run per direction (forward and reverse stop order).
Scheduled stop times assume free-flow travel between stops plus per-stop dwell;
the mobility simulation may realize later times under congestion but never
departs a stop ahead of schedule.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .scenario import Scenario, TransitRoute


@dataclass(frozen=True)
class Run:
    vehicle_id: str
    route_id: str
    direction: int            # 0 forward, 1 reverse
    stop_nodes: tuple
    dwell_secs: tuple
    sched_arrivals: tuple     # scheduled arrival at each stop
    sched_departures: tuple   # scheduled departure from each stop
    vehicle_type_id: str


@dataclass(frozen=True)
class Timetable:
    runs: tuple

    def runs_for_route(self, route_id: str):
        return [r for r in self.runs if r.route_id == route_id]

    def departures(self, route_id: str, direction: int, stop_idx: int):
        """Sorted (scheduled departure, run) pairs at one stop."""
        out = [(r.sched_departures[stop_idx], r) for r in self.runs
               if r.route_id == route_id and r.direction == direction]
        out.sort(key=lambda t: (t[0], t[1].vehicle_id))
        return out


def departure_times(periods, adjustments):
    """Merge default service periods with adjustment windows.

    Adjustment windows override the default schedule wherever they apply;
    the default headway fills whatever is left of the default periods.
    Within a window [s, e] with headway h, departures are s + k*h for all
    k with s + k*h <= e.
    """
    windows = [(a.start_time, a.end_time, a.headway_secs) for a in adjustments]
    windows.sort()
    times = []
    for start, end, headway in windows:
        t = start
        while t <= end:
            times.append(t)
            t += headway
    for period in periods:
        # remaining pieces of the default period not covered by any window
        pieces = [(period.start, period.end)]
        for ws, we, _ in windows:
            next_pieces = []
            for ps, pe in pieces:
                if we <= ps or ws >= pe:
                    next_pieces.append((ps, pe))
                    continue
                if ps < ws:
                    next_pieces.append((ps, ws))
                if we < pe:
                    next_pieces.append((we, pe))
            pieces = next_pieces
        for ps, pe in pieces:
            t = ps
            while t <= pe:
                times.append(t)
                t += period.headway
    return sorted(set(times))


def _scheduled_times(route: TransitRoute, stops, dwell, depart_time, seg_fftts):
    arrivals = [float(depart_time)]
    departures = [float(depart_time) + dwell[0]]
    for i, fftt in enumerate(seg_fftts):
        arr = departures[i] + fftt
        arrivals.append(arr)
        departures.append(arr + dwell[i + 1])
    return tuple(arrivals), tuple(departures)


def build_timetable(scenario: Scenario, decision) -> Timetable:
    """Build the full-day timetable for all routes under a decision vector."""
    freq_by_route = {}
    for row in decision.frequency:
        freq_by_route.setdefault(row.route_id, []).append(row)
    fleet_by_route = {row.route_id: row.vehicle_type_id for row in decision.fleet_mix}

    fftt = _segment_free_flow_times(scenario)
    runs = []
    for rid in sorted(scenario.routes):
        route = scenario.routes[rid]
        vt = fleet_by_route.get(rid, route.vehicle_type_id)
        times = departure_times(route.periods, freq_by_route.get(rid, []))
        for direction in (0, 1):
            if direction == 0:
                stops, dwell = route.stops, route.dwell_secs
            else:
                stops, dwell = route.stops[::-1], route.dwell_secs[::-1]
            seg = fftt[(rid, direction)]
            for k, t in enumerate(times):
                arr, dep = _scheduled_times(route, stops, dwell, t, seg)
                runs.append(Run(f"bus:{rid}:{direction}:{k}", rid, direction,
                                stops, dwell, arr, dep, vt))
    return Timetable(tuple(runs))


def _segment_free_flow_times(scenario: Scenario) -> dict:
    """Free-flow travel time between consecutive stops, per route/direction."""
    adj = scenario.network.subgraph_adjacency("car")
    out = {}
    for rid, route in scenario.routes.items():
        for direction, stops in ((0, route.stops), (1, route.stops[::-1])):
            segs = []
            for a, b in zip(stops, stops[1:]):
                _, tt = shortest_car_path(adj, a, b)
                segs.append(tt)
            out[(rid, direction)] = tuple(segs)
    return out


def shortest_car_path(adj, origin, dest):
    """Dijkstra over free-flow times; returns (list of links, travel time)."""
    if origin == dest:
        return [], 0.0
    dist = {origin: 0.0}
    prev = {}
    heap = [(0.0, origin)]
    while heap:
        du, u = heapq.heappop(heap)
        if u == dest:
            break
        if du > dist.get(u, float("inf")):
            continue
        for v, link in adj[u]:
            alt = du + link.length_m / link.speed_mps
            if alt < dist.get(v, float("inf")):
                dist[v] = alt
                prev[v] = (u, link)
                heapq.heappush(heap, (alt, v))
    if dest not in dist:
        raise ValueError(f"no car path from {origin} to {dest}")
    path = []
    node = dest
    while node != origin:
        node, link = prev[node]
        path.append(link)
    path.reverse()
    return path, dist[dest]
