"""Retiming phase: optimal service-start schedule for a fixed route.

Once a route's visit order is settled, the only remaining freedom is
when to serve each stop within its window.  Delaying a departure past a
peak hour can lower crash and congestion exposure, so the route is
re-timed on a time-expanded graph: each stop gets up to ``m`` candidate
service-start times spread evenly over its feasible interval, a state
``p`` at the next stop is linked from state ``s`` when leaving right
after service at ``s`` reaches the stop no later than ``p``, and a
shortest path from the fixed dispatch state to the terminal gives the
cheapest schedule.  Slack on a link is spent waiting at the upstream
stop (equivalently: driving below the speed limit); cost is always
charged at the actual departure instant.

Costs are additive per driven arc.  Crash probabilities enter through
their log-survival surrogate ``-ln(1 - xi)``, whose sum orders
schedules exactly like the route's overall crash probability; the
probability-space value is recovered by evaluating the re-timed
solution with the routing-phase objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Instance, crash_at, travel_time, tti_at
from .phase1 import (
    NodeTiming,
    ObjectiveWeights,
    RouteTiming,
    RoutingSolution,
    SolutionError,
    TIME_EPS,
)


class ScheduleError(ValueError):
    """Invalid retiming request."""


class ScheduleInfeasibleError(ScheduleError):
    """The route admits no schedule inside its windows and horizon."""


def leg_cost(instance: Instance, tail: int, head: int, depart: float,
             weights: ObjectiveWeights | None, objective: str) -> float:
    """Additive cost of driving one arc departing at ``depart``.

    crash uses the log-survival surrogate; weighted mixes the rescaled
    surrogate with TTI; time charges the tail's service plus driving
    hours; distance is schedule-independent.
    """
    arc = instance.arc(tail, head)
    if objective == "distance":
        return arc.distance
    if objective == "time":
        return instance.node(tail).service_time + travel_time(arc, depart)
    if objective == "tti":
        return tti_at(arc, depart)
    xi = crash_at(arc, depart)
    surrogate = math.inf if xi >= 1.0 else -math.log1p(-xi)
    if objective == "crash":
        return surrogate
    if objective == "weighted":
        w = weights if weights is not None else ObjectiveWeights()
        if w.crash_scale is None:
            w = w.resolved(instance)
        return w.w_crash * w.crash_scale * surrogate + w.w_tti * tti_at(arc, depart)
    raise ScheduleError(f"unknown objective {objective!r}")


@dataclass(frozen=True)
class ScheduleGraph:
    """Time-expanded graph of one route.

    ``times[p]`` are the sorted candidate service-start instants of
    position ``p`` (position 0 is the depot with the single dispatch
    instant).  ``edges[p]`` links position ``p-1`` states to position
    ``p`` states as (prev_index, cur_index, cost) triples; the terminal
    is a single implicit sink reached via ``sink_edges`` =
    (prev_index, cost, arrival) triples.
    """

    route: tuple[int, ...]
    node_ids: tuple[int, ...]
    dispatch: float
    m: int
    objective: str
    times: tuple[tuple[float, ...], ...]
    edges: tuple[tuple[tuple[int, int, float], ...], ...]
    sink_edges: tuple[tuple[int, float, float], ...]

    def path_count_bound(self) -> int:
        """Upper bound on source-to-sink paths: product of grid sizes."""
        n = 1
        for ts in self.times[1:]:
            n *= len(ts)
        return n

    def edge_cost(self, position: int, prev_index: int, cur_index: int) -> float:
        """Cost of one link, infinite when the pair is not connected."""
        for i, j, cost in self.edges[position]:
            if i == prev_index and j == cur_index:
                return cost
        return math.inf


def arc_cost(graph: ScheduleGraph, state_s: tuple[int, int],
             state_p: tuple[int, int], instance: Instance,
             weights: ObjectiveWeights | None = None) -> float:
    """Cost between two states given as (position, time_index) pairs.

    Returns the stored link cost, or infinity for a time-inconsistent
    (unlinked) pair.  Adjacent positions only.
    """
    (pos_s, idx_s), (pos_p, idx_p) = state_s, state_p
    if pos_p != pos_s + 1 or not 0 < pos_p < len(graph.times):
        return math.inf
    return graph.edge_cost(pos_p, idx_s, idx_p)


def _grid(lo: float, hi: float, m: int) -> tuple[float, ...]:
    if m == 1 or hi <= lo:
        return (lo,)
    step = (hi - lo) / (m - 1)
    pts = [lo + k * step for k in range(m)]
    pts[-1] = hi
    out: list[float] = []
    for p in pts:
        if not out or p > out[-1]:
            out.append(p)
    return tuple(out)


def build_schedule_graph(route: tuple[int, ...], instance: Instance,
                         dispatch: float, m: int,
                         weights: ObjectiveWeights | None = None,
                         objective: str = "weighted") -> ScheduleGraph:
    """Discretise a route's schedule choices into a layered DAG.

    Args:
        route: visited vertex ids, depot and terminal implicit.
        instance: augmented instance.
        dispatch: fixed depot departure instant (hour of day).
        m: candidate service starts per stop, >= 1.
        weights: crash/TTI mix used when ``objective='weighted'``.
        objective: cost measure, one of crash/tti/weighted/distance/time.

    Raises:
        ScheduleInfeasibleError: some stop's feasible interval is empty.
    """
    if m < 1:
        raise ScheduleError(f"need at least one candidate time per stop, got {m}")
    if instance.terminal_id is None:
        raise SolutionError("instance must be augmented before scheduling")
    if not route:
        raise ScheduleError("cannot schedule an empty route")
    if weights is not None and weights.crash_scale is None:
        weights = weights.resolved(instance)
    node_ids = (0, *route, instance.terminal_id)
    horizon = dispatch + instance.latest_time

    # Immediate-departure propagation pins each stop's earliest start.
    earliest: list[float] = []
    t = dispatch
    prev = 0
    for node_id in route:
        node = instance.node(node_id)
        arrival = t + travel_time(instance.arc(prev, node_id), t)
        start = max(arrival, dispatch + node.window_open)
        earliest.append(start)
        t = start + node.service_time
        prev = node_id

    times: list[tuple[float, ...]] = [(dispatch,)]
    for node_id, lo in zip(route, earliest):
        node = instance.node(node_id)
        hi = dispatch + node.window_close
        if lo > hi + TIME_EPS:
            raise ScheduleInfeasibleError(
                f"stop {node_id}: earliest start {lo:.6f} after window close {hi:.6f}")
        grid = _grid(lo, min(hi, horizon), m)
        # Keep only starts from which the depot stays reachable in time.
        kept = []
        for start in grid:
            depart = start + node.service_time
            if instance.is_dummy(node_id):
                back = 0.0
            else:
                back = travel_time(instance.arc(node_id, instance.terminal_id),
                                   depart)
            if depart + back <= horizon + TIME_EPS:
                kept.append(start)
        if not kept:
            raise ScheduleInfeasibleError(
                f"stop {node_id}: no start allows regaining the depot by "
                f"hour {horizon:.6f}")
        times.append(tuple(kept))

    edges: list[tuple[tuple[int, int, float], ...]] = [()]
    for pos in range(1, len(route) + 1):
        tail, head = node_ids[pos - 1], node_ids[pos]
        service = instance.node(tail).service_time
        layer = []
        for i, start in enumerate(times[pos - 1]):
            depart = start + service
            arrive = depart + travel_time(instance.arc(tail, head), depart)
            cost = leg_cost(instance, tail, head, depart, weights, objective)
            for j, nxt in enumerate(times[pos]):
                if nxt >= arrive - TIME_EPS:
                    layer.append((i, j, cost))
        edges.append(tuple(layer))

    sink = []
    last = route[-1]
    service = instance.node(last).service_time
    for i, start in enumerate(times[-1]):
        depart = start + service
        arrive = depart + travel_time(instance.arc(last, instance.terminal_id),
                                      depart)
        if arrive <= horizon + TIME_EPS:
            cost = leg_cost(instance, last, instance.terminal_id, depart,
                            weights, objective)
            sink.append((i, cost, arrive))
    if not sink:
        raise ScheduleInfeasibleError(
            f"no schedule returns to the depot by hour {horizon:.6f}")

    return ScheduleGraph(tuple(route), node_ids, dispatch, m, objective,
                         tuple(times), tuple(edges), tuple(sink))


@dataclass(frozen=True)
class Schedule:
    """Optimal re-timing of one route."""

    route: tuple[int, ...]
    dispatch: float
    m: int
    objective: str
    service_starts: tuple[float, ...]
    arrivals: tuple[float, ...]
    departures: tuple[float, ...]
    return_arrival: float
    implied_speeds: tuple[float, ...]
    total_cost: float

    def waiting(self) -> float:
        """Total hours spent waiting beyond the immediate schedule."""
        return sum(s - a for s, a in zip(self.service_starts, self.arrivals))


def optimize_schedule(route: tuple[int, ...], instance: Instance,
                      dispatch: float, m: int,
                      weights: ObjectiveWeights | None = None,
                      objective: str = "weighted") -> Schedule:
    """Cheapest schedule of a route by shortest path over the state graph.

    Deterministic: ties between equal-cost schedules resolve toward
    earlier service starts, settled from the final stop backwards.
    """
    graph = build_schedule_graph(route, instance, dispatch, m, weights, objective)
    n_pos = len(graph.times)
    best: list[list[float]] = [[math.inf] * len(ts) for ts in graph.times]
    pred: list[list[int]] = [[-1] * len(ts) for ts in graph.times]
    best[0][0] = 0.0
    for pos in range(1, n_pos):
        for i, j, cost in graph.edges[pos]:
            cand = best[pos - 1][i] + cost
            if cand < best[pos][j]:
                best[pos][j] = cand
                pred[pos][j] = i
    sink_cost = math.inf
    sink_pred = -1
    sink_arrival = math.nan
    for i, cost, arrive in graph.sink_edges:
        cand = best[-1][i] + cost
        if cand < sink_cost:
            sink_cost = cand
            sink_pred = i
            sink_arrival = arrive
    if sink_pred < 0:
        raise ScheduleInfeasibleError("terminal unreachable in schedule graph")

    indices = [0] * n_pos
    indices[-1] = sink_pred
    for pos in range(n_pos - 1, 0, -1):
        indices[pos - 1] = pred[pos][indices[pos]]
    starts = tuple(graph.times[pos][indices[pos]] for pos in range(1, n_pos))

    # Reconstruct physical arrivals and implied average speeds.
    arrivals = []
    departures = []
    speeds = []
    t = dispatch
    prev = 0
    for node_id, start in zip(route, starts):
        node = instance.node(node_id)
        arc = instance.arc(prev, node_id)
        depart_prev = t
        arrive = depart_prev + travel_time(arc, depart_prev)
        arrivals.append(arrive)
        # Waiting is booked at the upstream vertex: the leg may be
        # driven slower so the vehicle lands exactly on its start time.
        speeds.append(arc.distance / max(start - depart_prev, 1e-12)
                      if start > depart_prev else arc.distance)
        departures.append(start + node.service_time)
        t = start + node.service_time
        prev = node_id
    final_arc = instance.arc(route[-1], instance.terminal_id)
    speeds.append(final_arc.distance / max(sink_arrival - t, 1e-12))

    return Schedule(tuple(route), dispatch, m, objective, starts,
                    tuple(arrivals), tuple(departures), sink_arrival,
                    tuple(speeds), sink_cost)


def schedule_to_timing(schedule: Schedule, instance: Instance) -> RouteTiming:
    """Convert a schedule into the routing phase's timing record."""
    load = sum(instance.node(n).demand for n in schedule.route)
    initial = load
    stops = []
    for node_id, arrive, start, depart in zip(
            schedule.route, schedule.arrivals, schedule.service_starts,
            schedule.departures):
        load -= instance.node(node_id).demand
        stops.append(NodeTiming(node_id, arrive, start, depart, load))
    return RouteTiming(schedule.dispatch, initial, tuple(stops),
                       schedule.return_arrival)


def schedule_solution(solution: RoutingSolution, instance: Instance, m: int,
                      weights: ObjectiveWeights | None = None,
                      objective: str = "weighted",
                      ) -> tuple[RoutingSolution, tuple[Schedule, ...]]:
    """Re-time every route of a solution; returns the timed solution and
    the per-route schedules (empty routes keep their trivial timing)."""
    if solution.dispatch is None:
        raise SolutionError("schedule needs a dispatched solution")
    timings = []
    schedules = []
    for route in solution.routes:
        if not route:
            timings.append(RouteTiming(solution.dispatch, 0.0, (),
                                       solution.dispatch))
            continue
        sched = optimize_schedule(route, instance, solution.dispatch, m,
                                  weights, objective)
        schedules.append(sched)
        timings.append(schedule_to_timing(sched, instance))
    return (RoutingSolution(solution.routes, solution.dispatch, tuple(timings)),
            tuple(schedules))
