"""Routing phase: solutions, schedule propagation, feasibility, objectives.

A solution assigns every customer to exactly one vehicle route.  Routes
are stored as the visited vertex ids between the depot and the terminal
copy (both implicit), so ``(3, 1, 5)`` means depot -> 3 -> 1 -> 5 ->
terminal.  Pass-through depot duplicates may appear inside a route.

Propagation turns a bare assignment into a timed solution by walking
each route from the dispatch instant with immediate departures: arrive,
wait out the window's soft lower bound if early, serve, leave.  The
retiming phase may later delay service starts; both produce the same
timed-solution shape.

Five objective readings are defined on a timed solution:

* crash: probability that at least one traversal crashes,
  ``1 - prod(1 - xi)``, accumulated in log space,
* tti: sum of the travel time indices charged per traversal,
* distance: classical total length,
* time: total service plus driving time, waiting excluded,
* weighted: convex mix of crash (rescaled to TTI magnitude) and tti.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import (
    Arc,
    Instance,
    ModelError,
    crash_at,
    travel_time,
    tti_at,
)

#: Small slack used when comparing times that should be exactly equal
#: but may differ by floating point rounding.
TIME_EPS = 1e-9

OBJECTIVES = ("crash", "tti", "weighted", "distance", "time")


class SolutionError(ValueError):
    """Malformed solution for the given instance."""


@dataclass(frozen=True)
class Violation:
    """One broken requirement, reported per vehicle and node."""

    constraint: str
    vehicle: int
    node: int | None
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        where = f"vehicle {self.vehicle}"
        if self.node is not None:
            where += f", node {self.node}"
        return f"[{self.constraint}] {where}: {self.message}"


@dataclass(frozen=True)
class NodeTiming:
    """Times and load recorded at one visited vertex."""

    node: int
    arrival: float
    service_start: float
    departure: float
    load_after: float


@dataclass(frozen=True)
class RouteTiming:
    """Full timing of one vehicle's trip."""

    depot_departure: float
    initial_load: float
    stops: tuple[NodeTiming, ...]
    return_arrival: float


@dataclass(frozen=True)
class RoutingSolution:
    """Visit orders per vehicle, optionally with propagated timings."""

    routes: tuple[tuple[int, ...], ...]
    dispatch: float | None = None
    timings: tuple[RouteTiming, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "routes",
                           tuple(tuple(r) for r in self.routes))

    @property
    def timed(self) -> bool:
        return self.timings is not None

    def visited(self) -> tuple[int, ...]:
        return tuple(n for route in self.routes for n in route)


def _route_arcs(instance: Instance, route: tuple[int, ...]) -> list[Arc]:
    """Arcs driven along a route, depot to terminal."""
    if instance.terminal_id is None:
        raise SolutionError("instance must be augmented before evaluation")
    if not route:
        return []
    path = [0, *route, instance.terminal_id]
    return [instance.arc(path[i], path[i + 1]) for i in range(len(path) - 1)]


def propagate_schedule(solution: RoutingSolution | tuple[tuple[int, ...], ...],
                       instance: Instance, dispatch: float) -> RoutingSolution:
    """Time a solution by walking every route with immediate departures.

    Args:
        solution: bare routes (or a solution whose routes are reused).
        instance: augmented instance.
        dispatch: hour-of-day at which all vehicles leave the depot;
            node windows are interpreted relative to this instant.

    Returns:
        The same routes with timings attached.

    Raises:
        MissingArcError: a route uses an arc absent from the graph.
        SolutionError: instance not augmented, or dispatch negative.
    """
    routes = solution.routes if isinstance(solution, RoutingSolution) \
        else tuple(tuple(r) for r in solution)
    if dispatch < 0 or not math.isfinite(dispatch):
        raise SolutionError(f"dispatch must be a non-negative hour, got {dispatch!r}")
    timings = []
    for route in routes:
        arcs = _route_arcs(instance, route)
        if not route:
            timings.append(RouteTiming(dispatch, 0.0, (), dispatch))
            continue
        load = sum(instance.node(n).demand for n in route)
        t = dispatch
        stops = []
        for arc, node_id in zip(arcs[:-1], route):
            node = instance.node(node_id)
            arrival = t + travel_time(arc, t)
            start = max(arrival, dispatch + node.window_open)
            depart = start + node.service_time
            load -= node.demand
            stops.append(NodeTiming(node_id, arrival, start, depart, load))
            t = depart
        return_arrival = t + travel_time(arcs[-1], t)
        timings.append(RouteTiming(dispatch, sum(instance.node(n).demand
                                                 for n in route),
                                   tuple(stops), return_arrival))
    return RoutingSolution(routes, dispatch, tuple(timings))


def check_feasibility(solution: RoutingSolution,
                      instance: Instance) -> tuple[Violation, ...]:
    """All requirement violations of a timed solution (empty = feasible).

    Checked: every customer served exactly once, pass-through dummies
    used at most once, fleet size, vehicle capacity, hard upper time
    windows, planning horizon on the return leg, the guarantee that a
    vehicle can still reach the depot from every departure, and
    non-negativity of times and loads.
    """
    if not solution.timed:
        raise SolutionError("feasibility needs a timed solution, propagate first")
    if instance.terminal_id is None:
        raise SolutionError("instance must be augmented before evaluation")
    dispatch = solution.dispatch
    horizon = dispatch + instance.latest_time
    violations: list[Violation] = []

    counts: dict[int, int] = {}
    for route in solution.routes:
        for n in route:
            counts[n] = counts.get(n, 0) + 1
    for c in instance.customers():
        seen = counts.get(c, 0)
        if seen != 1:
            violations.append(Violation(
                "visit-count", -1, c, f"customer visited {seen} times"))
    for n, seen in sorted(counts.items()):
        if n == 0 or n == instance.terminal_id:
            violations.append(Violation(
                "route-shape", -1, n, "depot copies may not appear inside a route"))
        elif instance.is_dummy(n) and seen > 1:
            violations.append(Violation(
                "visit-count", -1, n, f"pass-through vertex visited {seen} times"))
        elif not instance.is_dummy(n) and n not in instance.customers():
            violations.append(Violation(
                "visit-count", -1, n, "unknown vertex in route"))

    used = sum(1 for r in solution.routes if r)
    if used > instance.fleet.count:
        violations.append(Violation(
            "fleet-size", -1, None,
            f"{used} loaded vehicles exceed fleet of {instance.fleet.count}"))

    for k, (route, timing) in enumerate(zip(solution.routes, solution.timings)):
        if not route:
            continue
        if timing.initial_load > instance.fleet.capacity + TIME_EPS:
            violations.append(Violation(
                "capacity", k, None,
                f"load {timing.initial_load} exceeds capacity "
                f"{instance.fleet.capacity}"))
        for stop in timing.stops:
            node = instance.node(stop.node)
            if stop.service_start > dispatch + node.window_close + TIME_EPS:
                violations.append(Violation(
                    "window", k, stop.node,
                    f"service at {stop.service_start:.6f} after window close "
                    f"{dispatch + node.window_close:.6f}"))
            if stop.service_start < dispatch + node.window_open - TIME_EPS:
                violations.append(Violation(
                    "window", k, stop.node,
                    "service before window opens"))
            if stop.arrival < dispatch - TIME_EPS or stop.load_after < -TIME_EPS:
                violations.append(Violation(
                    "non-negative", k, stop.node,
                    "negative time or load along the route"))
            # From every departure the vehicle must still be able to
            # reach the depot within the horizon.
            if instance.is_dummy(stop.node):
                back = 0.0  # already at the depot location
            else:
                back = travel_time(instance.arc(stop.node, instance.terminal_id),
                                   stop.departure)
            if stop.departure + back > horizon + TIME_EPS:
                violations.append(Violation(
                    "horizon-return", k, stop.node,
                    f"cannot regain depot by hour {horizon:.6f}"))
        if timing.return_arrival > horizon + TIME_EPS:
            violations.append(Violation(
                "horizon", k, None,
                f"returns at {timing.return_arrival:.6f} past {horizon:.6f}"))
    return tuple(violations)


def is_feasible(solution: RoutingSolution, instance: Instance) -> bool:
    return not check_feasibility(solution, instance)


# -- objectives ----------------------------------------------------------


def _require_timed(solution: RoutingSolution) -> None:
    if not solution.timed:
        raise SolutionError("objective needs a timed solution, propagate first")


def _arc_departures(solution: RoutingSolution, instance: Instance):
    """Yield (arc, departure time, tail service time) over all driven arcs."""
    for route, timing in zip(solution.routes, solution.timings):
        if not route:
            continue
        path = [0, *route, instance.terminal_id]
        departures = [timing.depot_departure] + [s.departure for s in timing.stops]
        services = [0.0] + [instance.node(n).service_time for n in route]
        for i in range(len(path) - 1):
            yield instance.arc(path[i], path[i + 1]), departures[i], services[i]


def crash_objective(solution: RoutingSolution, instance: Instance) -> float:
    """Probability that at least one traversal ends in a crash.

    1 - prod(1 - xi) over all driven arcs, with xi evaluated at each
    actual departure.  The product is accumulated as a sum of
    log(1 - xi) terms, so hundreds of tiny probabilities do not
    underflow.
    """
    _require_timed(solution)
    log_survival = 0.0
    for arc, depart, _ in _arc_departures(solution, instance):
        xi = crash_at(arc, depart)
        if xi >= 1.0:
            return 1.0
        log_survival += math.log1p(-xi)
    return -math.expm1(log_survival)


def tti_objective(solution: RoutingSolution, instance: Instance) -> float:
    """Total travel time index charged over all traversals."""
    _require_timed(solution)
    return sum(tti_at(arc, depart)
               for arc, depart, _ in _arc_departures(solution, instance))


def distance_objective(solution: RoutingSolution, instance: Instance) -> float:
    """Total driven distance; independent of the schedule."""
    total = 0.0
    for route in solution.routes:
        for arc in _route_arcs(instance, route):
            total += arc.distance
    return total


def time_objective(solution: RoutingSolution, instance: Instance) -> float:
    """Total service plus driving time in hours.

    Waiting (early arrivals and deliberate delays) is not charged; the
    driving term uses each arc's actual departure instant.
    """
    _require_timed(solution)
    return sum(service + travel_time(arc, depart)
               for arc, depart, service in _arc_departures(solution, instance))


def default_crash_scale(instance: Instance) -> float:
    """Rescaling that brings crash terms to TTI magnitude.

    Mean hourly TTI over all arcs divided by mean hourly crash
    probability, so a unit of rescaled crash weighs about as much as a
    unit of TTI in the weighted objective.
    """
    tti_sum = 0.0
    crash_sum = 0.0
    cells = 0
    for arc in instance.arcs.values():
        tti_sum += sum(arc.tti.values)
        crash_sum += sum(arc.crash.values)
        cells += len(arc.tti.values)
    if cells == 0 or crash_sum == 0:
        return 1.0
    return (tti_sum / cells) / (crash_sum / cells)


@dataclass(frozen=True)
class ObjectiveWeights:
    """Convex weights of the crash/TTI mix plus the crash rescale factor.

    ``crash_scale=None`` means "calibrate from the instance" via
    ``default_crash_scale``.
    """

    w_crash: float = 0.5
    w_tti: float = 0.5
    crash_scale: float | None = None

    def __post_init__(self) -> None:
        if self.w_crash < 0 or self.w_tti < 0:
            raise SolutionError("objective weights must be non-negative")
        if abs(self.w_crash + self.w_tti - 1.0) > 1e-9:
            raise SolutionError("objective weights must sum to 1")
        if self.crash_scale is not None and not self.crash_scale > 0:
            raise SolutionError("crash scale must be positive")

    def resolved(self, instance: Instance) -> "ObjectiveWeights":
        if self.crash_scale is not None:
            return self
        return replace(self, crash_scale=default_crash_scale(instance))


def weighted_objective(solution: RoutingSolution, instance: Instance,
                       weights: ObjectiveWeights) -> float:
    """w_crash * scale * crash + w_tti * tti on a timed solution."""
    w = weights.resolved(instance)
    return (w.w_crash * w.crash_scale * crash_objective(solution, instance)
            + w.w_tti * tti_objective(solution, instance))


def objective_value(name: str, solution: RoutingSolution, instance: Instance,
                    weights: ObjectiveWeights | None = None) -> float:
    """Evaluate one of the five named objectives on a timed solution."""
    if name == "crash":
        return crash_objective(solution, instance)
    if name == "tti":
        return tti_objective(solution, instance)
    if name == "distance":
        return distance_objective(solution, instance)
    if name == "time":
        return time_objective(solution, instance)
    if name == "weighted":
        return weighted_objective(solution, instance,
                                  weights or ObjectiveWeights())
    raise SolutionError(f"unknown objective {name!r}, expected one of {OBJECTIVES}")


def solution_report(solution: RoutingSolution, instance: Instance,
                    weights: ObjectiveWeights | None = None) -> str:
    """Human-readable per-vehicle schedule table plus all objective values."""
    _require_timed(solution)
    w = (weights or ObjectiveWeights()).resolved(instance)
    lines = []
    for k, (route, timing) in enumerate(zip(solution.routes, solution.timings)):
        if not route:
            continue
        seq = "-".join(str(n) for n in (0, *route, instance.terminal_id))
        lines.append(f"vehicle {k}: {seq}  depart {timing.depot_departure:.4f}  "
                     f"load {timing.initial_load:g}")
        for stop in timing.stops:
            tag = " (depot pass)" if instance.is_dummy(stop.node) else ""
            lines.append(
                f"  node {stop.node}{tag}: arrive {stop.arrival:.4f}  "
                f"serve {stop.service_start:.4f}  leave {stop.departure:.4f}")
        lines.append(f"  return {timing.return_arrival:.4f}")
    lines.append(
        "objectives: "
        f"crash {crash_objective(solution, instance):.6f}  "
        f"tti {tti_objective(solution, instance):.6f}  "
        f"distance {distance_objective(solution, instance):.6f}  "
        f"time {time_objective(solution, instance):.6f}  "
        f"weighted {weighted_objective(solution, instance, w):.6f}")
    return "\n".join(lines)
