"""Core network model for time-dependent routing.

The road network is a directed graph.  Vertex 0 is the depot, vertices
1..n are customer sites.  Route planning works on an augmented copy of
the graph that adds a terminal duplicate of the depot (where every
route ends) and ``m`` optional pass-through duplicates that let a
vehicle swing by the depot corridor in the middle of a route without
closing it.

Every arc carries three hourly profiles:

* driving speed (mph),
* travel time index (TTI, actual travel time divided by free-flow
  travel time, so always >= 1),
* crash probability for one traversal during that hour, in (0, 1].

All times are expressed in hours.  Profile lookups wrap modulo 24, so
a departure at t = 25.5 reads the 01:00-02:00 entry.  Within one hour
the speed is constant; a traversal that spans an hour boundary
continues at the next hour's speed from the boundary onward.  Because
speed depends on the clock only, never on position, an earlier
departure can never arrive later (first-in-first-out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HOURS_PER_DAY = 24

#: Hard cap on integration steps per traversal; only reachable with
#: absurd distance/speed ratios, guards against runaway loops.
_MAX_TRAVERSAL_STEPS = 2_000_000


class ModelError(ValueError):
    """Invalid model data or an operation on data that cannot satisfy it."""


class InvalidProfileError(ModelError):
    """Hourly profile violates its value constraints."""


class MissingArcError(ModelError):
    """Requested arc is not present in the instance."""


def hour_index(t: float) -> int:
    """Hour-of-day slot containing time ``t`` (hours, wraps modulo 24)."""
    if t < 0 or not math.isfinite(t):
        raise ModelError(f"time must be finite and non-negative, got {t!r}")
    return int(t) % HOURS_PER_DAY


@dataclass(frozen=True)
class TimeProfile:
    """24 hourly values; entry ``h`` applies on [h, h+1) o'clock."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != HOURS_PER_DAY:
            raise InvalidProfileError(
                f"profile needs {HOURS_PER_DAY} values, got {len(self.values)}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise InvalidProfileError("profile values must be finite")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def constant(cls, value: float) -> "TimeProfile":
        return cls((float(value),) * HOURS_PER_DAY)

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def value_at(self, t: float) -> float:
        return self.values[hour_index(t)]


def _check_profile(name: str, profile: TimeProfile, lo: float, hi: float,
                   lo_strict: bool) -> None:
    for h, v in enumerate(profile.values):
        ok = (v > lo if lo_strict else v >= lo) and v <= hi
        if not ok:
            bound = f"({lo}, {hi}]" if lo_strict else f"[{lo}, {hi}]"
            raise InvalidProfileError(
                f"{name} value {v} at hour {h} outside {bound}"
            )


@dataclass(frozen=True)
class Node:
    """A network vertex with demand, service duration and a time window.

    Windows are relative to the dispatch instant of the scenario being
    evaluated: service at the node may start no later than
    ``window_close`` hours after dispatch.  The lower bound is soft, a
    vehicle arriving early simply waits.
    """

    id: int
    x: float
    y: float
    demand: float = 0.0
    service_time: float = 0.0
    window_open: float = 0.0
    window_close: float = math.inf

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ModelError(f"node id must be non-negative, got {self.id}")
        if self.demand < 0:
            raise ModelError(f"node {self.id}: negative demand")
        if self.service_time < 0:
            raise ModelError(f"node {self.id}: negative service time")
        if not 0 <= self.window_open <= self.window_close:
            raise ModelError(
                f"node {self.id}: bad window [{self.window_open}, {self.window_close}]"
            )


@dataclass(frozen=True)
class Arc:
    """Directed road segment with its three hourly profiles."""

    tail: int
    head: int
    distance: float
    speed: TimeProfile
    tti: TimeProfile
    crash: TimeProfile

    def __post_init__(self) -> None:
        if self.tail == self.head:
            raise ModelError(f"self-loop arc at node {self.tail}")
        if not (math.isfinite(self.distance) and self.distance > 0):
            raise ModelError(
                f"arc ({self.tail}, {self.head}): distance must be positive"
            )
        _check_profile(f"arc ({self.tail}, {self.head}) speed", self.speed,
                       0.0, math.inf, lo_strict=True)
        _check_profile(f"arc ({self.tail}, {self.head}) tti", self.tti,
                       1.0, math.inf, lo_strict=False)
        _check_profile(f"arc ({self.tail}, {self.head}) crash", self.crash,
                       0.0, 1.0, lo_strict=True)


@dataclass(frozen=True)
class Fleet:
    """Homogeneous vehicle fleet."""

    count: int
    capacity: float

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ModelError("fleet needs at least one vehicle")
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise ModelError("vehicle capacity must be positive")


@dataclass(frozen=True)
class Instance:
    """A routing problem: nodes, arcs, fleet and planning horizon.

    ``nodes[i].id == i`` always holds; the depot is node 0.  Plain
    instances contain only the depot and customers.  ``augment_depot``
    returns the extended instance whose extra vertices carry ids above
    the customer range; routes are expressed over the extended graph.
    """

    name: str
    nodes: tuple[Node, ...]
    arcs: dict[tuple[int, int], Arc]
    fleet: Fleet
    latest_time: float
    dummy_count: int = 0
    terminal_id: int | None = None
    dummy_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.nodes:
            raise ModelError("instance has no nodes")
        for pos, node in enumerate(self.nodes):
            if node.id != pos:
                raise ModelError(
                    f"node ids must be consecutive from 0, found {node.id} at {pos}"
                )
        depot = self.nodes[0]
        if depot.demand != 0 or depot.service_time != 0:
            raise ModelError("depot must have zero demand and service time")
        if not (math.isfinite(self.latest_time) and self.latest_time > 0):
            raise ModelError("latest planning time must be positive")
        if self.dummy_count < 0:
            raise ModelError("dummy vertex count must be non-negative")
        ids = {n.id for n in self.nodes}
        for (i, j), arc in self.arcs.items():
            if (arc.tail, arc.head) != (i, j):
                raise ModelError(f"arc key ({i}, {j}) mismatches arc endpoints")
            if i not in ids or j not in ids:
                raise ModelError(f"arc ({i}, {j}) references unknown node")

    # -- lookups ---------------------------------------------------------

    @property
    def depot(self) -> Node:
        return self.nodes[0]

    @property
    def is_augmented(self) -> bool:
        return self.terminal_id is not None

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except IndexError:
            raise ModelError(f"no node with id {node_id}") from None

    def customers(self) -> tuple[int, ...]:
        """Ids of demand vertices (excludes depot and its duplicates)."""
        special = {0, self.terminal_id, *self.dummy_ids}
        return tuple(n.id for n in self.nodes if n.id not in special)

    def is_dummy(self, node_id: int) -> bool:
        return node_id in self.dummy_ids

    def arc(self, tail: int, head: int) -> Arc:
        try:
            return self.arcs[(tail, head)]
        except KeyError:
            raise MissingArcError(f"no arc from {tail} to {head}") from None

    def has_arc(self, tail: int, head: int) -> bool:
        return (tail, head) in self.arcs

    def total_demand(self) -> float:
        return sum(self.nodes[c].demand for c in self.customers())


@dataclass(frozen=True)
class Traversal:
    """Breakdown of one arc traversal across hour-of-day slots.

    ``segments`` holds (hour-of-day, miles driven, hours spent) per
    slot crossed, in driving order.  Miles always sum to the arc
    length; hours sum to ``duration``.
    """

    duration: float
    segments: tuple[tuple[int, float, float], ...]

    @property
    def hours(self) -> tuple[int, ...]:
        return tuple(seg[0] for seg in self.segments)


def traverse(arc: Arc, depart: float) -> Traversal:
    """Integrate the arc's speed profile starting at time ``depart``.

    Distance is consumed at the current hour's speed until either the
    arc ends or the clock reaches the next hour boundary, whichever
    comes first; at a boundary the next hour's speed takes over.

    Args:
        arc: arc to traverse.
        depart: departure time in hours since dispatch day midnight,
            must be non-negative (wraps modulo 24 for lookups).

    Returns:
        Traversal with total duration and per-hour segments.
    """
    if depart < 0 or not math.isfinite(depart):
        raise ModelError(f"departure time must be finite and non-negative, got {depart!r}")
    remaining = arc.distance
    t = depart
    segments: list[tuple[int, float, float]] = []
    # Constant profiles never cross a speed change, so the duration is
    # exactly distance/speed; the segments are still split at hour
    # boundaries because risk and congestion profiles may vary there.
    if arc.speed.is_constant:
        speed = arc.speed.values[0]
        duration = remaining / speed
        end = depart + duration
        while t < end:
            seg_end = min(math.floor(t) + 1.0, end)
            dt = seg_end - t
            segments.append((hour_index(t), speed * dt, dt))
            t = seg_end
        return Traversal(duration, tuple(segments))
    for _ in range(_MAX_TRAVERSAL_STEPS):
        slot = hour_index(t)
        speed = arc.speed.values[slot]
        boundary = math.floor(t) + 1.0
        window = boundary - t
        reachable = speed * window
        if reachable >= remaining:
            spent = remaining / speed
            segments.append((slot, remaining, spent))
            t += spent
            return Traversal(t - depart, tuple(segments))
        segments.append((slot, reachable, window))
        remaining -= reachable
        t = boundary
    raise ModelError(
        f"arc ({arc.tail}, {arc.head}): traversal from t={depart} did not converge"
    )


def travel_time(arc: Arc, depart: float) -> float:
    """Hours needed to traverse ``arc`` when departing at ``depart``."""
    return traverse(arc, depart).duration


def _blended(profile: TimeProfile, arc: Arc, depart: float, blend: bool) -> float:
    if not blend or profile.is_constant:
        return profile.value_at(depart)
    trav = traverse(arc, depart)
    if len(trav.segments) == 1:
        return profile.values[trav.segments[0][0]]
    acc = 0.0
    for slot, miles, _ in trav.segments:
        acc += miles * profile.values[slot]
    return acc / arc.distance


def tti_at(arc: Arc, depart: float, blend: bool = True) -> float:
    """Travel time index charged for departing at ``depart``.

    A traversal spanning several hours is charged the distance-weighted
    average of the hourly indices it touches; ``blend=False`` charges
    the departure hour's value for the whole arc instead.
    """
    return _blended(arc.tti, arc, depart, blend)


def crash_at(arc: Arc, depart: float, blend: bool = True) -> float:
    """Crash probability charged for departing at ``depart``.

    Multi-hour traversals blend hourly probabilities by distance share,
    mirroring ``tti_at``.
    """
    return _blended(arc.crash, arc, depart, blend)


def augment_depot(instance: Instance, m: int) -> Instance:
    """Extend the graph with the terminal depot copy and ``m`` pass-through copies.

    The terminal copy receives every arc that pointed at the depot, so
    routes can end on it.  Each pass-through copy inherits the full set
    of depot-incident arcs (in both directions) but carries no demand
    and no service time; copies are not connected to the depot, to the
    terminal or to each other, since those hops would be zero-length
    self-trips.

    Args:
        instance: plain instance (never augmented twice).
        m: number of pass-through duplicates, >= 0.

    Returns:
        New augmented instance; the input is left untouched.
    """
    if instance.is_augmented:
        raise ModelError("instance is already augmented")
    if m < 0:
        raise ModelError("dummy vertex count must be non-negative")
    depot = instance.depot
    next_id = len(instance.nodes)
    terminal = Node(next_id, depot.x, depot.y, 0.0, 0.0,
                    depot.window_open, depot.window_close)
    dummies = tuple(
        Node(next_id + 1 + k, depot.x, depot.y, 0.0, 0.0,
             depot.window_open, depot.window_close)
        for k in range(m)
    )
    nodes = instance.nodes + (terminal,) + dummies
    arcs = dict(instance.arcs)
    into_depot = [arc for (i, j), arc in instance.arcs.items() if j == 0]
    out_of_depot = [arc for (i, j), arc in instance.arcs.items() if i == 0]
    for arc in into_depot:
        arcs[(arc.tail, terminal.id)] = Arc(
            arc.tail, terminal.id, arc.distance, arc.speed, arc.tti, arc.crash)
    for dummy in dummies:
        for arc in out_of_depot:
            arcs[(dummy.id, arc.head)] = Arc(
                dummy.id, arc.head, arc.distance, arc.speed, arc.tti, arc.crash)
        for arc in into_depot:
            arcs[(arc.tail, dummy.id)] = Arc(
                arc.tail, dummy.id, arc.distance, arc.speed, arc.tti, arc.crash)
    return Instance(
        name=instance.name,
        nodes=nodes,
        arcs=arcs,
        fleet=instance.fleet,
        latest_time=instance.latest_time,
        dummy_count=m,
        terminal_id=terminal.id,
        dummy_ids=tuple(d.id for d in dummies),
    )


def ensure_augmented(instance: Instance) -> Instance:
    """Return ``instance`` augmented with its declared dummy count (idempotent)."""
    if instance.is_augmented:
        return instance
    return augment_depot(instance, instance.dummy_count)
