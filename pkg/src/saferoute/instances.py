"""Instance acquisition: benchmark parsing, synthetic generation, loading.

Four sources of routing problems are supported:

* classic benchmark files in the Solomon layout (constant unit speed,
  so travel time equals Euclidean distance),
* a native text format that round-trips every field bit-exactly,
* synthetic generators that lay customers around a depot and give every
  arc noisy three-level step profiles for speed, congestion and risk,
* the bundled four-node delivery case packaged as CSV files.

A day of operations is replayed as 24 scenarios, one per dispatch hour.
"""

from __future__ import annotations

import csv
import math
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    HOURS_PER_DAY,
    Arc,
    Fleet,
    Instance,
    ModelError,
    Node,
    TimeProfile,
    ensure_augmented,
)

PROFILE_KINDS = ("speed", "tti", "crash")

MIN_SPEED = 1e-3
MIN_CRASH = 1e-12

DEFAULT_INTERVALS = ((0, 6), (6, 9), (9, 15), (15, 19), (19, 24))
DEFAULT_ASSIGNMENT = (0, 2, 1, 2, 0)  # night, AM peak, midday, PM peak, evening

GENERATED_FLEETS = {10: 2, 25: 3, 50: 5, 80: 12}


class InstanceError(ValueError):
    """Unusable instance input: bad file, bad spec, missing data."""


class ProfileSpecError(InstanceError):
    """Step-function specification violates its bounds."""


@dataclass(frozen=True)
class StepFunctionSpec:
    """Three-level step function over five day intervals, plus noise.

    ``levels`` are the plain values; ``assignment`` picks which level
    each interval uses (the default gives the middle intervals the
    midday level and both rush windows the third level).  Each hourly
    value is drawn once as level * (1 + U(-a, +a)) with
    a = ``noise_amplitude``.
    """

    levels: tuple[float, float, float]
    intervals: tuple[tuple[int, int], ...] = DEFAULT_INTERVALS
    noise_amplitude: float = 0.15
    seed: int = 0
    assignment: tuple[int, ...] = DEFAULT_ASSIGNMENT

    def __post_init__(self) -> None:
        if len(self.levels) != 3 or not all(math.isfinite(v) for v in self.levels):
            raise ProfileSpecError(f"need 3 finite levels, got {self.levels!r}")
        if len(self.intervals) != 5:
            raise ProfileSpecError(f"need 5 intervals, got {len(self.intervals)}")
        cursor = 0
        for lo, hi in self.intervals:
            if lo != cursor or hi <= lo:
                raise ProfileSpecError(
                    f"intervals must partition [0,{HOURS_PER_DAY}) in order, "
                    f"got {self.intervals!r}")
            cursor = hi
        if cursor != HOURS_PER_DAY:
            raise ProfileSpecError(f"intervals end at {cursor}, expected {HOURS_PER_DAY}")
        if len(self.assignment) != len(self.intervals):
            raise ProfileSpecError("one level index per interval required")
        if any(not 0 <= k < len(self.levels) for k in self.assignment):
            raise ProfileSpecError(f"level indices out of range: {self.assignment!r}")
        if not (math.isfinite(self.noise_amplitude) and self.noise_amplitude >= 0):
            raise ProfileSpecError(
                f"noise amplitude must be >= 0, got {self.noise_amplitude!r}")

    def base_values(self) -> tuple[float, ...]:
        """The noise-free hourly values."""
        out = [0.0] * HOURS_PER_DAY
        for (lo, hi), idx in zip(self.intervals, self.assignment):
            for h in range(lo, hi):
                out[h] = self.levels[idx]
        return tuple(out)

    def peak_level(self) -> float:
        """Level used by the second interval (the morning rush)."""
        return self.levels[self.assignment[1]]

    def offpeak_level(self) -> float:
        """Level used by the first interval (night)."""
        return self.levels[self.assignment[0]]


def _clip(kind: str, value: float) -> float:
    if kind == "crash":
        return min(1.0, max(value, MIN_CRASH))
    if kind == "tti":
        return max(value, 1.0)
    return max(value, MIN_SPEED)


def _check_levels(spec: StepFunctionSpec, kind: str) -> None:
    lo_ok = {"crash": lambda v: 0 < v <= 1,
             "tti": lambda v: v >= 1,
             "speed": lambda v: v > 0}[kind]
    for v in spec.levels:
        if not lo_ok(v):
            raise ProfileSpecError(f"{kind} level {v!r} out of bounds")
    # Rush hours must be the adverse side: slower, riskier, more congested.
    if kind == "speed":
        if spec.peak_level() > spec.offpeak_level():
            raise ProfileSpecError("speed must drop during rush hours")
    elif spec.peak_level() < spec.offpeak_level():
        raise ProfileSpecError(f"{kind} must rise during rush hours")


def generate_profiles(spec: StepFunctionSpec, kind: str) -> TimeProfile:
    """Noisy hourly profile from a step function.

    Deterministic for a given spec (the seed travels inside it).  Values
    are clipped to the kind's domain: crash stays in (0, 1], TTI never
    dips below 1, speed keeps a positive floor.
    """
    if kind not in PROFILE_KINDS:
        raise ProfileSpecError(f"unknown profile kind {kind!r}, expected one of {PROFILE_KINDS}")
    _check_levels(spec, kind)
    rng = random.Random(spec.seed)
    a = spec.noise_amplitude
    values = tuple(
        _clip(kind, base * (1.0 + rng.uniform(-a, a)))
        for base in spec.base_values()
    )
    return TimeProfile(values)


@dataclass(frozen=True)
class Scenario:
    """One dispatch hour of the replayed day."""

    start_hour: int
    instance: Instance

    def __post_init__(self) -> None:
        if not 0 <= self.start_hour < HOURS_PER_DAY:
            raise InstanceError(f"start hour must be in 0..23, got {self.start_hour}")

    @property
    def dispatch(self) -> float:
        return float(self.start_hour)


def build_scenarios(instance: Instance) -> tuple[Scenario, ...]:
    """One scenario per hour of the day, midnight first."""
    return tuple(Scenario(h, instance) for h in range(HOURS_PER_DAY))


# --------------------------------------------------------------------------
# Solomon benchmark layout


def _tokens(line: str) -> list[str]:
    return line.split()


def parse_solomon(text: str) -> Instance:
    """Parse the classic benchmark layout into an instance.

    The layout is: a name line, a VEHICLE section with a NUMBER/CAPACITY
    pair, and a CUSTOMER table whose rows carry id, x, y, demand, ready
    time, due date and service time.  Row 0 is the depot.  Distances
    are Euclidean and speed is a constant 1, so travel times equal
    distances and time units match the file's window units.  Congestion
    is neutral (TTI 1) and each arc carries a tiny constant crash
    probability so risk objectives stay well defined.

    Raises:
        InstanceError: structural problems, naming the offending line.
    """
    lines = text.splitlines()
    name = ""
    vehicle_at = customer_at = -1
    for i, line in enumerate(lines):
        word = line.strip()
        if not word:
            continue
        if not name:
            name = word
        up = word.upper()
        if up == "VEHICLE" and vehicle_at < 0:
            vehicle_at = i
        elif up.startswith("CUSTOMER") and customer_at < 0:
            customer_at = i
    if not name:
        raise InstanceError("empty instance file")
    if vehicle_at < 0:
        raise InstanceError("missing VEHICLE section")
    if customer_at < 0:
        raise InstanceError("missing CUSTOMER section")

    fleet = None
    for i in range(vehicle_at + 1, customer_at):
        toks = _tokens(lines[i])
        if not toks or not toks[0].lstrip("-").isdigit():
            continue
        if len(toks) != 2:
            raise InstanceError(f"line {i + 1}: expected 'count capacity', got {lines[i]!r}")
        try:
            fleet = Fleet(int(toks[0]), float(toks[1]))
        except (ValueError, ModelError) as exc:
            raise InstanceError(f"line {i + 1}: bad fleet numbers ({exc})") from exc
        break
    if fleet is None:
        raise InstanceError("VEHICLE section has no count/capacity row")

    rows: list[tuple] = []
    seen: set[int] = set()
    for i in range(customer_at + 1, len(lines)):
        toks = _tokens(lines[i])
        if not toks:
            continue
        if not toks[0].lstrip("-").isdigit():
            continue  # column header
        if len(toks) != 7:
            raise InstanceError(
                f"line {i + 1}: customer row needs 7 fields, got {len(toks)}")
        try:
            cid = int(toks[0])
            vals = tuple(float(t) for t in toks[1:])
        except ValueError as exc:
            raise InstanceError(f"line {i + 1}: non-numeric field ({exc})") from exc
        if cid in seen:
            raise InstanceError(f"line {i + 1}: duplicate customer id {cid}")
        seen.add(cid)
        rows.append((cid, *vals))
    if len(rows) < 2:
        raise InstanceError("no customer rows found")

    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise InstanceError("customer ids must be consecutive from 0")
    depot_due = rows[0][5]
    nodes = tuple(
        Node(cid, x, y, demand, service, ready, due)
        for cid, x, y, demand, ready, due, service in rows
    )
    unit = TimeProfile.constant(1.0)
    neutral_tti = TimeProfile.constant(1.0)
    crash = TimeProfile.constant(1e-4)
    arcs = {}
    for a in nodes:
        for b in nodes:
            if a.id == b.id:
                continue
            dist = math.hypot(a.x - b.x, a.y - b.y) or 1e-9
            arcs[(a.id, b.id)] = Arc(a.id, b.id, dist, unit, neutral_tti, crash)
    return Instance(name, nodes, arcs, fleet, depot_due, dummy_count=2)


# --------------------------------------------------------------------------
# Native text format


FORMAT_HEADER = "saferoute-instance v1"


def _profile_token(profile: TimeProfile) -> str:
    if profile.is_constant:
        return repr(profile.values[0])
    return ",".join(repr(v) for v in profile.values)


def _parse_profile_token(token: str, where: str) -> TimeProfile:
    parts = token.split(",")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise InstanceError(f"{where}: bad profile value ({exc})") from exc
    if len(values) == 1:
        return TimeProfile.constant(values[0])
    if len(values) != HOURS_PER_DAY:
        raise InstanceError(
            f"{where}: profile needs 1 or {HOURS_PER_DAY} values, got {len(values)}")
    return TimeProfile(tuple(values))


def serialize_instance(instance: Instance) -> str:
    """Write an instance in the native text format.

    Floats are emitted with ``repr`` so parsing the output reproduces
    every value bit-exactly.  Augmented instances are rejected: the
    terminal and pass-through vertices are derived data.
    """
    if instance.is_augmented:
        raise InstanceError("serialize the plain instance, not the augmented one")
    out = [FORMAT_HEADER]
    out.append(f"name {instance.name}")
    out.append(f"latest {instance.latest_time!r}")
    out.append(f"fleet {instance.fleet.count} {instance.fleet.capacity!r}")
    out.append(f"dummies {instance.dummy_count}")
    out.append(f"nodes {len(instance.nodes)}")
    for n in instance.nodes:
        out.append(f"{n.id} {n.x!r} {n.y!r} {n.demand!r} {n.service_time!r} "
                   f"{n.window_open!r} {n.window_close!r}")
    out.append(f"arcs {len(instance.arcs)}")
    for (i, j) in sorted(instance.arcs):
        arc = instance.arcs[(i, j)]
        out.append(f"{i} {j} {arc.distance!r} {_profile_token(arc.speed)} "
                   f"{_profile_token(arc.tti)} {_profile_token(arc.crash)}")
    return "\n".join(out) + "\n"


def parse_instance(text: str) -> Instance:
    """Read the native text format back into an instance."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise InstanceError(f"first line must be {FORMAT_HEADER!r}")
    pos = 1

    def next_line() -> str:
        nonlocal pos
        while pos < len(lines):
            ln = lines[pos].strip()
            pos += 1
            if ln:
                return ln
        raise InstanceError("unexpected end of file")

    def keyed(key: str) -> str:
        ln = next_line()
        head, _, rest = ln.partition(" ")
        if head != key:
            raise InstanceError(f"line {pos}: expected {key!r}, got {head!r}")
        return rest.strip()

    name = keyed("name")
    try:
        latest = float(keyed("latest"))
        count_s, cap_s = keyed("fleet").split()
        fleet = Fleet(int(count_s), float(cap_s))
        dummies = int(keyed("dummies"))
        n_nodes = int(keyed("nodes"))
    except (ValueError, ModelError) as exc:
        raise InstanceError(f"line {pos}: bad header value ({exc})") from exc

    nodes = []
    for _ in range(n_nodes):
        toks = next_line().split()
        if len(toks) != 7:
            raise InstanceError(f"line {pos}: node row needs 7 fields")
        try:
            nodes.append(Node(int(toks[0]), *(float(t) for t in toks[1:])))
        except (ValueError, ModelError) as exc:
            raise InstanceError(f"line {pos}: bad node row ({exc})") from exc

    try:
        n_arcs = int(keyed("arcs"))
    except ValueError as exc:
        raise InstanceError(f"line {pos}: bad arc count ({exc})") from exc
    arcs = {}
    for _ in range(n_arcs):
        toks = next_line().split()
        if len(toks) != 6:
            raise InstanceError(f"line {pos}: arc row needs 6 fields")
        where = f"line {pos}"
        try:
            i, j, dist = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError as exc:
            raise InstanceError(f"{where}: bad arc endpoints ({exc})") from exc
        try:
            arcs[(i, j)] = Arc(i, j, dist,
                               _parse_profile_token(toks[3], where),
                               _parse_profile_token(toks[4], where),
                               _parse_profile_token(toks[5], where))
        except ModelError as exc:
            raise InstanceError(f"{where}: bad arc ({exc})") from exc
    try:
        return Instance(name, tuple(nodes), arcs, fleet, latest,
                        dummy_count=dummies)
    except ModelError as exc:
        raise InstanceError(f"inconsistent instance: {exc}") from exc


# --------------------------------------------------------------------------
# Synthetic generation


SPEED_LEVELS = (48.0, 40.0, 28.0)
TTI_LEVELS = (1.05, 1.35, 1.9)
CRASH_LEVELS = (2e-4, 5e-4, 1.2e-3)


def generate_instance(size: int, seed: int, *, fleet_count: int | None = None,
                      capacity: float = 200.0, latest: float = 14.0,
                      max_noise: float = 0.15, dummy_count: int = 2) -> Instance:
    """Random planar instance with noisy step profiles on every arc.

    Customers are spread uniformly around a central depot; each arc
    draws its own noise amplitude in [0, ``max_noise``] and its own
    noise stream, so no two arcs share a profile.  Window widths are
    generous enough that any single customer can be served and returned
    from within the horizon.

    Args:
        size: number of customers, > 0.  Sizes 10/25/50/80 pick their
            conventional fleet counts automatically.
        seed: master seed; every derived stream hangs off it.
        fleet_count: override the fleet size table.
        capacity: per-vehicle capacity floor (raised if demand is tight).
        latest: planning horizon in hours.
        max_noise: per-arc noise amplitude upper bound.
        dummy_count: recommended depot pass-through count.
    """
    if size < 1:
        raise InstanceError(f"size must be positive, got {size}")
    if latest < 8.0:
        raise InstanceError(f"horizon below 8 hours leaves no room for windows, got {latest}")
    k = fleet_count if fleet_count is not None else GENERATED_FLEETS.get(size)
    if k is None:
        k = max(2, round(size / 8))
    rng = random.Random(seed)

    nodes = [Node(0, 50.0, 50.0, 0.0, 0.0, 0.0, latest)]
    total_demand = 0.0
    for i in range(1, size + 1):
        x = rng.uniform(20.0, 80.0)
        y = rng.uniform(20.0, 80.0)
        demand = float(rng.randint(5, 25))
        total_demand += demand
        open_t = 0.0 if rng.random() < 0.5 else round(rng.uniform(0.0, 2.0), 3)
        width = round(rng.uniform(2.0, 4.0), 3)
        close_t = min(open_t + width, latest - 5.0)
        nodes.append(Node(i, x, y, demand, 0.1, open_t, close_t))
    capacity = max(capacity, math.ceil(1.25 * total_demand / k))

    arcs = {}
    for a in nodes:
        for b in nodes:
            if a.id == b.id:
                continue
            amplitude = rng.uniform(0.0, max_noise)
            profiles = {}
            for kind, levels in (("speed", SPEED_LEVELS), ("tti", TTI_LEVELS),
                                 ("crash", CRASH_LEVELS)):
                spec = StepFunctionSpec(levels, noise_amplitude=amplitude,
                                        seed=rng.getrandbits(32))
                profiles[kind] = generate_profiles(spec, kind)
            dist = math.hypot(a.x - b.x, a.y - b.y) or 1e-9
            arcs[(a.id, b.id)] = Arc(a.id, b.id, dist, profiles["speed"],
                                     profiles["tti"], profiles["crash"])
    return Instance(f"RND{size}-s{seed}", tuple(nodes), arcs,
                    Fleet(k, float(capacity)), latest, dummy_count=dummy_count)


# --------------------------------------------------------------------------
# Case-study CSV bundle


CASE_STUDY_FILES = ("meta.csv", "nodes.csv", "distances.csv", "profiles.csv")


def _read_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise InstanceError(f"missing case-study file: {path.name}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def load_case_study(directory: str | Path) -> Instance:
    """Load the bundled delivery case from its CSV directory.

    Expects meta.csv (key/value), nodes.csv, distances.csv and
    profiles.csv (one row per arc and profile kind with 24 hourly
    columns).  Returns the augmented instance, ready to solve.

    A demand total above the whole fleet's capacity only warns: the
    instance remains loadable for inspection.
    """
    directory = Path(directory)
    meta = {row["key"]: row["value"] for row in _read_csv(directory / "meta.csv")}
    try:
        fleet = Fleet(int(meta["vehicles"]), float(meta["capacity"]))
        latest = float(meta["latest"])
        dummies = int(meta["dummies"])
        name = meta.get("name", directory.name)
    except (KeyError, ValueError) as exc:
        raise InstanceError(f"meta.csv: missing or bad entry ({exc})") from exc

    nodes = []
    for row in _read_csv(directory / "nodes.csv"):
        try:
            nodes.append(Node(int(row["id"]), float(row["x"]), float(row["y"]),
                              float(row["demand"]), float(row["service"]),
                              float(row["open"]), float(row["close"])))
        except (KeyError, ValueError, ModelError) as exc:
            raise InstanceError(f"nodes.csv: bad row {row!r} ({exc})") from exc
    nodes.sort(key=lambda n: n.id)

    distances = {}
    for row in _read_csv(directory / "distances.csv"):
        try:
            distances[(int(row["tail"]), int(row["head"]))] = float(row["miles"])
        except (KeyError, ValueError) as exc:
            raise InstanceError(f"distances.csv: bad row {row!r} ({exc})") from exc

    profiles: dict[tuple[int, int, str], TimeProfile] = {}
    for row in _read_csv(directory / "profiles.csv"):
        try:
            key = (int(row["tail"]), int(row["head"]), row["kind"])
            values = tuple(float(row[f"h{h}"]) for h in range(HOURS_PER_DAY))
        except (KeyError, ValueError) as exc:
            raise InstanceError(f"profiles.csv: bad row {row!r} ({exc})") from exc
        profiles[key] = TimeProfile(values)

    arcs = {}
    for (i, j), dist in sorted(distances.items()):
        try:
            arcs[(i, j)] = Arc(i, j, dist, profiles[(i, j, "speed")],
                               profiles[(i, j, "tti")], profiles[(i, j, "crash")])
        except KeyError as exc:
            raise InstanceError(
                f"profiles.csv: missing profile for arc ({i}, {j}): {exc}") from exc

    instance = Instance(name, tuple(nodes), arcs, fleet, latest,
                        dummy_count=dummies)
    total = instance.total_demand()
    if total > fleet.count * fleet.capacity:
        warnings.warn(
            f"total demand {total} exceeds fleet capacity "
            f"{fleet.count * fleet.capacity}; instance cannot be fully served",
            stacklevel=2)
    return ensure_augmented(instance)


def bundled_case_study_dir() -> Path:
    """Directory of the CSV bundle shipped inside the package."""
    return Path(__file__).resolve().parent / "data" / "case_study"


def bundled_solomon_path(name: str = "R101") -> Path:
    """Path of a benchmark file shipped inside the package."""
    return Path(__file__).resolve().parent / "data" / "solomon" / f"{name}.txt"


def load_solomon(name: str = "R101") -> Instance:
    """Parse a bundled benchmark instance."""
    path = bundled_solomon_path(name)
    if not path.is_file():
        raise InstanceError(f"no bundled instance named {name!r}")
    return parse_solomon(path.read_text())
