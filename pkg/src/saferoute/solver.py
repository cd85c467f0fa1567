"""Two-phase metaheuristic: route search wrapped around schedule retiming.

The search is simulated annealing over visit orders.  A candidate is
evaluated by timing it with immediate departures, rejecting it outright
if any constraint breaks, re-timing the surviving routes on the
discretized schedule graph, and scoring the re-timed solution; the
routing and scheduling phases therefore run together on every accepted
step rather than as separate passes.

Construction divides the plane around the depot into one slice per
vehicle, halves each slice, serves the first half outward and the
second half inward, polishes each route with 2-opt and spills capacity
overflow to the next vehicle.  When time windows break the geometric
order, a deterministic repair pulls out the offending visits and
re-inserts each at its cheapest feasible position.

Annealing uses six neighborhood families (relocation including depot
pass-through edits, swaps, 2-opt, 3-opt, segment reversal, route
splits), Boltzmann acceptance, geometric cooling between a fixed pair
of temperatures, and a small elitist pool: each temperature restarts
its inner searches from the best distinct solutions seen so far.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .model import Instance, MissingArcError, ensure_augmented
from .phase1 import (
    OBJECTIVES,
    TIME_EPS,
    ObjectiveWeights,
    RoutingSolution,
    Violation,
    check_feasibility,
    objective_value,
    propagate_schedule,
)
from .phase2 import Schedule, ScheduleInfeasibleError, schedule_solution

MOVE_KINDS = ("insertion", "swap", "two_opt", "three_opt", "reversion", "split")


class SolverError(ValueError):
    """Invalid solver configuration or input."""


@dataclass(frozen=True)
class SolverConfig:
    """Search parameters; the defaults are the tuned everyday settings."""

    max_outer_iterations: int = 10
    initial_temperature: float = 10.0
    final_temperature: float = 0.01
    iterations_per_temperature: int = 5
    population_size: int = 4
    seed: int = 0
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    m: int = 3
    objective: str = "weighted"
    schedule_every_candidate: bool = True
    basic_sa: bool = False

    def __post_init__(self) -> None:
        if not self.initial_temperature > self.final_temperature > 0:
            raise SolverError("temperatures must satisfy T0 > Tf > 0")
        if self.max_outer_iterations < 0:
            raise SolverError("outer iteration budget cannot be negative")
        if self.iterations_per_temperature < 1 or self.population_size < 1:
            raise SolverError("per-temperature and population counts must be >= 1")
        if self.m < 1:
            raise SolverError("schedule grid needs at least one point per stop")
        if self.objective not in OBJECTIVES:
            raise SolverError(
                f"unknown objective {self.objective!r}, expected one of {OBJECTIVES}")


def cooling_factor(t0: float, tf: float, max_iterations: int) -> float:
    """Geometric rate alpha with t0 * alpha**max_iterations == tf."""
    if not t0 >= tf > 0:
        raise SolverError("temperatures must satisfy T0 >= Tf > 0")
    if max_iterations < 1:
        raise SolverError("need at least one iteration to cool over")
    return (tf / t0) ** (1.0 / max_iterations)


def acceptance(delta_f: float, temperature: float, rng: random.Random) -> bool:
    """Boltzmann criterion: downhill always, uphill with exp(-delta/t)."""
    if temperature <= 0:
        raise SolverError(f"temperature must be positive, got {temperature!r}")
    if delta_f < 0:
        return True
    return rng.random() < math.exp(-delta_f / temperature)


# --------------------------------------------------------------------------
# Construction


def _route_distance(instance: Instance, route: list[int]) -> float:
    if not route:
        return 0.0
    path = [0, *route, instance.terminal_id]
    return sum(instance.arc(a, b).distance for a, b in zip(path, path[1:]))


def _two_opt_pass(instance: Instance, route: list[int]) -> list[int]:
    """First-improvement 2-opt until no reversal shortens the path."""
    best = list(route)
    improved = True
    while improved:
        improved = False
        base = _route_distance(instance, best)
        for i in range(len(best) - 1):
            for j in range(i + 1, len(best)):
                cand = best[:i] + best[i:j + 1][::-1] + best[j + 1:]
                if _route_distance(instance, cand) < base - 1e-12:
                    best = cand
                    improved = True
                    break
            if improved:
                break
    return best


def initial_solution(instance: Instance, vehicles: int | None = None,
                     ) -> RoutingSolution:
    """Geometric sweep construction around the depot.

    The plane is cut into one slice per vehicle and each slice into two
    half-slices; a vehicle serves its first half-slice outward (rising
    depot distance) and the second inward, which joins the far ends of
    the two halves.  Each route then gets a 2-opt polish, and nodes
    that would break capacity spill over to the following vehicle.
    """
    instance = ensure_augmented(instance)
    k = vehicles if vehicles is not None else instance.fleet.count
    if k < 1:
        raise SolverError("need at least one vehicle")
    customers = instance.customers()
    if not customers:
        return RoutingSolution(tuple(() for _ in range(k)))

    depot = instance.depot
    width = math.pi / k
    buckets: list[list[tuple[float, int]]] = [[] for _ in range(2 * k)]
    for c in customers:
        node = instance.node(c)
        angle = math.atan2(node.y - depot.y, node.x - depot.x) % (2 * math.pi)
        radius = math.hypot(node.x - depot.x, node.y - depot.y)
        buckets[min(int(angle / width), 2 * k - 1)].append((radius, c))

    ordered: list[list[int]] = []
    for v in range(k):
        outward = sorted(buckets[2 * v])
        inward = sorted(buckets[2 * v + 1], reverse=True)
        ordered.append([c for _, c in outward] + [c for _, c in inward])

    routes: list[list[int]] = []
    carry: list[int] = []
    capacity = instance.fleet.capacity
    for v in range(k):
        mine = carry + ordered[v]
        carry = []
        load = 0.0
        kept = []
        for c in mine:
            demand = instance.node(c).demand
            if load + demand <= capacity:
                kept.append(c)
                load += demand
            else:
                carry.append(c)
        routes.append(_two_opt_pass(instance, kept))
    for c in carry:
        # full sweep done and still homeless: squeeze into the least
        # loaded route (repair or search will sort out any overflow)
        loads = [sum(instance.node(n).demand for n in r) for r in routes]
        routes[loads.index(min(loads))].append(c)
    return RoutingSolution(tuple(tuple(r) for r in routes))


def _insertion_delta(instance: Instance, route: list[int], pos: int,
                     c: int) -> float:
    """Distance growth from inserting c at pos of the depot-closed path."""
    prev = route[pos - 1] if pos > 0 else 0
    nxt = route[pos] if pos < len(route) else instance.terminal_id
    added = instance.arc(prev, c).distance + instance.arc(c, nxt).distance
    if route:
        added -= instance.arc(prev, nxt).distance
    return added


def _route_violations(route: list[int], instance: Instance,
                      dispatch: float) -> tuple:
    """Window/horizon/capacity violations of one route in isolation."""
    try:
        timed = propagate_schedule((tuple(route),), instance, dispatch)
    except MissingArcError:
        return (Violation("route-shape", 0, None, "no arc joins the visits"),)
    # unrelated customers are deliberately absent from a one-route view
    return tuple(v for v in check_feasibility(timed, instance)
                 if v.constraint != "visit-count")


def make_feasible(solution: RoutingSolution, instance: Instance,
                  dispatch: float) -> RoutingSolution | None:
    """Deterministic repair: eject violating visits, re-insert cheapest.

    Ejection removes window and horizon offenders (and trims capacity
    overflow, heaviest first); every ejected customer is then re-added,
    earliest window first, at the feasible position that increases
    total distance least.  Returns None when some customer fits
    nowhere.
    """
    routes = [list(r) for r in solution.routes]
    out: set[int] = set()

    def pending() -> list[Violation]:
        try:
            timed = propagate_schedule(tuple(tuple(r) for r in routes),
                                       instance, dispatch)
        except MissingArcError:
            # pass-through vertices are optional; shed them and retry
            for r in routes:
                r[:] = [n for n in r if not instance.is_dummy(n)]
            timed = propagate_schedule(tuple(tuple(r) for r in routes),
                                       instance, dispatch)
        return [v for v in check_feasibility(timed, instance)
                if not (v.constraint == "visit-count" and v.node in out)]

    budget = len(instance.customers()) + len(instance.dummy_ids) + 2
    for _ in range(budget):
        violations = pending()
        if not violations:
            break
        ejected = False
        for v in violations:
            if v.node is not None and instance.is_dummy(v.node):
                for r in routes:
                    if v.node in r:
                        r.remove(v.node)  # optional detour, drop outright
                        ejected = True
                        break
            elif v.node is not None:
                for r in routes:
                    if v.node in r:
                        r.remove(v.node)
                        out.add(v.node)
                        ejected = True
                        break
            elif v.constraint == "capacity" and v.vehicle is not None:
                carried = [c for c in routes[v.vehicle]
                           if not instance.is_dummy(c)]
                if carried:
                    heaviest = max(carried,
                                   key=lambda c: instance.node(c).demand)
                    routes[v.vehicle].remove(heaviest)
                    out.add(heaviest)
                    ejected = True
            elif v.vehicle is not None and v.vehicle >= 0 \
                    and routes[v.vehicle]:
                tail = routes[v.vehicle].pop()
                if not instance.is_dummy(tail):
                    out.add(tail)
                ejected = True
        if not ejected:
            return None
    if pending():
        return None

    capacity = instance.fleet.capacity
    for c in sorted(out, key=lambda c: (instance.node(c).window_open, c)):
        demand = instance.node(c).demand
        best = None
        for ri, r in enumerate(routes):
            if sum(instance.node(n).demand for n in r) + demand \
                    > capacity + TIME_EPS:
                continue
            for pos in range(len(r) + 1):
                if _route_violations(r[:pos] + [c] + r[pos:], instance,
                                     dispatch):
                    continue
                delta = _insertion_delta(instance, r, pos, c)
                if best is None or delta < best[0] - 1e-12:
                    best = (delta, ri, pos)
        if best is None:
            return None
        routes[best[1]].insert(best[2], c)
    _polish(routes, instance, dispatch)
    return RoutingSolution(tuple(tuple(r) for r in routes))


def _polish(routes: list[list[int]], instance: Instance,
            dispatch: float) -> None:
    """Deterministic mileage cleanup of a feasible set of routes.

    Alternates single-customer relocations with within-route feasible
    reversals until neither shortens the total, editing in place.
    Removing a visit only moves later arrivals earlier, so the donor
    route needs no recheck; the receiving route is revalidated.
    """
    capacity = instance.fleet.capacity
    customers = sorted(c for r in routes for c in r
                       if not instance.is_dummy(c))
    for _ in range(50):
        improved = False
        for c in customers:
            ri = next(k for k, r in enumerate(routes) if c in r)
            r = routes[ri]
            i = r.index(c)
            prev = r[i - 1] if i > 0 else 0
            nxt = r[i + 1] if i + 1 < len(r) else instance.terminal_id
            saving = (instance.arc(prev, c).distance
                      + instance.arc(c, nxt).distance
                      - (instance.arc(prev, nxt).distance
                         if len(r) > 1 else 0.0))
            demand = instance.node(c).demand
            best = None
            for rj, other in enumerate(routes):
                if rj == ri:
                    continue
                if sum(instance.node(n).demand for n in other) + demand \
                        > capacity + TIME_EPS:
                    continue
                for pos in range(len(other) + 1):
                    delta = _insertion_delta(instance, other, pos, c) - saving
                    if delta < -1e-9 and (best is None or delta < best[0]) \
                            and not _route_violations(
                                other[:pos] + [c] + other[pos:],
                                instance, dispatch):
                        best = (delta, rj, pos)
            if best is not None:
                r.remove(c)
                routes[best[1]].insert(best[2], c)
                improved = True
        for r in routes:
            hunting = True
            while hunting:
                hunting = False
                for i in range(len(r) - 1):
                    for j in range(i + 1, len(r)):
                        trial = r[:i] + r[i:j + 1][::-1] + r[j + 1:]
                        if _route_distance(instance, trial) \
                                < _route_distance(instance, r) - 1e-9 \
                                and not _route_violations(trial, instance,
                                                          dispatch):
                            r[:] = trial
                            improved = hunting = True
                            break
                    if hunting:
                        break
        if not improved:
            break


# --------------------------------------------------------------------------
# Neighborhood moves


@dataclass(frozen=True)
class Move:
    """One neighborhood step; params are kind-specific indices."""

    kind: str
    params: tuple

    def __post_init__(self) -> None:
        if self.kind not in MOVE_KINDS:
            raise SolverError(f"unknown move kind {self.kind!r}")


def _customer_positions(routes) -> list[tuple[int, int]]:
    return [(ri, i) for ri, r in enumerate(routes) for i in range(len(r))]


def sample_move(solution: RoutingSolution, instance: Instance,
                rng: random.Random) -> Move:
    """Draw a random move valid for the solution's current shape.

    The kind is uniform over the six families; segment sizes of 1 or 2
    are uniform where the family supports both.  Relocation doubles as
    the depot pass-through editor: it can bring an unused pass-through
    vertex into a route or drop one from it.
    """
    routes = solution.routes
    positions = _customer_positions(routes)
    if not positions:
        raise SolverError("cannot move on an empty solution")

    for _ in range(64):
        kind = MOVE_KINDS[rng.randrange(len(MOVE_KINDS))]
        if kind == "insertion":
            used = {n for r in routes for n in r}
            free = [d for d in instance.dummy_ids if d not in used]
            placed = [(ri, i) for ri, r in enumerate(routes)
                      for i, n in enumerate(r) if instance.is_dummy(n)]
            roll = rng.random()
            if free and roll < 0.25:
                ri = rng.randrange(len(routes))
                if len(routes[ri]) < 2:
                    continue  # pass-through needs customers on both sides
                gap = rng.randrange(1, len(routes[ri]))
                return Move("insertion", ("add-pass", free[0], ri, gap))
            if placed and roll < 0.5:
                ri, i = placed[rng.randrange(len(placed))]
                return Move("insertion", ("drop-pass", ri, i))
            ri, i = positions[rng.randrange(len(positions))]
            seg = 1 if rng.random() < 0.5 else 2
            if i + seg > len(routes[ri]):
                seg = 1
            rj = rng.randrange(len(routes))
            slots = len(routes[rj]) + 1 - (seg if rj == ri else 0)
            if slots < 1:
                continue
            j = rng.randrange(slots)
            return Move("insertion", ("relocate", ri, i, seg, rj, j))
        if kind == "swap":
            if len(positions) < 2:
                continue
            seg = 1 if rng.random() < 0.5 else 2
            (ra, ia), (rb, ib) = rng.sample(positions, 2)
            if ra == rb:
                ia, ib = min(ia, ib), max(ia, ib)
                if ia + seg > ib:  # overlapping segments degenerate
                    seg = 1
                    if ia + seg > ib:
                        continue
            if ia + seg > len(routes[ra]) or ib + seg > len(routes[rb]):
                continue
            return Move("swap", (ra, ia, rb, ib, seg))
        if kind in ("two_opt", "reversion"):
            candidates = [ri for ri, r in enumerate(routes) if len(r) >= 2]
            if not candidates:
                continue
            ri = candidates[rng.randrange(len(candidates))]
            i, j = sorted(rng.sample(range(len(routes[ri])), 2))
            return Move(kind, (ri, i, j))
        if kind == "three_opt":
            candidates = [ri for ri, r in enumerate(routes) if len(r) >= 3]
            if not candidates:
                continue
            ri = candidates[rng.randrange(len(candidates))]
            i, j, k2 = sorted(rng.sample(range(len(routes[ri]) + 1), 3))
            if i == j or j == k2:
                continue
            return Move("three_opt", (ri, i, j, k2, rng.randrange(2)))
        if kind == "split":
            donors = [ri for ri, r in enumerate(routes) if len(r) >= 2]
            if not donors or len(routes) < 2:
                continue
            ri = donors[rng.randrange(len(donors))]
            cut = rng.randrange(1, len(routes[ri]))
            others = [r for r in range(len(routes)) if r != ri]
            rj = others[rng.randrange(len(others))]
            return Move("split", (ri, cut, rj))
    # everything else degenerate: relocate one customer onto its own spot
    ri, i = positions[rng.randrange(len(positions))]
    return Move("insertion", ("relocate", ri, i, 1, ri, i))


def apply_move(solution: RoutingSolution, move: Move) -> RoutingSolution:
    """Pure rewrite of the visit orders; timings are dropped."""
    routes = [list(r) for r in solution.routes]
    p = move.params
    if move.kind == "insertion":
        tag = p[0]
        if tag == "add-pass":
            _, dummy, ri, gap = p
            routes[ri].insert(gap, dummy)
        elif tag == "drop-pass":
            _, ri, i = p
            del routes[ri][i]
        else:
            _, ri, i, seg, rj, j = p
            chunk = routes[ri][i:i + seg]
            del routes[ri][i:i + seg]
            routes[rj][j:j] = chunk
    elif move.kind == "swap":
        ra, ia, rb, ib, seg = p
        if ra == rb:
            r = routes[ra]
            r[ia:ia + seg], r[ib:ib + seg] = r[ib:ib + seg], r[ia:ia + seg]
        else:
            a = routes[ra][ia:ia + seg]
            b = routes[rb][ib:ib + seg]
            routes[ra][ia:ia + seg] = b
            routes[rb][ib:ib + seg] = a
    elif move.kind in ("two_opt", "reversion"):
        ri, i, j = p
        routes[ri][i:j + 1] = routes[ri][i:j + 1][::-1]
    elif move.kind == "three_opt":
        ri, i, j, k2, variant = p
        r = routes[ri]
        middle, tail = r[i:j], r[j:k2]
        if variant == 0:  # exchange the two segments
            r[i:k2] = tail + middle
        else:  # reconnect with the middle reversed
            r[i:k2] = tail + middle[::-1]
    elif move.kind == "split":
        ri, cut, rj = p
        chunk = routes[ri][cut:]
        del routes[ri][cut:]
        routes[rj].extend(chunk)
    return RoutingSolution(tuple(tuple(r) for r in routes))


# --------------------------------------------------------------------------
# Annealing loop


@dataclass(frozen=True)
class Evaluation:
    """Scored candidate: routes plus the value that ranks it."""

    solution: RoutingSolution
    schedules: tuple[Schedule, ...]
    value: float
    feasible: bool


@dataclass(frozen=True)
class SolveResult:
    """Best solution found, its timing, and search telemetry."""

    solution: RoutingSolution
    schedules: tuple[Schedule, ...]
    value: float
    objective: str
    feasible: bool
    evaluations: int
    history: tuple[float, ...]
    elapsed: float


def evaluate(routes: RoutingSolution | tuple, instance: Instance,
             config: SolverConfig, dispatch: float,
             weights: ObjectiveWeights, force_schedule: bool = False,
             ) -> Evaluation:
    """Time, filter and score one candidate.

    Infeasible candidates come back with an infinite value.  The
    schedule phase runs per candidate unless configured off; the
    distance objective skips it (re-timing cannot change distance)
    except when the caller forces it for reporting.
    """
    try:
        timed = propagate_schedule(routes, instance, dispatch)
    except MissingArcError:
        sol = routes if isinstance(routes, RoutingSolution) \
            else RoutingSolution(tuple(tuple(r) for r in routes))
        return Evaluation(sol, (), math.inf, False)
    if check_feasibility(timed, instance):
        return Evaluation(timed, (), math.inf, False)
    schedules: tuple[Schedule, ...] = ()
    wants_schedule = config.schedule_every_candidate or force_schedule
    if wants_schedule and (config.objective != "distance" or force_schedule):
        try:
            timed, schedules = schedule_solution(
                timed, instance, config.m, weights, config.objective)
        except ScheduleInfeasibleError:
            return Evaluation(timed, (), math.inf, False)
    value = objective_value(config.objective, timed, instance, weights)
    return Evaluation(timed, schedules, value, True)


def _admit(pool: list[Evaluation], candidate: Evaluation, size: int) -> None:
    """Keep the pool as the best ``size`` distinct feasible solutions."""
    if not candidate.feasible:
        return
    key = candidate.solution.routes
    for i, member in enumerate(pool):
        if member.solution.routes == key:
            if candidate.value < member.value:
                pool[i] = candidate
                pool.sort(key=lambda e: e.value)
            return
    pool.append(candidate)
    pool.sort(key=lambda e: e.value)
    del pool[size:]


def solve(instance: Instance, config: SolverConfig | None = None,
          dispatch: float = 0.0) -> SolveResult:
    """Run the full two-phase search for one dispatch hour.

    Deterministic for a given (instance, config, dispatch): a single
    seeded generator drives construction fallbacks, move sampling and
    acceptance.  The result carries the re-timed best solution; when no
    feasible solution is ever seen the best-effort candidate is
    returned flagged infeasible with an infinite value.
    """
    started = time.perf_counter()
    config = config or SolverConfig()
    instance = ensure_augmented(instance)
    if dispatch < 0 or not math.isfinite(dispatch):
        raise SolverError(f"dispatch must be a non-negative hour, got {dispatch!r}")
    rng = random.Random(config.seed)
    weights = config.weights.resolved(instance)

    if config.basic_sa:
        ids = list(instance.customers())
        rng.shuffle(ids)
        k = instance.fleet.count
        chunk = math.ceil(len(ids) / k) if ids else 1
        start = RoutingSolution(tuple(
            tuple(ids[i * chunk:(i + 1) * chunk]) for i in range(k)))
    else:
        start = initial_solution(instance)

    evaluations = 0

    def score(candidate, force_schedule=False) -> Evaluation:
        nonlocal evaluations
        evaluations += 1
        return evaluate(candidate, instance, config, dispatch, weights,
                        force_schedule)

    first = score(start)
    if not first.feasible:
        repaired = make_feasible(first.solution, instance, dispatch)
        if repaired is not None:
            first = score(repaired)

    pool: list[Evaluation] = []
    _admit(pool, first, config.population_size)
    best = first
    history: list[float] = []

    if config.max_outer_iterations > 0:
        alpha = cooling_factor(config.initial_temperature,
                               config.final_temperature,
                               config.max_outer_iterations)
        temperature = config.initial_temperature
        pop = 1 if config.basic_sa else config.population_size
        for _ in range(config.max_outer_iterations):
            temperature *= alpha
            # nothing feasible yet: keep searching from the best effort
            seeds = list(pool[:pop]) if pool else [best]
            for member in seeds:
                current = member
                for _ in range(config.iterations_per_temperature):
                    move = sample_move(current.solution, instance, rng)
                    candidate = score(apply_move(current.solution, move))
                    if not candidate.feasible:
                        continue
                    delta = candidate.value - current.value \
                        if current.feasible else -math.inf
                    if acceptance(delta, temperature, rng):
                        current = candidate
                    _admit(pool, candidate, config.population_size)
            if pool and pool[0].value < best.value:
                best = pool[0]
            history.append(best.value)

    if best.feasible and not best.schedules:
        final = evaluate(best.solution.routes, instance, config, dispatch,
                         weights, force_schedule=True)
        if final.feasible:
            best = final

    return SolveResult(best.solution, best.schedules, best.value,
                       config.objective, best.feasible, evaluations,
                       tuple(history), time.perf_counter() - started)


def solve_scenario(scenario, config: SolverConfig | None = None) -> SolveResult:
    """Run solve() at the scenario's dispatch hour on its instance."""
    return solve(scenario.instance, config, scenario.dispatch)
