"""Ground-truth solvers by exhaustive enumeration.

Small instances can be solved exactly: every split of the customers
over the fleet, every visit order, and every way of weaving in the
depot pass-through vertices is generated, timed and checked, and the
best feasible candidates are kept.  The same idea verifies the
retiming phase by walking every path of the schedule graph.  Both
enumerations refuse to run past an explicit candidate budget rather
than return a silently truncated answer, which keeps them trustworthy
as test anchors.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

from .model import Instance
from .phase1 import (
    ObjectiveWeights,
    RoutingSolution,
    check_feasibility,
    objective_value,
    propagate_schedule,
)
from .phase2 import build_schedule_graph, schedule_solution

TIE_EPS = 1e-12

DEFAULT_CUSTOMER_CAP = 8


class OracleError(ValueError):
    """Enumeration could not produce a trustworthy answer."""


class OracleSizeError(OracleError):
    """Instance exceeds the enumeration size cap."""


class OracleBudgetError(OracleError):
    """Candidate budget exhausted before the search space was covered."""

    def __init__(self, message: str, enumerated: int) -> None:
        super().__init__(message)
        self.enumerated = enumerated


class OracleInfeasibleError(OracleError):
    """Every candidate violated some constraint."""


@dataclass(frozen=True)
class OracleResult:
    """Outcome of one exhaustive run.

    ``solutions`` holds every optimum within the tie tolerance: timed
    RoutingSolutions for route enumeration, service-start tuples for
    schedule enumeration.
    """

    objective: str
    value: float
    solutions: tuple
    enumerated: int
    elapsed: float

    def tied(self) -> bool:
        return len(self.solutions) > 1


def _partitions(items: tuple[int, ...], max_blocks: int):
    """Yield set partitions of ``items`` into at most ``max_blocks`` blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest, max_blocks):
        for i in range(len(part)):
            yield part[:i] + [part[i] + [first]] + part[i + 1:]
        if len(part) < max_blocks:
            yield part + [[first]]


def _gap_choices(routes: list[tuple[int, ...]], max_dummies: int):
    """Yield dummy placements: sets of (route index, internal gap index).

    A pass-through vertex only makes sense strictly between two
    customers (it has no arcs to the depot copies), and two in a row
    would need an arc between copies, so each gap takes at most one.
    """
    gaps = [(ri, gi) for ri, route in enumerate(routes)
            for gi in range(1, len(route))]
    for k in range(min(max_dummies, len(gaps)) + 1):
        yield from itertools.combinations(gaps, k)


def _weave(routes: list[tuple[int, ...]], placement, dummy_ids) -> tuple:
    chosen = sorted(placement)
    woven = []
    next_dummy = iter(dummy_ids)
    for ri, route in enumerate(routes):
        out = []
        for gi, node in enumerate(route):
            if (ri, gi) in chosen:
                out.append(next(next_dummy))
            out.append(node)
        woven.append(tuple(out))
    return tuple(woven)


def enumerate_routes(instance: Instance, objective: str, *,
                     dispatch: float = 0.0,
                     weights: ObjectiveWeights | None = None,
                     schedule_m: int | None = None,
                     budget: int = 2_000_000,
                     max_customers: int = DEFAULT_CUSTOMER_CAP) -> OracleResult:
    """Exact routing optimum by full enumeration.

    Every partition of the customers over at most ``fleet.count``
    vehicles is expanded into all visit orders and all depot
    pass-through placements, timed with immediate departures, checked,
    and measured.  With ``schedule_m`` set, each feasible candidate is
    re-timed on an m-point grid first, so the values are comparable to
    a solver that runs the retiming phase.

    Raises:
        OracleSizeError: more than ``max_customers`` customers.
        OracleBudgetError: candidate count exceeded ``budget``.
        OracleInfeasibleError: nothing satisfied the constraints.
    """
    started = time.perf_counter()
    customers = instance.customers()
    if len(customers) > max_customers:
        raise OracleSizeError(
            f"{len(customers)} customers exceed the enumeration cap "
            f"{max_customers}")
    if weights is not None and weights.crash_scale is None:
        weights = weights.resolved(instance)

    capacity = instance.fleet.capacity
    demand = {c: instance.node(c).demand for c in customers}
    m = len(instance.dummy_ids)
    best = math.inf
    optima: list[RoutingSolution] = []
    enumerated = 0

    for part in _partitions(customers, instance.fleet.count):
        if any(sum(demand[c] for c in block) > capacity for block in part):
            continue  # capacity is order-independent, prune the whole block
        for ordered in itertools.product(
                *(itertools.permutations(block) for block in part)):
            routes = [tuple(r) for r in ordered]
            for placement in _gap_choices(routes, m):
                enumerated += 1
                if enumerated > budget:
                    raise OracleBudgetError(
                        f"enumeration budget {budget} exhausted", budget)
                candidate = _weave(routes, placement, instance.dummy_ids)
                timed = propagate_schedule(candidate, instance, dispatch)
                if check_feasibility(timed, instance):
                    continue
                if schedule_m is not None:
                    timed, _ = schedule_solution(timed, instance, schedule_m,
                                                 weights, objective)
                value = objective_value(objective, timed, instance, weights)
                if value < best - TIE_EPS:
                    best = min(best, value)
                    optima = [timed]
                elif value <= best + TIE_EPS:
                    best = min(best, value)
                    optima.append(timed)

    if not optima:
        raise OracleInfeasibleError(
            f"no feasible solution among {enumerated} candidates")
    return OracleResult(objective, best, tuple(optima), enumerated,
                        time.perf_counter() - started)


def enumerate_schedules(route: tuple[int, ...], instance: Instance, m: int, *,
                        dispatch: float = 0.0,
                        weights: ObjectiveWeights | None = None,
                        objective: str = "weighted",
                        budget: int = 1_000_000) -> OracleResult:
    """Exact retiming optimum by walking every schedule-graph path.

    Raises:
        OracleBudgetError: the grid admits more paths than ``budget``.
        ScheduleInfeasibleError: the route has no valid schedule, the
            same error the DP raises.
    """
    started = time.perf_counter()
    graph = build_schedule_graph(route, instance, dispatch, m, weights,
                                 objective)
    bound = graph.path_count_bound()
    if bound > budget:
        raise OracleBudgetError(
            f"up to {bound} schedule paths exceed the budget {budget}", 0)

    succ: list[dict[int, list[tuple[int, float]]]] = []
    for layer in graph.edges:
        adj: dict[int, list[tuple[int, float]]] = {}
        for i, j, cost in layer:
            adj.setdefault(i, []).append((j, cost))
        succ.append(adj)

    last = len(graph.times) - 1
    best = math.inf
    optima: list[tuple[float, ...]] = []
    enumerated = 0
    stack = [(0, 0, 0.0, ())]
    while stack:
        pos, idx, acc, starts = stack.pop()
        if pos == last:
            for i, cost, _arrive in graph.sink_edges:
                if i != idx:
                    continue
                enumerated += 1
                total = acc + cost
                if total < best - TIE_EPS:
                    best = min(best, total)
                    optima = [starts]
                elif total <= best + TIE_EPS:
                    best = min(best, total)
                    optima.append(starts)
            continue
        for j, cost in succ[pos + 1].get(idx, ()):
            stack.append((pos + 1, j, acc + cost,
                          starts + (graph.times[pos + 1][j],)))

    if not optima:
        raise OracleInfeasibleError(
            f"no complete schedule path among {enumerated} partial paths")
    return OracleResult(objective, best, tuple(optima), enumerated,
                        time.perf_counter() - started)
