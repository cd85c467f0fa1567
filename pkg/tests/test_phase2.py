"""Tests for the schedule retiming phase."""

import math
import random

import pytest

from saferoute.model import MissingArcError, TimeProfile, travel_time
from saferoute.phase1 import (
    ObjectiveWeights,
    RoutingSolution,
    SolutionError,
    check_feasibility,
    crash_objective,
    distance_objective,
    objective_value,
    propagate_schedule,
    time_objective,
    tti_objective,
)
from saferoute.phase2 import (
    Schedule,
    ScheduleError,
    ScheduleGraph,
    ScheduleInfeasibleError,
    arc_cost,
    build_schedule_graph,
    leg_cost,
    optimize_schedule,
    schedule_solution,
    schedule_to_timing,
)

from helpers import build_augmented


def random_profile(rng, lo, hi):
    return TimeProfile(tuple(rng.uniform(lo, hi) for _ in range(24)))


def random_instance(rng, n_customers, dummies=0):
    customers = [
        {
            "x": rng.uniform(-8.0, 8.0),
            "y": rng.uniform(-8.0, 8.0),
            "demand": rng.uniform(1.0, 10.0),
            "service": rng.uniform(0.0, 0.3),
            "open": rng.uniform(0.0, 0.5),
            "close": rng.uniform(4.0, 10.0),
        }
        for _ in range(n_customers)
    ]
    overrides = {}
    ids = range(n_customers + 1)
    for i in ids:
        for j in ids:
            if i != j and rng.random() < 0.6:
                overrides[(i, j)] = {
                    "speed": random_profile(rng, 15.0, 60.0),
                    "tti": random_profile(rng, 1.0, 3.0),
                    "crash": random_profile(rng, 1e-5, 0.05),
                }
    return build_augmented(customers, dummies, fleet=(3, 1000.0),
                           latest=24.0, arc_overrides=overrides)


def all_path_costs(graph: ScheduleGraph):
    """Exhaustive source-to-sink path costs, found by depth-first walk."""
    last = len(graph.times) - 1
    out = []

    def rec(pos, idx, acc):
        if pos == last:
            for i, cost, _arrive in graph.sink_edges:
                if i == idx:
                    out.append(acc + cost)
            return
        for i, j, cost in graph.edges[pos + 1]:
            if i == idx:
                rec(pos + 1, j, acc + cost)

    rec(0, 0, 0.0)
    return out


def test_single_candidate_matches_propagation():
    rng = random.Random(41)
    for trial in range(40):
        inst = random_instance(rng, rng.randint(2, 5))
        route = tuple(rng.sample(range(1, len(inst.customers()) + 1),
                                 len(inst.customers())))
        dispatch = rng.choice([0.0, 7.25, 22.5])
        prop = propagate_schedule((route,), inst, dispatch)
        sched = optimize_schedule(route, inst, dispatch, m=1,
                                  objective="distance")
        stops = prop.timings[0].stops
        assert sched.service_starts == tuple(s.service_start for s in stops)
        assert sched.arrivals == tuple(s.arrival for s in stops)
        assert sched.departures == tuple(s.departure for s in stops)
        assert sched.return_arrival == prop.timings[0].return_arrival


def test_grid_shape_and_path_bound():
    rng = random.Random(7)
    inst = random_instance(rng, 3)
    graph = build_schedule_graph((1, 2, 3), inst, 0.0, m=4,
                                 objective="tti")
    assert len(graph.times) == 4 and graph.times[0] == (0.0,)
    prop = propagate_schedule(((1, 2, 3),), inst, 0.0)
    for pos, stop in enumerate(prop.timings[0].stops, start=1):
        grid = graph.times[pos]
        assert 1 <= len(grid) <= 4
        assert grid[0] == stop.service_start
        assert all(a < b for a, b in zip(grid, grid[1:]))
        close = inst.node(stop.node).window_close
        assert grid[-1] <= close + 1e-12
    assert graph.path_count_bound() <= 4 ** 3


def test_dp_matches_exhaustive_enumeration():
    rng = random.Random(97)
    for trial in range(120):
        inst = random_instance(rng, rng.randint(2, 4))
        n = len(inst.customers())
        route = tuple(rng.sample(range(1, n + 1), rng.randint(2, n)))
        m = rng.randint(2, 4)
        objective = rng.choice(["crash", "tti", "weighted", "distance", "time"])
        weights = ObjectiveWeights(0.4, 0.6) if objective == "weighted" else None
        try:
            graph = build_schedule_graph(route, inst, 0.0, m, weights, objective)
        except ScheduleInfeasibleError:
            continue
        costs = all_path_costs(graph)
        assert costs, "immediate path must always be in the graph"
        sched = optimize_schedule(route, inst, 0.0, m, weights, objective)
        assert sched.total_cost == pytest.approx(min(costs), abs=1e-12)


def test_edges_match_recomputation_from_primitives():
    rng = random.Random(3)
    inst = random_instance(rng, 3)
    weights = ObjectiveWeights(0.5, 0.5).resolved(inst)
    graph = build_schedule_graph((2, 1, 3), inst, 1.5, m=5, weights=weights)
    for pos in range(1, len(graph.times)):
        tail, head = graph.node_ids[pos - 1], graph.node_ids[pos]
        service = inst.node(tail).service_time
        arc = inst.arc(tail, head)
        expected = set()
        for i, start in enumerate(graph.times[pos - 1]):
            depart = start + service
            arrive = depart + travel_time(arc, depart)
            cost = leg_cost(inst, tail, head, depart, weights, "weighted")
            for j, nxt in enumerate(graph.times[pos]):
                if nxt >= arrive - 1e-9:
                    expected.add((i, j, cost))
        assert set(graph.edges[pos]) == expected


def test_arc_cost_lookup():
    rng = random.Random(11)
    inst = random_instance(rng, 2)
    graph = build_schedule_graph((1, 2), inst, 0.0, m=3, objective="tti")
    i, j, cost = graph.edges[1][0]
    assert arc_cost(graph, (0, i), (1, j), inst) == cost
    assert arc_cost(graph, (0, 0), (2, 0), inst) == math.inf
    assert arc_cost(graph, (1, 0), (1, 1), inst) == math.inf
    linked = {(i, j) for i, j, _ in graph.edges[2]}
    unlinked = [(i, j) for i in range(len(graph.times[1]))
                for j in range(len(graph.times[2])) if (i, j) not in linked]
    for i, j in unlinked:
        assert arc_cost(graph, (1, i), (2, j), inst) == math.inf


def test_frozen_two_hour_delay():
    # One customer 30 miles out at constant 30 mph: arrive at hour 1.
    # The return leg is risky in hour 1 (0.3), blended in between, and
    # calm from hour 2 on, so the best of the starts {1.0, 1.5, 2.0}
    # is to wait a full hour before serving.
    crash_back = TimeProfile((0.1, 0.3, 0.1) + (0.1,) * 21)
    inst = build_augmented(
        [{"x": 30.0, "y": 0.0, "service": 0.0, "close": 2.0}],
        arc_overrides={(1, 0): {"crash": crash_back}},
        crash=0.01,
    )
    graph = build_schedule_graph((1,), inst, 0.0, m=3, objective="crash")
    assert graph.times[1] == (1.0, 1.5, 2.0)
    sched = optimize_schedule((1,), inst, 0.0, m=3, objective="crash")
    assert sched.service_starts == (2.0,)
    assert sched.return_arrival == pytest.approx(3.0, abs=1e-12)
    assert sched.waiting() == pytest.approx(1.0, abs=1e-12)
    timed = RoutingSolution(((1,),), 0.0, (schedule_to_timing(sched, inst),))
    assert crash_objective(timed, inst) == pytest.approx(0.109, abs=1e-12)
    immediate = propagate_schedule(((1,),), inst, 0.0)
    assert crash_objective(immediate, inst) == pytest.approx(0.307, abs=1e-12)
    # blended middle choice: half the return hour at 0.3, half at 0.1
    mid = optimize_schedule((1,), inst, 0.0, m=2, objective="crash")
    assert mid.service_starts == (2.0,)


def test_candidate_refinement_never_hurts():
    rng = random.Random(23)
    for trial in range(25):
        inst = random_instance(rng, 3)
        route = tuple(rng.sample([1, 2, 3], 3))
        objective = rng.choice(["crash", "tti", "weighted", "time"])
        costs = {m: optimize_schedule(route, inst, 0.25, m,
                                      objective=objective).total_cost
                 for m in (1, 2, 3, 5, 9)}
        for m in (2, 3, 5, 9):
            assert costs[m] <= costs[1] + 1e-12
        # grids nest along m -> 2m - 1, so these chains are monotone
        assert costs[3] <= costs[2] + 1e-12
        assert costs[5] <= costs[3] + 1e-12
        assert costs[9] <= costs[5] + 1e-12


def test_rescheduled_solution_stays_feasible():
    rng = random.Random(59)
    checked = 0
    for trial in range(60):
        inst = random_instance(rng, rng.randint(2, 5), dummies=1)
        n = len(inst.customers())
        ids = list(range(1, n + 1))
        rng.shuffle(ids)
        cut = rng.randint(1, n)
        routes = (tuple(ids[:cut]), tuple(ids[cut:]))
        dispatch = rng.choice([0.0, 6.5])
        prop = propagate_schedule(routes, inst, dispatch)
        if check_feasibility(prop, inst):
            continue
        for objective in ("crash", "tti", "weighted", "time", "distance"):
            timed, scheds = schedule_solution(prop, inst, 4,
                                              objective=objective)
            assert not check_feasibility(timed, inst)
            assert len(scheds) == sum(1 for r in routes if r)
            checked += 1
    assert checked >= 50


def test_horizon_filter_keeps_late_starts_out():
    # Risky first hour tempts the scheduler to wait, but the day ends
    # at 1.2 hours; only starts that still allow the 20-minute ride
    # home may be kept.
    crash = TimeProfile((0.3,) + (1e-4,) * 23)
    inst = build_augmented(
        [{"x": 10.0, "y": 0.0, "service": 0.0, "close": 24.0}],
        latest=1.2, crash=crash,
    )
    graph = build_schedule_graph((1,), inst, 0.0, m=5, objective="crash")
    back = inst.arc(1, inst.terminal_id)
    for start in graph.times[1]:
        assert start + travel_time(back, start) <= 1.2 + 1e-9
    lo = travel_time(inst.arc(0, 1), 0.0)
    assert graph.times[1][-1] < 1.2  # the raw grid top was clipped away
    sched = optimize_schedule((1,), inst, 0.0, m=5, objective="crash")
    assert sched.service_starts[0] > lo
    timed = RoutingSolution(((1,),), 0.0, (schedule_to_timing(sched, inst),))
    assert not check_feasibility(timed, inst)
    immediate = propagate_schedule(((1,),), inst, 0.0)
    assert crash_objective(timed, inst) < crash_objective(immediate, inst)


def test_implied_speeds_never_exceed_driveable_average():
    rng = random.Random(67)
    for trial in range(30):
        inst = random_instance(rng, 3)
        route = tuple(rng.sample([1, 2, 3], 3))
        sched = optimize_schedule(route, inst, 0.0, m=6, objective="crash")
        path = (0, *route, inst.terminal_id)
        departs = (0.0, *sched.departures)
        for k in range(len(path) - 1):
            arc = inst.arc(path[k], path[k + 1])
            fastest = arc.distance / travel_time(arc, departs[k])
            assert 0.0 < sched.implied_speeds[k] <= fastest + 1e-9


def test_total_cost_maps_to_route_objectives():
    rng = random.Random(71)
    for trial in range(20):
        inst = random_instance(rng, 3)
        route = tuple(rng.sample([1, 2, 3], 3))
        for objective, evaluate in (
                ("tti", tti_objective),
                ("time", time_objective),
                ("distance", distance_objective)):
            sched = optimize_schedule(route, inst, 0.0, 4, objective=objective)
            timed = RoutingSolution((route,), 0.0,
                                    (schedule_to_timing(sched, inst),))
            assert evaluate(timed, inst) == pytest.approx(sched.total_cost,
                                                          rel=1e-12)
        sched = optimize_schedule(route, inst, 0.0, 4, objective="crash")
        timed = RoutingSolution((route,), 0.0,
                                (schedule_to_timing(sched, inst),))
        assert crash_objective(timed, inst) == pytest.approx(
            -math.expm1(-sched.total_cost), abs=1e-15)


def test_distance_ties_resolve_to_earliest_times():
    rng = random.Random(83)
    inst = random_instance(rng, 4)
    route = (3, 1, 4, 2)
    prop = propagate_schedule((route,), inst, 2.0)
    sched = optimize_schedule(route, inst, 2.0, m=6, objective="distance")
    assert sched.service_starts == tuple(
        s.service_start for s in prop.timings[0].stops)


def test_dummy_stop_schedules_and_revalidates():
    rng = random.Random(29)
    inst = random_instance(rng, 3, dummies=2)
    dummy = inst.dummy_ids[0]
    route = (1, dummy, 2, 3)
    sched = optimize_schedule(route, inst, 0.0, m=3, objective="crash")
    timed = RoutingSolution((route,), 0.0, (schedule_to_timing(sched, inst),))
    assert not check_feasibility(timed, inst)
    pos = route.index(dummy) + 1
    graph = build_schedule_graph(route, inst, 0.0, m=3, objective="crash")
    assert len(graph.times[pos]) >= 1


def test_schedule_solution_keeps_empty_routes():
    rng = random.Random(31)
    inst = random_instance(rng, 3)
    prop = propagate_schedule(((2, 1, 3), ()), inst, 0.0)
    timed, scheds = schedule_solution(prop, inst, 3, objective="tti")
    assert len(timed.timings) == 2 and len(scheds) == 1
    assert timed.timings[1].stops == ()
    assert timed.timings[1].return_arrival == 0.0
    assert timed.routes == prop.routes


def test_infeasible_window_raises():
    inst = build_augmented([{"x": 30.0, "y": 0.0, "close": 0.5}])
    with pytest.raises(ScheduleInfeasibleError):
        build_schedule_graph((1,), inst, 0.0, m=3, objective="crash")


def test_unreachable_horizon_raises():
    inst = build_augmented([{"x": 30.0, "y": 0.0}], latest=1.5)
    with pytest.raises(ScheduleInfeasibleError):
        optimize_schedule((1,), inst, 0.0, m=2, objective="tti")


def test_schedule_argument_errors():
    inst = build_augmented([{"x": 3.0}])
    with pytest.raises(ScheduleError):
        optimize_schedule((1,), inst, 0.0, m=0)
    with pytest.raises(ScheduleError):
        optimize_schedule((), inst, 0.0, m=2)
    with pytest.raises(ScheduleError):
        optimize_schedule((1,), inst, 0.0, m=2, objective="speed")
    with pytest.raises(SolutionError):
        schedule_solution(RoutingSolution(((1,),)), inst, 2)
    with pytest.raises(MissingArcError):
        optimize_schedule((1, 1), inst, 0.0, m=2)


def test_leg_cost_objectives_agree_with_profiles():
    crash = TimeProfile((0.2,) + (0.05,) * 23)
    tti = TimeProfile((2.5,) + (1.25,) * 23)
    inst = build_augmented(
        [{"x": 10.0, "y": 0.0}],
        arc_overrides={(0, 1): {"crash": crash, "tti": tti}},
    )
    assert leg_cost(inst, 0, 1, 0.0, None, "crash") == -math.log1p(-0.2)
    assert leg_cost(inst, 0, 1, 0.0, None, "tti") == 2.5
    assert leg_cost(inst, 0, 1, 0.0, None, "distance") == 10.0
    # 10 miles at 30 mph: a third of an hour, plus no service at depot
    assert leg_cost(inst, 0, 1, 2.0, None, "time") == pytest.approx(1 / 3)
    w = ObjectiveWeights(0.5, 0.5, crash_scale=10.0)
    mixed = leg_cost(inst, 0, 1, 0.0, w, "weighted")
    assert mixed == pytest.approx(5.0 * -math.log1p(-0.2) + 0.5 * 2.5)
