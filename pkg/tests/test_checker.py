from dataclasses import replace

import pytest

from conftest import C, I, SIGMA0, scenario
from oracle import brute_force

from ftmas.checker import (
    BoundExceeded,
    PartialGraph,
    RefinementViolation,
    StateGraph,
    canonical_digest,
    check_refinement,
    explore,
    goal_reachability,
)
from ftmas.kernel import EventDef, EventInstance, Machine, fire
from ftmas.model import build_machine, initial_state, is_goal
from ftmas.scenario import Bounds


def ev(name, *binding):
    return EventInstance(name, tuple(binding))


def test_smoke_graph_is_three_states():
    sc = scenario("smoke")
    graph, report = explore(sc)
    m = build_machine(sc)
    s0 = initial_state(sc)
    s1 = fire(m, s0, ev("NewTask", "B1", "R1", 1, 1))
    s2 = fire(m, s1, ev("TaskSuccess", "B1", "R1", 1, 1))
    assert graph.states == [s0, s1, s2]
    assert [(a, e.event, b) for a, e, b in graph.edges] == [(0, "NewTask", 1), (1, "TaskSuccess", 2)]
    assert report.passed and report.goal_states == 1 and report.depth == 2


def test_sigma0_matches_oracle():
    sc = scenario("sigma0")
    graph, report = explore(sc)
    assert report.passed
    assert (report.state_count, report.edge_count) == brute_force(build_machine(sc), sc)


def test_constant_variant_flags_convergent_events():
    sc = scenario("sigma0")
    real = build_machine(sc)
    flat = Machine(real.events, real.invariants, lambda s: 0)
    _, report = explore(sc, machine=flat)
    flagged = {v["event"].split("(")[0] for v in report.variant_violations}
    assert flagged == {"TaskSuccess"}
    assert not report.passed


def test_increasing_variant_is_flagged():
    sc = scenario("smoke")
    real = build_machine(sc)
    # grows with the number of assigned robots
    grow = Machine(real.events, real.invariants, lambda s: sum(z > 0 for z in s.asgn_z))
    _, report = explore(sc, machine=grow)
    # NewTask raises it (0 -> 1); TaskSuccess lowers it, which is allowed
    assert [(v["event"], v["delta"]) for v in report.variant_violations] == [
        ("NewTask(B1,R1,1,1)", "increased")
    ]


def test_goal_reachability_trivial_cases():
    graph, _ = explore(scenario("smoke"))
    assert goal_reachability(graph) == []
    lone = StateGraph()
    lone.add(replace(SIGMA0, territory=((C,), (C,))))
    assert goal_reachability(lone) == []


def test_no_takeover_cannot_finish():
    graph, report = explore(scenario("no_takeover"))
    assert report.unreachable_to_goal
    assert report.deadlocks
    assert set(report.deadlocks) <= set(report.unreachable_to_goal)
    by_digest = {graph.digest(i): s for i, s in enumerate(graph.states)}
    assert not any(is_goal(by_digest[d]) for d in report.deadlocks)


def test_zoneless_station_strands_its_robot():
    graph, report = explore(scenario("idle_station"))
    by_digest = {graph.digest(i): s for i, s in enumerate(graph.states)}
    for d in report.deadlocks:
        st = by_digest[d]
        # every dead end: B2 failed while holding the last active robot
        assert st.operating == {"B1"} and st.active == {"R2"}
        assert st.attached[st.robots.index("R2")] == "B2"
        assert "B2" not in st.responsible


def test_broken_robot_failure_guard_strands_the_system():
    # without the budget and last-robot conjuncts every robot may die
    sc = scenario("sigma0_faults")
    real = build_machine(sc)
    broken = tuple(
        EventDef(e.name, e.status, e.params,
                 (lambda s, rb: rb in s.active) if e.name == "RobotFailure" else e.guard, e.action)
        for e in real.events
    )
    _, report = explore(sc, machine=Machine(broken, real.invariants, real.variant))
    assert report.unreachable_to_goal


def test_state_bound_gives_partial_result():
    with pytest.raises(BoundExceeded) as exc:
        explore(scenario("sigma0"), bounds=Bounds(max_states=2))
    assert exc.value.report.partial and exc.value.report.state_count == 2
    assert exc.value.report.to_dict()["verdict"] == "PARTIAL"
    with pytest.raises(PartialGraph):
        goal_reachability(exc.value.graph)


def test_depth_bound_gives_partial_result():
    with pytest.raises(BoundExceeded):
        explore(scenario("smoke"), bounds=Bounds(max_depth=1))
    _, report = explore(scenario("smoke"), bounds=Bounds(max_depth=2))
    assert report.passed


# -- refinement --------------------------------------------------------------------

def _steps(sc, insts):
    m = build_machine(sc)
    state, out = initial_state(sc), []
    for inst in insts:
        post = fire(m, state, inst)
        out.append((state, inst, post))
        state = post
    return out


def test_smoke_trace_refines():
    steps = _steps(scenario("smoke"), [ev("NewTask", "B1", "R1", 1, 1), ev("TaskSuccess", "B1", "R1", 1, 1)])
    verdicts = check_refinement(steps)
    assert verdicts[0].levels == {"M2": "stutter", "M1": "stutter", "M0": "stutter"}
    assert verdicts[1].levels == {"M2": "step", "M1": "step", "M0": "step"}


def test_partial_zone_only_steps_m2():
    sc = replace(scenario("smoke"), sectors_per_zone=2)
    steps = _steps(sc, [ev("NewTask", "B1", "R1", 1, 1), ev("TaskSuccess", "B1", "R1", 1, 1)])
    assert check_refinement(steps)[1].levels == {"M2": "step", "M1": "stutter", "M0": "stutter"}


def test_reverted_sector_is_rejected():
    good = _steps(scenario("smoke"), [ev("NewTask", "B1", "R1", 1, 1), ev("TaskSuccess", "B1", "R1", 1, 1)])
    done = good[-1][2]
    undone = replace(done, territory=((I,),))
    with pytest.raises(RefinementViolation):
        check_refinement(good + [(done, ev("NewTask", "B1", "R1", 1, 1), undone)])


def test_silent_completion_is_rejected():
    sc = scenario("smoke")
    s0 = initial_state(sc)
    with pytest.raises(RefinementViolation) as exc:
        check_refinement([(s0, ev("NewTask", "B1", "R1", 1, 1), replace(s0, territory=((C,),)))])
    assert exc.value.level == "M2"


def test_disconnected_steps_are_rejected():
    steps = _steps(scenario("smoke"), [ev("NewTask", "B1", "R1", 1, 1)])
    with pytest.raises(RefinementViolation):
        check_refinement(steps + steps)


# -- digests --------------------------------------------------------------------

def test_digest_is_a_function_of_the_value():
    copy = replace(SIGMA0)
    assert copy is not SIGMA0 and canonical_digest(copy) == canonical_digest(SIGMA0)
    a = replace(SIGMA0, msg=frozenset([("B2", 1, 1), ("B1", 2, 1)]))
    b = replace(SIGMA0, msg=frozenset([("B1", 2, 1), ("B2", 1, 1)]))
    assert canonical_digest(a) == canonical_digest(b)
    assert len(canonical_digest(SIGMA0)) == 16


def test_every_edge_changes_the_digest():
    graph, _ = explore(scenario("sigma0_faults"))
    assert all(graph.digest(a) != graph.digest(b) for a, _, b in graph.edges)
    assert len({graph.digest(i) for i in range(len(graph.states))}) == len(graph.states)


def test_parallel_exploration_is_identical():
    sc = scenario("sigma0_faults")
    g1, r1 = explore(sc)
    g2, r2 = explore(sc, workers=2)
    assert r1.to_dict() == r2.to_dict()
    assert g1.states == g2.states and g1.edges == g2.edges
