from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import C, I, SIGMA0, scenario
from oracle import naive_enabled

from ftmas.checker import explore
from ftmas.kernel import (
    Delta,
    EventDef,
    EventInstance,
    GuardViolation,
    Machine,
    Status,
    check_invariants,
    enabled,
    fire,
    value_key,
    variant_delta,
    variant_violation,
)

NEW_TASK = EventInstance("NewTask", ("B1", "R1", 1, 1))
SIGMA_GOAL = replace(
    SIGMA0,
    territory=((C,), (C,)),
    local_map=(((C,), (C,)), ((C,), (C,))),
    counter=0,
)


def test_empty_machine_has_nothing_enabled():
    assert enabled(Machine(()), SIGMA0) == []


def test_new_task_enabled_in_sigma0(machine):
    # the guard, conjunct by conjunct, on σ0
    s = SIGMA0
    assert "B1" in s.operating and "R1" in s.active
    assert s.attached[0] == "B1" and s.responsible[0] == "B1"
    assert s.asgn_z[0] == 0
    assert s.local_map[0][0][0] is not C
    assert (1, 1) not in set(zip(s.asgn_z, s.asgn_s))
    assert NEW_TASK in enabled(machine, s)


def test_goal_state_enables_no_task_success(machine):
    assert not any(i.event == "TaskSuccess" for i in enabled(machine, SIGMA_GOAL))


def test_enabled_is_canonically_ordered(machine):
    insts = enabled(machine, SIGMA0)
    assert insts == sorted(insts, key=EventInstance.sort_key)
    assert len(set(insts)) == len(insts)


def test_fire_new_task(machine):
    post = fire(machine, SIGMA0, NEW_TASK)
    assert post == replace(SIGMA0, asgn_z=(1, 0), asgn_s=(1, 0))
    assert SIGMA0.asgn_z == (0, 0)  # input untouched


def test_fire_disabled_raises(machine):
    with pytest.raises(GuardViolation):
        fire(machine, SIGMA_GOAL, EventInstance("TaskSuccess", ("B1", "R1", 1, 1)))
    with pytest.raises(GuardViolation):
        fire(machine, SIGMA0, EventInstance("NewTask", ("B1", "R1", 1)))
    with pytest.raises(GuardViolation):
        fire(machine, SIGMA0, EventInstance("Teleport", ()))


def test_fire_is_deterministic(machine):
    for inst in enabled(machine, SIGMA0):
        assert fire(machine, SIGMA0, inst) == fire(machine, SIGMA0, inst)


def test_check_invariants_sigma0(machine):
    assert check_invariants(machine, SIGMA0) == []


def test_counter_violation_is_reported_alone(machine):
    bad = check_invariants(machine, replace(SIGMA0, counter=5))
    assert [v.name for v in bad] == ["counter-consistency"]
    assert "counter=5" in bad[0].witness


def test_stale_compl_mark_breaks_pr6(machine):
    # B1 believes (1,1) is cleaned while the territory says otherwise
    state = replace(SIGMA0, local_map=(((C,), (I,)), SIGMA0.local_map[1]))
    names = [v.name for v in check_invariants(machine, state)]
    assert "PR6-global-local" in names


def test_variant_delta_task_success(machine):
    sigma1 = replace(SIGMA0, asgn_z=(1, 0), asgn_s=(1, 0))
    inst = EventInstance("TaskSuccess", ("B1", "R1", 1, 1))
    assert sigma1.counter == 2
    assert variant_delta(machine, sigma1, inst, fire(machine, sigma1, inst)) is Delta.DECREASED


def test_variant_delta_new_task(machine):
    assert variant_delta(machine, SIGMA0, NEW_TASK, fire(machine, SIGMA0, NEW_TASK)) is Delta.UNCHANGED


def test_variant_delta_task_failure(machine):
    state = replace(SIGMA0, asgn_z=(1, 0), asgn_s=(1, 0), active=frozenset({"R2"}))
    inst = EventInstance("TaskFailure", ("B1", "R1"))
    post = fire(machine, state, inst)
    # independent recount of the attached robots
    assert sum(b is not None for b in state.attached) == 2
    assert sum(b is not None for b in post.attached) == 1
    assert variant_delta(machine, state, inst, post) is Delta.DECREASED


def test_variant_violation_rules():
    assert variant_violation(Status.ORDINARY, Delta.INCREASED)
    assert variant_violation(Status.CONVERGENT, Delta.UNCHANGED)
    assert not variant_violation(Status.CONVERGENT, Delta.DECREASED)
    assert not variant_violation(Status.ANTICIPATED, Delta.UNCHANGED)


def test_duplicate_event_names_rejected():
    ev = EventDef("E", Status.ORDINARY, (), lambda s: True, lambda s: s)
    with pytest.raises(ValueError):
        Machine((ev, ev))


def test_value_key_orders_ids_naturally():
    assert sorted(["R10", "R2", "R1"], key=value_key) == ["R1", "R2", "R10"]
    assert value_key(frozenset({"R2"})) < value_key(frozenset({"R1", "R2"}))


def test_dependent_domains_are_enumerated():
    # second parameter ranges over 0..first
    ev = EventDef("Pair", Status.ORDINARY,
                  (lambda s: range(3), lambda s, a: range(a + 1)),
                  lambda s, a, b: True, lambda s, a, b: s)
    got = [i.binding for i in enabled(Machine((ev,)), None)]
    assert got == [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]


_FAULTY = scenario("sigma0_faults")
_GRAPH, _ = explore(_FAULTY)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=len(_GRAPH.states) - 1))
def test_enabled_matches_brute_force_guard_evaluation(i):
    from ftmas.model import build_machine

    m = build_machine(_FAULTY)
    state = _GRAPH.states[i]
    kernel = {(x.event, x.binding) for x in enabled(m, state)}
    assert kernel == naive_enabled(m, _FAULTY, state)
