"""Naive reachable-set enumerator used as an independent oracle.

It only touches the guard and action callables of each event.  Parameter
values come from full Cartesian products over every declared station, robot,
zone, sector and every subset of robots/zones, never from the kernel's
domains.  Search is depth-first over a plain set of states.
"""
from __future__ import annotations

from itertools import chain, combinations, product

from ftmas.model import initial_state


def _subsets(items):
    items = list(items)
    return [frozenset(c) for c in chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))]


def naive_bindings(scenario) -> dict[str, list[tuple]]:
    bs, rb = list(scenario.stations), list(scenario.robots)
    zs, ss = range(1, scenario.zones + 1), range(1, scenario.sectors_per_zone + 1)
    robot_sets, zone_sets = _subsets(rb), _subsets(zs)
    return {
        "NewTask": list(product(bs, rb, zs, ss)),
        "TaskSuccess": list(product(bs, rb, zs, ss)),
        "TaskFailure": list(product(bs, rb)),
        "RobotFailure": [(r,) for r in rb],
        "UpdateMap": list(product(bs, zs, ss)),
        "ReassignNewBStoRBs": list(product(bs, bs, robot_sets)),
        "SendRobotsToBS": list(product(bs, bs, robot_sets)),
        "GetAdditionalResponsibility": list(product(bs, bs, zone_sets, robot_sets)),
        "BaseStationFailure": [(b,) for b in bs],
    }


def naive_enabled(machine, scenario, state) -> set[tuple]:
    table = naive_bindings(scenario)
    return {
        (ev.name, b) for ev in machine.events for b in table[ev.name] if ev.guard(state, *b)
    }


def brute_force(machine, scenario, limit: int = 10**4) -> tuple[int, int]:
    """(state count, edge count) of the reachable graph."""
    table = naive_bindings(scenario)
    start = initial_state(scenario)
    seen = {start}
    stack = [start]
    edges = 0
    while stack:
        state = stack.pop()
        for ev in machine.events:
            for b in table[ev.name]:
                if not ev.guard(state, *b):
                    continue
                nxt = ev.action(state, *b)
                edges += 1
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
                    if len(seen) > limit:
                        raise RuntimeError("oracle limit exceeded")
    return len(seen), edges
