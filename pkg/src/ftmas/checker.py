"""Small-scope exhaustive checking of the refined model.

``explore`` enumerates the reachable graph breadth-first from the initial
state, checks every state against the model invariants and every edge for
variant and stability violations.  ``goal_reachability`` then certifies that
a goal state is reachable from every reachable state.  ``check_refinement``
replays a concrete run against the abstract goal machines.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from . import model
from .kernel import (
    EventDef,
    EventInstance,
    Machine,
    Status,
    check_invariants,
    enabled,
    fire,
    is_enabled,
    variant_delta,
    variant_violation,
)
from .model import COMPL, INCOMPL, SystemState
from .scenario import Bounds, Scenario


class BoundExceeded(Exception):
    """Exploration stopped at a bound; ``graph`` and ``report`` are partial."""

    def __init__(self, graph: "StateGraph", report: "ExplorationReport"):
        super().__init__(f"exploration bound hit after {report.state_count} states")
        self.graph = graph
        self.report = report


class PartialGraph(Exception):
    pass


class RefinementViolation(Exception):
    def __init__(self, step: int, level: str, reason: str):
        super().__init__(f"step {step}: {level}: {reason}")
        self.step = step
        self.level = level
        self.reason = reason


def canonical_digest(state: SystemState) -> str:
    blob = json.dumps(model.state_to_dict(state), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class StateGraph:
    states: list[SystemState] = field(default_factory=list)
    index: dict[SystemState, int] = field(default_factory=dict)
    edges: list[tuple[int, EventInstance, int]] = field(default_factory=list)
    initial: int = 0
    partial: bool = False
    _digests: dict[int, str] = field(default_factory=dict, repr=False)

    def digest(self, i: int) -> str:
        d = self._digests.get(i)
        if d is None:
            d = self._digests[i] = canonical_digest(self.states[i])
        return d

    def add(self, state: SystemState) -> tuple[int, bool]:
        i = self.index.get(state)
        if i is not None:
            return i, False
        i = len(self.states)
        self.states.append(state)
        self.index[state] = i
        return i, True


@dataclass
class ExplorationReport:
    scenario: str = ""
    state_count: int = 0
    edge_count: int = 0
    goal_states: int = 0
    depth: int = 0
    partial: bool = False
    invariant_violations: list[dict] = field(default_factory=list)
    variant_violations: list[dict] = field(default_factory=list)
    deadlocks: list[str] = field(default_factory=list)
    unreachable_to_goal: list[str] = field(default_factory=list)
    stability_violations: list[dict] = field(default_factory=list)
    event_edges: dict[str, int] = field(default_factory=dict)
    variant_deltas: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.partial and not (
            self.invariant_violations
            or self.variant_violations
            or self.deadlocks
            or self.unreachable_to_goal
            or self.stability_violations
        )

    def to_dict(self) -> dict:
        return {
            "format-version": 1,
            "kind": "exploration-report",
            "scenario": self.scenario,
            "verdict": "PASS" if self.passed else ("PARTIAL" if self.partial else "FAIL"),
            "stateCount": self.state_count,
            "edgeCount": self.edge_count,
            "goalStates": self.goal_states,
            "depth": self.depth,
            "partial": self.partial,
            "invariantViolations": self.invariant_violations,
            "variantViolations": self.variant_violations,
            "deadlocks": self.deadlocks,
            "unreachableToGoal": self.unreachable_to_goal,
            "stabilityViolations": self.stability_violations,
            "eventEdges": dict(sorted(self.event_edges.items())),
            "variantDeltas": {k: dict(sorted(v.items())) for k, v in sorted(self.variant_deltas.items())},
        }

    def summary(self) -> str:
        verdict = self.to_dict()["verdict"]
        return (
            f"{verdict}: {self.state_count} states, {self.edge_count} edges, "
            f"{len(self.invariant_violations)} invariant, {len(self.variant_violations)} variant, "
            f"{len(self.stability_violations)} stability violations, "
            f"{len(self.deadlocks)} deadlocks, {len(self.unreachable_to_goal)} states cannot reach the goal"
        )


def stability_witness(pre: SystemState, post: SystemState) -> str | None:
    """Cleaned sectors, zones and the goal must stay cleaned across an edge."""
    for z, (a, b) in enumerate(zip(pre.territory, post.territory), 1):
        for s, (x, y) in enumerate(zip(a, b), 1):
            if x is COMPL and y is not COMPL:
                return f"sector ({z},{s}) reverted to incompl"
    va, vb = model.abstract_view(pre), model.abstract_view(post)
    for z, (x, y) in enumerate(zip(va.zones, vb.zones), 1):
        if x is COMPL and y is not COMPL:
            return f"zone {z} reverted to incompl"
    if va.goal is COMPL and vb.goal is not COMPL:
        return "goal reverted to incompl"
    return None


# -- exploration ------------------------------------------------------------------

_worker_machine: Machine | None = None


def _init_worker(scenario: Scenario) -> None:
    global _worker_machine
    _worker_machine = model.build_machine(scenario)


def _expand_chunk(states: list[SystemState]) -> list[list[tuple[EventInstance, SystemState]]]:
    return [_successors(_worker_machine, s) for s in states]


def _successors(machine: Machine, state: SystemState) -> list[tuple[EventInstance, SystemState]]:
    return [(inst, fire(machine, state, inst)) for inst in enabled(machine, state)]


def explore(
    scenario: Scenario,
    bounds: Bounds | None = None,
    machine: Machine | None = None,
    workers: int = 1,
) -> tuple[StateGraph, ExplorationReport]:
    """Breadth-first exploration of every reachable state.

    The result is identical for any ``workers`` count: worker processes only
    compute successor lists, which are merged in frontier order.  Raises
    BoundExceeded (carrying the partial graph and report) when ``bounds`` are
    hit.
    """
    bounds = bounds or scenario.bounds
    if machine is not None and workers > 1:
        raise ValueError("a custom machine can only be explored with one worker")
    machine = machine or model.build_machine(scenario)
    init = model.initial_state(scenario)

    graph = StateGraph()
    report = ExplorationReport(scenario=scenario.name)
    event_edges: Counter = Counter()
    deltas: dict[str, Counter] = {}

    def discover(state: SystemState) -> int | None:
        i = graph.index.get(state)
        if i is not None:
            return i
        if len(graph.states) >= bounds.max_states:
            graph.partial = True
            return None
        i, _ = graph.add(state)
        for v in check_invariants(machine, state):
            report.invariant_violations.append(
                {"digest": graph.digest(i), "invariant": v.name, "witness": v.witness}
            )
        return i

    discover(init)
    frontier = [0]
    depth = 0
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(scenario,))
    try:
        while frontier:
            if depth >= bounds.max_depth:
                if any(enabled(machine, graph.states[i]) for i in frontier):
                    graph.partial = True
                break
            expansions = _expand(machine, [graph.states[i] for i in frontier], pool, workers)
            next_frontier = []
            for src, succ in zip(frontier, expansions):
                pre = graph.states[src]
                if not succ and not model.is_goal(pre):
                    report.deadlocks.append(graph.digest(src))
                for inst, post in succ:
                    known = post in graph.index
                    dst = discover(post)
                    if dst is None:
                        continue
                    if not known:
                        next_frontier.append(dst)
                    _check_edge(machine, graph, report, src, inst, dst, deltas)
                    graph.edges.append((src, inst, dst))
                    event_edges[inst.event] += 1
            frontier = next_frontier
            if frontier:
                depth += 1
    finally:
        if pool is not None:
            pool.shutdown()

    report.state_count = len(graph.states)
    report.edge_count = len(graph.edges)
    report.goal_states = sum(1 for s in graph.states if model.is_goal(s))
    report.depth = depth
    report.partial = graph.partial
    report.event_edges = dict(event_edges)
    report.variant_deltas = {k: dict(v) for k, v in deltas.items()}
    if graph.partial:
        raise BoundExceeded(graph, report)
    report.unreachable_to_goal = goal_reachability(graph)
    return graph, report


def _expand(machine, states, pool, workers):
    if pool is None:
        return [_successors(machine, s) for s in states]
    size = max(1, -(-len(states) // (workers * 4)))
    chunks = [states[i:i + size] for i in range(0, len(states), size)]
    out = []
    for part in pool.map(_expand_chunk, chunks):
        out.extend(part)
    return out


def _check_edge(machine, graph, report, src, inst, dst, deltas) -> None:
    pre, post = graph.states[src], graph.states[dst]
    status = machine.event(inst.event).status
    delta = variant_delta(machine, pre, inst, post)
    deltas.setdefault(inst.event, Counter())[delta.value] += 1
    if variant_violation(status, delta):
        report.variant_violations.append({
            "pre": graph.digest(src), "event": str(inst), "post": graph.digest(dst),
            "status": status.value, "delta": delta.value,
        })
    witness = stability_witness(pre, post)
    if witness is not None:
        report.stability_violations.append({
            "pre": graph.digest(src), "event": str(inst), "post": graph.digest(dst),
            "witness": witness,
        })


def goal_reachability(
    graph: StateGraph, goal: Callable[[Any], bool] = model.is_goal
) -> list[str]:
    """Digests of reachable states from which no goal state is reachable."""
    if graph.partial:
        raise PartialGraph("goal reachability needs a complete graph")
    preds: list[list[int]] = [[] for _ in graph.states]
    for src, _, dst in graph.edges:
        preds[dst].append(src)
    seen = [False] * len(graph.states)
    queue = deque(i for i, s in enumerate(graph.states) if goal(s))
    for i in queue:
        seen[i] = True
    while queue:
        for p in preds[queue.popleft()]:
            if not seen[p]:
                seen[p] = True
                queue.append(p)
    return [graph.digest(i) for i, ok in enumerate(seen) if not ok]


# -- refinement -----------------------------------------------------------------

def _body_m2(t, z, s, result):
    return t[:z - 1] + (t[z - 1][:s - 1] + (result,) + t[z - 1][s:],) + t[z:]


def abstract_machines(n: int, k: int) -> dict[str, Machine]:
    """The goal-level machines: M0 (goal), M1 (zones), M2 (sectors).

    Each has one anticipated ``Body`` event that may set a not-yet-completed
    component to any value, with the value chosen through an explicit
    ``result`` parameter.
    """
    results = lambda *_: (INCOMPL, COMPL)  # noqa: E731
    m0 = EventDef("Body", Status.ANTICIPATED, (results,),
                  lambda g, r: g is not COMPL, lambda g, r: r)
    m1 = EventDef("Body", Status.ANTICIPATED, (lambda *_: range(1, n + 1), results),
                  lambda zs, j, r: zs[j - 1] is not COMPL,
                  lambda zs, j, r: zs[:j - 1] + (r,) + zs[j:])
    m2 = EventDef("Body", Status.ANTICIPATED,
                  (lambda *_: range(1, n + 1), lambda *_: range(1, k + 1), results),
                  lambda t, z, s, r: t[z - 1][s - 1] is not COMPL, _body_m2)
    return {"M0": Machine((m0,)), "M1": Machine((m1,)), "M2": Machine((m2,))}


@dataclass(frozen=True)
class StepVerdict:
    step: int
    event: str
    levels: dict[str, str]  # level -> "step" | "stutter"


def check_refinement(
    steps: Sequence[tuple[SystemState, EventInstance, SystemState]],
) -> list[StepVerdict]:
    """Check a concrete run against M2/M1/M0 in lockstep.

    TaskSuccess(bs, rb, z, s) is witnessed by M2 ``Body(z, s, compl)``; a zone
    that becomes complete is witnessed by M1 ``Body(z, compl)``, and the last
    zone by M0 ``Body(compl)``.  Every other concrete event must stutter.
    After each step the gluing invariants between the concrete territory and
    the three abstract states are re-checked.  Raises RefinementViolation.
    """
    if not steps:
        return []
    first = steps[0][0]
    machines = abstract_machines(first.n, first.k)
    view = model.abstract_view(first)
    a2, a1, a0 = first.territory, view.zones, view.goal
    _glue(0, first, a2, a1, a0)
    verdicts = []
    prev_post = first
    for idx, (pre, inst, post) in enumerate(steps):
        if pre != prev_post:
            raise RefinementViolation(idx, "trace", "step does not start where the previous ended")
        levels = {"M2": "stutter", "M1": "stutter", "M0": "stutter"}
        if inst.event == "TaskSuccess":
            z, s = inst.binding[2], inst.binding[3]
            a2 = _abstract_step(machines["M2"], a2, EventInstance("Body", (z, s, COMPL)), idx, "M2")
            levels["M2"] = "step"
            if all(c is COMPL for c in a2[z - 1]):
                a1 = _abstract_step(machines["M1"], a1, EventInstance("Body", (z, COMPL)), idx, "M1")
                levels["M1"] = "step"
                if all(c is COMPL for c in a1):
                    a0 = _abstract_step(machines["M0"], a0, EventInstance("Body", (COMPL,)), idx, "M0")
                    levels["M0"] = "step"
        _glue(idx, post, a2, a1, a0)
        verdicts.append(StepVerdict(idx, str(inst), levels))
        prev_post = post
    return verdicts


def _abstract_step(machine: Machine, state, inst: EventInstance, idx: int, level: str):
    if not is_enabled(machine, state, inst):
        raise RefinementViolation(idx, level, f"abstract {inst} is not enabled")
    return fire(machine, state, inst)


def _glue(idx: int, concrete: SystemState, a2, a1, a0) -> None:
    if concrete.territory != a2:
        raise RefinementViolation(idx, "M2", "territory differs from the abstract sector map")
    for j, row in enumerate(a2, 1):
        if (a1[j - 1] is COMPL) != all(c is COMPL for c in row):
            raise RefinementViolation(idx, "M1", f"zone {j} gluing invariant broken")
    if (a0 is COMPL) != all(z is COMPL for z in a1):
        raise RefinementViolation(idx, "M0", "goal gluing invariant broken")


def edges_as_steps(graph: StateGraph, path: Iterable[int]) -> list[tuple]:
    """Turn a list of edge indices of ``graph`` into refinement steps."""
    return [(graph.states[graph.edges[e][0]], graph.edges[e][1], graph.states[graph.edges[e][2]])
            for e in path]
