"""Seeded randomized runs with fault injection and weak fairness.

Scheduling is reproducible: every run owns a ``random.Random(seed)``
(Mersenne Twister), and every random choice is ``rng.randrange(len(c))`` or
``rng.random()`` over candidates kept in canonical order (event name, then
binding).  The same scenario, seed, policy and step limit always give the
same trace.

Policies:

* ``uniform``: one enabled instance, uniformly, faults included.
* ``failure-eager``: scheduled faults fire as soon as they are due (step
  entries) or with their per-step probability; otherwise a uniform choice
  among non-fault instances.
* ``recovery-eager``: recovery events (TaskFailure, takeover, robot
  reallocation) first whenever one is enabled, otherwise uniform.

Weak fairness: each enabled non-fault instance has an age, the number of
consecutive steps it has been enabled without firing.  Once an age exceeds
the bound ``F`` the oldest such instance (canonical order breaks ties) fires
next.  Faults are environment choices and are exempt.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from . import model
from .checker import canonical_digest
from .kernel import EventInstance, GuardViolation, Machine, check_invariants, enabled, fire, value_key
from .model import FAULT_EVENTS, RECOVERY_EVENTS, SystemState
from .scenario import POLICIES, ParseError, Scenario, ScenarioInvalid

TRACE_FORMAT_VERSION = 1
RECORD_FIELDS = (
    "step", "event", "binding", "preDigest", "postDigest",
    "variantBefore", "variantAfter", "invariantsOk",
)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    event: EventInstance
    pre_digest: str
    post_digest: str
    variant_before: int
    variant_after: int
    invariants_ok: bool

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "event": self.event.event,
            "binding": [_encode(v) for v in self.event.binding],
            "preDigest": self.pre_digest,
            "postDigest": self.post_digest,
            "variantBefore": self.variant_before,
            "variantAfter": self.variant_after,
            "invariantsOk": self.invariants_ok,
        }


@dataclass
class Trace:
    scenario: str
    seed: int
    policy: str
    max_steps: int
    records: list[TraceRecord] = field(default_factory=list)
    states: list[SystemState] = field(default_factory=list)
    outcome: str = "max-steps"  # goal | quiescent | max-steps
    violations: list[str] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.outcome == "goal"

    def events(self) -> list[str]:
        return [r.event.event for r in self.records]

    def steps(self) -> list[tuple[SystemState, EventInstance, SystemState]]:
        return [(self.states[i], r.event, self.states[i + 1]) for i, r in enumerate(self.records)]


def _encode(value):
    if isinstance(value, (frozenset, set)):
        return sorted(value, key=value_key)
    return value


def _decode(value):
    if isinstance(value, list):
        return frozenset(_decode(v) for v in value)
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        return value
    raise ParseError(f"bad binding value {value!r}")


def default_fairness(machine: Machine, state: SystemState) -> int:
    return max(1, machine.instance_space(state))


class _FaultPlan:
    """Pending fault entries of one run; each entry fires at most once."""

    def __init__(self, scenario: Scenario):
        self.pending = list(scenario.faults.entries)

    def pick(self, step: int, faults: list[EventInstance], rng: random.Random) -> EventInstance | None:
        for entry in list(self.pending):
            name = "RobotFailure" if entry.kind == "robot" else "BaseStationFailure"
            matching = [f for f in faults if f.event == name and entry.matches(entry.kind, f.binding[0])]
            if entry.step is not None:
                if step < entry.step or not matching:
                    continue
                self.pending.remove(entry)
                return matching[0]
            if matching and rng.random() < entry.probability:
                self.pending.remove(entry)
                return matching[rng.randrange(len(matching))]
        return None


def run(
    scenario: Scenario,
    seed: int,
    policy: str | None = None,
    max_steps: int | None = None,
    fairness: int | None = None,
    machine: Machine | None = None,
) -> Trace:
    policy = policy or scenario.policy
    if policy not in POLICIES:
        raise ScenarioInvalid(f"unknown policy {policy!r}")
    max_steps = scenario.max_steps if max_steps is None else max_steps
    if max_steps < 1:
        raise ScenarioInvalid("max-steps must be >= 1")
    machine = machine or model.build_machine(scenario)
    state = model.initial_state(scenario)
    bound = fairness or scenario.fairness or default_fairness(machine, state)
    rng = random.Random(seed)
    plan = _FaultPlan(scenario)
    ages: dict[EventInstance, int] = {}

    trace = Trace(scenario.name, seed, policy, max_steps, states=[state])
    digest = canonical_digest(state)
    for step in range(max_steps):
        if model.is_goal(state):
            trace.outcome = "goal"
            break
        insts = enabled(machine, state)
        if not insts:
            trace.outcome = "quiescent"
            break
        ages = {i: ages.get(i, 0) + 1 for i in insts if i.event not in FAULT_EVENTS}
        overdue = [i for i in insts if ages.get(i, 0) > bound]
        if overdue:
            chosen = max(overdue, key=lambda i: ages[i])  # first max keeps canonical order
        else:
            chosen = _choose(policy, insts, step, plan, rng)
        ages.pop(chosen, None)

        post = fire(machine, state, chosen)
        post_digest = canonical_digest(post)
        bad = check_invariants(machine, post)
        for v in bad:
            trace.violations.append(f"step {step}: {chosen}: {v.name}: {v.witness}")
        trace.records.append(TraceRecord(
            step, chosen, digest, post_digest,
            machine.variant(state), machine.variant(post), not bad,
        ))
        trace.states.append(post)
        state, digest = post, post_digest
    else:
        if model.is_goal(state):
            trace.outcome = "goal"
    return trace


def _choose(policy, insts, step, plan, rng) -> EventInstance:
    if policy == "uniform":
        return insts[rng.randrange(len(insts))]
    if policy == "failure-eager":
        faults = [i for i in insts if i.event in FAULT_EVENTS]
        forced = plan.pick(step, faults, rng) if faults else None
        if forced is not None:
            return forced
        normal = [i for i in insts if i.event not in FAULT_EVENTS] or insts
        return normal[rng.randrange(len(normal))]
    recovery = [i for i in insts if i.event in RECOVERY_EVENTS]
    pool = recovery or insts
    return pool[rng.randrange(len(pool))]


@dataclass
class BatchSummary:
    runs: int
    completed: int
    mean_steps: float
    event_histogram: dict[str, int]
    traces: list[Trace] = field(default_factory=list, repr=False)


def _run_args(args):
    scenario, seed, policy, max_steps = args
    return run(scenario, seed, policy, max_steps)


def batch(
    scenario: Scenario,
    seeds: Sequence[int],
    policy: str | None = None,
    max_steps: int | None = None,
    workers: int = 1,
) -> BatchSummary:
    if not seeds:
        raise ValueError("batch needs at least one seed")
    jobs = [(scenario, s, policy, max_steps) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_args, jobs, chunksize=16))
    else:
        traces = [_run_args(j) for j in jobs]
    hist: Counter = Counter()
    for t in traces:
        hist.update(t.events())
    return BatchSummary(
        runs=len(traces),
        completed=sum(t.completed for t in traces),
        mean_steps=sum(len(t.records) for t in traces) / len(traces),
        event_histogram=dict(sorted(hist.items())),
        traces=traces,
    )


# -- trace files --------------------------------------------------------------

def write_trace(trace: Trace, fp: IO[str]) -> None:
    header = {
        "format-version": TRACE_FORMAT_VERSION,
        "scenario": trace.scenario,
        "seed": trace.seed,
        "policy": trace.policy,
        "maxSteps": trace.max_steps,
        "outcome": trace.outcome,
        "steps": len(trace.records),
    }
    fp.write(json.dumps(header) + "\n")
    for rec in trace.records:
        fp.write(json.dumps(rec.to_dict()) + "\n")


def read_trace(lines: Iterable[str]) -> tuple[dict, list[TraceRecord]]:
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ParseError("empty trace")
    try:
        header = json.loads(lines[0])
        raw = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise ParseError(f"trace is not line-delimited JSON: {exc}") from None
    if not isinstance(header, dict) or next(iter(header), None) != "format-version":
        raise ParseError("trace must start with a format-version header")
    if header["format-version"] != TRACE_FORMAT_VERSION:
        raise ParseError(f"unsupported trace format-version {header['format-version']!r}")
    records = []
    for i, r in enumerate(raw):
        if not isinstance(r, dict) or tuple(r) != RECORD_FIELDS:
            raise ParseError(f"trace record {i} does not have fields {RECORD_FIELDS}")
        if not isinstance(r["binding"], list) or not isinstance(r["event"], str):
            raise ParseError(f"trace record {i} has a malformed event")
        for key in ("step", "variantBefore", "variantAfter"):
            if isinstance(r[key], bool) or not isinstance(r[key], int):
                raise ParseError(f"trace record {i}: {key} must be an integer")
        if not isinstance(r["invariantsOk"], bool):
            raise ParseError(f"trace record {i}: invariantsOk must be a boolean")
        records.append(TraceRecord(
            r["step"],
            EventInstance(r["event"], tuple(_decode(v) for v in r["binding"])),
            str(r["preDigest"]), str(r["postDigest"]),
            r["variantBefore"], r["variantAfter"], r["invariantsOk"],
        ))
    return header, records


class ReplayMismatch(Exception):
    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step


def replay(scenario: Scenario, records: Sequence[TraceRecord], machine: Machine | None = None) -> list[SystemState]:
    """Re-execute ``records`` from the initial state, checking every digest."""
    machine = machine or model.build_machine(scenario)
    state = model.initial_state(scenario)
    states = [state]
    for i, rec in enumerate(records):
        if rec.step != i:
            raise ReplayMismatch(i, f"record numbered {rec.step}")
        if canonical_digest(state) != rec.pre_digest:
            raise ReplayMismatch(i, "pre-state digest differs")
        try:
            state = fire(machine, state, rec.event)
        except GuardViolation as exc:
            raise ReplayMismatch(i, str(exc)) from None
        if canonical_digest(state) != rec.post_digest:
            raise ReplayMismatch(i, "post-state digest differs")
        states.append(state)
    return states
