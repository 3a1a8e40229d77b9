"""Generic guarded-event machine.

A machine is a set of named events.  Each event has a list of parameter
domains, a guard over ``(state, *binding)`` and a deterministic action that
returns a new state value.  States are never mutated.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, NamedTuple

Domain = Callable[..., Iterable[Any]]
Guard = Callable[..., bool]
Action = Callable[..., Any]
InvariantFn = Callable[[Any], "str | None"]


class Status(str, enum.Enum):
    ANTICIPATED = "anticipated"
    CONVERGENT = "convergent"
    ORDINARY = "ordinary"


class Delta(str, enum.Enum):
    DECREASED = "decreased"
    UNCHANGED = "unchanged"
    INCREASED = "increased"


class GuardViolation(Exception):
    """Raised when firing an instance that is not enabled."""


def natural_key(text: str) -> tuple:
    # "R2" < "R10"
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", text) if p)


def value_key(value: Any) -> tuple:
    """Total order over binding values: ints, identifiers, then sets."""
    if isinstance(value, bool):
        return (0, int(value))
    if isinstance(value, int):
        return (0, value)
    if isinstance(value, str):
        return (1, natural_key(value))
    if isinstance(value, (frozenset, set)):
        items = sorted((value_key(v) for v in value))
        return (2, len(items), tuple(items))
    if isinstance(value, tuple):
        return (3, tuple(value_key(v) for v in value))
    raise TypeError(f"unorderable binding value {value!r}")


def format_value(value: Any) -> str:
    if isinstance(value, (frozenset, set)):
        return "{" + ",".join(format_value(v) for v in sorted(value, key=value_key)) + "}"
    return str(value)


@dataclass(frozen=True)
class EventInstance:
    event: str
    binding: tuple = ()

    def sort_key(self) -> tuple:
        return (self.event, tuple(value_key(v) for v in self.binding))

    def __str__(self) -> str:
        return f"{self.event}({','.join(format_value(v) for v in self.binding)})"


@dataclass(frozen=True)
class EventDef:
    """One guarded event.

    ``params`` holds one domain callable per parameter.  A domain is called as
    ``domain(state, *earlier_values)`` and returns the finite candidate values
    for that position, so later domains may depend on earlier choices.
    """

    name: str
    status: Status
    params: tuple[Domain, ...]
    guard: Guard
    action: Action

    @property
    def arity(self) -> int:
        return len(self.params)

    def bindings(self, state: Any) -> Iterable[tuple]:
        def walk(prefix: tuple):
            if len(prefix) == len(self.params):
                yield prefix
                return
            for value in self.params[len(prefix)](state, *prefix):
                yield from walk(prefix + (value,))

        return walk(())


class Violation(NamedTuple):
    name: str
    witness: str


@dataclass(frozen=True)
class Machine:
    events: tuple[EventDef, ...]
    invariants: tuple[tuple[str, InvariantFn], ...] = ()
    variant: Callable[[Any], int] | None = None
    _by_name: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = [e.name for e in self.events]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate event names in {names}")
        inv_names = [n for n, _ in self.invariants]
        if len(set(inv_names)) != len(inv_names):
            raise ValueError(f"duplicate invariant names in {inv_names}")
        ordered = tuple(sorted(self.events, key=lambda e: e.name))
        object.__setattr__(self, "events", ordered)
        object.__setattr__(self, "_by_name", {e.name: e for e in ordered})

    def event(self, name: str) -> EventDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise GuardViolation(f"unknown event {name!r}") from None

    def instance_space(self, state: Any) -> int:
        """Number of candidate bindings across all events from ``state``."""
        return sum(sum(1 for _ in e.bindings(state)) for e in self.events)


def enabled(machine: Machine, state: Any) -> list[EventInstance]:
    """All enabled instances, sorted by event name then binding."""
    result = []
    for ev in machine.events:
        found = [EventInstance(ev.name, b) for b in ev.bindings(state) if ev.guard(state, *b)]
        found.sort(key=EventInstance.sort_key)
        result.extend(found)
    return result


def is_enabled(machine: Machine, state: Any, inst: EventInstance) -> bool:
    ev = machine.event(inst.event)
    binding = inst.binding
    if len(binding) != ev.arity:
        return False
    for i, domain in enumerate(ev.params):
        if binding[i] not in set(domain(state, *binding[:i])):
            return False
    return bool(ev.guard(state, *binding))


def fire(machine: Machine, state: Any, inst: EventInstance) -> Any:
    if not is_enabled(machine, state, inst):
        raise GuardViolation(f"{inst} is not enabled")
    return machine.event(inst.event).action(state, *inst.binding)


def check_invariants(machine: Machine, state: Any) -> list[Violation]:
    out = []
    for name, pred in machine.invariants:
        witness = pred(state)
        if witness is not None:
            out.append(Violation(name, witness))
    return out


def variant_delta(machine: Machine, pre: Any, inst: EventInstance, post: Any) -> Delta:
    if machine.variant is None:
        return Delta.UNCHANGED
    before, after = machine.variant(pre), machine.variant(post)
    if after < before:
        return Delta.DECREASED
    if after > before:
        return Delta.INCREASED
    return Delta.UNCHANGED


def variant_violation(status: Status, delta: Delta) -> bool:
    """Convergent events must decrease the variant; nothing may increase it."""
    if delta is Delta.INCREASED:
        return True
    return status is Status.CONVERGENT and delta is not Delta.DECREASED

