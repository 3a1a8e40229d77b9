"""Scenario documents: instance sizing, allocation, faults, run settings.

Scenarios are YAML mappings whose first key is ``format-version``.  Unknown
keys are rejected so that a typo cannot silently disable fault injection.

    format-version: 1
    name: sigma0
    zones: 2
    sectors-per-zone: 1
    stations: [B1, B2]
    robots: [R1, R2]
    responsible: {1: B1, 2: B2}
    attached: {R1: B1, R2: B2}
    faults:
      robot-budget: 1
      station-budget: 1
      entries:
        - {kind: station, agent: B1, step: 0}
        - {kind: robot, probability: 0.1}
    policy: uniform
    seeds: [0, 1, 2]
    max-steps: 1000
    bounds: {max-states: 1000000, max-depth: 10000}
    guard-variant: pr8-strict
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .kernel import natural_key

FORMAT_VERSION = 1
POLICIES = ("uniform", "failure-eager", "recovery-eager")
GUARD_VARIANTS = ("pr8-strict", "pr8-literal")
FAULT_KINDS = ("robot", "station")
EVENT_NAMES = (
    "BaseStationFailure",
    "GetAdditionalResponsibility",
    "NewTask",
    "ReassignNewBStoRBs",
    "RobotFailure",
    "SendRobotsToBS",
    "TaskFailure",
    "TaskSuccess",
    "UpdateMap",
)


class ParseError(ValueError):
    """The document is malformed or does not follow the schema."""


class ScenarioInvalid(ValueError):
    """The document parsed but violates a scenario constraint."""


@dataclass(frozen=True)
class FaultEntry:
    """A single planned fault.

    ``step`` entries fire at (or as soon as possible after) the given step
    under the failure-eager policy; ``probability`` entries fire with that
    chance on each step where a matching failure is enabled.  ``agent=None``
    matches any agent of the kind.
    """

    kind: str
    agent: str | None = None
    step: int | None = None
    probability: float | None = None

    def matches(self, kind: str, agent: str) -> bool:
        return self.kind == kind and (self.agent is None or self.agent == agent)


@dataclass(frozen=True)
class FaultSchedule:
    entries: tuple[FaultEntry, ...] = ()
    robot_budget: int = 0
    station_budget: int = 0

    def candidates(self, kind: str, declared: tuple[str, ...]) -> frozenset[str]:
        """Agents of ``kind`` that the exhaustive checker may fail."""
        budget = self.robot_budget if kind == "robot" else self.station_budget
        if budget == 0:
            return frozenset()
        mine = [e for e in self.entries if e.kind == kind]
        if not mine or any(e.agent is None for e in mine):
            return frozenset(declared)
        return frozenset(e.agent for e in mine)


@dataclass(frozen=True)
class Bounds:
    max_states: int = 1_000_000
    max_depth: int = 10_000


@dataclass(frozen=True)
class Scenario:
    zones: int
    sectors_per_zone: int
    stations: tuple[str, ...]
    robots: tuple[str, ...]
    responsible: dict[int, str]
    attached: dict[str, str]
    faults: FaultSchedule = field(default_factory=FaultSchedule)
    name: str = "scenario"
    policy: str = "uniform"
    seeds: tuple[int, ...] = (0,)
    max_steps: int = 1000
    fairness: int | None = None
    bounds: Bounds = field(default_factory=Bounds)
    guard_variant: str = "pr8-strict"
    disabled_events: tuple[str, ...] = ()

    def validate(self) -> "Scenario":
        if self.zones < 1:
            raise ScenarioInvalid(f"zones must be >= 1, got {self.zones}")
        if self.sectors_per_zone < 1:
            raise ScenarioInvalid(f"sectors-per-zone must be >= 1, got {self.sectors_per_zone}")
        for kind, ids in (("station", self.stations), ("robot", self.robots)):
            if not ids:
                raise ScenarioInvalid(f"at least one {kind} is required")
            if len(set(ids)) != len(ids):
                raise ScenarioInvalid(f"duplicate {kind} ids: {list(ids)}")
        if set(self.stations) & set(self.robots):
            raise ScenarioInvalid("robot and station ids must be disjoint")
        for z in range(1, self.zones + 1):
            bs = self.responsible.get(z)
            if bs is None:
                raise ScenarioInvalid(f"zone {z} has no responsible station")
            if bs not in self.stations:
                raise ScenarioInvalid(f"zone {z} is assigned to undeclared station {bs!r}")
        extra = set(self.responsible) - set(range(1, self.zones + 1))
        if extra:
            raise ScenarioInvalid(f"responsible names unknown zones {sorted(extra)}")
        for rb in self.robots:
            if rb not in self.attached:
                raise ScenarioInvalid(f"robot {rb!r} is not attached to a station")
        for rb, bs in self.attached.items():
            if rb not in self.robots:
                raise ScenarioInvalid(f"attached names undeclared robot {rb!r}")
            if bs not in self.stations:
                raise ScenarioInvalid(f"robot {rb!r} is attached to undeclared station {bs!r}")
        f = self.faults
        if not 0 <= f.robot_budget <= len(self.robots) - 1:
            raise ScenarioInvalid(f"robot-budget must be in 0..{len(self.robots) - 1}")
        if not 0 <= f.station_budget <= len(self.stations) - 1:
            raise ScenarioInvalid(f"station-budget must be in 0..{len(self.stations) - 1}")
        for e in f.entries:
            if e.kind not in FAULT_KINDS:
                raise ScenarioInvalid(f"fault kind must be one of {FAULT_KINDS}, got {e.kind!r}")
            pool = self.robots if e.kind == "robot" else self.stations
            if e.agent is not None and e.agent not in pool:
                raise ScenarioInvalid(f"fault names undeclared {e.kind} {e.agent!r}")
            if (e.step is None) == (e.probability is None):
                raise ScenarioInvalid("each fault entry needs exactly one of step/probability")
            if e.step is not None and e.step < 0:
                raise ScenarioInvalid("fault step must be >= 0")
            if e.probability is not None and not 0.0 <= e.probability <= 1.0:
                raise ScenarioInvalid("fault probability must be in [0, 1]")
        if self.policy not in POLICIES:
            raise ScenarioInvalid(f"policy must be one of {POLICIES}")
        if self.guard_variant not in GUARD_VARIANTS:
            raise ScenarioInvalid(f"guard-variant must be one of {GUARD_VARIANTS}")
        unknown = set(self.disabled_events) - set(EVENT_NAMES)
        if unknown:
            raise ScenarioInvalid(f"disabled-events names unknown events {sorted(unknown)}")
        if not self.seeds:
            raise ScenarioInvalid("seeds must be non-empty")
        if self.max_steps < 1:
            raise ScenarioInvalid("max-steps must be >= 1")
        if self.fairness is not None and self.fairness < 1:
            raise ScenarioInvalid("fairness must be >= 1")
        if self.bounds.max_states < 1 or self.bounds.max_depth < 1:
            raise ScenarioInvalid("bounds must be positive")
        return self

    @property
    def sorted_stations(self) -> tuple[str, ...]:
        return tuple(sorted(self.stations, key=natural_key))

    @property
    def sorted_robots(self) -> tuple[str, ...]:
        return tuple(sorted(self.robots, key=natural_key))


# -- parsing ----------------------------------------------------------------

_TOP_KEYS = {
    "format-version", "name", "zones", "sectors-per-zone", "stations", "robots",
    "responsible", "attached", "faults", "policy", "seeds", "max-steps",
    "fairness", "bounds", "guard-variant", "disabled-events",
}
_REQUIRED = {"format-version", "zones", "sectors-per-zone", "stations", "robots",
             "responsible", "attached"}
_FAULT_KEYS = {"robot-budget", "station-budget", "entries"}
_ENTRY_KEYS = {"kind", "agent", "step", "probability"}
_BOUND_KEYS = {"max-states", "max-depth"}


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: expected an integer, got {value!r}")
    return value


def _str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ParseError(f"{where}: expected a non-empty string, got {value!r}")
    return value


def _mapping(value: Any, where: str, allowed: set[str] | None = None) -> dict:
    if not isinstance(value, dict):
        raise ParseError(f"{where}: expected a mapping")
    if allowed is not None:
        unknown = set(value) - allowed
        if unknown:
            raise ParseError(f"{where}: unknown keys {sorted(map(str, unknown))}")
    return value


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise ParseError(f"{where}: expected a list")
    return tuple(_str(v, where) for v in value)


def _faults(doc: Any) -> FaultSchedule:
    doc = _mapping(doc, "faults", _FAULT_KEYS)
    entries = []
    raw_entries = doc.get("entries", [])
    if not isinstance(raw_entries, list):
        raise ParseError("faults.entries: expected a list")
    for i, raw in enumerate(raw_entries):
        where = f"faults.entries[{i}]"
        raw = _mapping(raw, where, _ENTRY_KEYS)
        if "kind" not in raw:
            raise ParseError(f"{where}: missing 'kind'")
        prob = raw.get("probability")
        if prob is not None:
            if isinstance(prob, bool) or not isinstance(prob, (int, float)):
                raise ParseError(f"{where}.probability: expected a number")
            prob = float(prob)
        entries.append(FaultEntry(
            kind=_str(raw["kind"], f"{where}.kind"),
            agent=None if raw.get("agent") is None else _str(raw["agent"], f"{where}.agent"),
            step=None if raw.get("step") is None else _int(raw["step"], f"{where}.step"),
            probability=prob,
        ))
    return FaultSchedule(
        entries=tuple(entries),
        robot_budget=_int(doc.get("robot-budget", 0), "faults.robot-budget"),
        station_budget=_int(doc.get("station-budget", 0), "faults.station-budget"),
    )


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises ParseError for malformed input and ScenarioInvalid when the
    document is well-formed but violates a constraint.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"not a valid YAML document: {exc}") from None
    doc = _mapping(doc, "scenario", _TOP_KEYS)
    if not doc or next(iter(doc)) != "format-version":
        raise ParseError("the first key must be 'format-version'")
    if doc["format-version"] != FORMAT_VERSION:
        raise ParseError(f"unsupported format-version {doc['format-version']!r}")
    missing = _REQUIRED - set(doc)
    if missing:
        raise ParseError(f"missing keys {sorted(missing)}")

    responsible = {}
    for z, bs in _mapping(doc["responsible"], "responsible").items():
        responsible[_int(z, "responsible key")] = _str(bs, f"responsible[{z}]")
    attached = {
        _str(rb, "attached key"): _str(bs, f"attached[{rb}]")
        for rb, bs in _mapping(doc["attached"], "attached").items()
    }
    bounds_doc = _mapping(doc.get("bounds", {}), "bounds", _BOUND_KEYS)
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list):
        raise ParseError("seeds: expected a list")
    fairness = doc.get("fairness")

    scenario = Scenario(
        zones=_int(doc["zones"], "zones"),
        sectors_per_zone=_int(doc["sectors-per-zone"], "sectors-per-zone"),
        stations=_str_list(doc["stations"], "stations"),
        robots=_str_list(doc["robots"], "robots"),
        responsible=responsible,
        attached=attached,
        faults=_faults(doc.get("faults", {})),
        name=_str(doc.get("name", "scenario"), "name"),
        policy=_str(doc.get("policy", "uniform"), "policy"),
        seeds=tuple(_int(s, "seeds") for s in seeds),
        max_steps=_int(doc.get("max-steps", 1000), "max-steps"),
        fairness=None if fairness is None else _int(fairness, "fairness"),
        bounds=Bounds(
            max_states=_int(bounds_doc.get("max-states", Bounds.max_states), "bounds.max-states"),
            max_depth=_int(bounds_doc.get("max-depth", Bounds.max_depth), "bounds.max-depth"),
        ),
        guard_variant=_str(doc.get("guard-variant", "pr8-strict"), "guard-variant"),
        disabled_events=_str_list(doc.get("disabled-events", []), "disabled-events"),
    )
    return scenario.validate()


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text)
