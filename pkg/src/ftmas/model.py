"""The fully refined fault-tolerant multi-robot cleaning system.

The territory is split into ``n`` zones of ``k`` sectors.  Base stations are
responsible for zones and coordinate the robots attached to them.  Robots and
stations may fail; the recovery events move zones and robots between
stations so that the whole territory still gets cleaned.

Zones and sectors are numbered from 1.  An assignment of 0 means "none".
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import partial
from itertools import combinations
from typing import Iterator

from .kernel import EventDef, Machine, Status
from .scenario import Scenario


class CleanState(str, enum.Enum):
    INCOMPL = "incompl"
    COMPL = "compl"


INCOMPL = CleanState.INCOMPL
COMPL = CleanState.COMPL

FAULT_EVENTS = frozenset({"RobotFailure", "BaseStationFailure"})
RECOVERY_EVENTS = frozenset(
    {"TaskFailure", "GetAdditionalResponsibility", "ReassignNewBStoRBs", "SendRobotsToBS"}
)

Row = tuple[CleanState, ...]


@dataclass(frozen=True)
class SystemState:
    n: int
    k: int
    stations: tuple[str, ...]
    robots: tuple[str, ...]
    territory: tuple[Row, ...]
    responsible: tuple[str, ...]
    # aligned with ``robots``; None = not in dom(attached)
    attached: tuple[str | None, ...]
    # aligned with ``stations``, then zones; None = zone outside the map's domain
    local_map: tuple[tuple[Row | None, ...], ...]
    msg: frozenset[tuple[str, int, int]]
    asgn_z: tuple[int, ...]
    asgn_s: tuple[int, ...]
    active: frozenset[str]
    operating: frozenset[str]
    counter: int

    def attached_to(self, rb: str) -> str | None:
        return self.attached[self.robots.index(rb)]

    def robots_of(self, bs: str) -> list[str]:
        return [r for r, b in zip(self.robots, self.attached) if b == bs]

    def zones_of(self, bs: str) -> list[int]:
        return [z for z, b in enumerate(self.responsible, 1) if b == bs]

    def assignment(self, rb: str) -> tuple[int, int]:
        i = self.robots.index(rb)
        return self.asgn_z[i], self.asgn_s[i]

    def lm(self, bs: str, z: int) -> Row | None:
        return self.local_map[self.stations.index(bs)][z - 1]

    def has_open_work(self, bs: str) -> bool:
        """Whether ``bs`` knows of an uncleaned sector in one of its zones."""
        for z in self.zones_of(bs):
            row = self.lm(bs, z)
            if row is not None and INCOMPL in row:
                return True
        return False

    def pending_for(self, bs: str) -> bool:
        return any(m[0] == bs for m in self.msg)


@dataclass(frozen=True)
class AbstractView:
    zones: tuple[CleanState, ...]
    goal: CleanState


def _put(t: tuple, i: int, v) -> tuple:
    return t[:i] + (v,) + t[i + 1:]


def initial_state(scenario: Scenario) -> SystemState:
    scenario.validate()
    n, k = scenario.zones, scenario.sectors_per_zone
    stations, robots = scenario.sorted_stations, scenario.sorted_robots
    row = (INCOMPL,) * k
    full_map = (row,) * n
    return SystemState(
        n=n,
        k=k,
        stations=stations,
        robots=robots,
        territory=full_map,
        responsible=tuple(scenario.responsible[z] for z in range(1, n + 1)),
        attached=tuple(scenario.attached[r] for r in robots),
        local_map=(full_map,) * len(stations),
        msg=frozenset(),
        asgn_z=(0,) * len(robots),
        asgn_s=(0,) * len(robots),
        active=frozenset(robots),
        operating=frozenset(stations),
        counter=n * k,
    )


# -- derived views ------------------------------------------------------------

def abstract_view(st: SystemState) -> AbstractView:
    zones = tuple(COMPL if all(c is COMPL for c in row) else INCOMPL for row in st.territory)
    goal = COMPL if all(z is COMPL for z in zones) else INCOMPL
    return AbstractView(zones, goal)


def is_goal(st: SystemState) -> bool:
    return all(c is COMPL for row in st.territory for c in row)


def variant(st: SystemState) -> int:
    return st.counter + sum(1 for b in st.attached if b is not None)


def eligible(agent: str, z: int, st: SystemState) -> bool:
    """Whether ``agent`` may currently work towards cleaning zone ``z``."""
    if not 1 <= z <= st.n:
        return False
    if agent in st.stations:
        return agent in st.operating and st.responsible[z - 1] == agent
    if agent in st.robots:
        bs = st.attached_to(agent)
        return agent in st.active and bs is not None and st.responsible[z - 1] == bs
    return False


def agent_knows_zone_clean(agent: str, z: int, st: SystemState) -> bool:
    """A station's local knowledge of a zone (false when outside its map)."""
    row = st.lm(agent, z)
    return row is not None and all(c is COMPL for c in row)


# -- model configuration --------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    robot_budget: int = 0
    station_budget: int = 0
    robot_candidates: frozenset[str] = frozenset()
    station_candidates: frozenset[str] = frozenset()
    pr8_literal: bool = False

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "ModelConfig":
        f = scenario.faults
        return cls(
            robot_budget=f.robot_budget,
            station_budget=f.station_budget,
            robot_candidates=f.candidates("robot", scenario.robots),
            station_candidates=f.candidates("station", scenario.stations),
            pr8_literal=scenario.guard_variant == "pr8-literal",
        )


# -- parameter domains ----------------------------------------------------------

def _stations(st: SystemState, *_) -> tuple[str, ...]:
    return st.stations


def _robots(st: SystemState, *_) -> tuple[str, ...]:
    return st.robots


def _robots_of_first(st: SystemState, bs: str, *_) -> list[str]:
    return st.robots_of(bs)


def _zones(st: SystemState, *_) -> range:
    return range(1, st.n + 1)


def _sectors(st: SystemState, *_) -> range:
    return range(1, st.k + 1)


def _robot_groups(st: SystemState, bs_i: str, *_) -> Iterator[frozenset[str]]:
    """Non-empty groups drawn from the robots attached to ``bs_i``."""
    mine = st.robots_of(bs_i)
    for size in range(1, len(mine) + 1):
        for group in combinations(mine, size):
            yield frozenset(group)


def _failed_zones(st: SystemState, bs_i: str, *_) -> list[frozenset[int]]:
    return [frozenset(st.zones_of(bs_i))]


def _failed_robots(st: SystemState, bs_i: str, *_) -> list[frozenset[str]]:
    return [frozenset(r for r in st.robots_of(bs_i) if r in st.active)]


# -- events -------------------------------------------------------------------

def new_task_guard(st: SystemState, bs, rb, z, s) -> bool:
    if bs not in st.operating or rb not in st.active:
        return False
    if st.attached_to(rb) != bs or st.responsible[z - 1] != bs:
        return False
    if st.assignment(rb)[0] != 0:
        return False
    row = st.lm(bs, z)
    if row is None or row[s - 1] is not INCOMPL:
        return False
    return all((az, as_) != (z, s) for az, as_ in zip(st.asgn_z, st.asgn_s))


def new_task(st: SystemState, bs, rb, z, s) -> SystemState:
    i = st.robots.index(rb)
    return replace(st, asgn_z=_put(st.asgn_z, i, z), asgn_s=_put(st.asgn_s, i, s))


def task_success_guard(st: SystemState, bs, rb, z, s) -> bool:
    if bs not in st.operating or rb not in st.active:
        return False
    if st.attached_to(rb) != bs or st.responsible[z - 1] != bs:
        return False
    if st.assignment(rb) != (z, s):
        return False
    row = st.lm(bs, z)
    return row is not None and row[s - 1] is INCOMPL


def task_success(st: SystemState, bs, rb, z, s) -> SystemState:
    i, b = st.robots.index(rb), st.stations.index(bs)
    own = st.local_map[b]
    own = _put(own, z - 1, _put(own[z - 1], s - 1, COMPL))
    broadcast = {(other, z, s) for other in st.operating if other != bs}
    return replace(
        st,
        territory=_put(st.territory, z - 1, _put(st.territory[z - 1], s - 1, COMPL)),
        local_map=_put(st.local_map, b, own),
        asgn_z=_put(st.asgn_z, i, 0),
        asgn_s=_put(st.asgn_s, i, 0),
        counter=st.counter - 1,
        msg=st.msg | broadcast,
    )


def task_failure_guard(st: SystemState, bs, rb) -> bool:
    return st.attached_to(rb) == bs and rb not in st.active and st.assignment(rb)[0] != 0


def task_failure(st: SystemState, bs, rb) -> SystemState:
    i = st.robots.index(rb)
    return replace(
        st,
        attached=_put(st.attached, i, None),
        asgn_z=_put(st.asgn_z, i, 0),
        asgn_s=_put(st.asgn_s, i, 0),
    )


def robot_failure_guard(cfg: ModelConfig, st: SystemState, rb) -> bool:
    if rb not in st.active or len(st.active) <= 1:
        return False
    used = len(st.robots) - len(st.active)
    return used < cfg.robot_budget and rb in cfg.robot_candidates


def robot_failure(st: SystemState, rb) -> SystemState:
    return replace(st, active=st.active - {rb})


def update_map_guard(st: SystemState, bs, z, s) -> bool:
    return (bs, z, s) in st.msg and bs in st.operating and st.lm(bs, z) is not None


def update_map(st: SystemState, bs, z, s) -> SystemState:
    b = st.stations.index(bs)
    own = st.local_map[b]
    own = _put(own, z - 1, _put(own[z - 1], s - 1, COMPL))
    return replace(st, local_map=_put(st.local_map, b, own), msg=st.msg - {(bs, z, s)})


def _idle_group(st: SystemState, bs_i: str, rbs: frozenset[str]) -> bool:
    return bool(rbs) and all(
        r in st.active and st.attached_to(r) == bs_i and st.assignment(r) == (0, 0) for r in rbs
    )


def reassign_guard(cfg: ModelConfig, st: SystemState, bs_i, bs_j, rbs) -> bool:
    if bs_i == bs_j or bs_i not in st.operating or bs_j not in st.operating:
        return False
    if bs_i not in st.responsible:
        return False
    if not _idle_group(st, bs_i, rbs):
        return False
    crew = st.robots_of(bs_j)
    if cfg.pr8_literal:
        # printed guard: dom(attached |> {bs_j}) is not a subset of active
        lost_robots = any(r not in st.active for r in crew)
    else:
        lost_robots = all(r not in st.active for r in crew)
    return lost_robots and st.has_open_work(bs_j)


def move_robots(st: SystemState, bs_i, bs_j, rbs) -> SystemState:
    attached = tuple(bs_j if r in rbs else b for r, b in zip(st.robots, st.attached))
    return replace(st, attached=attached)


def send_robots_guard(st: SystemState, bs_i, bs_j, rbs) -> bool:
    if bs_i == bs_j or bs_i not in st.operating or bs_j not in st.operating:
        return False
    if any(INCOMPL in st.territory[z - 1] for z in st.zones_of(bs_i)):
        return False
    return _idle_group(st, bs_i, rbs) and st.has_open_work(bs_j)


def takeover_guard(st: SystemState, bs_i, bs_j, zs, rbs) -> bool:
    if bs_i == bs_j or bs_i in st.operating or bs_j not in st.operating:
        return False
    if not zs or zs != frozenset(st.zones_of(bs_i)):
        return False
    crew = st.robots_of(bs_i)
    if rbs != frozenset(r for r in crew if r in st.active):
        return False
    # failed robots still holding a task must be detached by TaskFailure first
    if any(r not in st.active and st.assignment(r)[0] != 0 for r in crew):
        return False
    return not st.pending_for(bs_j)


def takeover(st: SystemState, bs_i, bs_j, zs, rbs) -> SystemState:
    b = st.stations.index(bs_i)
    return replace(
        st,
        responsible=tuple(bs_j if z in zs else r for z, r in enumerate(st.responsible, 1)),
        attached=tuple(bs_j if r in rbs else a for r, a in zip(st.robots, st.attached)),
        asgn_z=tuple(0 if r in rbs else a for r, a in zip(st.robots, st.asgn_z)),
        asgn_s=tuple(0 if r in rbs else a for r, a in zip(st.robots, st.asgn_s)),
        local_map=_put(st.local_map, b, (None,) * st.n),
        msg=frozenset(m for m in st.msg if m[0] != bs_i),
    )


def station_failure_guard(cfg: ModelConfig, st: SystemState, bs) -> bool:
    if bs not in st.operating or len(st.operating) <= 1:
        return False
    used = len(st.stations) - len(st.operating)
    return used < cfg.station_budget and bs in cfg.station_candidates


def station_failure(st: SystemState, bs) -> SystemState:
    return replace(st, operating=st.operating - {bs})


# -- invariants -----------------------------------------------------------------

def inv_typing(st: SystemState) -> str | None:
    if len(st.territory) != st.n or any(len(row) != st.k for row in st.territory):
        return "territory is not a total n x k map"
    for z, bs in enumerate(st.responsible, 1):
        if bs not in st.stations:
            return f"responsible({z})={bs} is not a station"
    for r, bs in zip(st.robots, st.attached):
        if bs is not None and bs not in st.stations:
            return f"attached({r})={bs} is not a station"
    for r, z, s in zip(st.robots, st.asgn_z, st.asgn_s):
        if not (0 <= z <= st.n and 0 <= s <= st.k):
            return f"assignment of {r} out of range: ({z},{s})"
    for bs, rows in zip(st.stations, st.local_map):
        if len(rows) != st.n or any(row is not None and len(row) != st.k for row in rows):
            return f"local_map({bs}) has the wrong shape"
    for bs, z, s in st.msg:
        if bs not in st.stations or not (1 <= z <= st.n and 1 <= s <= st.k):
            return f"malformed message ({bs},{z},{s})"
    return None


def inv_agent_sets(st: SystemState) -> str | None:
    if not st.active <= set(st.robots):
        return f"active has undeclared robots {sorted(st.active - set(st.robots))}"
    if not st.operating <= set(st.stations):
        return f"operating has undeclared stations {sorted(st.operating - set(st.stations))}"
    if not st.active:
        return "no active robot"
    if not st.operating:
        return "no operating station"
    return None


def inv_counter(st: SystemState) -> str | None:
    open_sectors = sum(1 for row in st.territory for c in row if c is INCOMPL)
    if st.counter != open_sectors:
        return f"counter={st.counter} but {open_sectors} sectors are incompl"
    return None


def inv_pr5(st: SystemState) -> str | None:
    seen: dict[tuple[int, int], str] = {}
    for r, z, s in zip(st.robots, st.asgn_z, st.asgn_s):
        if z == 0:
            continue
        if (z, s) in seen:
            return f"{seen[(z, s)]} and {r} both assigned sector ({z},{s})"
        seen[(z, s)] = r
    return None


def inv_pr6_global_local(st: SystemState) -> str | None:
    for bs in sorted(set(st.responsible)):
        for z in range(1, st.n + 1):
            row = st.lm(bs, z)
            if row is None:
                continue
            for s in range(1, st.k + 1):
                if st.territory[z - 1][s - 1] is INCOMPL and row[s - 1] is not INCOMPL:
                    return f"local_map({bs})({z})({s})=compl but territory is incompl"
    return None


def inv_pr6_own_zone(st: SystemState) -> str | None:
    for z, bs in enumerate(st.responsible, 1):
        row = st.lm(bs, z)
        if row is None:
            return f"zone {z} is outside the map of its station {bs}"
        for s in range(1, st.k + 1):
            if (st.territory[z - 1][s - 1] is INCOMPL) != (row[s - 1] is INCOMPL):
                return f"local_map({bs})({z})({s}) disagrees with territory on own zone"
    return None


def inv_msg_accuracy(st: SystemState) -> str | None:
    # Stations that have failed miss broadcasts until a takeover wipes their map.
    for bs in sorted(set(st.responsible) & st.operating):
        for z in range(1, st.n + 1):
            row = st.lm(bs, z)
            if row is None:
                continue
            for s in range(1, st.k + 1):
                if (bs, z, s) not in st.msg and row[s - 1] is not st.territory[z - 1][s - 1]:
                    return f"local_map({bs})({z})({s}) stale with no pending message"
    return None


def inv_msg_soundness(st: SystemState) -> str | None:
    for bs, z, s in sorted(st.msg):
        if st.territory[z - 1][s - 1] is not COMPL:
            return f"message ({bs},{z},{s}) reports an uncleaned sector"
    return None


def inv_assignment(st: SystemState) -> str | None:
    for r, bs, z, s in zip(st.robots, st.attached, st.asgn_z, st.asgn_s):
        if (z == 0) != (s == 0):
            return f"{r} has a half assignment ({z},{s})"
        if z == 0:
            continue
        if bs is None:
            return f"{r} is assigned ({z},{s}) but detached"
        if st.responsible[z - 1] != bs:
            return f"{r} works zone {z} of {st.responsible[z - 1]} but is attached to {bs}"
        if st.territory[z - 1][s - 1] is not INCOMPL:
            return f"{r} is assigned the already cleaned sector ({z},{s})"
    return None


INVARIANTS = (
    ("typing", inv_typing),
    ("agent-sets", inv_agent_sets),
    ("counter-consistency", inv_counter),
    ("PR5", inv_pr5),
    ("PR6-global-local", inv_pr6_global_local),
    ("PR6-own-zone", inv_pr6_own_zone),
    ("msg-accuracy", inv_msg_accuracy),
    ("msg-soundness", inv_msg_soundness),
    ("assignment-coherence", inv_assignment),
)


def build_machine(scenario: Scenario) -> Machine:
    """The refined machine for ``scenario`` (fault budget and guard variant)."""
    cfg = ModelConfig.from_scenario(scenario)
    events = [
        EventDef("NewTask", Status.ANTICIPATED,
                 (_stations, _robots_of_first, _zones, _sectors), new_task_guard, new_task),
        EventDef("TaskSuccess", Status.CONVERGENT,
                 (_stations, _robots_of_first, _zones, _sectors), task_success_guard, task_success),
        EventDef("TaskFailure", Status.CONVERGENT,
                 (_stations, _robots_of_first), task_failure_guard, task_failure),
        EventDef("RobotFailure", Status.ORDINARY,
                 (_robots,), partial(robot_failure_guard, cfg), robot_failure),
        EventDef("UpdateMap", Status.ANTICIPATED,
                 (_stations, _zones, _sectors), update_map_guard, update_map),
        EventDef("ReassignNewBStoRBs", Status.ANTICIPATED,
                 (_stations, _stations, _robot_groups), partial(reassign_guard, cfg), move_robots),
        EventDef("SendRobotsToBS", Status.ANTICIPATED,
                 (_stations, _stations, _robot_groups), send_robots_guard, move_robots),
        EventDef("GetAdditionalResponsibility", Status.ANTICIPATED,
                 (_stations, _stations, _failed_zones, _failed_robots), takeover_guard, takeover),
        EventDef("BaseStationFailure", Status.ORDINARY,
                 (_stations,), partial(station_failure_guard, cfg), station_failure),
    ]
    events = [e for e in events if e.name not in scenario.disabled_events]
    return Machine(events=tuple(events), invariants=INVARIANTS, variant=variant)


def state_to_dict(st: SystemState) -> dict:
    """Canonical plain-data form (sets sorted, enums as strings)."""
    def rows(rs):
        return [None if r is None else [c.value for c in r] for r in rs]

    return {
        "n": st.n,
        "k": st.k,
        "territory": rows(st.territory),
        "responsible": list(st.responsible),
        "attached": {r: b for r, b in zip(st.robots, st.attached) if b is not None},
        "local_map": {bs: rows(lm) for bs, lm in zip(st.stations, st.local_map)},
        "msg": [list(m) for m in sorted(st.msg)],
        "asgn": {r: [z, s] for r, z, s in zip(st.robots, st.asgn_z, st.asgn_s)},
        "active": sorted(st.active),
        "operating": sorted(st.operating),
        "counter": st.counter,
        "robots": list(st.robots),
        "stations": list(st.stations),
    }
