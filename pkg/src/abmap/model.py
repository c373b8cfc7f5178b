"""Event calculus for discrete-time, discrete-state agent models.

An agent in state ``actor`` may express a behaviour option when every
state in ``requires`` is occupied and every state in ``forbids`` is
empty; doing so replaces the agent with the ``consequence`` multiset.
A trajectory is an initial occupancy plus, per timestep, a count of how
often each behaviour option occurred.  Everything else in the package
(simulation, encoding, solving, assimilation) is validated against the
reference operations in this module.

All types are values: build them once, never mutate them.  Operations
are pure functions, so they are safe to share between threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

from .errors import ModelError

PROB_TOL = 1e-9
# Exhaustive normalization checking enumerates every truth assignment
# over an actor's condition states; refuse silly blowups.
MAX_CONDITION_STATES = 16


@dataclass(frozen=True)
class StateDomain:
    """A finite, enumerated set of agent states."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ModelError(f"state domain must have at least one state, got {self.size}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != self.size:
                raise ModelError("labels must have exactly one entry per state")
            if len(set(self.labels)) != self.size:
                raise ModelError("state labels must be distinct")

    def check_state(self, state: int) -> int:
        if not isinstance(state, int) or isinstance(state, bool) or not 0 <= state < self.size:
            raise ModelError(f"state index {state!r} outside domain of size {self.size}")
        return state

    def label(self, state: int) -> str:
        if self.labels is not None:
            return self.labels[state]
        return f"s{state}"


class StateMultiset:
    """Occupancy counts over a state domain.  Zero counts are never stored."""

    __slots__ = ("_counts",)

    def __init__(self, counts: Mapping[int, int] | Iterable[tuple[int, int]] | None = None):
        cleaned: dict[int, int] = {}
        if counts is not None:
            items = counts.items() if isinstance(counts, Mapping) else counts
            for state, count in items:
                if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                    raise ModelError(f"occupancy count must be a non-negative int, got {count!r}")
                if count:
                    cleaned[state] = cleaned.get(state, 0) + count
        self._counts = cleaned

    def __getitem__(self, state: int) -> int:
        return self._counts.get(state, 0)

    def __contains__(self, state: int) -> bool:
        return state in self._counts

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.items())

    def __bool__(self) -> bool:
        return bool(self._counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateMultiset):
            return NotImplemented
        return self._counts == other._counts

    __hash__ = None  # mutable dict inside; treat as an unhashable value

    def __repr__(self) -> str:
        inner = ", ".join(f"{s}: {c}" for s, c in self.items())
        return f"StateMultiset({{{inner}}})"

    def items(self) -> list[tuple[int, int]]:
        """Counts as (state, count) pairs in ascending state order."""
        return sorted(self._counts.items())

    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self._counts))

    def total(self) -> int:
        return sum(self._counts.values())

    def max_count(self) -> int:
        return max(self._counts.values(), default=0)

    def count_in(self, states: Iterable[int]) -> int:
        """Total occupancy of the given states, with multiplicity."""
        return sum(self._counts.get(s, 0) for s in set(states))

    def __add__(self, other: "StateMultiset") -> "StateMultiset":
        merged = dict(self._counts)
        for state, count in other._counts.items():
            merged[state] = merged.get(state, 0) + count
        return StateMultiset(merged)

    def scale(self, factor: int) -> "StateMultiset":
        if factor < 0:
            raise ModelError("multiset scale factor must be non-negative")
        return StateMultiset({s: c * factor for s, c in self._counts.items()})

    def subtract_clamped(self, other: "StateMultiset") -> "StateMultiset":
        """Per-state difference, clamped at zero."""
        return StateMultiset({s: c - other[s] for s, c in self._counts.items() if c > other[s]})

    def is_subset(self, other: "StateMultiset") -> bool:
        return all(c <= other[s] for s, c in self._counts.items())


EMPTY_MULTISET = StateMultiset()


@dataclass(frozen=True)
class AgentEvent:
    """One behaviour option: the atom the whole system is built from.

    ``probability`` is the chance the actor expresses this option when
    the requires/forbids conditions hold.  Zero-probability options are
    rejected outright (their log-weight would be undefined).
    """

    id: int
    actor: int
    requires: frozenset[int]
    forbids: frozenset[int]
    consequence: StateMultiset
    probability: float
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "requires", frozenset(self.requires))
        object.__setattr__(self, "forbids", frozenset(self.forbids))
        if self.requires & self.forbids:
            raise ModelError(f"event {self.id}: requires and forbids overlap")
        if not 0.0 < self.probability <= 1.0:
            raise ModelError(f"event {self.id}: probability {self.probability} outside (0, 1]")

    def feasible_in(self, occupancy: StateMultiset) -> bool:
        """True when the environment allows this option."""
        return all(occupancy[s] > 0 for s in self.requires) and all(
            occupancy[s] == 0 for s in self.forbids
        )

    def log_probability(self) -> float:
        return math.log(self.probability)


@dataclass(frozen=True)
class Injection:
    """A boundary-condition event scheduled at a fixed timestep.

    The event's consequence enters the occupancy at ``time`` without
    consuming an actor (the nominal actor is a bookkeeping placeholder).
    With probability 1 the injection always happens and is implicit;
    below 1 it may happen at most once and is recorded in trajectory
    steps under the event's id.
    """

    time: int
    event: AgentEvent

    def __post_init__(self) -> None:
        if self.time < 1:
            raise ModelError("injections start at timestep 1; the initial state is explicit data")

    @property
    def mandatory(self) -> bool:
        return self.event.probability >= 1.0


class BehaviourModel:
    """A state domain plus the shared behaviour of every agent in it."""

    def __init__(
        self,
        domain: StateDomain,
        events: Iterable[AgentEvent],
        injections: Iterable[Injection] = (),
    ):
        self.domain = domain
        self.events = tuple(events)
        self.injections = tuple(injections)
        self._by_id: dict[int, AgentEvent] = {}
        self._by_actor: dict[int, list[AgentEvent]] = {}
        self._injections_at: dict[int, list[Injection]] = {}
        self._validate_and_index()

    def _validate_and_index(self) -> None:
        for event in itertools.chain(self.events, (inj.event for inj in self.injections)):
            if event.id in self._by_id:
                raise ModelError(f"duplicate event id {event.id}")
            self._by_id[event.id] = event
            self.domain.check_state(event.actor)
            for state in itertools.chain(event.requires, event.forbids, event.consequence.support()):
                self.domain.check_state(state)
        for event in self.events:
            self._by_actor.setdefault(event.actor, []).append(event)
        for injection in self.injections:
            self._injections_at.setdefault(injection.time, []).append(injection)
        self._check_normalization()

    def _check_normalization(self) -> None:
        """Per actor, probabilities of the options feasible under every
        environment assignment must sum to one."""
        for actor, options in sorted(self._by_actor.items()):
            conditions = sorted(set().union(*(e.requires | e.forbids for e in options)))
            if len(conditions) > MAX_CONDITION_STATES:
                raise ModelError(
                    f"actor {actor}: {len(conditions)} condition states; "
                    f"normalization check is limited to {MAX_CONDITION_STATES}"
                )
            for assignment in itertools.product((False, True), repeat=len(conditions)):
                present = {s for s, on in zip(conditions, assignment) if on}
                mass = sum(
                    e.probability
                    for e in options
                    if e.requires <= present and not (e.forbids & present)
                )
                if abs(mass - 1.0) > PROB_TOL:
                    raise ModelError(
                        f"actor {actor}: probabilities sum to {mass:.12f} "
                        f"when states {sorted(present)} are present"
                    )

    def event(self, event_id: int) -> AgentEvent:
        try:
            return self._by_id[event_id]
        except KeyError:
            raise ModelError(f"unknown event id {event_id}") from None

    def has_event(self, event_id: int) -> bool:
        return event_id in self._by_id

    def actor_events(self, state: int) -> tuple[AgentEvent, ...]:
        return tuple(self._by_actor.get(state, ()))

    def injections_at(self, time: int) -> tuple[Injection, ...]:
        return tuple(self._injections_at.get(time, ()))

    def injected_occupancy(self, time: int) -> StateMultiset:
        """Combined consequence of the mandatory injections at ``time``."""
        occ = EMPTY_MULTISET
        for injection in self.injections_at(time):
            if injection.mandatory:
                occ = occ + injection.event.consequence
        return occ

    def optional_injection(self, time: int, event_id: int) -> Injection | None:
        for injection in self.injections_at(time):
            if not injection.mandatory and injection.event.id == event_id:
                return injection
        return None

    def is_injection_event(self, event_id: int) -> bool:
        return event_id in self._by_id and event_id not in {e.id for e in self.events}


# A model event: occurrence count per event id within one timestep.
EventCounts = dict[int, int]


def clean_counts(counts: Mapping[int, int]) -> EventCounts:
    """Validated copy with zero entries removed."""
    out: EventCounts = {}
    for event_id, count in counts.items():
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ModelError(f"event count must be a non-negative int, got {count!r}")
        if count:
            out[event_id] = count
    return out


@dataclass(frozen=True)
class Trajectory:
    """Initial occupancy plus one ``EventCounts`` per timestep.

    Construction does not check feasibility: partial and even broken
    trajectories must be representable so they can be diagnosed.
    ``start_time`` anchors the window on the model's global clock (it
    only matters when the model schedules injections): the initial
    occupancy is the state at ``start_time`` and step ``t`` ends at
    global time ``start_time + t``.
    """

    initial: StateMultiset
    steps: tuple[EventCounts, ...]
    start_time: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(dict(clean_counts(s)) for s in self.steps))

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def step(self, time: int) -> EventCounts:
        """Events of the step ending at ``time`` (1-based)."""
        if not 1 <= time <= self.n_steps:
            raise ModelError(f"timestep {time} outside 1..{self.n_steps}")
        return self.steps[time - 1]


class FeasibilityMode(Enum):
    COMPLETE = "complete"  # every agent acts exactly once per timestep
    PARTIAL = "partial"  # every agent acts at most once per timestep


@dataclass(frozen=True)
class Observation:
    """A count observation: the number of agents occupying any state in
    ``states`` at ``time`` lies in [lower, upper]; ``upper=None`` means
    unbounded above."""

    time: int
    lower: int
    upper: int | None
    states: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", frozenset(self.states))
        if self.time < 0:
            raise ModelError("observation timestep must be non-negative")
        if self.lower < 0:
            raise ModelError("observation lower bound must be non-negative")
        if self.upper is not None and self.upper < self.lower:
            raise ModelError("observation upper bound below lower bound")

    def satisfied_by(self, occupancy: StateMultiset) -> bool:
        count = occupancy.count_in(self.states)
        return self.lower <= count and (self.upper is None or count <= self.upper)


@dataclass(frozen=True, order=True)
class Violation:
    """One broken feasibility or observation condition, as data."""

    time: int
    family: str  # agency | presence | absence | observation | injection
    state: int = -1
    event: int = -1
    detail: str = ""


def consequence(counts: Mapping[int, int], model: BehaviourModel) -> StateMultiset:
    """Combined consequence of a model event: the per-event consequences
    weighted by occurrence count."""
    result = EMPTY_MULTISET
    for event_id, count in sorted(clean_counts(counts).items()):
        result = result + model.event(event_id).consequence.scale(count)
    return result


def states_at(traj: Trajectory, time: int, model: BehaviourModel) -> StateMultiset:
    """Occupancy after step ``time`` (the initial occupancy at 0).

    Mandatory injections at ``time`` are added implicitly; optional ones
    contribute through their recorded counts in the step."""
    if not 0 <= time <= traj.n_steps:
        raise ModelError(f"timestep {time} outside 0..{traj.n_steps}")
    if time == 0:
        return traj.initial
    return consequence(traj.step(time), model) + model.injected_occupancy(traj.start_time + time)


def _split_step(
    step: EventCounts, local_time: int, global_time: int, model: BehaviourModel
) -> tuple[EventCounts, EventCounts, list[Violation]]:
    """Separate a step into regular events and optional injections,
    flagging misuse of injection ids."""
    regular: EventCounts = {}
    injected: EventCounts = {}
    violations: list[Violation] = []
    for event_id, count in sorted(step.items()):
        model.event(event_id)  # raises on unknown ids
        if model.is_injection_event(event_id):
            injection = model.optional_injection(global_time, event_id)
            if injection is None:
                violations.append(
                    Violation(local_time, "injection", event=event_id,
                              detail="injection not scheduled at this timestep or mandatory")
                )
            elif count > 1:
                violations.append(
                    Violation(local_time, "injection", event=event_id,
                              detail=f"optional injection occurred {count} times")
                )
            else:
                injected[event_id] = count
        else:
            regular[event_id] = count
    return regular, injected, violations


def check_feasible(
    traj: Trajectory, model: BehaviourModel, mode: FeasibilityMode = FeasibilityMode.COMPLETE
) -> list[Violation]:
    """All broken agency / presence / absence conditions, empty iff feasible.

    COMPLETE requires each agent to act exactly once per timestep,
    PARTIAL at most once.  Injections never consume actors."""
    violations: list[Violation] = []
    for time in range(1, traj.n_steps + 1):
        previous = states_at(traj, time - 1, model)
        regular, injected, misuse = _split_step(
            traj.step(time), time, traj.start_time + time, model
        )
        violations.extend(misuse)

        actors: dict[int, int] = {}
        for event_id, count in regular.items():
            event = model.event(event_id)
            actors[event.actor] = actors.get(event.actor, 0) + count
        states = set(actors) | set(previous.support())
        for state in sorted(states):
            acted, available = actors.get(state, 0), previous[state]
            if acted > available:
                violations.append(
                    Violation(time, "agency", state=state,
                              detail=f"{acted} actions but {available} agents")
                )
            elif mode is FeasibilityMode.COMPLETE and acted < available:
                violations.append(
                    Violation(time, "agency", state=state,
                              detail=f"{available} agents but only {acted} actions")
                )

        occurring = [(eid, model.event(eid)) for eid in sorted({**regular, **injected})]
        occurring.extend(
            (inj.event.id, inj.event)
            for inj in model.injections_at(traj.start_time + time)
            if inj.mandatory
        )
        for event_id, event in occurring:
            for state in sorted(event.requires):
                if previous[state] == 0:
                    violations.append(
                        Violation(time, "presence", state=state, event=event_id,
                                  detail="required state unoccupied")
                    )
            for state in sorted(event.forbids):
                if previous[state] > 0:
                    violations.append(
                        Violation(time, "absence", state=state, event=event_id,
                                  detail="forbidden state occupied")
                    )
    return sorted(violations)


def log_probability(traj: Trajectory, model: BehaviourModel) -> float:
    """Log-probability of the trajectory: the count-weighted sum of event
    log-probabilities.  Feasibility is the caller's contract."""
    total = 0.0
    for step in traj.steps:
        for event_id, count in step.items():
            assert count >= 0
            total += count * model.event(event_id).log_probability()
    return total


def satisfies(
    traj: Trajectory, observations: Iterable[Observation], model: BehaviourModel
) -> list[Violation]:
    """Observation violations; empty iff every count lies in its range.

    Timestep 0 observations are checked against the initial occupancy."""
    violations: list[Violation] = []
    occupancy_cache: dict[int, StateMultiset] = {}
    for obs in observations:
        if obs.time > traj.n_steps:
            raise ModelError(f"observation at t={obs.time} beyond trajectory of {traj.n_steps} steps")
        if obs.time not in occupancy_cache:
            occupancy_cache[obs.time] = states_at(traj, obs.time, model)
        occupancy = occupancy_cache[obs.time]
        if not obs.satisfied_by(occupancy):
            count = occupancy.count_in(obs.states)
            upper = "inf" if obs.upper is None else obs.upper
            violations.append(
                Violation(obs.time, "observation",
                          detail=f"count {count} outside [{obs.lower}, {upper}] "
                                 f"for states {sorted(obs.states)}")
            )
    return sorted(violations)
