"""Compile MAP-trajectory queries into sparse pure-integer programs.

One count variable per (timestep, behaviour option) within the reachable
support, one binary presence indicator per (timestep, state) that some
requires/forbids condition references, and four constraint families:

* observation rows bracket the observed occupancy counts,
* agency rows conserve agents (exactly one action each in offline mode,
  at most one in streaming mode, with already-committed actions consumed
  as constants),
* indicator linking rows tie each presence indicator to its occupancy
  expression through the multiplicity bound M,
* presence/absence rows let an option occur only when its required
  states are occupied and its forbidden states are empty.

Variable order, row order and names are all deterministic functions of
the inputs, so identical queries compile to identical programs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import EncodingError, SolverError
from .model import (
    AgentEvent,
    BehaviourModel,
    EventCounts,
    Observation,
    StateMultiset,
    Trajectory,
)

INTEGRALITY_TOL = 1e-6


class VarKind(Enum):
    INTEGER = "integer"
    BINARY = "binary"


@dataclass(frozen=True)
class Variable:
    lower: float
    upper: float
    kind: VarKind
    objective: float
    name: str

    def __post_init__(self) -> None:
        if self.kind is VarKind.BINARY and not (self.lower >= 0 and self.upper <= 1):
            raise EncodingError(f"binary variable {self.name} must have bounds within [0, 1]")


@dataclass(frozen=True)
class Row:
    """A sparse constraint row with two-sided bounds; None = unbounded."""

    coeffs: tuple[tuple[int, float], ...]
    lower: float | None
    upper: float | None
    name: str


@dataclass
class IntegerProgram:
    """Maximization program over integral variables."""

    variables: list[Variable] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def add_variable(self, lower: float, upper: float, kind: VarKind,
                     objective: float, name: str) -> int:
        self.variables.append(Variable(lower, upper, kind, objective, name))
        return len(self.variables) - 1

    def add_row(self, coeffs: dict[int, float], lower: float | None,
                upper: float | None, name: str) -> None:
        for index in coeffs:
            if not 0 <= index < len(self.variables):
                raise EncodingError(f"row {name} references unknown variable {index}")
        pairs = tuple(sorted((i, c) for i, c in coeffs.items() if c != 0.0))
        self.rows.append(Row(pairs, lower, upper, name))

    def objective_value(self, values) -> float:
        return float(sum(v.objective * x for v, x in zip(self.variables, values)))


@dataclass
class EncodingMap:
    """Bookkeeping that turns solver output back into a trajectory."""

    count_index: dict[tuple[int, int], int]  # (global time, event id) -> variable
    indicator_index: dict[tuple[int, int], int]  # (global time, state) -> variable
    multiplicity: int
    horizon: int
    time_offset: int
    committed: dict[tuple[int, int], int]
    initial: StateMultiset
    model: BehaviourModel


@dataclass(frozen=True)
class SupportSchedule:
    """Per-timestep reachable states and live options (local indexing:
    states[0] is the initial support, events[t-1] the options of step t)."""

    states: tuple[frozenset[int], ...]
    events: tuple[tuple[int, ...], ...]


class _Frames:
    """Shared per-timestep data: constant occupancies from boundary
    conditions, commitments and mandatory injections, plus the forward
    cone of states where uncommitted agents can live."""

    def __init__(
        self,
        model: BehaviourModel,
        initial: StateMultiset,
        horizon: int,
        committed: dict[tuple[int, int], int],
        time_offset: int,
        first_free: int,
    ):
        self.model = model
        self.offset = time_offset
        self.end = time_offset + horizon
        self.first_free = first_free
        self.committed_at: dict[int, EventCounts] = {}
        for (time, event_id), count in committed.items():
            if count < 0:
                raise EncodingError("committed counts must be non-negative")
            if count:
                self.committed_at.setdefault(time, {})[event_id] = count

        # Constant occupancy and committed actor usage per timestep.
        self.const_occ: dict[int, StateMultiset] = {self.offset: initial}
        self.committed_actors: dict[int, StateMultiset] = {}
        for time in range(self.offset + 1, self.end + 1):
            occ = model.injected_occupancy(time)
            actors: dict[int, int] = {}
            for event_id, count in self.committed_at.get(time, {}).items():
                event = model.event(event_id)
                occ = occ + event.consequence.scale(count)
                if not model.is_injection_event(event_id):
                    actors[event.actor] = actors.get(event.actor, 0) + count
            self.const_occ[time] = occ
            self.committed_actors[time] = StateMultiset(actors)

        # Free-agent cone and the live options drawing from it.
        self.free_states: dict[int, set[int]] = {}
        self.free_events: dict[int, list[AgentEvent]] = {}
        self.free_injections: dict[int, list[AgentEvent]] = {}
        for time in range(self.offset, self.end + 1):
            states = {
                s for s, c in self.const_occ[time].items()
                if c > self.surplus_consumed(time + 1, s)
            }
            if time >= self.first_free:
                live = [
                    e for e in model.events
                    if e.actor in self.free_states.get(time - 1, ())
                ]
                live.sort(key=lambda e: e.id)
                self.free_events[time] = live
                loose = [
                    inj.event
                    for inj in model.injections_at(time)
                    if not inj.mandatory
                    and self.committed_at.get(time, {}).get(inj.event.id, 0) == 0
                ]
                loose.sort(key=lambda e: e.id)
                self.free_injections[time] = loose
                for event in live:
                    states.update(event.consequence.support())
                for event in loose:
                    states.update(event.consequence.support())
            else:
                self.free_events[time] = []
                self.free_injections[time] = []
            self.free_states[time] = states

    def surplus_consumed(self, time: int, state: int) -> int:
        if time > self.end:
            return 0
        return self.committed_actors.get(time, StateMultiset())[state]

    def surplus(self, time: int, state: int) -> int:
        return self.const_occ[time][state] - self.surplus_consumed(time + 1, state)


def _build_frames(model, initial, horizon, committed, time_offset, first_free=None):
    if horizon < 0:
        raise EncodingError("horizon must be non-negative")
    for state, _ in initial.items():
        model.domain.check_state(state)
    for (time, event_id) in committed:
        if not time_offset + 1 <= time <= time_offset + horizon:
            raise EncodingError(f"committed event at t={time} outside the encoded horizon")
        model.event(event_id)
    if first_free is None:
        first_free = time_offset + 1
    return _Frames(model, initial, horizon, dict(committed), time_offset, first_free)


def reachable_support(
    model: BehaviourModel, initial: StateMultiset, horizon: int
) -> SupportSchedule:
    """Forward closure of the initial support: options are live at a step
    exactly when their actor is reachable at the previous one.  Sound by
    induction; every feasible trajectory stays inside it."""
    frames = _build_frames(model, initial, horizon, {}, 0)
    states = tuple(frozenset(frames.free_states[t]) for t in range(horizon + 1))
    events = tuple(
        tuple(e.id for e in frames.free_events[t]) + tuple(e.id for e in frames.free_injections[t])
        for t in range(1, horizon + 1)
    )
    return SupportSchedule(states=states, events=events)


def compute_first_free(
    model: BehaviourModel,
    initial: StateMultiset,
    horizon: int,
    committed: dict[tuple[int, int], int],
    time_offset: int = 0,
    lookback: int | None = None,
) -> int:
    """Earliest timestep that needs count variables: the step after the
    first uncommitted surplus, or the first pending optional injection.
    A lookback bounds it below at the window's tail."""
    frames = _build_frames(model, initial, horizon, committed, time_offset,
                           first_free=time_offset + horizon + 1)
    end = time_offset + horizon
    first = end + 1
    for time in range(time_offset, end):
        if any(frames.surplus(time, s) > 0 for s in frames.const_occ[time].support()):
            first = time + 1
            break
    for time in range(time_offset + 1, min(first, end + 1)):
        pending = [
            inj for inj in model.injections_at(time)
            if not inj.mandatory and committed.get((time, inj.event.id), 0) == 0
        ]
        if pending:
            first = time
            break
    if lookback is not None:
        if lookback < 1:
            raise EncodingError("lookback must be at least one timestep")
        first = max(first, end - lookback + 1)
    return max(first, time_offset + 1)


def default_multiplicity(
    model: BehaviourModel, initial: StateMultiset, horizon: int, time_offset: int = 0
) -> int:
    """Default occupancy bound M: total boundary population plus every
    agent any scheduled injection could add over the horizon.  Callers
    must raise it for models whose births can pile more agents into a
    single state."""
    injected = sum(
        inj.event.consequence.total()
        for inj in model.injections
        if time_offset + 1 <= inj.time <= time_offset + horizon
    )
    return max(1, initial.total() + injected)


class _Builder:
    def __init__(self, frames: _Frames, multiplicity: int):
        self.frames = frames
        self.program = IntegerProgram()
        self.count_index: dict[tuple[int, int], int] = {}
        self.indicator_index: dict[tuple[int, int], int] = {}
        self.multiplicity = multiplicity

    def occupancy_terms(self, time: int, state: int) -> tuple[dict[int, float], int]:
        """Occupancy of ``state`` after step ``time`` as variable
        coefficients plus a constant."""
        frames = self.frames
        const = frames.const_occ[time][state]
        coeffs: dict[int, float] = {}
        if time > frames.offset:
            for event in frames.free_events[time] + frames.free_injections[time]:
                weight = event.consequence[state]
                if weight:
                    index = self.count_index[(time, event.id)]
                    coeffs[index] = coeffs.get(index, 0.0) + float(weight)
        return coeffs, const

    def indicator(self, time: int, state: int) -> tuple[int | None, int]:
        """Presence indicator for (time, state): a binary variable index,
        or a constant 0/1 when the occupancy there is all constant."""
        coeffs, const = self.occupancy_terms(time, state)
        if not coeffs:
            return None, 1 if const > 0 else 0
        key = (time, state)
        if key not in self.indicator_index:
            index = self.program.add_variable(
                0.0, 1.0, VarKind.BINARY, 0.0, f"b_t{time}_s{state}"
            )
            self.indicator_index[key] = index
            m = float(self.multiplicity)
            self.program.add_row(
                {i: -c for i, c in coeffs.items()} | {index: m},
                float(const), None, f"link_lo_t{time}_s{state}",
            )
            self.program.add_row(
                dict(coeffs) | {index: -1.0},
                float(-const), None, f"link_hi_t{time}_s{state}",
            )
        return self.indicator_index[key], 0


def committed_trajectory(
    initial: StateMultiset,
    committed: dict[tuple[int, int], int],
    horizon: int,
    time_offset: int = 0,
) -> Trajectory:
    """The partial trajectory a set of committed counts describes."""
    steps: list[EventCounts] = [dict() for _ in range(horizon)]
    for (time, event_id), count in committed.items():
        if count:
            steps[time - time_offset - 1][event_id] = count
    return Trajectory(initial=initial, steps=tuple(steps), start_time=time_offset)


def _check_committed_partial(model, initial, committed, horizon, time_offset) -> None:
    from .model import FeasibilityMode, check_feasible

    partial = committed_trajectory(initial, committed, horizon, time_offset)
    violations = check_feasible(partial, model, FeasibilityMode.PARTIAL)
    if violations:
        raise EncodingError(
            f"committed counts are not a feasible partial trajectory: {violations[0]}"
        )


def _encode(
    model: BehaviourModel,
    initial: StateMultiset,
    observations: list[Observation],
    horizon: int,
    multiplicity: int,
    committed: dict[tuple[int, int], int],
    agency_equality: bool,
    time_offset: int,
    first_free: int | None,
) -> tuple[IntegerProgram, EncodingMap]:
    frames = _build_frames(model, initial, horizon, committed, time_offset, first_free)
    if multiplicity < 1:
        raise EncodingError("multiplicity must be at least 1")
    if committed:
        _check_committed_partial(model, initial, committed, horizon, time_offset)
    for time in range(frames.offset, frames.end + 1):
        peak = frames.const_occ[time].max_count()
        if peak > multiplicity:
            raise EncodingError(
                f"multiplicity {multiplicity} below the fixed occupancy {peak} at t={time}"
            )
    for obs in observations:
        if not frames.offset + 1 <= obs.time <= frames.end:
            raise EncodingError(
                f"observation at t={obs.time} outside encoded steps "
                f"{frames.offset + 1}..{frames.end}"
            )
        for state in obs.states:
            model.domain.check_state(state)

    builder = _Builder(frames, multiplicity)
    program = builder.program

    # Count variables, steps ascending, option id ascending.
    for time in range(frames.offset + 1, frames.end + 1):
        for event in frames.free_events[time]:
            index = program.add_variable(
                0.0, float(multiplicity), VarKind.INTEGER,
                event.log_probability(), f"c_t{time}_e{event.id}",
            )
            builder.count_index[(time, event.id)] = index
        for event in frames.free_injections[time]:
            index = program.add_variable(
                0.0, 1.0, VarKind.BINARY,
                event.log_probability(), f"c_t{time}_e{event.id}",
            )
            builder.count_index[(time, event.id)] = index

    by_time: dict[int, list[Observation]] = {}
    for obs in observations:
        by_time.setdefault(obs.time, []).append(obs)

    for time in range(frames.offset + 1, frames.end + 1):
        # Observation rows; a committed step already satisfies its own
        # observations, so they are suppressed there.
        if time not in frames.committed_at:
            ordered = sorted(
                by_time.get(time, ()),
                key=lambda o: (o.lower, o.upper is None, o.upper or 0, sorted(o.states)),
            )
            for obs_pos, obs in enumerate(ordered):
                coeffs: dict[int, float] = {}
                const = 0
                for state in sorted(obs.states):
                    c, k = builder.occupancy_terms(time, state)
                    const += k
                    for index, weight in c.items():
                        coeffs[index] = coeffs.get(index, 0.0) + weight
                lower = float(obs.lower - const)
                upper = None if obs.upper is None else float(obs.upper - const)
                program.add_row(coeffs, lower, upper, f"obs_t{time}_{obs_pos}")

        # Agency rows: free actions draw on the uncommitted surplus.
        if time >= frames.first_free:
            for state in sorted(frames.free_states[time - 1]):
                coeffs = {}
                for event in frames.free_events[time]:
                    if event.actor == state:
                        index = builder.count_index[(time, event.id)]
                        coeffs[index] = coeffs.get(index, 0.0) + 1.0
                prev, _ = builder.occupancy_terms(time - 1, state)
                for index, weight in prev.items():
                    coeffs[index] = coeffs.get(index, 0.0) - weight
                surplus = float(frames.surplus(time - 1, state))
                lower = surplus if agency_equality else None
                program.add_row(coeffs, lower, surplus, f"agency_t{time}_s{state}")
        elif agency_equality:
            for state in sorted(frames.const_occ[time - 1].support()):
                if frames.surplus(time - 1, state) > 0:
                    raise EncodingError(
                        f"hanging agents at t={time - 1} lie before the first free "
                        "timestep; a complete trajectory cannot be encoded"
                    )

        # Presence and absence rows over the conditions of this step's
        # options.  Committed options keep only their absence conditions
        # active (occupancies never shrink, so their presence holds).
        mandatory = [inj.event for inj in model.injections_at(time) if inj.mandatory]
        present_required: dict[int, tuple[dict[int, float], int]] = {}
        absent_required: dict[int, dict[int, float]] = {}
        committed_forbid: dict[int, int] = {}
        for event in frames.free_events[time] + frames.free_injections[time]:
            index = builder.count_index[(time, event.id)]
            for state in event.requires:
                coeffs, const = present_required.setdefault(state, ({}, 0))
                coeffs[index] = coeffs.get(index, 0.0) + 1.0
            for state in event.forbids:
                coeffs = absent_required.setdefault(state, {})
                coeffs[index] = coeffs.get(index, 0.0) + 1.0
        for event in mandatory:
            for state in event.requires:
                coeffs, const = present_required.setdefault(state, ({}, 0))
                present_required[state] = (coeffs, const + 1)
            for state in event.forbids:
                committed_forbid[state] = committed_forbid.get(state, 0) + 1
        for event_id, count in frames.committed_at.get(time, {}).items():
            for state in model.event(event_id).forbids:
                committed_forbid[state] = committed_forbid.get(state, 0) + count
        # A committed forbids-condition must keep holding as occupancies
        # grow, so it stays on as a row of its own.
        for state in committed_forbid:
            absent_required.setdefault(state, {})

        m = float(multiplicity)
        for state in sorted(present_required):
            coeffs, const = present_required[state]
            index, constant = builder.indicator(time - 1, state)
            row = dict(coeffs)
            if index is not None:
                row[index] = row.get(index, 0.0) - m
                program.add_row(row, None, float(-const), f"presence_t{time}_s{state}")
            else:
                program.add_row(row, None, m * constant - const, f"presence_t{time}_s{state}")
        for state in sorted(absent_required):
            coeffs = absent_required[state]
            used = float(committed_forbid.get(state, 0))
            index, constant = builder.indicator(time - 1, state)
            row = dict(coeffs)
            if index is not None:
                row[index] = row.get(index, 0.0) + m
                program.add_row(row, None, m - used, f"absence_t{time}_s{state}")
            else:
                program.add_row(row, None, m * (1 - constant) - used, f"absence_t{time}_s{state}")

    emap = EncodingMap(
        count_index=builder.count_index,
        indicator_index=builder.indicator_index,
        multiplicity=multiplicity,
        horizon=horizon,
        time_offset=time_offset,
        committed={k: v for k, v in committed.items() if v},
        initial=initial,
        model=model,
    )
    return program, emap


def encode_offline(
    model: BehaviourModel,
    initial: StateMultiset,
    observations: list[Observation],
    horizon: int,
    multiplicity: int,
    time_offset: int = 0,
) -> tuple[IntegerProgram, EncodingMap]:
    """Program whose optima are the MAP complete trajectories over the
    window: exactly-one-action agency, observations as hard rows."""
    return _encode(model, initial, observations, horizon, multiplicity,
                   committed={}, agency_equality=True, time_offset=time_offset,
                   first_free=None)


def encode_online(
    model: BehaviourModel,
    initial: StateMultiset,
    observations: list[Observation],
    horizon: int,
    multiplicity: int,
    committed: dict[tuple[int, int], int],
    time_offset: int = 0,
    first_free: int | None = None,
    agency_equality: bool = False,
) -> tuple[IntegerProgram, EncodingMap]:
    """Streaming variant: at-most-one-action agency with committed
    actions pre-consumed, committed occupancies as constants, observation
    rows only at steps without commitments.  ``agency_equality=True``
    restores exact agency for completing a partial trajectory."""
    return _encode(model, initial, observations, horizon, multiplicity,
                   committed=committed, agency_equality=agency_equality,
                   time_offset=time_offset, first_free=first_free)


def decode(values, emap: EncodingMap) -> Trajectory:
    """Turn an integral solver assignment back into a trajectory,
    merging committed counts with the solved ones."""
    steps: list[EventCounts] = [dict() for _ in range(emap.horizon)]

    def local(time: int) -> EventCounts:
        return steps[time - emap.time_offset - 1]

    for (time, event_id), index in sorted(emap.count_index.items()):
        value = float(values[index])
        rounded = round(value)
        if abs(value - rounded) > INTEGRALITY_TOL:
            raise SolverError(
                f"count variable for t={time}, event {event_id} is {value}, "
                "beyond the integrality tolerance"
            )
        if rounded:
            counts = local(time)
            counts[event_id] = counts.get(event_id, 0) + int(rounded)
    for (time, event_id), count in sorted(emap.committed.items()):
        counts = local(time)
        counts[event_id] = counts.get(event_id, 0) + count
    return Trajectory(initial=emap.initial, steps=tuple(steps), start_time=emap.time_offset)
