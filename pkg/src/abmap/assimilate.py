"""End-to-end MAP drivers.

``map_offline`` compiles one window to a program, solves it exactly and
verifies the decoded trajectory against the reference calculus.  The
streaming driver keeps a growing set of committed event counts: each new
observation window is solved as a most-probable *partial* trajectory
extension (agents may stay unmoved, "hanging", until later evidence
arrives), infeasible windows roll commitments back one timestep at a
time, and ``complete`` closes the stream by restoring exact agency.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

from . import encode as _encode
from .encode import (
    committed_trajectory,
    compute_first_free,
    decode,
    default_multiplicity,
    encode_offline,
    encode_online,
)
from .errors import (
    EncodingError,
    InconsistentObservationsError,
    InfeasibleError,
    SolverBudgetError,
    SolverError,
)
from .milp import MilpResult, MilpStatus, SolveLimits, solve_milp
from .model import (
    BehaviourModel,
    FeasibilityMode,
    Observation,
    StateMultiset,
    Trajectory,
    check_feasible,
    log_probability,
    satisfies,
    states_at,
)

OBJECTIVE_TOL = 1e-6


def _run(program, limits: SolveLimits | None) -> MilpResult:
    result = solve_milp(program, limits)
    if result.status is MilpStatus.TIMEOUT:
        raise SolverBudgetError(
            f"solver budget exhausted after {result.nodes_explored} nodes "
            f"(best bound {result.bound:.6f})"
        )
    return result


def _split_boundary_observations(
    observations: list[Observation], initial: StateMultiset
) -> list[Observation]:
    """Check timestep-0 observations directly against the boundary state
    and return the rest."""
    remaining = []
    for obs in observations:
        if obs.time == 0:
            if not obs.satisfied_by(initial):
                raise InfeasibleError(
                    f"boundary state contradicts a timestep-0 observation "
                    f"on states {sorted(obs.states)}"
                )
        else:
            remaining.append(obs)
    return remaining


def map_offline(
    model: BehaviourModel,
    initial: StateMultiset,
    observations: list[Observation],
    horizon: int,
    multiplicity: int | None = None,
    limits: SolveLimits | None = None,
    time_offset: int = 0,
) -> Trajectory:
    """Most probable complete trajectory over one window, exactly.

    Raises InfeasibleError when no trajectory within the reachable
    support and multiplicity bound satisfies the observations."""
    observations = _split_boundary_observations(observations, initial)
    if multiplicity is None:
        multiplicity = default_multiplicity(model, initial, horizon, time_offset)
    program, emap = encode_offline(
        model, initial, observations, horizon, multiplicity, time_offset
    )
    result = _run(program, limits)
    if result.status is MilpStatus.INFEASIBLE:
        raise InfeasibleError(
            "no feasible trajectory satisfies the observations "
            f"(horizon {horizon}, multiplicity {multiplicity})"
        )
    trajectory = decode(result.values, emap)
    _verify_map(trajectory, model, observations, result.objective, emap)
    return trajectory


def _verify_map(trajectory, model, observations, objective, emap) -> None:
    broken = check_feasible(trajectory, model, FeasibilityMode.COMPLETE)
    if broken:
        raise SolverError(f"decoded optimum is infeasible: {broken[0]}")
    unmet = satisfies(trajectory, observations, model)
    if unmet:
        raise SolverError(f"decoded optimum misses an observation: {unmet[0]}")
    committed_weight = sum(
        count * emap.model.event(event_id).log_probability()
        for (_, event_id), count in emap.committed.items()
    )
    if abs(log_probability(trajectory, model) - (objective + committed_weight)) > OBJECTIVE_TOL:
        raise SolverError("decoded log-probability disagrees with the solver objective")


def map_offline_windowed(
    model: BehaviourModel,
    initial: StateMultiset,
    observations: list[Observation],
    horizon: int,
    window: int,
    multiplicity: int | None = None,
    limits: SolveLimits | None = None,
) -> Trajectory:
    """Chain offline windows: each window's MAP end state becomes the
    next window's boundary.  A single window covers the whole horizon
    when ``window >= horizon``."""
    if window < 1:
        raise EncodingError("window must be at least one timestep")
    observations = _split_boundary_observations(observations, initial)
    for obs in observations:
        if obs.time > horizon:
            raise EncodingError(f"observation at t={obs.time} beyond horizon {horizon}")
    steps = []
    boundary = initial
    start = 0
    while start < horizon:
        span = min(window, horizon - start)
        in_window = [o for o in observations if start < o.time <= start + span]
        piece = map_offline(
            model, boundary, in_window, span, multiplicity, limits, time_offset=start
        )
        steps.extend(piece.steps)
        boundary = states_at(piece, span, model)
        start += span
    trajectory = Trajectory(initial=initial, steps=tuple(steps))
    return trajectory


@dataclass
class AssimilationState:
    """Streaming assimilation bookkeeping: the committed partial
    trajectory plus everything needed to extend or roll it back.
    Single-owner; mutate from one thread only."""

    model: BehaviourModel
    initial: StateMultiset
    multiplicity: int
    window: int = 1
    lookback: int | None = None
    horizon: int = 0
    committed: dict[tuple[int, int], int] = field(default_factory=dict)
    observations: list[Observation] = field(default_factory=list)
    rollback_count: int = 0
    limits: SolveLimits | None = None

    def committed_partial(self) -> Trajectory:
        return committed_trajectory(self.initial, self.committed, max(self.horizon, 0))

    def active_observations(self) -> list[Observation]:
        committed_times = {t for (t, _), c in self.committed.items() if c}
        return [o for o in self.observations if o.time not in committed_times]


def _solve_window(state: AssimilationState, agency_equality: bool):
    """One online solve over the whole processed horizon; None when the
    program is infeasible (the caller decides whether to roll back)."""
    first_free = compute_first_free(
        state.model, state.initial, state.horizon, state.committed,
        lookback=None if agency_equality else state.lookback,
    )
    program, emap = encode_online(
        state.model,
        state.initial,
        state.active_observations(),
        state.horizon,
        state.multiplicity,
        dict(state.committed),
        first_free=first_free,
        agency_equality=agency_equality,
    )
    result = _run(program, state.limits)
    if result.status is MilpStatus.INFEASIBLE:
        return None
    return result, emap


def rollback(state: AssimilationState, agency_equality: bool = False):
    """Discard commitments one timestep at a time, newest first, until a
    solution exists again.  Raises when even an empty commitment set is
    infeasible (the observations contradict the model and boundary).
    Returns the first feasible solve."""
    while True:
        committed_times = sorted({t for (t, _), c in state.committed.items() if c})
        if not committed_times:
            raise InconsistentObservationsError(
                "observations are inconsistent with the model and boundary "
                "conditions even after rolling back every commitment"
            )
        newest = committed_times[-1]
        state.committed = {
            key: count for key, count in state.committed.items() if key[0] != newest
        }
        state.rollback_count += 1
        solved = _solve_window(state, agency_equality)
        if solved is not None:
            return solved


def step_online(state: AssimilationState, new_observations: list[Observation]) -> AssimilationState:
    """Ingest the next observation window and extend the committed
    partial trajectory by the most probable feasible explanation."""
    new_horizon = state.horizon + state.window
    for obs in new_observations:
        if not state.horizon < obs.time <= new_horizon:
            raise EncodingError(
                f"observation at t={obs.time} outside the next window "
                f"({state.horizon + 1}..{new_horizon})"
            )
    state.observations.extend(new_observations)
    state.horizon = new_horizon
    solved = _solve_window(state, agency_equality=False)
    if solved is None:
        solved = rollback(state)
    state.committed = _decoded_counts(*solved)
    return state


def _decoded_counts(result: MilpResult, emap) -> dict[tuple[int, int], int]:
    trajectory = decode(result.values, emap)
    counts: dict[tuple[int, int], int] = {}
    for offset, step in enumerate(trajectory.steps):
        for event_id, count in step.items():
            counts[(offset + 1 + emap.time_offset, event_id)] = count
    return counts


def commit_departure(
    state: AssimilationState, evasion_threshold: float, observe_prob: float
) -> AssimilationState:
    """Write off hanging agents that have dodged observation implausibly
    long: once (1 - observe_prob)^(horizon - t) drops below the
    threshold, commit an exit option (empty consequence) for the
    surplus, when the model offers one."""
    if not 0.0 < observe_prob <= 1.0:
        raise EncodingError("observation probability must lie in (0, 1]")
    if evasion_threshold <= 0.0:
        return state
    partial = state.committed_partial()
    for time in range(0, state.horizon):
        evasion = (1.0 - observe_prob) ** (state.horizon - time)
        if evasion >= evasion_threshold:
            continue
        occupancy = states_at(partial, time, state.model)
        consumed: dict[int, int] = {}
        for (when, event_id), count in state.committed.items():
            if when == time + 1 and not state.model.is_injection_event(event_id):
                actor = state.model.event(event_id).actor
                consumed[actor] = consumed.get(actor, 0) + count
        for agent_state, available in occupancy.items():
            surplus = available - consumed.get(agent_state, 0)
            if surplus <= 0:
                continue
            exits = [
                e for e in state.model.actor_events(agent_state)
                if e.consequence.total() == 0 and e.feasible_in(occupancy)
            ]
            if not exits:
                continue  # no exit behaviour; leave the agent hanging
            exits.sort(key=lambda e: (-e.probability, e.id))
            key = (time + 1, exits[0].id)
            state.committed[key] = state.committed.get(key, 0) + surplus
        partial = state.committed_partial()
    return state


def complete(state: AssimilationState) -> Trajectory:
    """Extend the committed partial trajectory into the most probable
    complete one by restoring exact agency, rolling back if needed."""
    solved = _solve_window(state, agency_equality=True)
    if solved is None:
        solved = rollback(state, agency_equality=True)
    result, emap = solved
    trajectory = decode(result.values, emap)
    broken = check_feasible(trajectory, state.model, FeasibilityMode.COMPLETE)
    if broken:
        raise SolverError(f"completed trajectory is infeasible: {broken[0]}")
    unmet = satisfies(trajectory, state.observations, state.model)
    if unmet:
        raise InfeasibleError(
            f"completed trajectory misses a previously ingested observation: {unmet[0]}"
        )
    return trajectory
