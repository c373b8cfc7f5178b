"""Forward sampling of trajectories and synthetic noisy observations.

Updates are synchronous: every agent sees the occupancy at the start of
the step.  Sampling iterates occupied states in index order and draws
event counts from one seeded NumPy PCG64 generator, so a fixed seed
reproduces the trajectory bit for bit.  Observation thinning uses its
own independent seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .model import (
    BehaviourModel,
    EventCounts,
    Observation,
    StateMultiset,
    Trajectory,
    consequence,
    states_at,
)
from .predprey import Species, state_index


@dataclass(frozen=True)
class UniformInitial:
    """Initial population spec: so many predators and prey dropped on
    uniformly random squares (squares may be shared)."""

    n_predators: int
    n_prey: int
    grid_size: int

    def __post_init__(self) -> None:
        if self.n_predators < 0 or self.n_prey < 0:
            raise ModelError("population counts must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    seed: int
    timesteps: int
    initial: StateMultiset | UniformInitial
    observe_prob: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        if self.timesteps < 1:
            raise ModelError("simulation needs at least one timestep")
        if not 0.0 <= self.observe_prob <= 1.0:
            raise ModelError("observation probability must lie in [0, 1]")


def sample_uniform_initial(spec: UniformInitial, rng: np.random.Generator) -> StateMultiset:
    counts: dict[int, int] = {}
    n_cells = spec.grid_size * spec.grid_size
    for species, population in ((Species.PREDATOR, spec.n_predators),
                                (Species.PREY, spec.n_prey)):
        for cell in rng.integers(0, n_cells, size=population):
            row, col = divmod(int(cell), spec.grid_size)
            state = state_index(species, row, col, spec.grid_size)
            counts[state] = counts.get(state, 0) + 1
    return StateMultiset(counts)


def simulate(model: BehaviourModel, cfg: SimConfig) -> Trajectory:
    """Sample one trajectory.  Each agent draws one event from the
    options feasible in the start-of-step environment, renormalized over
    that feasible set (a no-op for normalized models)."""
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.initial, UniformInitial):
        occupancy = sample_uniform_initial(cfg.initial, rng)
    else:
        occupancy = cfg.initial
        for state, _ in occupancy.items():
            model.domain.check_state(state)

    initial = occupancy
    steps: list[EventCounts] = []
    for time in range(1, cfg.timesteps + 1):
        snapshot = occupancy
        counts: EventCounts = {}
        for state, population in snapshot.items():
            options = [e for e in model.actor_events(state) if e.feasible_in(snapshot)]
            if not options:
                raise ModelError(
                    f"state {state} has no feasible behaviour at t={time}; "
                    "the model is not normalized"
                )
            probs = np.array([e.probability for e in options], dtype=float)
            draws = rng.multinomial(population, probs / probs.sum())
            for event, n in zip(options, draws):
                if n:
                    counts[event.id] = counts.get(event.id, 0) + int(n)
        for injection in model.injections_at(time):
            if not injection.mandatory and injection.event.feasible_in(snapshot):
                if rng.random() < injection.event.probability:
                    counts[injection.event.id] = 1
        steps.append(counts)
        occupancy = consequence(counts, model) + model.injected_occupancy(time)

    return Trajectory(initial=initial, steps=tuple(steps))


def observe(traj: Trajectory, cfg: SimConfig, rng_seed: int, model: BehaviourModel) -> list[Observation]:
    """Thin every post-step occupancy: each agent is seen independently
    with probability ``observe_prob``.  Counts are grouped per state and
    reported as at-least observations (false negatives only); states
    with no sightings yield nothing.  The initial occupancy is boundary
    data, not an observation."""
    rng = np.random.default_rng(rng_seed)
    observations: list[Observation] = []
    for time in range(1, traj.n_steps + 1):
        occupancy = states_at(traj, time, model)
        for state, count in occupancy.items():
            seen = int(rng.binomial(count, cfg.observe_prob))
            if seen >= 1:
                observations.append(
                    Observation(time=time, lower=seen, upper=None, states=frozenset({state}))
                )
    return observations
