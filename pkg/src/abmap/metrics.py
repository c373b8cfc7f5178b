"""Assimilation quality measures on the predator-prey grid.

The headline curve: at each timestep, how far (shortest torus Manhattan
distance) is each unobserved agent of the estimate from the nearest
unobserved agent of the same species in the reference trajectory.
Observed agents are discounted by subtracting the reported counts per
state from both sides.  A Monte Carlo baseline replaces the estimate
with uniformly random placements of the same population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ModelError
from .model import BehaviourModel, Observation, StateMultiset, Trajectory, states_at
from .predprey import Species, decode_state, state_index, torus_l1


@dataclass(frozen=True)
class DistanceSample:
    """Mean nearest-neighbour distance over ``n_agents`` unobserved
    estimate agents; species without any unobserved reference agent are
    skipped and counted in ``skipped_agents``."""

    mean: float
    n_agents: int
    skipped_agents: int

    @property
    def empty(self) -> bool:
        return self.n_agents == 0


def observed_counts(observations: Iterable[Observation], time: int) -> dict[int, int]:
    """Reported occupancy per state at a timestep.  Only single-state
    observations carry a per-state count; the generator emits exactly
    that shape."""
    counts: dict[int, int] = {}
    for obs in observations:
        if obs.time != time or len(obs.states) != 1:
            continue
        (state,) = obs.states
        counts[state] = counts.get(state, 0) + obs.lower
    return counts


def _unobserved(occupancy: StateMultiset, seen: dict[int, int]) -> StateMultiset:
    return occupancy.subtract_clamped(StateMultiset({s: c for s, c in seen.items() if c > 0}))


def _split_cells(occupancy: StateMultiset, grid_size: int) -> dict[Species, list]:
    cells: dict[Species, list] = {Species.PREDATOR: [], Species.PREY: []}
    for state, count in occupancy.items():
        cell = decode_state(state, grid_size)
        cells[cell.species].extend([cell] * count)
    return cells


def _nearest_distances(estimate_cells, reference_cells, grid_size: int):
    distances = []
    skipped = 0
    for species in (Species.PREDATOR, Species.PREY):
        targets = reference_cells[species]
        for cell in estimate_cells[species]:
            if not targets:
                skipped += 1
                continue
            distances.append(min(torus_l1(cell, other, grid_size) for other in targets))
    return distances, skipped


def unobserved_distance(
    real: Trajectory,
    estimate: Trajectory,
    observations: Iterable[Observation],
    time: int,
    grid_size: int,
    model: BehaviourModel,
) -> DistanceSample:
    """Distance sample at one timestep; 0 with ``n_agents=0`` when no
    unobserved estimate agents exist."""
    seen = observed_counts(observations, time)
    real_unobs = _unobserved(states_at(real, time, model), seen)
    est_unobs = _unobserved(states_at(estimate, time, model), seen)
    est_cells = _split_cells(est_unobs, grid_size)
    real_cells = _split_cells(real_unobs, grid_size)
    distances, skipped = _nearest_distances(est_cells, real_cells, grid_size)
    if not distances:
        return DistanceSample(0.0, 0, skipped)
    return DistanceSample(float(np.mean(distances)), len(distances), skipped)


def random_baseline(
    real: Trajectory,
    observations: Iterable[Observation],
    time: int,
    grid_size: int,
    model: BehaviourModel,
    mc_samples: int = 1000,
    seed: int = 0,
) -> float:
    """Expected distance when the unobserved population is placed
    uniformly at random, estimated by Monte Carlo."""
    if mc_samples < 1:
        raise ModelError("Monte Carlo baseline needs at least one sample")
    seen = observed_counts(observations, time)
    real_unobs = _unobserved(states_at(real, time, model), seen)
    real_cells = _split_cells(real_unobs, grid_size)
    population = {
        species: len(cells) for species, cells in real_cells.items() if cells
    }
    if not population:
        return 0.0
    rng = np.random.default_rng(seed)
    n_cells = grid_size * grid_size
    means = []
    for _ in range(mc_samples):
        placed: dict[Species, list] = {Species.PREDATOR: [], Species.PREY: []}
        for species in (Species.PREDATOR, Species.PREY):
            count = population.get(species, 0)
            for cell in rng.integers(0, n_cells, size=count):
                row, col = divmod(int(cell), grid_size)
                placed[species].append(decode_state(
                    state_index(species, row, col, grid_size), grid_size))
        distances, _ = _nearest_distances(placed, real_cells, grid_size)
        if distances:
            means.append(float(np.mean(distances)))
    return float(np.mean(means)) if means else 0.0


def log_ratio(candidate: Trajectory, reference: Trajectory, model: BehaviourModel) -> float:
    """Log of the posterior probability ratio of two trajectories that
    satisfy the same observations (the hard evidence cancels)."""
    from .model import log_probability

    return log_probability(candidate, model) - log_probability(reference, model)


@dataclass(frozen=True)
class CurvePoint:
    time: int
    mean_distance: float
    n_samples: int
    baseline: float


def distance_curve(
    real: Trajectory,
    estimate: Trajectory,
    observations: Iterable[Observation],
    grid_size: int,
    model: BehaviourModel,
    mc_samples: int = 1000,
    seed: int = 0,
) -> list[CurvePoint]:
    """Per-timestep distance and baseline, ready for CSV export."""
    observations = list(observations)
    points = []
    for time in range(1, real.n_steps + 1):
        sample = unobserved_distance(real, estimate, observations, time, grid_size, model)
        base = random_baseline(real, observations, time, grid_size, model,
                               mc_samples=mc_samples, seed=seed + time)
        points.append(CurvePoint(time, sample.mean, sample.n_agents, base))
    return points


def curve_csv(points: list[CurvePoint], summary: dict[str, float] | None = None) -> str:
    lines = []
    for key, value in (summary or {}).items():
        lines.append(f"# {key},{value!r}")
    lines.append("t,mean_distance,n_samples,baseline")
    for p in points:
        lines.append(f"{p.time},{p.mean_distance!r},{p.n_samples},{p.baseline!r}")
    return "\n".join(lines) + "\n"
