"""Spatial predator-prey behaviour model on an N-by-N torus.

Two species share a periodic grid.  Per timestep a prey dies, reproduces
onto any neighbouring square, moves to a predator-free neighbouring
square, or stays put when no predator is adjacent; whenever a predator
is adjacent the corresponding move/stay probability mass goes to the
prey being eaten, which replaces it with a predator on its own square.
Predators die, move, or stay unconditionally.

The move/stay rates are split per direction into mutually exclusive
options (move when the target square is predator-free, eaten otherwise;
for staying, the lowest-ordered adjacent predator does the eating) so
that the option probabilities of every state sum to one in every
environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .errors import ModelError
from .model import AgentEvent, BehaviourModel, StateDomain, StateMultiset

RATE_TOL = 1e-12

# Fixed precedence order; the disambiguation of multi-predator eating
# and the event id layout both depend on it.
DIRECTIONS = (("up", -1, 0), ("down", 1, 0), ("left", 0, -1), ("right", 0, 1))


class Species(IntEnum):
    PREDATOR = 0
    PREY = 1


@dataclass(frozen=True)
class CellState:
    """One agent state: a species on a grid square."""

    species: Species
    row: int
    col: int


@dataclass(frozen=True)
class PredPreyConfig:
    """Grid size plus the seven behaviour rates.

    Defaults are the reference rates; each species' rates must sum to 1.
    """

    grid_size: int = 32
    prey_die: float = 0.03
    prey_reproduce: float = 0.06
    prey_move: float = 0.728
    prey_stay: float = 0.182
    predator_die: float = 0.05
    predator_move: float = 0.76
    predator_stay: float = 0.19

    def __post_init__(self) -> None:
        if self.grid_size < 3:
            raise ModelError(
                f"grid size {self.grid_size} is degenerate: "
                "torus neighbours must be four distinct squares"
            )
        rates = (self.prey_die, self.prey_reproduce, self.prey_move, self.prey_stay,
                 self.predator_die, self.predator_move, self.predator_stay)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ModelError("behaviour rates must lie in [0, 1]")
        prey_sum = self.prey_die + self.prey_reproduce + self.prey_move + self.prey_stay
        predator_sum = self.predator_die + self.predator_move + self.predator_stay
        if abs(prey_sum - 1.0) > RATE_TOL:
            raise ModelError(f"prey rates sum to {prey_sum!r}, expected 1")
        if abs(predator_sum - 1.0) > RATE_TOL:
            raise ModelError(f"predator rates sum to {predator_sum!r}, expected 1")

    @property
    def n_states(self) -> int:
        return 2 * self.grid_size * self.grid_size


def state_index(species: Species, row: int, col: int, grid_size: int) -> int:
    """Bijective encoding: species * N^2 + row * N + col."""
    if not (0 <= row < grid_size and 0 <= col < grid_size):
        raise ModelError(f"cell ({row}, {col}) outside {grid_size}x{grid_size} grid")
    return int(species) * grid_size * grid_size + row * grid_size + col


def decode_state(state: int, grid_size: int) -> CellState:
    cells = grid_size * grid_size
    if not 0 <= state < 2 * cells:
        raise ModelError(f"state {state} outside predator-prey domain for N={grid_size}")
    species, cell = divmod(state, cells)
    row, col = divmod(cell, grid_size)
    return CellState(Species(species), row, col)


def torus_l1(a: CellState, b: CellState, grid_size: int) -> int:
    """Shortest Manhattan distance on the periodic grid (species ignored)."""
    dr = abs(a.row - b.row)
    dc = abs(a.col - b.col)
    return min(dr, grid_size - dr) + min(dc, grid_size - dc)


def _neighbours(row: int, col: int, grid_size: int) -> list[tuple[str, int, int]]:
    return [
        (name, (row + dr) % grid_size, (col + dc) % grid_size)
        for name, dr, dc in DIRECTIONS
    ]


def state_labels(grid_size: int) -> tuple[str, ...]:
    names = {Species.PREDATOR: "predator", Species.PREY: "prey"}
    return tuple(
        f"{names[Species(species)]}@({row},{col})"
        for species in (0, 1)
        for row in range(grid_size)
        for col in range(grid_size)
    )


def build_model(cfg: PredPreyConfig) -> BehaviourModel:
    """Construct the full behaviour model: 6 options per predator state
    and 18 per prey state, normalized in every neighbour configuration."""
    n = cfg.grid_size
    domain = StateDomain(cfg.n_states, labels=state_labels(n))
    events: list[AgentEvent] = []

    def add(actor: int, probability: float, consequence: dict[int, int],
            label: str, requires: frozenset[int] = frozenset(),
            forbids: frozenset[int] = frozenset()) -> None:
        events.append(
            AgentEvent(
                id=len(events),
                actor=actor,
                requires=requires,
                forbids=forbids,
                consequence=StateMultiset(consequence),
                probability=probability,
                label=label,
            )
        )

    for state in range(domain.size):
        cell = decode_state(state, n)
        here = f"({cell.row},{cell.col})"
        neighbours = _neighbours(cell.row, cell.col, n)
        if cell.species is Species.PREDATOR:
            add(state, cfg.predator_die, {}, f"predator{here}:die")
            for name, r, c in neighbours:
                target = state_index(Species.PREDATOR, r, c, n)
                add(state, cfg.predator_move / 4, {target: 1}, f"predator{here}:move_{name}")
            add(state, cfg.predator_stay, {state: 1}, f"predator{here}:stay")
        else:
            predator_here = state_index(Species.PREDATOR, cell.row, cell.col, n)
            predator_at = {
                name: state_index(Species.PREDATOR, r, c, n) for name, r, c in neighbours
            }
            add(state, cfg.prey_die, {}, f"prey{here}:die")
            for name, r, c in neighbours:
                target = state_index(Species.PREY, r, c, n)
                add(state, cfg.prey_reproduce / 4, {state: 1, target: 1},
                    f"prey{here}:reproduce_{name}")
            for name, r, c in neighbours:
                target = state_index(Species.PREY, r, c, n)
                add(state, cfg.prey_move / 4, {target: 1}, f"prey{here}:move_{name}",
                    forbids=frozenset({predator_at[name]}))
                add(state, cfg.prey_move / 4, {predator_here: 1},
                    f"prey{here}:eaten_moving_{name}",
                    requires=frozenset({predator_at[name]}))
            add(state, cfg.prey_stay, {state: 1}, f"prey{here}:stay",
                forbids=frozenset(predator_at.values()))
            earlier: list[int] = []
            for name, r, c in neighbours:
                add(state, cfg.prey_stay, {predator_here: 1},
                    f"prey{here}:eaten_staying_{name}",
                    requires=frozenset({predator_at[name]}),
                    forbids=frozenset(earlier))
                earlier.append(predator_at[name])

    return BehaviourModel(domain, events)
