"""
Deterministic Gridworld decision problem for the restaurant-choice agents.

Cells are (x, y) pairs with row 0 at the top, so North moves to y - 1.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from app.utils.errors import IllegalActionError, ScenarioInvalidError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]


class Status(str, Enum):
    OPEN = "Open"
    CLOSED = "Closed"


class Action(str, Enum):
    NORTH = "North"
    SOUTH = "South"
    EAST = "East"
    WEST = "West"
    PROCEED = "Proceed"


class Phase(str, Enum):
    MOVING = "Moving"
    ARRIVED = "Arrived"
    EATING = "Eating"
    DONE = "Done"


MOVES: Dict[Action, Cell] = {
    Action.NORTH: (0, -1),
    Action.SOUTH: (0, 1),
    Action.EAST: (1, 0),
    Action.WEST: (-1, 0),
}

ACTION_ORDER = (Action.NORTH, Action.SOUTH, Action.EAST, Action.WEST, Action.PROCEED)


@dataclass(frozen=True)
class GridSpec:
    """
    Geometry of the world plus the episode horizon.

    Args:
        width: Number of columns
        height: Number of rows
        walls: Impassable cells
        restaurants: Mapping restaurant-id -> cell
        start: Default start cell
        horizon: Maximum number of actions per episode
        kinds: Mapping restaurant-id -> kind (chain name); defaults to the id
    """

    width: int
    height: int
    walls: FrozenSet[Cell]
    restaurants: Mapping[str, Cell]
    start: Cell
    horizon: int
    kinds: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(c) for c in self.walls))
        object.__setattr__(self, "restaurants", {r: tuple(c) for r, c in self.restaurants.items()})
        object.__setattr__(self, "start", tuple(self.start))
        kinds = {r: self.kinds.get(r, r) for r in self.restaurants}
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "_by_cell", {c: r for r, c in self.restaurants.items()})

    __hash__ = object.__hash__

    @property
    def restaurant_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.restaurants))

    def restaurant_at(self, cell: Cell) -> Optional[str]:
        return self._by_cell.get(cell)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class WorldConfig:
    """Open/closed status of every restaurant, stored as a sorted tuple so it hashes."""

    status: Tuple[Tuple[str, Status], ...]

    @classmethod
    def of(cls, mapping: Mapping[str, str]) -> "WorldConfig":
        return cls(tuple(sorted((r, Status(s)) for r, s in mapping.items())))

    def as_dict(self) -> Dict[str, Status]:
        return dict(self.status)

    def is_open(self, restaurant: str) -> bool:
        return dict(self.status)[restaurant] is Status.OPEN

    @property
    def key(self) -> Tuple[Tuple[str, str], ...]:
        return tuple((r, s.value) for r, s in self.status)

    def label(self) -> str:
        return ",".join(f"{r}={s.value}" for r, s in self.status)


@dataclass(frozen=True)
class UtilityParams:
    """
    Per-restaurant utility schedule.

    Args:
        immediate: Utility credited on arrival (the Arrived -> Eating step)
        delayed: Utility credited one step later (the Eating -> Done step)
        time_cost: Utility of every movement step, <= 0
    """

    immediate: Mapping[str, float]
    delayed: Mapping[str, float]
    time_cost: float = -0.01

    def total(self, restaurant: str) -> float:
        return self.immediate[restaurant] + self.delayed[restaurant]


@dataclass(frozen=True)
class State:
    position: Cell
    time: int = 0
    phase: Phase = Phase.MOVING
    restaurant: Optional[str] = None

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def __str__(self):
        where = f"{self.phase.value}({self.restaurant})" if self.restaurant else self.phase.value
        return f"{where}@{self.position}t{self.time}"


def _destination(cell: Cell, action: Action) -> Cell:
    dx, dy = MOVES[action]
    return (cell[0] + dx, cell[1] + dy)


def _passable(cell: Cell, grid: GridSpec, config: WorldConfig) -> bool:
    if not grid.in_bounds(cell) or cell in grid.walls:
        return False
    restaurant = grid.restaurant_at(cell)
    return restaurant is None or config.is_open(restaurant)


def legal_moves(cell: Cell, grid: GridSpec, config: WorldConfig) -> Tuple[Action, ...]:
    """Moves out of a cell, in canonical order."""
    return tuple(a for a in ACTION_ORDER[:4] if _passable(_destination(cell, a), grid, config))


def available_actions(state: State, grid: GridSpec, config: WorldConfig) -> Tuple[Action, ...]:
    """
    Legal actions of a live state.

    Args:
        state: Current state (must not be Done)
        grid: World geometry
        config: Open/closed status of the restaurants

    Returns:
        Non-empty tuple of actions in canonical order
    """
    if state.done:
        raise IllegalActionError(f"no actions in terminal state {state}")
    if state.phase in (Phase.ARRIVED, Phase.EATING):
        return (Action.PROCEED,)
    actions = legal_moves(state.position, grid, config)
    if not actions:
        raise ScenarioInvalidError(f"dead-end state {state} under {config.label()}")
    return actions


def transition(state: State, action: Action, grid: GridSpec, config: WorldConfig) -> State:
    """
    Deterministic successor of a state.

    A successor that would reach the horizon becomes Done instead.
    """
    if state.done or action not in available_actions(state, grid, config):
        raise IllegalActionError(f"{action.value} is not legal in {state}")

    time = state.time + 1
    if state.phase is Phase.EATING:
        return State(state.position, min(time, grid.horizon), Phase.DONE, state.restaurant)
    if state.phase is Phase.ARRIVED:
        successor = State(state.position, time, Phase.EATING, state.restaurant)
    else:
        cell = _destination(state.position, action)
        restaurant = grid.restaurant_at(cell)
        if restaurant is None:
            successor = State(cell, time)
        else:
            successor = State(cell, time, Phase.ARRIVED, restaurant)

    if successor.time >= grid.horizon:
        return State(successor.position, grid.horizon, Phase.DONE, successor.restaurant)
    return successor


def utility(state: State, action: Action, u: UtilityParams) -> float:
    """Utility of taking an action: time cost while moving, restaurant utilities while eating."""
    if state.phase is Phase.ARRIVED:
        return u.immediate[state.restaurant]
    if state.phase is Phase.EATING:
        return u.delayed[state.restaurant]
    return u.time_cost


def reachable_states(grid: GridSpec, config: WorldConfig, start: Optional[State] = None) -> List[State]:
    """
    Breadth-first sweep of the live states reachable from a start state.

    Returns:
        Live (non-Done) states in discovery order
    """
    start = start or State(grid.start)
    seen = {start}
    order = []
    queue = deque([start])
    while queue:
        state = queue.popleft()
        order.append(state)
        for action in available_actions(state, grid, config):
            successor = transition(state, action, grid, config)
            if not successor.done and successor not in seen:
                seen.add(successor)
                queue.append(successor)
    return order


def shortest_distances(
    grid: GridSpec,
    config: WorldConfig,
    source: Cell,
    blocked: Iterable[Cell] = (),
) -> Dict[Cell, int]:
    """
    Move counts from a cell to every cell reachable by walking.

    Restaurant cells are reported but never walked through.
    """
    blocked = set(blocked)
    distances = {source: 0}
    queue = deque([source])
    while queue:
        cell = queue.popleft()
        if cell != source and grid.restaurant_at(cell) is not None:
            continue
        for action in legal_moves(cell, grid, config):
            nxt = _destination(cell, action)
            if nxt in blocked or nxt in distances:
                continue
            distances[nxt] = distances[cell] + 1
            queue.append(nxt)
    return distances


def validate(grid: GridSpec, configs: Iterable[WorldConfig]) -> List[str]:
    """
    Check the geometry invariants and the absence of reachable dead ends.

    Args:
        grid: World geometry
        configs: Configurations the agent may face

    Returns:
        List of error descriptions, empty when the world is valid
    """
    errors = []
    if grid.width < 1 or grid.height < 1:
        errors.append(f"grid must be at least 1x1, got {grid.width}x{grid.height}")
    if grid.horizon < 1:
        errors.append(f"horizon must be >= 1, got {grid.horizon}")

    for cell in sorted(grid.walls):
        if not grid.in_bounds(cell):
            errors.append(f"wall {list(cell)} lies outside the grid")
    if not grid.in_bounds(grid.start):
        errors.append(f"start {list(grid.start)} lies outside the grid")
    if grid.start in grid.walls:
        errors.append(f"start {list(grid.start)} is a wall")

    cells = {}
    for restaurant, cell in sorted(grid.restaurants.items()):
        if not grid.in_bounds(cell):
            errors.append(f"restaurant {restaurant} at {list(cell)} lies outside the grid")
        if cell in grid.walls:
            errors.append(f"restaurant {restaurant} at {list(cell)} is a wall")
        if cell == grid.start:
            errors.append(f"restaurant {restaurant} sits on the start cell")
        if cell in cells:
            errors.append(f"restaurants {cells[cell]} and {restaurant} share cell {list(cell)}")
        cells[cell] = restaurant
    if errors:
        return errors

    for config in configs:
        if set(dict(config.status)) != set(grid.restaurants):
            errors.append(f"configuration {config.label()} does not cover the restaurants")
            continue
        # Legal moves depend on the cell only, so sweep cells within the horizon
        frontier = deque([(grid.start, 0)])
        seen = {grid.start}
        while frontier:
            cell, depth = frontier.popleft()
            moves = legal_moves(cell, grid, config)
            if not moves:
                errors.append(f"dead-end reachable state at {list(cell)} under {config.label()}")
                continue
            if depth + 1 >= grid.horizon:
                continue
            for action in moves:
                nxt = _destination(cell, action)
                if nxt in seen or grid.restaurant_at(nxt) is not None:
                    continue
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    if errors:
        logger.debug("validation found %d problems", len(errors))
    return errors
