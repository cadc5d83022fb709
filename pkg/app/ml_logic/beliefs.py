"""
Agent beliefs over world configurations: adjacency observations, Bayesian
updates and belief-aware planning.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from app.data.worldmodel import (
    Action,
    ACTION_ORDER,
    Cell,
    GridSpec,
    State,
    Status,
    WorldConfig,
    available_actions,
    transition,
)
from app.ml_logic.agents import AgentBatch, AgentParams, Episode
from app.utils.errors import IllegalActionError, ImpossibleObservationError
from app.utils.settings import FINGERPRINT_DECIMALS, NORMALIZATION_TOL, SENSING_RADIUS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Belief:
    """
    Finite weight table over world configurations.

    Zero-weight configurations are dropped and the rest kept in a canonical order,
    so equal beliefs compare and hash equal.
    """

    weights: Tuple[Tuple[WorldConfig, float], ...]

    def __post_init__(self):
        kept = tuple(sorted(((c, float(w)) for c, w in self.weights if w > 0), key=lambda cw: cw[0].key))
        if any(w < 0 for _, w in self.weights):
            raise ValueError("belief weights must be non-negative")
        total = sum(w for _, w in kept)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"belief weights sum to {total}, expected 1")
        object.__setattr__(self, "weights", kept)

    @classmethod
    def of(cls, mapping: Mapping[WorldConfig, float]) -> "Belief":
        """Normalize an unnormalized weight mapping."""
        total = float(sum(mapping.values()))
        if total <= 0:
            raise ValueError("belief needs positive mass")
        return cls(tuple((c, w / total) for c, w in mapping.items()))

    @classmethod
    def point_mass(cls, config: WorldConfig) -> "Belief":
        return cls(((config, 1.0),))

    @classmethod
    def independent(cls, true_config: WorldConfig, p_open: Mapping[str, float]) -> "Belief":
        """
        Product of independent open/closed beliefs about some restaurants.

        Args:
            true_config: Supplies the status of every restaurant not in p_open
            p_open: Mapping restaurant-id -> probability the agent assigns to it being open

        Returns:
            Belief over the configurations that vary the restaurants of p_open
        """
        weights = {}
        for config in config_space(true_config, sorted(p_open)):
            w = 1.0
            for restaurant, p in p_open.items():
                w *= p if config.is_open(restaurant) else 1.0 - p
            weights[config] = w
        return cls.of(weights)

    @property
    def support(self) -> Tuple[WorldConfig, ...]:
        return tuple(c for c, _ in self.weights)

    def weight(self, config: WorldConfig) -> float:
        return dict(self.weights).get(config, 0.0)

    @property
    def is_point_mass(self) -> bool:
        return len(self.weights) == 1

    def fingerprint(self) -> Tuple[Tuple[Tuple[Tuple[str, str], ...], float], ...]:
        return tuple((c.key, round(w, FINGERPRINT_DECIMALS)) for c, w in self.weights)

    def p_open(self, restaurant: str) -> float:
        return sum(w for c, w in self.weights if c.is_open(restaurant))


def config_space(true_config: WorldConfig, uncertain: Sequence[str]) -> List[WorldConfig]:
    """Every configuration that agrees with the true one outside the uncertain restaurants."""
    fixed = true_config.as_dict()
    configs = []
    for statuses in itertools.product((Status.OPEN, Status.CLOSED), repeat=len(uncertain)):
        status = dict(fixed)
        status.update(zip(uncertain, statuses))
        configs.append(WorldConfig.of(status))
    return configs


@dataclass(frozen=True)
class Observation:
    seen: Tuple[Tuple[str, Status], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[str, str]) -> "Observation":
        return cls(tuple(sorted((r, Status(s)) for r, s in mapping.items())))

    @property
    def is_empty(self) -> bool:
        return not self.seen

    def consistent(self, config: WorldConfig) -> bool:
        status = config.as_dict()
        return all(status[r] is s for r, s in self.seen)


def observe(grid: GridSpec, config: WorldConfig, position: Cell) -> Observation:
    """Noise-free status of every restaurant within the sensing radius of a cell."""
    x, y = position
    status = config.as_dict()
    seen = {
        r: status[r]
        for r, (rx, ry) in grid.restaurants.items()
        if abs(rx - x) + abs(ry - y) <= SENSING_RADIUS
    }
    return Observation.of(seen)


def belief_update(belief: Belief, obs: Observation) -> Belief:
    """
    Condition a belief on an observation.

    Args:
        belief: Prior belief
        obs: Observed restaurant statuses

    Returns:
        Belief restricted to the consistent configurations and renormalized
    """
    if obs.is_empty:
        return belief
    kept = [(c, w) for c, w in belief.weights if obs.consistent(c)]
    if len(kept) == len(belief.weights):
        return belief
    total = sum(w for _, w in kept)
    if total <= 0:
        raise ImpossibleObservationError(f"observation {dict(obs.seen)} has zero probability under the belief")
    return Belief(tuple((c, w / total) for c, w in kept))


class BeliefPlanner:
    """
    Expected-utility and choice recursion for agents uncertain about the configuration.

    Beliefs passed to the planner are already conditioned on the observation at the
    state's position. Memo entries are keyed on (state, delay, belief fingerprint).

    Args:
        grid: World geometry
        batch: Hypotheses to evaluate
    """

    def __init__(self, grid: GridSpec, batch: AgentBatch):
        self.grid = grid
        self.batch = batch
        self._q = {}
        self._c = {}

    def actions(self, belief: Belief, state: State) -> Tuple[Action, ...]:
        legal = set()
        for config in belief.support:
            legal.update(available_actions(state, self.grid, config))
        return tuple(a for a in ACTION_ORDER if a in legal)

    def q_values(self, belief: Belief, state: State, delay: int) -> Tuple[Tuple[Action, ...], np.ndarray]:
        delay = self.batch.delay_key(delay)
        key = (state, delay, belief.fingerprint())
        cached = self._q.get(key)
        if cached is not None:
            return cached

        actions = self.actions(belief, state)
        now = self.batch.discount(delay) * self.batch.step_utility(state)
        table = np.empty((len(actions), self.batch.size))
        for row, action in enumerate(actions):
            table[row] = now + self._expected_future(belief, state, action, delay + 1)

        self._q[key] = (actions, table)
        return actions, table

    def choice(self, belief: Belief, state: State, delay: int) -> Tuple[Tuple[Action, ...], np.ndarray]:
        delay = self.batch.delay_key(delay)
        key = (state, delay, belief.fingerprint())
        actions, q = self.q_values(belief, state, delay)
        probs = self._c.get(key)
        if probs is None:
            probs = softmax(self.batch.alpha[None, :] * q, axis=0)
            self._c[key] = probs
        return actions, probs

    def _expected_future(self, belief: Belief, state: State, action: Action, delay: int) -> np.ndarray:
        # Group the configurations by what the agent will see next
        groups: Dict[Observation, float] = {}
        successor = None
        for config, w in belief.weights:
            if action not in available_actions(state, self.grid, config):
                continue
            successor = transition(state, action, self.grid, config)
            if successor.done:
                return np.zeros(self.batch.size)
            obs = observe(self.grid, config, successor.position)
            groups[obs] = groups.get(obs, 0.0) + w

        value = np.zeros(self.batch.size)
        for obs, mass in groups.items():
            updated = belief_update(belief, obs)
            _, q = self.q_values(updated, successor, delay)
            _, probs = self.choice(updated, successor, self.batch.future_choice_delay(delay))
            value += mass * (probs * q).sum(axis=0)
        return value


def _planner(params: AgentParams, grid: GridSpec) -> BeliefPlanner:
    return BeliefPlanner(grid, AgentBatch.from_params([params]))


def eu_uncertain(
    belief: Belief,
    obs: Observation,
    state: State,
    action: Action,
    delay: int,
    params: AgentParams,
    grid: GridSpec,
) -> float:
    """
    Expected utility of an action for an agent that is unsure of the configuration.

    Args:
        belief: Belief before seeing obs
        obs: What the agent sees in the current state
        state: Current state
        action: Action to evaluate
        delay: Steps between the planning moment and this state
        params: Agent hypothesis
        grid: World geometry

    Returns:
        Expected utility under the updated belief
    """
    updated = belief_update(belief, obs)
    actions, q = _planner(params, grid).q_values(updated, state, delay)
    if action not in actions:
        raise IllegalActionError(f"{Action(action).value} is not legal in {state} under any believed configuration")
    return float(q[actions.index(action), 0])


def choice_distribution_uncertain(belief, obs, state, delay, params, grid):
    """
    Softmax distribution over actions for an agent that first updates on what it sees.

    Args:
        belief: Belief before seeing obs
        obs: What the agent sees in the current state
        state: Current state
        delay: Steps between the planning moment and this state
        params: Agent hypothesis
        grid: World geometry

    Returns:
        Mapping action -> probability over the actions legal in some believed configuration
    """
    updated = belief_update(belief, obs)
    actions, probs = _planner(params, grid).choice(updated, state, delay)
    return {a: float(p) for a, p in zip(actions, probs[:, 0])}


def _rollout(params, grid, config, start, pick) -> Tuple[Tuple[Action, ...], State]:
    planner = _planner(params, grid)
    belief = params.prior
    state, actions = start or State(grid.start), []
    while not state.done:
        belief = belief_update(belief, observe(grid, config, state.position))
        options, probs = planner.choice(belief, state, 0)
        action = options[pick(probs[:, 0])]
        actions.append(action)
        state = transition(state, action, grid, config)
    return tuple(actions), state


def simulate_uncertain(
    params: AgentParams,
    grid: GridSpec,
    config: WorldConfig,
    seed: int,
    start: Optional[State] = None,
) -> Episode:
    """Sample an episode for an agent that starts from its prior and learns by observation."""
    rng = np.random.default_rng(seed)
    actions, final = _rollout(params, grid, config, start, lambda p: rng.choice(len(p), p=p))
    logger.debug("simulated %d steps under belief, final state %s", len(actions), final)
    return Episode(grid, config, start or State(grid.start), actions)


def greedy_rollout_uncertain(params, grid, config, start=None):
    """
    Follow the most likely action of a learning agent until Done.

    Args:
        params: Agent hypothesis, its prior is the starting belief
        grid: World geometry
        config: True world configuration, the source of observations
        start: Start state, defaults to the grid's start cell at time 0

    Returns:
        The actions taken
    """
    actions, _ = _rollout(params, grid, config, start, lambda p: int(np.argmax(p)))
    return actions
