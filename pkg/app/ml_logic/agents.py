"""
Full-knowledge agents: hyperbolic discounting, softmax choice and the
Naive / Sophisticated models of the future self.

The planner is vectorized over a batch of hypotheses that share an agent
type, so every expected-utility table has shape (actions, hypotheses).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from app.data.worldmodel import (
    Action,
    GridSpec,
    Phase,
    State,
    UtilityParams,
    WorldConfig,
    available_actions,
    reachable_states,
    transition,
)
from app.utils.errors import IllegalActionError

if TYPE_CHECKING:
    from app.ml_logic.beliefs import Belief

logger = logging.getLogger(__name__)


class AgentType(str, Enum):
    NON_DISCOUNTING = "NonDiscounting"
    NAIVE = "Naive"
    SOPHISTICATED = "Sophisticated"


@dataclass(frozen=True)
class AgentParams:
    """
    One hypothesis about the agent.

    Args:
        prior: Agent's belief over world configurations
        utilities: Restaurant utility schedule and time cost
        agent_type: NonDiscounting, Naive or Sophisticated
        k: Hyperbolic discount strength, >= 0
        alpha: Softmax noise (inverse temperature), >= 0
    """

    prior: "Belief"
    utilities: UtilityParams
    agent_type: AgentType
    k: float
    alpha: float

    def __post_init__(self):
        if self.k < 0 or self.alpha < 0:
            raise ValueError(f"k and alpha must be >= 0, got k={self.k} alpha={self.alpha}")


class MemoKey(NamedTuple):
    state: State
    delay: int


@dataclass(frozen=True)
class Episode:
    """An observed action sequence in a fixed world configuration."""

    grid: GridSpec
    true_config: WorldConfig
    start: State
    actions: Tuple[Action, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(Action(a) for a in self.actions))

    def replay(self) -> List[State]:
        """
        Walk the actions from the start state.

        Returns:
            The visited states, one more than there are actions
        """
        states = [self.start]
        for step, action in enumerate(self.actions):
            try:
                states.append(transition(states[-1], action, self.grid, self.true_config))
            except IllegalActionError as e:
                raise IllegalActionError(f"episode {self.name or '?'} step {step}: {e}") from e
        return states


def discount_factor(k: float, d: int) -> float:
    """Hyperbolic discount 1 / (1 + k d)."""
    return 1.0 / (1.0 + k * d)


@dataclass
class AgentBatch:
    """
    Hypotheses evaluated together: one agent type, per-hypothesis utilities, k and alpha.

    Args:
        agent_type: Shared agent type
        immediate: Mapping restaurant-id -> array of immediate utilities
        delayed: Mapping restaurant-id -> array of delayed utilities
        time_cost: Shared utility of a movement step
        k: Array of discount strengths
        alpha: Array of softmax noise levels
        prior: Shared agent prior, if any
    """

    agent_type: AgentType
    immediate: Dict[str, np.ndarray]
    delayed: Dict[str, np.ndarray]
    time_cost: float
    k: np.ndarray
    alpha: np.ndarray
    prior: Optional["Belief"] = field(default=None)

    @classmethod
    def from_params(cls, params: Sequence[AgentParams]) -> "AgentBatch":
        first = params[0]
        if any(p.agent_type is not first.agent_type for p in params):
            raise ValueError("a batch holds a single agent type")
        restaurants = sorted(first.utilities.immediate)
        return cls(
            agent_type=first.agent_type,
            immediate={r: np.array([p.utilities.immediate[r] for p in params], dtype=float) for r in restaurants},
            delayed={r: np.array([p.utilities.delayed[r] for p in params], dtype=float) for r in restaurants},
            time_cost=float(first.utilities.time_cost),
            k=np.array([p.k for p in params], dtype=float),
            alpha=np.array([p.alpha for p in params], dtype=float),
            prior=first.prior,
        )

    @property
    def size(self) -> int:
        return len(self.k)

    def discount(self, delay: int) -> np.ndarray:
        if self.agent_type is AgentType.NON_DISCOUNTING:
            return np.ones(self.size)
        return 1.0 / (1.0 + self.k * delay)

    def step_utility(self, state: State) -> np.ndarray:
        if state.phase is Phase.ARRIVED:
            return self.immediate[state.restaurant]
        if state.phase is Phase.EATING:
            return self.delayed[state.restaurant]
        return np.full(self.size, self.time_cost)

    def delay_key(self, delay: int) -> int:
        # Non-discounting values do not depend on the delay
        return 0 if self.agent_type is AgentType.NON_DISCOUNTING else delay

    def future_choice_delay(self, delay: int) -> int:
        """Delay at which the agent expects its future self to choose."""
        return 0 if self.agent_type is AgentType.SOPHISTICATED else delay


class Planner:
    """
    Memoized expected-utility and choice recursion for a known world configuration.

    Args:
        grid: World geometry
        config: The configuration the agent plans in
        batch: Hypotheses to evaluate
    """

    def __init__(self, grid: GridSpec, config: WorldConfig, batch: AgentBatch):
        self.grid = grid
        self.config = config
        self.batch = batch
        self._q: Dict[MemoKey, Tuple[Tuple[Action, ...], np.ndarray]] = {}
        self._c: Dict[MemoKey, np.ndarray] = {}

    def q_values(self, state: State, delay: int) -> Tuple[Tuple[Action, ...], np.ndarray]:
        """
        Expected utility of every legal action.

        Returns:
            Actions in canonical order and an array of shape (actions, hypotheses)
        """
        key = MemoKey(state, self.batch.delay_key(delay))
        cached = self._q.get(key)
        if cached is not None:
            return cached

        actions = available_actions(state, self.grid, self.config)
        now = self.batch.discount(key.delay) * self.batch.step_utility(state)
        table = np.empty((len(actions), self.batch.size))
        for row, action in enumerate(actions):
            successor = transition(state, action, self.grid, self.config)
            table[row] = now if successor.done else now + self._future_value(successor, key.delay + 1)

        self._q[key] = (actions, table)
        return actions, table

    def choice(self, state: State, delay: int) -> Tuple[Tuple[Action, ...], np.ndarray]:
        """Softmax choice probabilities, shape (actions, hypotheses)."""
        key = MemoKey(state, self.batch.delay_key(delay))
        actions, q = self.q_values(state, key.delay)
        probs = self._c.get(key)
        if probs is None:
            probs = softmax(self.batch.alpha[None, :] * q, axis=0)
            self._c[key] = probs
        return actions, probs

    def _future_value(self, successor: State, delay: int) -> np.ndarray:
        _, q = self.q_values(successor, delay)
        _, probs = self.choice(successor, self.batch.future_choice_delay(delay))
        return (probs * q).sum(axis=0)

    @property
    def memo_size(self) -> int:
        return len(self._q)


def _planner(params: AgentParams, grid: GridSpec, config: WorldConfig) -> Planner:
    return Planner(grid, config, AgentBatch.from_params([params]))


def expected_utility(
    state: State,
    action: Action,
    delay: int,
    params: AgentParams,
    grid: GridSpec,
    config: WorldConfig,
) -> float:
    """
    Discounted utility of an action now plus the expected value of what follows.

    Args:
        state: Current state
        action: Action to evaluate
        delay: Steps between the planning moment and this state
        params: Agent hypothesis
        grid: World geometry
        config: World configuration

    Returns:
        Expected utility of the action
    """
    actions, q = _planner(params, grid, config).q_values(state, delay)
    if action not in actions:
        raise IllegalActionError(f"{Action(action).value} is not legal in {state}")
    return float(q[actions.index(action), 0])


def choice_distribution(state, delay, params, grid, config):
    """
    Softmax distribution over the legal actions of a state.

    Args:
        state: Current state
        delay: Steps between the planning moment and this state
        params: Agent hypothesis
        grid: World geometry
        config: World configuration

    Returns:
        Mapping action -> probability, in canonical action order
    """
    actions, probs = _planner(params, grid, config).choice(state, delay)
    return {a: float(p) for a, p in zip(actions, probs[:, 0])}


def act_distribution(state: State, params: AgentParams, grid: GridSpec, config: WorldConfig) -> Dict[Action, float]:
    """What the agent actually does in a state: the choice at delay 0."""
    return choice_distribution(state, 0, params, grid, config)


def simulate(params: AgentParams, grid: GridSpec, config: WorldConfig, seed: int, start: Optional[State] = None) -> Episode:
    """
    Sample an episode from the agent's act distribution.

    Args:
        params: Agent hypothesis
        grid: World geometry
        config: True world configuration
        seed: Seed for the random generator
        start: Start state, defaults to the grid's start cell at time 0

    Returns:
        The sampled Episode, ending in a Done state
    """
    rng = np.random.default_rng(seed)
    planner = _planner(params, grid, config)
    start = start or State(grid.start)
    state, actions = start, []
    while not state.done:
        options, probs = planner.choice(state, 0)
        action = options[rng.choice(len(options), p=probs[:, 0])]
        actions.append(action)
        state = transition(state, action, grid, config)
    logger.debug("simulated %d steps, final state %s", len(actions), state)
    return Episode(grid, config, start, tuple(actions))


def policy_table(params: AgentParams, grid: GridSpec, config: WorldConfig) -> Dict[State, Dict[Action, float]]:
    """Act distribution at every live state reachable from the start."""
    planner = _planner(params, grid, config)
    table = {}
    for state in reachable_states(grid, config):
        actions, probs = planner.choice(state, 0)
        table[state] = {a: float(p) for a, p in zip(actions, probs[:, 0])}
    return table


def greedy_rollout(
    params: AgentParams,
    grid: GridSpec,
    config: WorldConfig,
    start: Optional[State] = None,
) -> Tuple[Action, ...]:
    """Follow the highest-probability action until Done; ties go to the canonical order."""
    planner = _planner(params, grid, config)
    state, actions = start or State(grid.start), []
    while not state.done:
        options, probs = planner.choice(state, 0)
        action = options[int(np.argmax(probs[:, 0]))]
        actions.append(action)
        state = transition(state, action, grid, config)
    return tuple(actions)
