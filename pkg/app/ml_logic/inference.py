"""
Exact Bayesian inversion of the agent models over a discrete hypothesis grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pandas.api.types import is_numeric_dtype
from pathos.multiprocessing import ProcessingPool
from scipy.special import logsumexp, softmax

from app.data.worldmodel import Action, UtilityParams
from app.ml_logic.agents import AgentBatch, AgentParams, AgentType, Episode, Planner
from app.ml_logic.beliefs import Belief, BeliefPlanner, belief_update, observe
from app.utils.errors import (
    EmptyPropertyError,
    ScenarioValidationError,
    UnknownDimensionError,
    ZeroEvidenceError,
)
from app.utils.predicates import PropertyPredicate, normalize_field
from app.utils.settings import CHUNK_SIZE, SEARCH_MARGIN

logger = logging.getLogger(__name__)


@dataclass
class HypothesisGrid:
    """
    Discretized hypothesis space.

    Hypotheses are enumerated in the order type, prior, utility keys (sorted),
    k, alpha, with alpha varying fastest.

    Args:
        utility_levels: Mapping utility key -> list of (immediate, delayed) pairs
        utility_keys: Mapping restaurant-id -> utility key
        time_cost: Utility of a movement step, shared by all hypotheses
        k_levels: Discount strengths
        alpha_levels: Softmax noise levels
        prior_levels: Candidate agent priors
        types: Agent types
        kinds: Mapping restaurant-id -> kind
        prior_labels: Per prior level, mapping uncertain restaurant -> p(open)
        alpha_weights: Optional relative prior weight per alpha level
    """

    utility_levels: Dict[str, List[Tuple[float, float]]]
    utility_keys: Dict[str, str]
    time_cost: float
    k_levels: List[float]
    alpha_levels: List[float]
    prior_levels: List[Belief]
    types: List[AgentType]
    kinds: Dict[str, str] = field(default_factory=dict)
    prior_labels: List[Dict[str, float]] = field(default_factory=list)
    alpha_weights: Optional[List[float]] = None

    def __post_init__(self):
        problems = []
        for name in ("utility_levels", "k_levels", "alpha_levels", "prior_levels", "types"):
            if not getattr(self, name):
                problems.append(f"hypothesis grid needs at least one entry in {name}")
        for key, levels in self.utility_levels.items():
            if not levels:
                problems.append(f"utility key {key} has no levels")
        for restaurant, key in self.utility_keys.items():
            if key not in self.utility_levels:
                problems.append(f"restaurant {restaurant} uses unknown utility key {key}")
        for key in sorted(set(self.utility_levels) - set(self.utility_keys.values())):
            problems.append(f"utility key {key} is not used by any restaurant")
        if self.time_cost > 0:
            problems.append(f"timeCost must be <= 0, got {self.time_cost}")
        if any(k < 0 for k in self.k_levels) or any(a < 0 for a in self.alpha_levels):
            problems.append("k and alpha levels must be >= 0")
        if self.alpha_weights is not None:
            if len(self.alpha_weights) != len(self.alpha_levels):
                problems.append("alphaWeights must have one entry per alpha level")
            elif any(w <= 0 for w in self.alpha_weights):
                problems.append("alphaWeights must be positive")
        if problems:
            raise ScenarioValidationError(problems)

        self.types = [AgentType(t) for t in self.types]
        self.kinds = {r: self.kinds.get(r, r) for r in self.utility_keys}
        if not self.prior_labels:
            self.prior_labels = [{} for _ in self.prior_levels]
        self._frame = None

    @property
    def keys(self) -> List[str]:
        return sorted(self.utility_levels)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (
            len(self.types),
            len(self.prior_levels),
            *(len(self.utility_levels[key]) for key in self.keys),
            len(self.k_levels),
            len(self.alpha_levels),
        )

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def restricted(self, types: Sequence[str]) -> "HypothesisGrid":
        """Copy of the grid keeping only some agent types."""
        wanted = [AgentType(t) for t in types]
        return replace(self, types=[t for t in self.types if t in wanted])

    def reweighted(self, alpha_weights: Optional[Sequence[float]]) -> "HypothesisGrid":
        return replace(self, alpha_weights=None if alpha_weights is None else list(alpha_weights))

    def hypothesis(self, index: int) -> AgentParams:
        if not 0 <= index < self.size:
            raise IndexError(f"hypothesis index {index} outside [0, {self.size})")
        t, p, *levels, ki, ai = (int(i) for i in np.unravel_index(index, self.shape))
        chosen = {key: self.utility_levels[key][i] for key, i in zip(self.keys, levels)}
        utilities = UtilityParams(
            immediate={r: float(chosen[key][0]) for r, key in self.utility_keys.items()},
            delayed={r: float(chosen[key][1]) for r, key in self.utility_keys.items()},
            time_cost=self.time_cost,
        )
        return AgentParams(
            prior=self.prior_levels[p],
            utilities=utilities,
            agent_type=self.types[t],
            k=float(self.k_levels[ki]),
            alpha=float(self.alpha_levels[ai]),
        )

    def chunks(self) -> List[Tuple[int, int]]:
        """Contiguous index ranges sharing one agent type and one prior."""
        inner = int(np.prod(self.shape[2:]))
        ranges = []
        for block in range(len(self.types) * len(self.prior_levels)):
            base = block * inner
            for offset in range(0, inner, CHUNK_SIZE):
                ranges.append((base + offset, base + min(offset + CHUNK_SIZE, inner)))
        return ranges

    def batch(self, start: int, stop: int) -> AgentBatch:
        index = np.unravel_index(np.arange(start, stop), self.shape)
        t, p = int(index[0][0]), int(index[1][0])
        if np.any(index[0] != t) or np.any(index[1] != p):
            raise ValueError(f"range [{start}, {stop}) spans more than one type or prior")
        levels = {key: np.asarray(self.utility_levels[key], dtype=float)[index[2 + j]] for j, key in enumerate(self.keys)}
        return AgentBatch(
            agent_type=self.types[t],
            immediate={r: levels[key][:, 0] for r, key in self.utility_keys.items()},
            delayed={r: levels[key][:, 1] for r, key in self.utility_keys.items()},
            time_cost=float(self.time_cost),
            k=np.asarray(self.k_levels, dtype=float)[index[-2]],
            alpha=np.asarray(self.alpha_levels, dtype=float)[index[-1]],
            prior=self.prior_levels[p],
        )

    def prior_label(self, p: int) -> str:
        labels = self.prior_labels[p]
        if not labels:
            return "true"
        return ",".join(f"{r}={labels[r]:g}" for r in sorted(labels))

    def _columns(self, type_names, prior_index, chosen, k, alpha) -> Dict[str, object]:
        columns = {"type": type_names, "prior": [self.prior_label(int(p)) for p in np.atleast_1d(prior_index)], "k": k, "alpha": alpha}
        totals = {}
        for key in self.keys:
            immediate, delayed = chosen[key]
            totals[key] = immediate + delayed
            columns[f"U_{key}"] = totals[key]
            columns[f"Ui_{key}"] = immediate
            columns[f"Ud_{key}"] = delayed
        for restaurant, key in sorted(self.utility_keys.items()):
            columns.setdefault(f"U_{restaurant}", totals[key])
        for kind in sorted(set(self.kinds.values())):
            members = [totals[self.utility_keys[r]] for r in sorted(self.kinds) if self.kinds[r] == kind]
            columns.setdefault(f"U_{kind}", np.maximum.reduce([np.asarray(m, dtype=float) for m in members]))
        for restaurant in sorted({r for labels in self.prior_labels for r in labels}):
            columns[f"p_{restaurant}"] = [self.prior_labels[int(p)].get(restaurant, np.nan) for p in np.atleast_1d(prior_index)]
        return columns

    def frame(self) -> pd.DataFrame:
        """One row per hypothesis with every field predicates and marginals can use."""
        if self._frame is None:
            index = np.unravel_index(np.arange(self.size), self.shape)
            chosen = {}
            for j, key in enumerate(self.keys):
                levels = np.asarray(self.utility_levels[key], dtype=float)[index[2 + j]]
                chosen[key] = (levels[:, 0], levels[:, 1])
            type_names = np.array([t.value for t in self.types], dtype=object)[index[0]]
            columns = self._columns(
                type_names,
                index[1],
                chosen,
                np.asarray(self.k_levels, dtype=float)[index[-2]],
                np.asarray(self.alpha_levels, dtype=float)[index[-1]],
            )
            self._frame = pd.DataFrame(columns)
            self._frame.index.name = "hypothesis"
        return self._frame

    def describe(self, params: AgentParams) -> Dict[str, object]:
        """Field values of one hypothesis, matching the columns of frame()."""
        owner = {}
        for restaurant, key in sorted(self.utility_keys.items()):
            owner.setdefault(key, restaurant)
        chosen = {key: (params.utilities.immediate[r], params.utilities.delayed[r]) for key, r in owner.items()}
        columns = self._columns(
            [params.agent_type.value],
            [self.prior_levels.index(params.prior)],
            {key: (np.array([i]), np.array([d])) for key, (i, d) in chosen.items()},
            [params.k],
            [params.alpha],
        )
        return {name: (value[0] if np.ndim(value) else value) for name, value in columns.items()}

    def prior_weights(self) -> np.ndarray:
        weights = np.ones(self.shape)
        if self.alpha_weights is not None:
            weights = weights * np.asarray(self.alpha_weights, dtype=float)
        weights = weights.ravel()
        return weights / weights.sum()


@dataclass(frozen=True)
class Hypothesis:
    params: AgentParams
    prior_weight: float


@dataclass
class Posterior:
    """
    Normalized posterior over the hypotheses of a grid.

    Args:
        weights: Posterior probability per hypothesis index
        grid: The hypothesis grid the weights refer to
        log_likelihood: Per-hypothesis log-likelihood of the evidence, if known
    """

    weights: np.ndarray
    grid: HypothesisGrid
    log_likelihood: Optional[np.ndarray] = None

    def frame(self) -> pd.DataFrame:
        table = self.grid.frame().copy()
        table["weight"] = self.weights
        return table

    def hypotheses(self) -> Iterator[Hypothesis]:
        for index in np.flatnonzero(self.weights > 0):
            yield Hypothesis(self.grid.hypothesis(int(index)), float(self.weights[index]))


def _step_tables(batch: AgentBatch, episode: Episode, planners: Dict) -> Iterator[Tuple[Action, Tuple[Action, ...], np.ndarray, np.ndarray]]:
    """
    Walk an episode and yield what the batch would do at every step.

    Yields:
        (observed action, available actions, q table, choice probabilities)
    """
    states = episode.replay()
    prior = batch.prior
    known = prior is None or (prior.is_point_mass and prior.support[0] == episode.true_config)
    if known:
        key = ("known", id(episode.grid), episode.true_config)
        planner = planners.get(key)
        if planner is None:
            planner = planners[key] = Planner(episode.grid, episode.true_config, batch)
        for state, action in zip(states, episode.actions):
            actions, probs = planner.choice(state, 0)
            _, q = planner.q_values(state, 0)
            yield action, actions, q, probs
        return

    key = ("belief", id(episode.grid))
    planner = planners.get(key)
    if planner is None:
        planner = planners[key] = BeliefPlanner(episode.grid, batch)
    belief = prior
    for state, action in zip(states, episode.actions):
        belief = belief_update(belief, observe(episode.grid, episode.true_config, state.position))
        actions, probs = planner.choice(belief, state, 0)
        _, q = planner.q_values(belief, state, 0)
        yield action, actions, q, probs


def batch_log_likelihood(grid: HypothesisGrid, episodes: Sequence[Episode], start: int, stop: int) -> np.ndarray:
    """Log-likelihood of the episodes for the hypotheses in [start, stop)."""
    batch = grid.batch(start, stop)
    total = np.zeros(batch.size)
    planners = {}
    for episode in episodes:
        for action, actions, _, probs in _step_tables(batch, episode, planners):
            if action not in actions:
                return np.full(batch.size, -np.inf)
            with np.errstate(divide="ignore"):
                total += np.log(probs[actions.index(action)])
    logger.debug("scored hypotheses [%d, %d)", start, stop)
    return total


def episode_likelihood(params: AgentParams, episode: Episode) -> float:
    """
    Probability that the agent produces the episode's actions.

    Args:
        params: Agent hypothesis
        episode: Observed episode

    Returns:
        Product of the per-step choice probabilities
    """
    batch = AgentBatch.from_params([params])
    log_p = 0.0
    for action, actions, _, probs in _step_tables(batch, episode, {}):
        if action not in actions:
            return 0.0
        with np.errstate(divide="ignore"):
            log_p += float(np.log(probs[actions.index(action), 0]))
    return float(np.exp(log_p))


def log_likelihoods(grid: HypothesisGrid, episodes: Sequence[Episode], jobs: int = 1) -> np.ndarray:
    """
    Log-likelihood of the episodes under every hypothesis of the grid.

    Args:
        grid: Hypothesis grid
        episodes: Observed episodes, independent given the hypothesis
        jobs: Worker processes; results do not depend on it

    Returns:
        Array of length grid.size
    """
    if not episodes:
        return np.zeros(grid.size)
    chunks = grid.chunks()
    logger.info("scoring %d hypotheses in %d chunks with %d job(s)", grid.size, len(chunks), jobs)

    if jobs > 1 and len(chunks) > 1:
        pool = ProcessingPool(nodes=min(jobs, len(chunks)))
        try:
            parts = pool.map(lambda c: batch_log_likelihood(grid, episodes, c[0], c[1]), chunks)
        finally:
            pool.close()
            pool.join()
            pool.clear()
    else:
        parts = [batch_log_likelihood(grid, episodes, start, stop) for start, stop in chunks]
    return np.concatenate(parts)


def posterior(
    grid: HypothesisGrid,
    episodes: Sequence[Episode],
    jobs: int = 1,
    log_likelihood: Optional[np.ndarray] = None,
) -> Posterior:
    """
    Posterior over the grid given independent episodes.

    Raises:
        ZeroEvidenceError: No hypothesis can produce the episodes
    """
    prior = grid.prior_weights()
    if not episodes:
        return Posterior(prior.copy(), grid, np.zeros(grid.size))

    if log_likelihood is None:
        log_likelihood = log_likelihoods(grid, episodes, jobs)
    with np.errstate(divide="ignore"):
        log_joint = np.log(prior) + log_likelihood
    if np.all(np.isneginf(log_joint)):
        raise ZeroEvidenceError(f"all {grid.size} hypotheses give the episodes zero likelihood")
    weights = np.exp(log_joint - logsumexp(log_joint))
    return Posterior(weights / weights.sum(), grid, log_likelihood)


def _select(frame: pd.DataFrame, name: str) -> str:
    column = normalize_field(name)
    if column not in frame.columns or column == "weight":
        raise UnknownDimensionError(f"unknown dimension {name!r}; known: {', '.join(c for c in frame.columns if c != 'weight')}")
    return column


def marginal2d(
    post: Posterior,
    dim_x: str,
    dim_y: str,
    slice: Optional[Mapping[str, object]] = None,
) -> pd.DataFrame:
    """
    Two-dimensional marginal of the posterior, optionally restricted to a slice.

    Args:
        post: Posterior
        dim_x: Field whose levels index the rows
        dim_y: Field whose levels index the columns
        slice: Mapping field -> value fixing other fields

    Returns:
        Matrix of probability mass with one row per level of dim_x and one column per level of dim_y
    """
    frame = post.frame()
    x, y = _select(frame, dim_x), _select(frame, dim_y)
    if x == y:
        raise UnknownDimensionError(f"marginal dimensions must differ, got {x} twice")

    mask = np.ones(len(frame), dtype=bool)
    for name, value in (slice or {}).items():
        column = frame[_select(frame, name)]
        if is_numeric_dtype(column):
            mask &= np.isclose(column.to_numpy(dtype=float), float(value))
        else:
            mask &= (column.astype(str) == str(value)).to_numpy()

    matrix = frame[mask].pivot_table(index=x, columns=y, values="weight", aggfunc="sum", fill_value=0.0)
    matrix = matrix.reindex(index=sorted(frame[x].unique()), columns=sorted(frame[y].unique()), fill_value=0.0)
    total = matrix.to_numpy().sum()
    if total > 0:
        matrix = matrix / total
    return matrix


def event_probability(post: Posterior, predicate: PropertyPredicate) -> float:
    """Posterior mass of the hypotheses satisfying a predicate."""
    mask = predicate.mask(post.grid.frame())
    return float(post.weights[mask].sum())


def property_likelihoods(
    grid: HypothesisGrid,
    episodes: Sequence[Episode],
    properties: Sequence[PropertyPredicate],
    jobs: int = 1,
    log_likelihood: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    Marginal likelihood of the episodes given each property, normalized across the properties.

    Args:
        grid: Hypothesis grid
        episodes: Observed episodes
        properties: Competing explanations
        jobs: Worker processes
        log_likelihood: Precomputed per-hypothesis log-likelihoods

    Returns:
        Mapping property name -> normalized score, in the order given
    """
    if log_likelihood is None:
        log_likelihood = log_likelihoods(grid, episodes, jobs)
    prior = grid.prior_weights()
    frame = grid.frame()

    scores = []
    for prop in properties:
        mask = prop.mask(frame)
        if not mask.any():
            raise EmptyPropertyError(f"property {prop.name!r} holds for no hypothesis")
        with np.errstate(divide="ignore"):
            scores.append(logsumexp(log_likelihood[mask] + np.log(prior[mask])) - np.log(prior[mask].sum()))
    scores = np.asarray(scores)
    if np.all(np.isneginf(scores)):
        raise ZeroEvidenceError("every property gives the episodes zero likelihood")
    return {prop.name: float(s) for prop, s in zip(properties, softmax(scores))}


def argmax_matches(grid: HypothesisGrid, episode: Episode, start: int, stop: int) -> np.ndarray:
    """
    Which hypotheses in [start, stop) choose every action of the episode as their strict best.

    The observed action must beat every alternative by at least SEARCH_MARGIN in expected utility.
    """
    batch = grid.batch(start, stop)
    matched = np.ones(batch.size, dtype=bool)
    for action, actions, q, _ in _step_tables(batch, episode, {}):
        if action not in actions:
            return np.zeros(batch.size, dtype=bool)
        row = actions.index(action)
        if len(actions) > 1:
            others = np.delete(q, row, axis=0).max(axis=0)
            matched &= q[row] - others >= SEARCH_MARGIN
        if not matched.any():
            break
    return matched & (batch.alpha > 0)
