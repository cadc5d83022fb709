import numpy as np
import pytest

from app.data.worldmodel import GridSpec, State, UtilityParams, WorldConfig, validate
from app.ml_logic.agents import AgentBatch, AgentParams, AgentType, Planner, simulate
from app.ml_logic.beliefs import (
    Belief,
    BeliefPlanner,
    belief_update,
    config_space,
    observe,
    simulate_uncertain,
)
from app.ml_logic.inference import HypothesisGrid, episode_likelihood, posterior

import oracle

NAMES = ("A", "B")


def random_world(seed, uncertain=0, horizon=None):
    """A small valid world whose first `uncertain` restaurants may be closed; uncertain worlds use horizon 3."""
    rng = np.random.default_rng(seed)
    while True:
        width, height = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        cells = [(x, y) for x in range(width) for y in range(height)]
        order = rng.permutation(len(cells))
        count = max(int(rng.integers(1, 3)), uncertain)
        restaurants = {NAMES[i]: cells[order[1 + i]] for i in range(count)}
        walls = frozenset()
        if len(cells) > count + 2 and rng.random() < 0.3:
            walls = frozenset({cells[order[1 + count]]})
        length = horizon or (3 if uncertain else int(rng.integers(3, 5)))
        grid = GridSpec(width, height, walls, restaurants, cells[order[0]], length)

        status = {r: "Open" for r in restaurants}
        for name in NAMES[:uncertain]:
            if rng.random() < 0.5:
                status[name] = "Closed"
        true_config = WorldConfig.of(status)
        configs = config_space(true_config, NAMES[:uncertain])
        if not validate(grid, configs):
            return grid, true_config, rng


def random_params(rng, grid, seed, prior):
    restaurants = sorted(grid.restaurants)
    return AgentParams(
        prior=prior,
        utilities=UtilityParams(
            {r: round(float(rng.uniform(0, 3)), 1) for r in restaurants},
            {r: round(float(rng.uniform(0, 3)), 1) for r in restaurants},
            -0.1,
        ),
        agent_type=list(AgentType)[seed % 3],
        k=float(rng.choice([0.5, 1.0, 2.0])),
        alpha=float(rng.choice([0.5, 2.0, 5.0])),
    )


@pytest.mark.parametrize("seed", range(30))
def test_known_planner_matches_oracle(seed):
    grid, config, rng = random_world(seed)
    params = random_params(rng, grid, seed, Belief.point_mass(config))
    planner = Planner(grid, config, AgentBatch.from_params([params]))
    start = State(grid.start)
    for delay in (0, 2):
        actions, q = planner.q_values(start, delay)
        expected = [oracle.eu(start, a, delay, params, grid, config) for a in actions]
        assert q[:, 0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_belief_planner_matches_oracle(seed):
    grid, config, rng = random_world(seed, uncertain=1)
    prior = Belief.independent(config, {"A": float(rng.choice([0.3, 0.7]))})
    params = random_params(rng, grid, seed, prior)
    planner = BeliefPlanner(grid, AgentBatch.from_params([params]))
    start = State(grid.start)
    belief = belief_update(prior, observe(grid, config, start.position))
    actions, q = planner.q_values(belief, start, 0)
    expected = [oracle.eu_belief(belief, start, a, 0, params, grid) for a in actions]
    assert q[:, 0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_likelihood_matches_oracle(seed):
    grid, config, rng = random_world(seed)
    params = random_params(rng, grid, seed, Belief.point_mass(config))
    episode = simulate(params, grid, config, seed)
    assert episode_likelihood(params, episode) == pytest.approx(oracle.likelihood(params, episode), rel=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_uncertain_likelihood_matches_oracle(seed):
    grid, config, rng = random_world(seed, uncertain=1)
    prior = Belief.independent(config, {"A": 0.5})
    params = random_params(rng, grid, seed, prior)
    episode = simulate_uncertain(params, grid, config, seed)
    assert episode_likelihood(params, episode) == pytest.approx(oracle.likelihood(params, episode), rel=1e-9)


def uncertain_priors(config, uncertain):
    if not uncertain:
        return [Belief.point_mass(config)]
    return [Belief.independent(config, {r: p for r in NAMES[:uncertain]}) for p in (0.2, 0.8)]


@pytest.mark.parametrize("seed", range(60))
def test_posterior_matches_oracle(seed):
    uncertain = seed % 3
    grid, config, rng = random_world(seed, uncertain=uncertain, horizon=3)
    restaurants = sorted(grid.restaurants)
    hypotheses = HypothesisGrid(
        utility_levels={r: [(0.0, 0.0), (round(float(rng.uniform(0.5, 3)), 1), 0.5)] for r in restaurants},
        utility_keys={r: r for r in restaurants},
        time_cost=-0.1,
        k_levels=[0.5, 2.0],
        alpha_levels=[1.0, 3.0],
        prior_levels=uncertain_priors(config, uncertain),
        types=list(AgentType),
    )
    assert hypotheses.size <= 500
    sample = simulate_uncertain if uncertain else simulate
    episodes = [sample(hypotheses.hypothesis(i), grid, config, seed + i) for i in (0, hypotheses.size - 1)]
    post = posterior(hypotheses, episodes)

    joint = np.array([
        np.prod([oracle.likelihood(hypotheses.hypothesis(i), e) for e in episodes])
        for i in range(hypotheses.size)
    ])
    assert post.weights == pytest.approx(joint / joint.sum(), rel=1e-9, abs=1e-12)
