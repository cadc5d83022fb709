import copy

import pytest

from app.data import scenario as scenarios
from app.data.worldmodel import GridSpec, UtilityParams, WorldConfig
from app.ml_logic.agents import AgentParams, AgentType
from app.ml_logic.beliefs import Belief

TINY = {
    "name": "tiny",
    "description": "Two restaurants in a 3x3 room with one pillar.",
    "grid": {
        "width": 3,
        "height": 3,
        "horizon": 6,
        "start": [0, 2],
        "walls": [[1, 1]],
        "restaurants": {
            "A": {"cell": [2, 0], "kind": "A"},
            "B": {"cell": [0, 0], "kind": "B"},
        },
    },
    "trueConfig": {"A": "Open", "B": "Open"},
    "uncertain": [],
    "hypothesisGrid": {
        "timeCost": -0.1,
        "utilityKeys": {"A": "A", "B": "B"},
        "utilityLevels": {"A": [[0.0, 0.0], [2.0, 0.0]], "B": [[0.0, 0.0], [1.0, 1.0]]},
        "kLevels": [0.5, 2.0],
        "alphaLevels": [1.0, 5.0],
        "alphaWeights": None,
        "openLevels": [0.5],
        "types": ["Naive", "Sophisticated", "NonDiscounting"],
    },
    "episodes": [
        {"name": "toB", "start": {"position": [0, 2], "time": 0}, "actions": ["North", "North", "Proceed", "Proceed"]},
    ],
    "target": "toB",
}

# The canonical hypothesis under which the bundled Naive and Sophisticated episodes are the argmax rollouts
CANONICAL_UTILITIES = {
    "immediate": {"D1": 1.0, "D2": 1.0, "Veg": 2.0, "Noodle": 0.0},
    "delayed": {"D1": 0.0, "D2": 0.0, "Veg": 0.0, "Noodle": 0.0},
}


def tiny_document():
    return copy.deepcopy(TINY)


@pytest.fixture
def tiny_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(scenarios.dumps(tiny_document()), encoding="utf-8")
    return path


@pytest.fixture
def tiny(tiny_path):
    return scenarios.load(tiny_path)


@pytest.fixture(scope="session")
def naive_donut():
    return scenarios.load(scenarios.bundled("naive-donut"))


@pytest.fixture(scope="session")
def sophisticated_veg():
    return scenarios.load(scenarios.bundled("sophisticated-veg"))


def make_params(
    immediate,
    delayed=None,
    agent_type=AgentType.NAIVE,
    k=1.0,
    alpha=1.0,
    time_cost=-0.1,
    prior=None,
    config=None,
):
    delayed = delayed if delayed is not None else {r: 0.0 for r in immediate}
    if prior is None:
        prior = Belief.point_mass(config or WorldConfig.of({r: "Open" for r in immediate}))
    return AgentParams(
        prior=prior,
        utilities=UtilityParams(dict(immediate), dict(delayed), time_cost),
        agent_type=agent_type,
        k=k,
        alpha=alpha,
    )


def canonical_params(config, agent_type, alpha=100.0, k=1.0):
    return AgentParams(
        prior=Belief.point_mass(config),
        utilities=UtilityParams(CANONICAL_UTILITIES["immediate"], CANONICAL_UTILITIES["delayed"], -0.01),
        agent_type=agent_type,
        k=k,
        alpha=alpha,
    )


def open_grid(width=3, height=3, horizon=4, restaurants=None, walls=(), start=(0, 0)):
    restaurants = restaurants or {}
    return GridSpec(width, height, frozenset(walls), restaurants, start, horizon)
