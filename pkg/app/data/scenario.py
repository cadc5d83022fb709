"""
Scenario files: loading, validation, canonical serialization and the
argmax parameter search that fixes the canonical fixtures.
"""

import itertools
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from jsonschema import Draft7Validator

from app.data.worldmodel import GridSpec, State, WorldConfig, validate
from app.ml_logic.agents import AgentParams, Episode
from app.ml_logic.beliefs import Belief, config_space
from app.ml_logic.inference import HypothesisGrid, argmax_matches
from app.utils.errors import (
    IllegalActionError,
    NotFoundError,
    ScenarioInvalidError,
    ScenarioParseError,
    ScenarioValidationError,
)
from app.utils.predicates import PropertyPredicate
from app.utils.settings import FLOAT_DIGITS

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent
SCHEMA_DIR = DATA_DIR / "schemas"
SCENARIO_DIR = DATA_DIR / "scenarios"
PROPERTIES_DIR = DATA_DIR / "properties"

PathLike = Union[str, Path]

_PAIR = re.compile(r"\[\s*(-?[0-9][0-9.eE+-]*),\s*(-?[0-9][0-9.eE+-]*)\s*\]")


@dataclass
class Scenario:
    """
    A world, the agent hypotheses to consider and the observed episodes.

    Args:
        name: Short identifier
        description: Free text
        grid: World geometry
        true_config: Actual open/closed status of the restaurants
        uncertain: Restaurants whose status agents may be unsure of
        open_levels: Candidate p(open) values per uncertain restaurant
        hypothesis_grid: Hypotheses scored by inference
        episodes: Observed episodes
        target: Name of the episode the parameter search must reproduce
    """

    name: str
    description: str
    grid: GridSpec
    true_config: WorldConfig
    uncertain: List[str]
    open_levels: List[float]
    hypothesis_grid: HypothesisGrid
    episodes: List[Episode] = field(default_factory=list)
    target: Optional[str] = None

    @property
    def config_space(self) -> List[WorldConfig]:
        return config_space(self.true_config, self.uncertain)

    def episode(self, name: str) -> Episode:
        for episode in self.episodes:
            if episode.name == name:
                return episode
        raise KeyError(name)

    def with_episodes(self, episodes: Sequence[Episode], target: Optional[str] = None) -> "Scenario":
        return replace(self, episodes=list(episodes), target=target)


def _load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / name).read_text(encoding="utf-8"))


def _read_json(path: PathLike, schema_name: str) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"{path}: cannot read file: {e.strerror or e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e

    validator = Draft7Validator(_load_schema(schema_name))
    errors = sorted(validator.iter_errors(document), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        details = "; ".join(f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors)
        raise ScenarioParseError(f"{path}: {details}")
    return document


def prior_levels(true_config: WorldConfig, uncertain: Sequence[str], open_levels: Sequence[float]) -> Tuple[List[Belief], List[Dict[str, float]]]:
    """
    Candidate agent priors: independent p(open) per uncertain restaurant.

    Returns:
        The beliefs and, for each, the p(open) assigned per uncertain restaurant
    """
    if not uncertain:
        return [Belief.point_mass(true_config)], [{}]
    beliefs, labels = [], []
    for ps in itertools.product(open_levels, repeat=len(uncertain)):
        p_open = {r: float(p) for r, p in zip(uncertain, ps)}
        beliefs.append(Belief.independent(true_config, p_open))
        labels.append(p_open)
    return beliefs, labels


def from_document(document: dict) -> Scenario:
    """Build and validate a Scenario from a schema-checked document."""
    g = document["grid"]
    restaurants = g["restaurants"]
    grid = GridSpec(
        width=g["width"],
        height=g["height"],
        walls=frozenset(tuple(c) for c in g["walls"]),
        restaurants={r: tuple(spec["cell"]) for r, spec in restaurants.items()},
        start=tuple(g["start"]),
        horizon=g["horizon"],
        kinds={r: spec["kind"] for r, spec in restaurants.items()},
    )

    problems = []
    ids = set(restaurants)
    if set(document["trueConfig"]) != ids:
        problems.append(f"trueConfig must list exactly the restaurants {sorted(ids)}")
    for r in document["uncertain"]:
        if r not in ids:
            problems.append(f"uncertain restaurant {r} does not exist")
    h = document["hypothesisGrid"]
    if set(h["utilityKeys"]) != ids:
        problems.append(f"utilityKeys must list exactly the restaurants {sorted(ids)}")
    if problems:
        raise ScenarioValidationError(problems)

    true_config = WorldConfig.of(document["trueConfig"])
    uncertain = list(document["uncertain"])
    configs = config_space(true_config, uncertain)
    problems.extend(validate(grid, configs))

    beliefs, labels = prior_levels(true_config, uncertain, h["openLevels"])
    try:
        hypothesis_grid = HypothesisGrid(
            utility_levels={key: [tuple(map(float, pair)) for pair in levels] for key, levels in h["utilityLevels"].items()},
            utility_keys=dict(h["utilityKeys"]),
            time_cost=float(h["timeCost"]),
            k_levels=[float(k) for k in h["kLevels"]],
            alpha_levels=[float(a) for a in h["alphaLevels"]],
            prior_levels=beliefs,
            types=list(h["types"]),
            kinds=dict(grid.kinds),
            prior_labels=labels,
            alpha_weights=None if h["alphaWeights"] is None else [float(w) for w in h["alphaWeights"]],
        )
    except ScenarioValidationError as e:
        problems.extend(e.problems)
        hypothesis_grid = None

    episodes, names = [], set()
    for raw in document["episodes"]:
        name = raw["name"]
        if name in names:
            problems.append(f"episode name {name} is used twice")
        names.add(name)
        position = tuple(raw["start"]["position"])
        time = raw["start"]["time"]
        if not grid.in_bounds(position) or position in grid.walls or grid.restaurant_at(position):
            problems.append(f"episode {name} starts on {list(position)}, which is not a free cell")
            continue
        if time >= grid.horizon:
            problems.append(f"episode {name} starts at time {time}, at or past the horizon")
            continue
        episode = Episode(grid, true_config, State(position, time), tuple(raw["actions"]), name)
        try:
            episode.replay()
        except (IllegalActionError, ScenarioInvalidError) as e:
            problems.append(str(e))
        episodes.append(episode)

    target = document["target"]
    if target is not None and target not in names:
        problems.append(f"target {target} names no episode")
    if problems:
        raise ScenarioValidationError(problems)

    return Scenario(
        name=document["name"],
        description=document["description"],
        grid=grid,
        true_config=true_config,
        uncertain=uncertain,
        open_levels=[float(p) for p in h["openLevels"]],
        hypothesis_grid=hypothesis_grid,
        episodes=episodes,
        target=target,
    )


def load(path: PathLike) -> Scenario:
    """
    Read, schema-check and validate a scenario file.

    Args:
        path: Scenario file

    Returns:
        The validated Scenario
    """
    scenario = from_document(_read_json(path, "scenario.schema.json"))
    logger.info("loaded scenario %s: %d episodes, %d hypotheses", scenario.name, len(scenario.episodes), scenario.hypothesis_grid.size)
    return scenario


def _canonical_number(value):
    if isinstance(value, bool) or not isinstance(value, (float, np.floating)):
        return value
    return float(f"{float(value):.{FLOAT_DIGITS}g}")


def _canonical(value):
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return _canonical_number(value)


def dumps(document: dict) -> str:
    """Canonical text: sorted keys, two-space indent, [x, y] pairs on one line, trailing newline."""
    text = json.dumps(_canonical(document), sort_keys=True, indent=2)
    return _PAIR.sub(r"[\1, \2]", text) + "\n"


def to_document(scenario):
    """
    Turn a scenario back into its JSON document form.

    Args:
        scenario: A loaded Scenario

    Returns:
        dict that load() accepts and dumps() writes canonically
    """
    grid = scenario.grid
    h = scenario.hypothesis_grid
    return {
        "name": scenario.name,
        "description": scenario.description,
        "grid": {
            "width": grid.width,
            "height": grid.height,
            "horizon": grid.horizon,
            "start": list(grid.start),
            "walls": [list(c) for c in sorted(grid.walls)],
            "restaurants": {r: {"cell": list(c), "kind": grid.kinds[r]} for r, c in grid.restaurants.items()},
        },
        "trueConfig": {r: s.value for r, s in scenario.true_config.status},
        "uncertain": list(scenario.uncertain),
        "hypothesisGrid": {
            "timeCost": float(h.time_cost),
            "utilityKeys": dict(h.utility_keys),
            "utilityLevels": {key: [[float(i), float(d)] for i, d in levels] for key, levels in h.utility_levels.items()},
            "kLevels": [float(k) for k in h.k_levels],
            "alphaLevels": [float(a) for a in h.alpha_levels],
            "alphaWeights": None if h.alpha_weights is None else [float(w) for w in h.alpha_weights],
            "openLevels": [float(p) for p in scenario.open_levels],
            "types": [t.value for t in h.types],
        },
        "episodes": [
            {
                "name": e.name,
                "start": {"position": list(e.start.position), "time": e.start.time},
                "actions": [a.value for a in e.actions],
            }
            for e in scenario.episodes
        ],
        "target": scenario.target,
    }


def save(scenario, path):
    """
    Write a scenario file in canonical form.

    Args:
        scenario: Scenario to write
        path: Destination file, overwritten if present
    """
    Path(path).write_text(dumps(to_document(scenario)), encoding="utf-8")


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    return SCENARIO_DIR / f"{name}.json"


def canonical_parameter_index(scenario: Scenario) -> int:
    """
    Scan the grid in enumeration order for the first hypothesis at the largest
    alpha level that picks every action of the target episode as its strict best.

    Returns:
        Index of the hypothesis in the scenario's grid
    """
    if scenario.target is None:
        raise NotFoundError(f"scenario {scenario.name} has no target episode")
    episode = scenario.episode(scenario.target)
    if not episode.replay()[-1].done:
        raise NotFoundError(f"target episode {episode.name} does not end in a terminal state")

    grid = scenario.hypothesis_grid
    top = max(grid.alpha_levels)
    for start, stop in grid.chunks():
        batch_alpha = np.asarray(grid.alpha_levels)[np.unravel_index(np.arange(start, stop), grid.shape)[-1]]
        if not np.any(batch_alpha == top):
            continue
        matched = argmax_matches(grid, episode, start, stop) & (batch_alpha == top)
        if matched.any():
            index = start + int(np.flatnonzero(matched)[0])
            logger.info("target %s reproduced by hypothesis %d", episode.name, index)
            return index
    raise NotFoundError(f"no hypothesis of {scenario.name} reproduces episode {episode.name}")


def canonical_parameter_search(scenario: Scenario) -> AgentParams:
    return scenario.hypothesis_grid.hypothesis(canonical_parameter_index(scenario))


def load_properties(path: PathLike) -> List[PropertyPredicate]:
    """Read a property file into predicates."""
    document = _read_json(path, "properties.schema.json")
    names = [p["name"] for p in document["properties"]]
    if len(set(names)) != len(names):
        raise ScenarioParseError(f"{path}: property names must be unique")
    return [PropertyPredicate(p["name"], p["expr"]) for p in document["properties"]]
