"""
Command line: validate scenarios, simulate agents, run inference and export
marginals and property scores.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.data import scenario as scenarios
from app.ml_logic.agents import AgentType, simulate
from app.ml_logic.beliefs import simulate_uncertain
from app.ml_logic.inference import (
    event_probability,
    log_likelihoods,
    marginal2d,
    posterior,
    property_likelihoods,
)
from app.utils.errors import PlannerError, ScenarioValidationError
from app.utils.export import to_json, write_json, write_matrix_csv, write_posterior_csv
from app.utils.logging_setup import configure_logging
from app.utils.predicates import PropertyPredicate
from app.utils.settings import DEFAULT_JOBS

logger = logging.getLogger(__name__)


def _types(value: str) -> List[str]:
    names = [v.strip() for v in value.split(",") if v.strip()]
    known = [t.value for t in AgentType]
    for name in names:
        if name not in known:
            raise argparse.ArgumentTypeError(f"unknown agent type {name!r}; choose from {', '.join(known)}")
    return names


def _floats(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def _slice(value: str):
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"expected FIELD=VALUE, got {value!r}")
    name, raw = value.split("=", 1)
    try:
        return name.strip(), float(raw)
    except ValueError:
        return name.strip(), raw.strip()


def _grid(args, scenario):
    grid = scenario.hypothesis_grid
    if getattr(args, "restrict_types", None):
        grid = grid.restricted(args.restrict_types)
        if not grid.types:
            raise ScenarioValidationError([f"no agent type of {scenario.name} survives --restrict-types"])
    if getattr(args, "alpha_weights", None):
        grid = grid.reweighted(args.alpha_weights)
    return grid


def _emit(args, document) -> None:
    if args.json:
        sys.stdout.write(to_json(document))


def cmd_validate(args) -> int:
    scenario = scenarios.load(args.scenario)
    _emit(args, {
        "scenario": scenario.name,
        "valid": True,
        "episodes": len(scenario.episodes),
        "hypotheses": scenario.hypothesis_grid.size,
        "configurations": len(scenario.config_space),
    })
    return 0


def cmd_simulate(args) -> int:
    scenario = scenarios.load(args.scenario)
    grid = scenario.hypothesis_grid
    if not 0 <= args.hypothesis < grid.size:
        raise IndexError(f"hypothesis index {args.hypothesis} outside [0, {grid.size})")
    params = grid.hypothesis(args.hypothesis)
    known = params.prior.is_point_mass and params.prior.support[0] == scenario.true_config
    sampler = simulate if known else simulate_uncertain
    episode = sampler(params, scenario.grid, scenario.true_config, args.seed)
    episode = replace(episode, name=args.name)
    scenarios.save(scenario.with_episodes([episode], target=args.name), args.out)
    _emit(args, {"hypothesis": grid.describe(params), "actions": [a.value for a in episode.actions]})
    return 0


def cmd_infer(args) -> int:
    scenario = scenarios.load(args.scenario)
    grid = _grid(args, scenario)
    post = posterior(grid, scenario.episodes, jobs=args.jobs)
    write_posterior_csv(post, args.out)
    logger.info("posterior over %d hypotheses written to %s", grid.size, args.out)

    events = {expr: event_probability(post, PropertyPredicate(expr, expr)) for expr in args.event}
    best = int(np.argmax(post.weights))
    summary = {
        "scenario": scenario.name,
        "episodes": len(scenario.episodes),
        "hypotheses": grid.size,
        "types": [t.value for t in grid.types],
        "events": events,
        "map": {"index": best, "weight": float(post.weights[best]), **grid.describe(grid.hypothesis(best))},
    }
    write_json(summary, args.summary or Path(args.out).with_suffix(".summary.json"))
    _emit(args, summary)
    return 0


def cmd_marginal(args) -> int:
    scenario = scenarios.load(args.scenario)
    grid = _grid(args, scenario)
    post = posterior(grid, scenario.episodes, jobs=args.jobs)
    matrix = marginal2d(post, args.dim_x, args.dim_y, dict(args.slice))
    write_matrix_csv(matrix, args.out)
    logger.info("%s x %s marginal written to %s", args.dim_x, args.dim_y, args.out)
    _emit(args, {
        "rows": [float(v) if isinstance(v, (int, float, np.number)) else v for v in matrix.index],
        "columns": [float(v) if isinstance(v, (int, float, np.number)) else v for v in matrix.columns],
        "matrix": matrix.to_numpy().tolist(),
    })
    return 0


def cmd_properties(args) -> int:
    scenario = scenarios.load(args.scenario)
    grid = _grid(args, scenario)
    properties = scenarios.load_properties(args.properties)
    for prop in properties:
        prop.check_fields(grid.frame().columns)
    ll = log_likelihoods(grid, scenario.episodes, jobs=args.jobs)
    scores = property_likelihoods(grid, scenario.episodes, properties, log_likelihood=ll)
    exprs = {p.name: p.expr for p in properties}
    ranked = [
        {"name": name, "expr": exprs[name], "score": score}
        for name, score in sorted(scores.items(), key=lambda item: -item[1])
    ]
    write_json({"scenario": scenario.name, "scores": ranked}, args.out)
    _emit(args, ranked)
    return 0


def cmd_search(args) -> int:
    scenario = scenarios.load(args.scenario)
    grid = _grid(args, scenario)
    index = scenarios.canonical_parameter_index(replace(scenario, hypothesis_grid=grid))
    found = {"index": index, **grid.describe(grid.hypothesis(index))}
    sys.stdout.write(to_json(found))
    if args.out:
        write_json(found, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inverse-planner", description=__doc__.strip())
    parser.add_argument("--verbose", action="store_true", help="log progress to standard error")
    parser.add_argument("--quiet", action="store_true", help="log errors only")
    parser.add_argument("--json", action="store_true", help="print a machine-readable summary on standard output")
    commands = parser.add_subparsers(dest="command", required=True)

    def scored(sub):
        sub.add_argument("--jobs", metavar="N", type=int, default=DEFAULT_JOBS, help="worker processes (default: %(default)s)")
        sub.add_argument("--restrict-types", metavar="TYPES", type=_types, help="comma-separated agent types to keep")
        sub.add_argument("--alpha-weights", metavar="W", type=_floats, help="comma-separated prior weight per alpha level")

    sub = commands.add_parser("validate", help="check a scenario file")
    sub.add_argument("scenario")
    sub.set_defaults(run=cmd_validate)

    sub = commands.add_parser("simulate", help="sample an episode from one hypothesis")
    sub.add_argument("scenario")
    sub.add_argument("--hypothesis", metavar="INDEX", type=int, required=True, help="hypothesis index in the scenario's grid")
    sub.add_argument("--seed", metavar="N", type=int, default=0, help="sampling seed (default: %(default)s)")
    sub.add_argument("--name", default="simulated", help="name of the sampled episode (default: %(default)s)")
    sub.add_argument("--out", required=True, help="scenario file to write")
    sub.set_defaults(run=cmd_simulate)

    sub = commands.add_parser("infer", help="posterior over the hypothesis grid")
    sub.add_argument("scenario")
    sub.add_argument("--out", required=True, help="posterior CSV to write")
    sub.add_argument("--summary", help="summary JSON (default: next to --out)")
    sub.add_argument("--event", action="append", default=[], help="predicate whose posterior probability is reported (repeatable)")
    scored(sub)
    sub.set_defaults(run=cmd_infer)

    sub = commands.add_parser("marginal", help="two-dimensional posterior marginal as CSV")
    sub.add_argument("scenario")
    sub.add_argument("dim_x")
    sub.add_argument("dim_y")
    sub.add_argument("--slice", action="append", type=_slice, default=[], metavar="FIELD=VALUE", help="fix another field (repeatable)")
    sub.add_argument("--out", required=True, help="matrix CSV to write")
    scored(sub)
    sub.set_defaults(run=cmd_marginal)

    sub = commands.add_parser("properties", help="normalized likelihood of competing explanations")
    sub.add_argument("scenario")
    sub.add_argument("properties", help="property file")
    sub.add_argument("--out", required=True, help="scores JSON to write")
    scored(sub)
    sub.set_defaults(run=cmd_properties)

    sub = commands.add_parser("search", help="first grid hypothesis whose argmax rollout reproduces the target episode")
    sub.add_argument("scenario")
    sub.add_argument("--out", help="also write the result to this JSON file")
    sub.add_argument("--restrict-types", metavar="TYPES", type=_types, help="comma-separated agent types to keep")
    sub.set_defaults(run=cmd_search)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(verbose=args.verbose, quiet=args.quiet)
    try:
        return args.run(args)
    except ScenarioValidationError as e:
        for problem in e.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return e.exit_code
    except PlannerError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except IndexError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
