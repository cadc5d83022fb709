import numpy as np
import pytest

from app.ml_logic.agents import AgentType
from app.ml_logic.inference import (
    HypothesisGrid,
    batch_log_likelihood,
    episode_likelihood,
    event_probability,
    log_likelihoods,
    marginal2d,
    posterior,
    property_likelihoods,
)
from app.utils.errors import (
    EmptyPropertyError,
    ScenarioValidationError,
    UnknownDimensionError,
    ZeroEvidenceError,
)
from app.utils.predicates import PropertyPredicate


def test_grid_shape_and_order(tiny):
    grid = tiny.hypothesis_grid
    assert grid.shape == (3, 1, 2, 2, 2, 2)
    assert grid.size == 48

    first, second, last = grid.hypothesis(0), grid.hypothesis(1), grid.hypothesis(47)
    assert first.agent_type is AgentType.NAIVE
    assert (first.k, first.alpha) == (0.5, 1.0)
    assert second.alpha == 5.0 and second.k == 0.5
    assert last.agent_type is AgentType.NON_DISCOUNTING
    assert last.utilities.immediate == {"A": 2.0, "B": 1.0}
    assert last.utilities.delayed == {"A": 0.0, "B": 1.0}
    assert (last.k, last.alpha) == (2.0, 5.0)

    with pytest.raises(IndexError):
        grid.hypothesis(48)


def test_frame_matches_describe(tiny):
    grid = tiny.hypothesis_grid
    frame = grid.frame()
    assert frame.index.name == "hypothesis"
    assert {"type", "prior", "k", "alpha", "U_A", "Ui_A", "Ud_A", "U_B", "Ui_B", "Ud_B"} <= set(frame.columns)
    for index in (0, 13, 30, 47):
        row = frame.loc[index]
        for name, value in grid.describe(grid.hypothesis(index)).items():
            assert row[name] == value


def test_chunks_cover_the_grid_by_type(tiny):
    grid = tiny.hypothesis_grid
    chunks = grid.chunks()
    assert chunks[0][0] == 0 and chunks[-1][1] == grid.size
    assert all(a[1] == b[0] for a, b in zip(chunks, chunks[1:]))
    for start, stop in chunks:
        assert grid.batch(start, stop).size == stop - start


def test_grid_problems_are_collected():
    with pytest.raises(ScenarioValidationError) as info:
        HypothesisGrid(
            utility_levels={"A": [(1.0, 0.0)], "Z": [(1.0, 0.0)]},
            utility_keys={"A": "A"},
            time_cost=0.5,
            k_levels=[1.0],
            alpha_levels=[1.0],
            prior_levels=[None],
            types=["Naive"],
        )
    problems = info.value.problems
    assert any("Z" in p for p in problems)
    assert any("timeCost" in p for p in problems)


def test_restriction_and_alpha_weights(tiny):
    grid = tiny.hypothesis_grid
    naive = grid.restricted(["Naive"])
    assert naive.size == 16
    assert naive.frame()["type"].eq("Naive").all()

    weights = grid.reweighted([1.0, 3.0]).prior_weights()
    alpha = grid.frame()["alpha"].to_numpy()
    assert weights.sum() == pytest.approx(1.0)
    assert weights[alpha == 5.0] == pytest.approx(3 * weights[alpha == 1.0])


def test_batch_scores_match_single_hypotheses(tiny):
    grid = tiny.hypothesis_grid
    episode = tiny.episodes[0]
    for start, stop in grid.chunks():
        batch = batch_log_likelihood(grid, [episode], start, stop)
        for offset in range(0, stop - start, 5):
            single = episode_likelihood(grid.hypothesis(start + offset), episode)
            assert np.exp(batch[offset]) == pytest.approx(single)


def test_no_episodes_returns_the_prior(tiny):
    grid = tiny.hypothesis_grid.reweighted([1.0, 2.0])
    post = posterior(grid, [])
    assert np.array_equal(post.weights, grid.prior_weights())


def test_posterior_is_normalized(tiny):
    post = posterior(tiny.hypothesis_grid, tiny.episodes)
    assert post.weights.sum() == pytest.approx(1.0)
    assert (post.weights >= 0).all()
    assert len(list(post.hypotheses())) == np.count_nonzero(post.weights)


def test_repeated_evidence_multiplies(tiny):
    grid = tiny.hypothesis_grid
    once = log_likelihoods(grid, tiny.episodes)
    twice = log_likelihoods(grid, tiny.episodes * 2)
    assert twice == pytest.approx(2 * once)


def test_evidence_moves_the_posterior_toward_better_explanations(tiny):
    grid = tiny.hypothesis_grid
    ll = log_likelihoods(grid, tiny.episodes)
    finite = np.flatnonzero(np.isfinite(ll))
    better, worse = finite[np.argmax(ll[finite])], finite[np.argmin(ll[finite])]
    assert ll[better] > ll[worse]

    once = posterior(grid, tiny.episodes).weights
    twice = posterior(grid, tiny.episodes * 2).weights
    assert twice[better] / twice[worse] > once[better] / once[worse]


def test_parallel_scoring_matches_serial(tiny):
    grid = tiny.hypothesis_grid
    serial = log_likelihoods(grid, tiny.episodes, jobs=1)
    parallel = log_likelihoods(grid, tiny.episodes, jobs=2)
    assert np.array_equal(serial, parallel)


def test_zero_evidence(tiny):
    grid = tiny.hypothesis_grid
    with pytest.raises(ZeroEvidenceError):
        posterior(grid, tiny.episodes, log_likelihood=np.full(grid.size, -np.inf))


def test_marginal_is_a_distribution(tiny):
    post = posterior(tiny.hypothesis_grid, tiny.episodes)
    matrix = marginal2d(post, "U(B)", "k")
    assert matrix.shape == (2, 2)
    assert list(matrix.index) == [0.0, 2.0]
    assert list(matrix.columns) == [0.5, 2.0]
    assert matrix.to_numpy().sum() == pytest.approx(1.0)

    sliced = marginal2d(post, "U_A", "alpha", {"type": "Naive", "k": 2.0})
    assert sliced.to_numpy().sum() == pytest.approx(1.0)


def test_marginal_without_evidence_is_uniform(tiny):
    matrix = marginal2d(posterior(tiny.hypothesis_grid, []), "type", "alpha")
    assert matrix.to_numpy() == pytest.approx(np.full((3, 2), 1 / 6))


def test_marginal_dimensions_are_checked(tiny):
    post = posterior(tiny.hypothesis_grid, [])
    with pytest.raises(UnknownDimensionError):
        marginal2d(post, "U_C", "k")
    with pytest.raises(UnknownDimensionError):
        marginal2d(post, "k", "k")
    with pytest.raises(UnknownDimensionError):
        marginal2d(post, "weight", "k")


def test_event_probability(tiny):
    post = posterior(tiny.hypothesis_grid, [])
    assert event_probability(post, PropertyPredicate("naive", "type == 'Naive'")) == pytest.approx(1 / 3)
    assert event_probability(post, PropertyPredicate("likes B", "prefers(B, A)")) == pytest.approx(0.25)


def test_property_scores_without_evidence_are_even(tiny):
    grid = tiny.hypothesis_grid
    props = [PropertyPredicate("naive", "type == 'Naive'"), PropertyPredicate("patient", "k < 1")]
    scores = property_likelihoods(grid, [], props, log_likelihood=np.zeros(grid.size))
    assert list(scores) == ["naive", "patient"]
    assert list(scores.values()) == pytest.approx([0.5, 0.5])


def test_evidence_favours_the_visited_restaurant(tiny):
    props = [PropertyPredicate("likes B", "U_B > 0"), PropertyPredicate("indifferent to B", "U_B == 0")]
    scores = property_likelihoods(tiny.hypothesis_grid, tiny.episodes, props)
    assert sum(scores.values()) == pytest.approx(1.0)
    assert scores["likes B"] > scores["indifferent to B"]


def test_empty_property(tiny):
    with pytest.raises(EmptyPropertyError):
        property_likelihoods(tiny.hypothesis_grid, tiny.episodes, [PropertyPredicate("huge", "U_A > 100")])
