import math

import numpy as np
import pytest

from src.canonical import CanonicalContext, g_j_sigma
from src.errors import InvalidNodeError, OutOfSpaceError
from src.graphs import Ordering
from src.protocol import ScoreParams
from src.scoring import Scorer
from src.selection import (
    SelectionProblem,
    best_candidate,
    check_nodewise,
    nodewise_problems,
    selection_step,
)
from src.sem import Dataset


def size_score(S):
    """Toy posterior: prefers {0, 1} and penalizes everything else by distance."""
    return -len(S ^ {0, 1}) - 0.1 * sum(S)


class TestSelectionStep:
    def test_truth_is_fixed(self):
        assert selection_step(size_score, {0, 1}, {0, 1}, 2) == {0, 1}

    def test_overfit_drops_spurious(self):
        assert selection_step(size_score, {0, 1, 3}, {0, 1}, 3) == {0, 1}

    def test_underfit_adds_missing(self):
        assert selection_step(size_score, {2}, {0, 1}, 3) == {0, 2}

    def test_swap_at_cap(self):
        assert selection_step(size_score, {2, 3}, {0, 1}, 2) == {0, 2}

    def test_truth_larger_than_cap(self):
        with pytest.raises(OutOfSpaceError):
            selection_step(size_score, {0}, {0, 1}, 1)

    def test_ties_go_to_first_candidate(self):
        seen = []
        assert best_candidate([3, 1, 2], lambda c: 0.0, seen.append, "add") == 3
        assert len(seen) == 1


@pytest.fixture
def regression():
    """y = 2 z1 - z2 + eps with one irrelevant covariate; columns z1, z2, z3, y."""
    rng = np.random.default_rng(17)
    n = 500
    Z = rng.standard_normal((n, 3))
    eps = rng.standard_normal(n)
    y = 2.0 * Z[:, 0] - Z[:, 1] + eps
    data = Dataset(np.column_stack([Z, y]))
    params = ScoreParams(c2=4.0, c1=1.0, d_in=2, d_out=3)
    return SelectionProblem(Scorer(data, params), 3, {0, 1, 2}, {0, 1}, 2), eps


class TestSelectionProblem:
    def test_model_space(self, regression):
        problem, _ = regression
        assert problem.n_models() == 7
        assert len(list(problem.models())) == 7

    def test_every_step_moves_closer(self, regression):
        problem, _ = regression
        report = problem.check(t=1.0)
        assert report.models == 6
        assert report.hamming_ok
        assert report.passed
        assert report.min_log_ratio >= math.log(4)

    def test_noise_conditions(self, regression):
        problem, eps = regression
        report = problem.check(noise=eps, omega_star=1.0)
        assert 0.8 < report.noise_floor < 1.2
        assert report.noise_gain >= 0
        floor, gain = problem.noise_conditions(eps, 1.0)
        assert (floor, gain) == (report.noise_floor, report.noise_gain)

    def test_noise_length(self, regression):
        problem, eps = regression
        with pytest.raises(InvalidNodeError):
            problem.noise_conditions(eps[:10], 1.0)

    def test_invalid_problem(self, regression):
        problem, _ = regression
        with pytest.raises(InvalidNodeError):
            SelectionProblem(problem.scorer, 0, {0, 1}, {1}, 2)
        with pytest.raises(OutOfSpaceError):
            SelectionProblem(problem.scorer, 3, {0}, {0, 1}, 2)
        with pytest.raises(OutOfSpaceError):
            problem.step({0, 1, 2})


class TestNodewise:
    def test_from_ordering_uses_imap(self, strong_p4):
        dag, data, params = strong_p4
        sigma = Ordering((2, 1, 0, 3))
        problem = SelectionProblem.from_ordering(Scorer(data, params), dag, sigma, 0)
        assert problem.candidates == {1, 2}
        assert problem.true_set == {1}

    def test_problem_count(self, strong_p4):
        dag, data, params = strong_p4
        problems = list(nodewise_problems(Scorer(data, params), dag))
        assert len(problems) == 4 * 2**3

    def test_chain_problems_pass(self, strong_p4):
        dag, data, _ = strong_p4
        reports = check_nodewise(Scorer(data, ScoreParams(c2=4.0, d_in=2, d_out=4)), dag, t=1.0)
        assert reports
        assert all(r.hamming_ok for r in reports)
        assert all(r.passed for r in reports), [r.worst_model for r in reports if not r.passed]

    def test_graph_step_matches_selection_step(self, strong_p4):
        dag, data, params = strong_p4
        scorer = Scorer(data, params)
        ctx = CanonicalContext(dag, scorer)
        sigma = Ordering.identity(4)
        problem = SelectionProblem.from_ordering(scorer, dag, sigma, 3, ctx.d_in)
        for S in problem.models():
            assert g_j_sigma(ctx, sigma, 3, S) == problem.step(S)


@pytest.mark.slow
def test_nodewise_gain_on_five_nodes(strong_p5):
    dag, data, params = strong_p5
    reports = check_nodewise(Scorer(data, params), dag, t=1.0)
    assert all(r.passed for r in reports)
