import math

import numpy as np
import pytest

from src.errors import ConfigError, OutOfSpaceError, RankDeficientError
from src.graphs import Dag, dag_to_cpdag, enumerate_dags, enumerate_equivalence_class
from src.protocol import ScoreParams
from src.scoring import ScoreCache, Scorer, cpdag_score, dag_score, local_score, residual_sum_of_squares
from src.sem import Dataset


class TestLocalScore:
    def test_empty_parent_set_closed_form(self, strong_p3):
        _, data, params = strong_p3
        x = data.column(1)
        expected = -0.5 * (params.alpha * data.n + params.kappa) * math.log(float(x @ x))
        assert local_score(data, params, 1, ()) == pytest.approx(expected)

    def test_parent_pays_edge_penalty(self, strong_p3):
        _, data, params = strong_p3
        rss = residual_sum_of_squares(data, 1, [0])
        expected = -params.edge_penalty(3) - 0.5 * params.alpha * data.n * math.log(rss)
        assert local_score(data, params, 1, [0]) == pytest.approx(expected)

    def test_rss_matches_least_squares(self, strong_p3):
        _, data, _ = strong_p3
        A = data.X[:, [0, 2]]
        _, res, _, _ = np.linalg.lstsq(A, data.column(1), rcond=None)
        assert residual_sum_of_squares(data, 1, [2, 0]) == pytest.approx(float(res[0]))

    def test_collinear_parents(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(30)
        data = Dataset(np.column_stack([x, 2 * x, rng.standard_normal(30)]))
        with pytest.raises(RankDeficientError):
            residual_sum_of_squares(data, 2, [0, 1])
        with pytest.raises(RankDeficientError):
            residual_sum_of_squares(data, 1, [0])

    def test_own_parent(self, strong_p3):
        _, data, _ = strong_p3
        with pytest.raises(RankDeficientError):
            residual_sum_of_squares(data, 1, [1])

    def test_too_few_rows(self):
        data = Dataset(np.random.default_rng(1).standard_normal((2, 3)))
        with pytest.raises(RankDeficientError):
            residual_sum_of_squares(data, 2, [0, 1])


class TestScorer:
    def test_empty_graph_is_sum_of_marginals(self, strong_p3):
        _, data, params = strong_p3
        scorer = Scorer(data, params)
        assert scorer.dag(Dag.empty(3)) == pytest.approx(sum(local_score(data, params, j, ()) for j in range(3)))

    def test_prior_and_marginal_decompose_score(self, strong_p4):
        dag, data, params = strong_p4
        scorer = Scorer(data, params)
        for g in (dag, Dag.empty(4), Dag.from_edges(4, [(0, 1), (0, 2), (3, 2)])):
            assert scorer.log_prior(g) + scorer.log_marginal(g) == pytest.approx(scorer.dag(g), rel=1e-10)

    def test_score_equivalence(self, weak_p3):
        _, data, params = weak_p3
        scorer = Scorer(data, params)
        for g in enumerate_dags(3, params.caps):
            members = enumerate_equivalence_class(g)
            values = [scorer.dag(m) for m in members if params.caps.admits(m)]
            assert max(values) - min(values) == pytest.approx(0.0, abs=1e-8)

    def test_outside_caps(self, strong_p3):
        _, data, _ = strong_p3
        params = ScoreParams(c2=4.0, d_in=1, d_out=2)
        collider = Dag.from_edges(3, [(0, 1), (2, 1)])
        scorer = Scorer(data, params)
        assert scorer.dag(collider) == -math.inf
        with pytest.raises(OutOfSpaceError):
            scorer.cpdag(dag_to_cpdag(collider))

    def test_class_score_uses_member(self, strong_p3):
        dag, data, params = strong_p3
        assert cpdag_score(data, params, dag_to_cpdag(dag)) == pytest.approx(dag_score(data, params, dag))

    def test_caps_larger_than_graph(self, strong_p3):
        _, data, _ = strong_p3
        with pytest.raises(ConfigError):
            Scorer(data, ScoreParams(d_in=4, d_out=1))

    def test_true_graph_beats_neighbours(self, strong_p3):
        dag, data, params = strong_p3
        scorer = Scorer(data, params)
        best = scorer.dag(dag)
        for g in (Dag.empty(3), Dag.from_edges(3, [(0, 1)]), Dag.from_edges(3, [(0, 1), (1, 2), (0, 2)])):
            assert scorer.dag(g) < best


class TestCache:
    def test_hits_and_misses(self, strong_p3):
        _, data, params = strong_p3
        cache = ScoreCache()
        scorer = Scorer(data, params, cache)
        first = scorer.local(2, [1])
        assert scorer.local(2, (1,)) == first
        assert (cache.hits, cache.misses, len(cache)) == (1, 1, 1)
        cache.clear()
        assert len(cache) == 0

    def test_uncached_scorer_agrees(self, strong_p4):
        dag, data, params = strong_p4
        cached = Scorer(data, params)
        fresh = Scorer(data, params, use_cache=False)
        assert cached.dag(dag) == fresh.dag(dag)
        assert len(fresh.cache) == 0
