import math

import numpy as np
import pytest

from src.canonical import CanonicalContext
from src.errors import (
    InvalidNodeError,
    LimitExceededError,
    NotErgodicError,
    OutOfSpaceError,
    SingularSystemError,
    UnreachablePairError,
    UnsupportedKindError,
)
from src.graphs import Dag, DegreeCaps, Ordering, dag_to_cpdag
from src.moves import class_neighbors
from src.oracle import (
    SpaceKind,
    StateSpace,
    TransitionMatrix,
    build_transition_matrix,
    canonical_map,
    check_ergodic,
    congestion,
    eigenvalues,
    enumerate_space,
    exact_mixing_time,
    exact_posterior,
    hitting_time,
    lazy_kernel,
    path_ensemble,
    restricted_kernel,
    slow_mixing_certificate,
    spectral_gap,
    verify_theorem1,
)
from src.protocol import ProposalMode, SamplerKind, ScoreParams
from src.scoring import Scorer
from conftest import draw


def two_state(a: float, b: float) -> TransitionMatrix:
    space = StateSpace(SpaceKind.CPDAGS, 2, ("x", "y"))
    P = np.array([[1 - a, a], [b, 1 - b]])
    pi = np.array([b, a]) / (a + b) if a + b > 0 else np.full(2, 0.5)
    return TransitionMatrix(space, P, pi)


KERNELS = [
    (SamplerKind.RWGES, SpaceKind.CPDAGS, ProposalMode.OPERATOR, None),
    (SamplerKind.RWGES, SpaceKind.CPDAGS, ProposalMode.EXACT, None),
    (SamplerKind.ADS, SpaceKind.ORDERED, ProposalMode.EXACT, None),
    (SamplerKind.STRUCTURE, SpaceKind.DAGS, ProposalMode.EXACT, 0.3),
]


class TestSpaces:
    def test_sizes(self):
        assert len(enumerate_space(3, kind=SpaceKind.CPDAGS)) == 11
        assert len(enumerate_space(3, kind=SpaceKind.DAGS)) == 25
        assert len(enumerate_space(3, kind=SpaceKind.ORDERED, sigma=Ordering((1, 2, 0)))) == 8

    def test_caps_shrink_space(self):
        assert len(enumerate_space(3, DegreeCaps(1, 2), SpaceKind.CPDAGS)) == 7

    def test_too_many_nodes(self):
        with pytest.raises(LimitExceededError):
            enumerate_space(7)

    def test_position(self):
        space = enumerate_space(3, DegreeCaps(1, 2))
        empty = dag_to_cpdag(Dag.empty(3))
        assert space.states[space.position(empty)] == empty
        with pytest.raises(OutOfSpaceError):
            space.position(dag_to_cpdag(Dag.from_edges(3, [(0, 1), (2, 1)])))

    def test_posterior_normalized(self, weak_p3):
        _, data, params = weak_p3
        pi = exact_posterior(enumerate_space(3, params.caps), data, params)
        assert pi.sum() == pytest.approx(1.0)
        assert np.all(pi > 0)


class TestKernels:
    @pytest.mark.parametrize("kind,space_kind,mode,q", KERNELS)
    def test_detailed_balance(self, weak_p3, kind, space_kind, mode, q):
        _, data, params = weak_p3
        space = enumerate_space(3, params.caps, space_kind)
        tm = build_transition_matrix(space, kind, data, params, mode=mode, q=q)
        assert tm.row_sum_residual() < 1e-12
        assert tm.detailed_balance_residual() < 1e-12
        assert tm.stationarity_residual() < 1e-12
        assert np.all(tm.P >= 0)

    @pytest.mark.parametrize(
        "mode", [ProposalMode.EXACT, pytest.param(ProposalMode.OPERATOR, marks=pytest.mark.slow)]
    )
    def test_rwges_reversible_on_four_nodes(self, mode):
        _, data = draw(4, [(0, 1), (1, 2)], n=30, seed=11, weight=0.6)
        params = ScoreParams(c2=0.5, d_in=2, d_out=2)
        space = enumerate_space(4, params.caps, SpaceKind.CPDAGS)
        tm = build_transition_matrix(space, SamplerKind.RWGES, data, params, mode=mode)
        assert tm.detailed_balance_residual() < 1e-12
        assert tm.stationarity_residual() < 1e-12

    def test_rejection_keeps_balance_under_caps(self, weak_p3):
        _, data, params = weak_p3
        params = params.model_copy(update={"d_in": 1})
        space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
        tm = build_transition_matrix(space, SamplerKind.RWGES, data, params)
        assert tm.detailed_balance_residual() < 1e-12
        check_ergodic(tm)

    def test_wrong_space(self, weak_p3):
        _, data, params = weak_p3
        with pytest.raises(UnsupportedKindError):
            build_transition_matrix(enumerate_space(3, kind=SpaceKind.DAGS), SamplerKind.RWGES, data, params)
        with pytest.raises(UnsupportedKindError):
            build_transition_matrix(enumerate_space(3, kind=SpaceKind.DAGS), SamplerKind.STRUCTURE, data, params)

    def test_lazy_spectrum(self, weak_p3):
        _, data, params = weak_p3
        tm = build_transition_matrix(enumerate_space(3, params.caps), SamplerKind.RWGES, data, params, lazy=True)
        values = eigenvalues(tm)
        assert values[0] == pytest.approx(1.0)
        assert values[-1] >= -1e-10
        assert tm.stationarity_residual() < 1e-12
        assert 0 < spectral_gap(tm) <= 1

    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvalidNodeError):
            TransitionMatrix(StateSpace(SpaceKind.CPDAGS, 1, ("x",)), np.array([[0.5]]), np.array([1.0]))
        with pytest.raises(InvalidNodeError):
            TransitionMatrix(StateSpace(SpaceKind.CPDAGS, 1, ("x",)), np.array([[1.0 + 1e-10]]), np.array([1.0]))

    def test_restricted_kernel_matches_full_neighborhood(self, weak_p3):
        _, data, params = weak_p3
        space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
        full = build_transition_matrix(space, SamplerKind.RWGES, data, params)
        tm = restricted_kernel(space, Scorer(data, params), lambda e: class_neighbors(e, ProposalMode.EXACT))
        np.testing.assert_allclose(tm.P, full.P, atol=1e-14)

    def test_restricted_kernel_needs_symmetric_relation(self, weak_p3):
        _, data, params = weak_p3
        space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
        hub = space.states[0]
        with pytest.raises(UnreachablePairError):
            restricted_kernel(space, Scorer(data, params), lambda e: [] if e == hub else [hub])


class TestMixing:
    def test_two_state_mixing_time(self):
        assert exact_mixing_time(two_state(0.1, 0.1)).t == 4
        assert exact_mixing_time(two_state(0.5, 0.5)).t == 1

    def test_cap_gives_lower_bound(self):
        result = exact_mixing_time(two_state(0.001, 0.001), cap=8)
        assert result.lower_bound
        assert result.t == 8
        with pytest.raises(LimitExceededError):
            exact_mixing_time(two_state(0.001, 0.001), cap=8, strict=True)

    def test_not_ergodic(self):
        periodic = TransitionMatrix(StateSpace(SpaceKind.CPDAGS, 2, ("x", "y")), np.array([[0.0, 1.0], [1.0, 0.0]]), np.full(2, 0.5))
        with pytest.raises(NotErgodicError):
            exact_mixing_time(periodic)
        with pytest.raises(NotErgodicError):
            check_ergodic(two_state(0.0, 0.0))
        assert exact_mixing_time(lazy_kernel(periodic)).t == 1

    def test_hitting_time(self):
        h = hitting_time(two_state(0.2, 0.5), 1)
        assert h == pytest.approx([5.0, 0.0])
        assert hitting_time(two_state(0.2, 0.5), "x")[1] == pytest.approx(2.0)

    def test_unreachable_target(self):
        with pytest.raises(SingularSystemError):
            hitting_time(two_state(0.0, 0.0), 1)

    def test_certificate(self):
        cert = slow_mixing_certificate(two_state(0.01, 0.04), 1)
        assert cert["pi"] == pytest.approx(0.2)
        assert cert["escape"] == pytest.approx(0.04)
        assert cert["certified"]
        assert cert["mixing_lower_bound"] == pytest.approx(1 / 0.16)
        assert slow_mixing_certificate(two_state(0.01, 0.04), 0)["mixing_lower_bound"] is None


class TestCanonicalPaths:
    def test_paths_along_descent(self):
        paths = path_ensemble([1, 2, 2], 2)
        assert paths[(0, 2)] == [0, 1, 2]
        assert paths[(2, 0)] == [2, 1, 0]
        assert paths[(1, 0)] == [1, 0]

    def test_paths_through_fixed_point(self):
        assert path_ensemble([2, 2, 2], 2)[(0, 1)] == [0, 2, 1]

    def test_map_must_reach_fixed_point(self):
        with pytest.raises(LimitExceededError):
            path_ensemble([1, 0, 2], 2)

    def test_congestion_of_two_state(self):
        tm = two_state(0.5, 0.5)
        rho = congestion(tm, path_ensemble([1, 1], 1))
        assert rho == pytest.approx(0.25 / 0.25)

    def test_canonical_map_needs_classes(self, strong_p3):
        dag, data, params = strong_p3
        ctx = CanonicalContext(dag, Scorer(data, params))
        with pytest.raises(UnsupportedKindError):
            canonical_map(enumerate_space(3, kind=SpaceKind.DAGS), ctx)

    def test_bound_holds_on_strong_signal(self, strong_p3):
        dag, data, params = strong_p3
        scorer = Scorer(data, params)
        ctx = CanonicalContext(dag, scorer)
        space = enumerate_space(3, params.caps)
        tm = build_transition_matrix(space, SamplerKind.RWGES, data, params, lazy=True, scorer=scorer)
        g, star = canonical_map(space, ctx)
        assert space.states[star] == dag_to_cpdag(dag)
        report = verify_theorem1(tm, g, star)
        assert report.condition_ok
        assert report.holds is True
        assert report.t_mix <= report.bound
        assert math.isfinite(report.congestion)
        assert report.l_max >= 1

    def test_hitting_time_tracks_mixing(self, strong_p3):
        dag, data, params = strong_p3
        space = enumerate_space(3, params.caps)
        tm = build_transition_matrix(space, SamplerKind.RWGES, data, params, lazy=True)
        t_mix = exact_mixing_time(tm).t
        h = hitting_time(tm, dag_to_cpdag(dag))
        assert h.max() <= 20 * t_mix
