import itertools

import pytest

from src.errors import CycleError, InvalidNodeError, LimitExceededError
from src.graphs import (
    Dag,
    DegreeCaps,
    Ordering,
    Pdag,
    class_members,
    consistent_extension,
    covered_reversal_neighbors,
    d_separated,
    dag_to_cpdag,
    enumerate_dags,
    enumerate_equivalence_class,
    enumerate_ordered_dags,
    is_imap,
    markov_equivalent,
    member_within_caps,
    minimal_imap,
    topological_order,
)


CHAIN = Dag.from_edges(3, [(0, 1), (1, 2)])
COLLIDER = Dag.from_edges(3, [(0, 1), (2, 1)])


class TestDag:
    def test_cycle_rejected(self):
        with pytest.raises(CycleError):
            Dag.from_edges(3, [(0, 1), (1, 2), (2, 0)])

    def test_self_loop_rejected(self):
        with pytest.raises(CycleError):
            Dag.from_edges(2, [(1, 1)])

    def test_node_out_of_range(self):
        with pytest.raises(InvalidNodeError):
            Dag.from_edges(2, [(0, 2)])

    def test_degrees_and_edges(self):
        g = Dag.from_edges(4, [(0, 1), (0, 2), (3, 1)])
        assert g.edges == ((0, 1), (0, 2), (3, 1))
        assert g.out_degree(0) == 2
        assert g.in_degree(1) == 2
        assert g.degree(1) == 2
        assert g.reaches(3, 1)
        assert not g.reaches(1, 0)

    def test_hamming_counts_reversal_twice(self):
        assert CHAIN.hamming(Dag.from_edges(3, [(1, 0), (1, 2)])) == 2

    def test_describe_is_one_based(self):
        assert CHAIN.describe() == "1->2, 2->3"
        assert Dag.empty(2).describe() == "(empty)"

    def test_topological_order_smallest_first(self):
        g = Dag.from_edges(4, [(3, 0), (2, 1)])
        assert topological_order(g).perm == (2, 1, 3, 0)


class TestEnumeration:
    def test_three_nodes(self):
        dags = list(enumerate_dags(3))
        assert len(dags) == 25
        assert len({dag_to_cpdag(g) for g in dags}) == 11

    def test_two_nodes(self):
        dags = list(enumerate_dags(2))
        assert len(dags) == 3
        assert len({dag_to_cpdag(g) for g in dags}) == 2

    def test_four_nodes_total(self):
        assert len(set(enumerate_dags(4))) == 543

    def test_caps_match_filter(self):
        caps = DegreeCaps(1, 1)
        capped = set(enumerate_dags(4, caps))
        filtered = {g for g in enumerate_dags(4) if caps.admits(g)}
        assert capped == filtered

    def test_ordered_dags(self):
        sigma = Ordering((2, 0, 1))
        dags = list(enumerate_ordered_dags(sigma))
        assert len(dags) == 8
        assert all(sigma.is_topological(g) for g in dags)

    def test_ordered_dags_in_degree(self):
        dags = list(enumerate_ordered_dags(Ordering.identity(4), DegreeCaps(1, None)))
        assert all(max(g.in_degree(j) for j in range(4)) <= 1 for g in dags)
        assert len(dags) == 1 * 2 * 3 * 4


class TestEquivalence:
    def test_covered_reversal_closure_matches_partition(self):
        for p in (2, 3, 4):
            dags = list(enumerate_dags(p))
            groups: dict = {}
            for g in dags:
                groups.setdefault((g.skeleton(), g.v_structures()), set()).add(g)
            for g in dags:
                assert enumerate_equivalence_class(g) == groups[(g.skeleton(), g.v_structures())]

    def test_markov_equivalent(self):
        assert markov_equivalent(CHAIN, Dag.from_edges(3, [(2, 1), (1, 0)]))
        assert not markov_equivalent(CHAIN, COLLIDER)

    def test_covered_reversals_stay_in_class(self):
        for h in covered_reversal_neighbors(CHAIN):
            assert markov_equivalent(CHAIN, h)

    def test_cpdag_of_chain_is_undirected(self):
        e = dag_to_cpdag(CHAIN)
        assert e.directed == frozenset()
        assert e.undirected == {(0, 1), (1, 2)}

    def test_cpdag_of_collider_is_directed(self):
        e = dag_to_cpdag(COLLIDER)
        assert e.directed == {(0, 1), (2, 1)}
        assert e.undirected == frozenset()

    def test_compelled_by_propagation(self):
        g = Dag.from_edges(4, [(0, 2), (1, 2), (2, 3)])
        assert dag_to_cpdag(g).directed == {(0, 2), (1, 2), (2, 3)}

    def test_extension_round_trip(self):
        for g in enumerate_dags(4):
            e = dag_to_cpdag(g)
            ext = consistent_extension(e)
            assert ext is not None
            assert markov_equivalent(ext, g)

    def test_extension_fails_on_forced_cycle(self):
        assert consistent_extension(Pdag(3, frozenset({(0, 1), (1, 2), (2, 0)}))) is None

    def test_class_limit(self):
        e = dag_to_cpdag(Dag.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
        assert len(class_members(e)) == 4
        with pytest.raises(LimitExceededError):
            class_members(e, limit=2)

    def test_member_within_caps(self):
        caps = DegreeCaps(2, 1)
        member = member_within_caps(dag_to_cpdag(CHAIN), caps)
        assert markov_equivalent(member, CHAIN)
        assert caps.admits(member)
        assert member_within_caps(dag_to_cpdag(Dag.from_edges(3, [(0, 1), (0, 2)])), DegreeCaps(1, 1)) is not None
        star = dag_to_cpdag(Dag.from_edges(3, [(0, 2), (1, 2)]))
        assert member_within_caps(star, DegreeCaps(1, 2)) is None


class TestSeparation:
    def test_chain(self):
        assert d_separated(CHAIN, 0, 2, {1})
        assert not d_separated(CHAIN, 0, 2)

    def test_collider(self):
        assert d_separated(COLLIDER, 0, 2)
        assert not d_separated(COLLIDER, 0, 2, {1})

    def test_descendant_of_collider(self):
        g = Dag.from_edges(4, [(0, 1), (2, 1), (1, 3)])
        assert not d_separated(g, 0, 2, {3})

    def test_invalid_arguments(self):
        with pytest.raises(InvalidNodeError):
            d_separated(CHAIN, 0, 5)
        with pytest.raises(InvalidNodeError):
            d_separated(CHAIN, 0, 1, {0})

    def test_minimal_imap_own_order(self):
        assert minimal_imap(CHAIN, Ordering.identity(3)) == CHAIN

    def test_minimal_imap_reversed_collider(self):
        imap = minimal_imap(COLLIDER, Ordering((1, 0, 2)))
        assert imap.n_edges == 3
        assert is_imap(imap, COLLIDER)

    def test_imap_relation(self):
        complete = Dag.from_edges(3, [(0, 1), (0, 2), (1, 2)])
        assert is_imap(complete, CHAIN)
        assert not is_imap(Dag.empty(3), CHAIN)
        for perm in itertools.permutations(range(3)):
            assert is_imap(minimal_imap(CHAIN, Ordering(perm)), CHAIN)
