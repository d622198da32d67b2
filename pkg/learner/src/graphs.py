"""Directed and partially directed graphs, Markov equivalence and d-separation.

Nodes are 0-based integers internally; text formats use 1-based labels.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Optional

import networkx as nx

from .errors import CycleError, DimensionMismatchError, InvalidNodeError, LimitExceededError

logger = logging.getLogger(__name__)

DEFAULT_CLASS_LIMIT = 100_000

Edge = tuple[int, int]


def _pair(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class DegreeCaps:
    """Degree restriction defining the sparse model space. None means unbounded."""

    d_in: Optional[int] = None
    d_out: Optional[int] = None
    total: bool = False

    @property
    def degree_limit(self) -> Optional[int]:
        if self.d_in is None or self.d_out is None:
            return None
        return self.d_in + self.d_out

    def node_ok(self, in_degree: int, out_degree: int) -> bool:
        if self.total:
            limit = self.degree_limit
            return limit is None or in_degree + out_degree <= limit
        if self.d_in is not None and in_degree > self.d_in:
            return False
        return self.d_out is None or out_degree <= self.d_out

    def admits(self, g: "Dag") -> bool:
        return all(self.node_ok(len(g.parents[j]), len(g.children[j])) for j in range(g.p))


UNRESTRICTED = DegreeCaps()


@dataclass(frozen=True)
class Ordering:
    """A permutation of the nodes; perm[k] is the node in position k."""

    perm: tuple[int, ...]
    inverse: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        perm = tuple(int(v) for v in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise InvalidNodeError(f"not a permutation: {perm}")
        inverse = [0] * len(perm)
        for position, node in enumerate(perm):
            inverse[node] = position
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inverse", tuple(inverse))

    @classmethod
    def identity(cls, p: int) -> "Ordering":
        return cls(tuple(range(p)))

    @property
    def p(self) -> int:
        return len(self.perm)

    def position(self, node: int) -> int:
        return self.inverse[node]

    def predecessors(self, node: int) -> frozenset[int]:
        return frozenset(self.perm[: self.inverse[node]])

    def precedes(self, i: int, j: int) -> bool:
        return self.inverse[i] < self.inverse[j]

    def is_topological(self, g: "Dag") -> bool:
        return all(self.precedes(i, j) for i, j in g.edges)

    def __iter__(self) -> Iterator[int]:
        return iter(self.perm)

    def __len__(self) -> int:
        return len(self.perm)


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph stored as one parent set per node."""

    p: int
    parents: tuple[frozenset[int], ...]
    children: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index()
        if not nx.is_directed_acyclic_graph(self._graph):
            raise CycleError("edge set contains a directed cycle")

    def _index(self) -> None:
        parents = tuple(frozenset(int(i) for i in s) for s in self.parents)
        if len(parents) != self.p:
            raise DimensionMismatchError(f"expected {self.p} parent sets, got {len(parents)}")
        kids: list[set[int]] = [set() for _ in range(self.p)]
        for j, pa in enumerate(parents):
            for i in pa:
                if not 0 <= i < self.p:
                    raise InvalidNodeError(f"node {i} out of range for p={self.p}")
                if i == j:
                    raise CycleError(f"self-loop at node {j}")
                kids[i].add(j)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "children", tuple(frozenset(k) for k in kids))

    @classmethod
    def unchecked(cls, p: int, parents: Iterable[Iterable[int]]) -> "Dag":
        """Build without the acyclicity check."""
        g = cls.__new__(cls)
        object.__setattr__(g, "p", p)
        object.__setattr__(g, "parents", tuple(parents))
        g._index()
        return g

    @classmethod
    def empty(cls, p: int) -> "Dag":
        return cls(p, tuple(frozenset() for _ in range(p)))

    @classmethod
    def from_edges(cls, p: int, edges: Iterable[Edge]) -> "Dag":
        parents: list[set[int]] = [set() for _ in range(p)]
        for i, j in edges:
            if not (0 <= i < p and 0 <= j < p):
                raise InvalidNodeError(f"edge {i}->{j} out of range for p={p}")
            parents[j].add(i)
        return cls(p, tuple(frozenset(s) for s in parents))

    @cached_property
    def _graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.p))
        graph.add_edges_from(self.edges)
        return graph

    def to_networkx(self) -> nx.DiGraph:
        return self._graph.copy()

    @cached_property
    def edges(self) -> tuple[Edge, ...]:
        return tuple(sorted((i, j) for j in range(self.p) for i in self.parents[j]))

    @property
    def n_edges(self) -> int:
        return sum(len(pa) for pa in self.parents)

    def has_edge(self, i: int, j: int) -> bool:
        return i in self.parents[j]

    def adjacent(self, i: int, j: int) -> bool:
        return i in self.parents[j] or j in self.parents[i]

    def in_degree(self, j: int) -> int:
        return len(self.parents[j])

    def out_degree(self, j: int) -> int:
        return len(self.children[j])

    def degree(self, j: int) -> int:
        return len(self.parents[j]) + len(self.children[j])

    def reaches(self, source: int, target: int) -> bool:
        return nx.has_path(self._graph, source, target)

    def with_parents(self, j: int, new_parents: Iterable[int], check: bool = True) -> "Dag":
        parents = list(self.parents)
        parents[j] = frozenset(new_parents)
        if check:
            return Dag(self.p, tuple(parents))
        return Dag.unchecked(self.p, parents)

    def add_edge(self, i: int, j: int) -> "Dag":
        return self.with_parents(j, self.parents[j] | {i})

    def remove_edge(self, i: int, j: int) -> "Dag":
        return self.with_parents(j, self.parents[j] - {i}, check=False)

    def skeleton(self) -> frozenset[Edge]:
        return frozenset(_pair(i, j) for i, j in self.edges)

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        found = set()
        for j in range(self.p):
            for i, k in itertools.combinations(sorted(self.parents[j]), 2):
                if not self.adjacent(i, k):
                    found.add((i, j, k))
        return frozenset(found)

    def hamming(self, other: "Dag") -> int:
        """Hd(G, G'): number of directed edges in exactly one of the two graphs."""
        _same_size(self.p, other.p)
        return sum(len(a ^ b) for a, b in zip(self.parents, other.parents))

    def sort_key(self) -> tuple[Edge, ...]:
        return self.edges

    def describe(self) -> str:
        return ", ".join(f"{i + 1}->{j + 1}" for i, j in self.edges) or "(empty)"


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph; with is_cpdag set it represents an equivalence class."""

    p: int
    directed: frozenset[Edge] = frozenset()
    undirected: frozenset[Edge] = frozenset()
    is_cpdag: bool = field(default=False, compare=False)

    def __post_init__(self):
        directed = frozenset((int(i), int(j)) for i, j in self.directed)
        undirected = frozenset(_pair(int(i), int(j)) for i, j in self.undirected)
        for i, j in itertools.chain(directed, undirected):
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise InvalidNodeError(f"edge {i}-{j} out of range for p={self.p}")
            if i == j:
                raise CycleError(f"self-loop at node {i}")
        directed_pairs = [_pair(i, j) for i, j in directed]
        if len(set(directed_pairs)) != len(directed_pairs):
            raise CycleError("edge directed both ways")
        if set(directed_pairs) & undirected:
            raise DimensionMismatchError("edge both directed and undirected")
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)

    @classmethod
    def from_dag(cls, g: Dag) -> "Pdag":
        return cls(g.p, frozenset(g.edges))

    @cached_property
    def _adjacency(self) -> tuple[frozenset[int], ...]:
        adj: list[set[int]] = [set() for _ in range(self.p)]
        for i, j in itertools.chain(self.directed, self.undirected):
            adj[i].add(j)
            adj[j].add(i)
        return tuple(frozenset(a) for a in adj)

    @cached_property
    def _undirected_nbrs(self) -> tuple[frozenset[int], ...]:
        nbrs: list[set[int]] = [set() for _ in range(self.p)]
        for i, j in self.undirected:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(a) for a in nbrs)

    def parents(self, j: int) -> frozenset[int]:
        return frozenset(i for i, k in self.directed if k == j)

    def children(self, j: int) -> frozenset[int]:
        return frozenset(k for i, k in self.directed if i == j)

    def neighbors(self, j: int) -> frozenset[int]:
        """Un_j: nodes joined to j by an undirected edge."""
        return self._undirected_nbrs[j]

    def adjacents(self, j: int) -> frozenset[int]:
        """Ad_j: nodes joined to j by any edge."""
        return self._adjacency[j]

    def is_adjacent(self, i: int, j: int) -> bool:
        return j in self._adjacency[i]

    @property
    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def skeleton(self) -> frozenset[Edge]:
        return frozenset(_pair(i, j) for i, j in self.directed) | self.undirected

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        found = set()
        for j in range(self.p):
            for i, k in itertools.combinations(sorted(self.parents(j)), 2):
                if not self.is_adjacent(i, k):
                    found.add((i, j, k))
        return frozenset(found)

    def edit(
        self,
        add_directed: Iterable[Edge] = (),
        remove_directed: Iterable[Edge] = (),
        add_undirected: Iterable[Edge] = (),
        remove_undirected: Iterable[Edge] = (),
    ) -> "Pdag":
        directed = (set(self.directed) - set(remove_directed)) | set(add_directed)
        undirected = (set(self.undirected) - {_pair(*e) for e in remove_undirected}) | {
            _pair(*e) for e in add_undirected
        }
        return Pdag(self.p, frozenset(directed), frozenset(undirected))

    def sort_key(self) -> tuple[tuple[Edge, ...], tuple[Edge, ...]]:
        return (tuple(sorted(self.directed)), tuple(sorted(self.undirected)))

    def describe(self) -> str:
        parts = [f"{i + 1}->{j + 1}" for i, j in sorted(self.directed)]
        parts += [f"{i + 1}--{j + 1}" for i, j in sorted(self.undirected)]
        return ", ".join(parts) or "(empty)"


def _same_size(p1: int, p2: int) -> None:
    if p1 != p2:
        raise DimensionMismatchError(f"graphs over {p1} and {p2} nodes")


def topological_order(g: Dag) -> Ordering:
    """Smallest-index-first topological order."""
    try:
        return Ordering(tuple(nx.lexicographical_topological_sort(g._graph)))
    except nx.NetworkXUnfeasible as e:
        raise CycleError("edge set contains a directed cycle") from e


def topological_orders(g: Dag) -> Iterator[Ordering]:
    """All orderings consistent with g."""
    for perm in nx.all_topological_sorts(g._graph):
        yield Ordering(tuple(perm))


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    _same_size(g1.p, g2.p)
    return g1.skeleton() == g2.skeleton() and g1.v_structures() == g2.v_structures()


def covered_reversal_neighbors(g: Dag) -> list[Dag]:
    """DAGs obtained by reversing one covered edge i->j (Pa_i = Pa_j minus i)."""
    out = []
    for i, j in g.edges:
        if g.parents[i] == g.parents[j] - {i}:
            parents = list(g.parents)
            parents[j] = g.parents[j] - {i}
            parents[i] = g.parents[i] | {j}
            out.append(Dag.unchecked(g.p, parents))
    return out


def dag_to_cpdag(g: Dag) -> Pdag:
    """Label each edge compelled or reversible over a canonical total order of edges."""
    pos = topological_order(g).inverse
    order = sorted(g.edges, key=lambda e: (pos[e[1]], -pos[e[0]]))
    compelled: dict[Edge, bool] = {}
    for x, y in order:
        if (x, y) in compelled:
            continue
        shortcut = False
        for w in g.parents[x]:
            if not compelled.get((w, x), False):
                continue
            if w not in g.parents[y]:
                for z in g.parents[y]:
                    compelled[(z, y)] = True
                shortcut = True
                break
            compelled[(w, y)] = True
        if shortcut:
            continue
        status = any(z != x and z not in g.parents[x] for z in g.parents[y])
        compelled[(x, y)] = status
        for z in g.parents[y]:
            compelled.setdefault((z, y), status)
    directed = frozenset(e for e, c in compelled.items() if c)
    undirected = frozenset(_pair(*e) for e, c in compelled.items() if not c)
    return Pdag(g.p, directed, undirected, is_cpdag=True)


def consistent_extension(h: Pdag) -> Optional[Dag]:
    """Dor-Tarsi sink elimination; None when h has no consistent extension."""
    remaining = set(range(h.p))
    oriented = set(h.directed)
    while remaining:
        chosen = None
        for x in sorted(remaining):
            if any(k in remaining for k in h.children(x)):
                continue
            undirected = {y for y in h.neighbors(x) if y in remaining}
            adjacent = {y for y in h.adjacents(x) if y in remaining}
            if all(h.is_adjacent(y, z) for y in undirected for z in adjacent if z != y):
                chosen = x
                break
        if chosen is None:
            return None
        for y in h.neighbors(chosen):
            if y in remaining:
                oriented.add((y, chosen))
        remaining.remove(chosen)
    try:
        return Dag.from_edges(h.p, oriented)
    except CycleError:
        return None


def enumerate_equivalence_class(g: Dag, limit: int = DEFAULT_CLASS_LIMIT) -> set[Dag]:
    """Markov equivalence class of g as the closure under covered edge reversals."""
    seen = {g}
    queue = deque([g])
    while queue:
        current = queue.popleft()
        for nxt in covered_reversal_neighbors(current):
            if nxt not in seen:
                seen.add(nxt)
                if len(seen) > limit:
                    raise LimitExceededError(f"equivalence class exceeds {limit} members")
                queue.append(nxt)
    return seen


def class_members(e: Pdag, limit: int = DEFAULT_CLASS_LIMIT) -> set[Dag]:
    g = consistent_extension(e)
    if g is None:
        raise CycleError("PDAG admits no consistent extension")
    return enumerate_equivalence_class(g, limit)


@lru_cache(maxsize=65536)
def member_within_caps(e: Pdag, caps: DegreeCaps, limit: int = DEFAULT_CLASS_LIMIT) -> Optional[Dag]:
    """Smallest-key member of the class obeying caps, or None."""
    g = consistent_extension(e)
    if g is None:
        return None
    if caps == UNRESTRICTED or caps.admits(g):
        return g
    admitted = [m for m in enumerate_equivalence_class(g, limit) if caps.admits(m)]
    return min(admitted, key=Dag.sort_key) if admitted else None


def d_separated(g: Dag, i: int, j: int, given: Iterable[int] = ()) -> bool:
    """d-separation of i and j given S via the moralized ancestral graph."""
    given = frozenset(given)
    for v in (i, j, *given):
        if not 0 <= v < g.p:
            raise InvalidNodeError(f"node {v} out of range for p={g.p}")
    if i == j or i in given or j in given:
        raise InvalidNodeError("i and j must be distinct and outside the conditioning set")
    relevant = {i, j} | given
    ancestral = set(relevant)
    for v in relevant:
        ancestral |= nx.ancestors(g._graph, v)
    moral = nx.moral_graph(g._graph.subgraph(ancestral))
    moral.remove_nodes_from(given)
    return not nx.has_path(moral, i, j)


CiTriple = tuple[int, int, frozenset[int]]


@lru_cache(maxsize=8192)
def ci_triples(g: Dag) -> frozenset[CiTriple]:
    """All (i, j, S) with i < j such that i and j are d-separated by S."""
    found = set()
    for i, j in itertools.combinations(range(g.p), 2):
        others = [v for v in range(g.p) if v not in (i, j)]
        for size in range(len(others) + 1):
            for s in itertools.combinations(others, size):
                if d_separated(g, i, j, s):
                    found.add((i, j, frozenset(s)))
    return frozenset(found)


def is_imap(g: Dag, reference: Dag) -> bool:
    """True when every independence encoded by g also holds in reference."""
    return ci_triples(g) <= ci_triples(reference)


def minimal_imap(g_true: Dag, sigma: Ordering) -> Dag:
    """G*_sigma: unique minimal I-map of g_true compatible with sigma."""
    _same_size(g_true.p, sigma.p)
    parents: list[frozenset[int]] = [frozenset()] * g_true.p
    for position, j in enumerate(sigma.perm):
        before = frozenset(sigma.perm[:position])
        parents[j] = frozenset(i for i in before if not d_separated(g_true, i, j, before - {i}))
    return Dag.unchecked(g_true.p, parents)


def enumerate_dags(p: int, caps: Optional[DegreeCaps] = None) -> Iterator[Dag]:
    """All labeled DAGs on p nodes obeying caps, built pair by pair with reachability pruning."""
    pairs = list(itertools.combinations(range(p), 2))
    parents: list[set[int]] = [set() for _ in range(p)]
    children: list[set[int]] = [set() for _ in range(p)]

    def degree_ok(a: int, b: int) -> bool:
        if caps is None:
            return True
        return caps.node_ok(len(parents[a]), len(children[a])) and caps.node_ok(
            len(parents[b]), len(children[b])
        )

    def extend(idx: int, reach: list[int]) -> Iterator[Dag]:
        if idx == len(pairs):
            yield Dag.unchecked(p, [frozenset(s) for s in parents])
            return
        yield from extend(idx + 1, reach)
        i, j = pairs[idx]
        for a, b in ((i, j), (j, i)):
            if (reach[b] >> a) & 1:
                continue
            parents[b].add(a)
            children[a].add(b)
            if degree_ok(a, b):
                grown = list(reach)
                for u in range(p):
                    if u == a or (reach[u] >> a) & 1:
                        grown[u] |= (1 << b) | reach[b]
                yield from extend(idx + 1, grown)
            parents[b].discard(a)
            children[a].discard(b)

    yield from extend(0, [0] * p)


def enumerate_ordered_dags(sigma: Ordering, caps: Optional[DegreeCaps] = None) -> Iterator[Dag]:
    """All DAGs for which sigma is a topological order, obeying caps."""
    p = sigma.p
    choices = []
    for j in range(p):
        before = sorted(sigma.predecessors(j))
        limit = len(before) if caps is None or caps.d_in is None or caps.total else min(caps.d_in, len(before))
        choices.append(
            [frozenset(s) for size in range(limit + 1) for s in itertools.combinations(before, size)]
        )
    for parents in itertools.product(*choices):
        g = Dag.unchecked(p, parents)
        if caps is None or caps.admits(g):
            yield g
