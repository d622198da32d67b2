"""Add-delete-swap neighborhoods of DAGs and insert/delete operators on equivalence classes."""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Optional

import networkx as nx

from .errors import InvalidNodeError, UnreachablePairError
from .graphs import (
    DEFAULT_CLASS_LIMIT,
    UNRESTRICTED,
    Dag,
    DegreeCaps,
    Ordering,
    Pdag,
    class_members,
    consistent_extension,
    dag_to_cpdag,
    member_within_caps,
)
from .protocol import ProposalMode

logger = logging.getLogger(__name__)

MOVE_KINDS = ("add", "delete", "swap")
OPERATOR_KINDS = ("insert", "delete", "swap")
ALL_KINDS = frozenset(MOVE_KINDS)


@dataclass(frozen=True)
class DagMove:
    """Add k->j, delete l->j, or swap l->j for k->j."""

    kind: str
    j: int
    k: Optional[int] = None
    l: Optional[int] = None

    def __post_init__(self):
        if self.kind not in MOVE_KINDS:
            raise InvalidNodeError(f"unknown move kind {self.kind!r}")
        if self.kind == "swap" and (self.k is None or self.l is None or self.k == self.l):
            raise InvalidNodeError("swap needs distinct added and removed parents")

    def apply(self, g: Dag) -> Dag:
        parents = set(g.parents[self.j])
        if self.l is not None:
            parents.discard(self.l)
        if self.k is not None:
            parents.add(self.k)
        return g.with_parents(self.j, parents)

    def sort_key(self) -> tuple:
        return (MOVE_KINDS.index(self.kind), self.j, -1 if self.k is None else self.k, -1 if self.l is None else self.l)

    def describe(self) -> str:
        if self.kind == "add":
            return f"add {self.k + 1}->{self.j + 1}"
        if self.kind == "delete":
            return f"delete {self.l + 1}->{self.j + 1}"
        return f"swap {self.l + 1}->{self.j + 1} for {self.k + 1}->{self.j + 1}"


def dag_neighbors(
    g: Dag,
    caps: Optional[DegreeCaps] = None,
    sigma: Optional[Ordering] = None,
    kinds: Iterable[str] = ALL_KINDS,
) -> list[tuple[DagMove, Dag]]:
    """N_ads(G) restricted to caps and, when given, to DAGs compatible with sigma."""
    kinds = frozenset(kinds)
    caps = caps or UNRESTRICTED
    graph = g._graph
    out: list[tuple[DagMove, Dag]] = []

    def keep(move: DagMove, parents: Iterable[int]) -> None:
        h = g.with_parents(move.j, parents, check=False)
        if caps.admits(h):
            out.append((move, h))

    for j in range(g.p):
        pa = g.parents[j]
        candidates = [
            k for k in range(g.p)
            if k != j and k not in pa and j not in g.parents[k] and (sigma is None or sigma.precedes(k, j))
        ]
        if "add" in kinds:
            for k in candidates:
                if not nx.has_path(graph, j, k):
                    keep(DagMove("add", j, k=k), pa | {k})
        if "delete" in kinds:
            for l in sorted(pa):
                keep(DagMove("delete", j, l=l), pa - {l})
        if "swap" in kinds:
            for l in sorted(pa):
                view = nx.restricted_view(graph, [], [(l, j)])
                for k in candidates:
                    if not nx.has_path(view, j, k):
                        keep(DagMove("swap", j, k=k, l=l), (pa - {l}) | {k})
    return out


@dataclass(frozen=True)
class GesOperator:
    """Insert(i, j, S), Delete(i, j, S) or an insert/delete pair sharing head node j."""

    kind: str
    i: int
    j: int
    S: frozenset[int] = frozenset()
    parts: tuple["GesOperator", ...] = ()

    def sort_key(self) -> tuple:
        if self.kind == "swap":
            return (2, self.j) + self.parts[0].sort_key() + self.parts[1].sort_key()
        return (OPERATOR_KINDS.index(self.kind), self.i, self.j, tuple(sorted(self.S)))

    def describe(self) -> str:
        if self.kind == "swap":
            return f"{self.parts[0].describe()} + {self.parts[1].describe()}"
        subset = ",".join(str(k + 1) for k in sorted(self.S))
        return f"{self.kind.capitalize()}({self.i + 1},{self.j + 1},{{{subset}}})"


def _subsets(items: Iterable[int]) -> Iterator[frozenset[int]]:
    items = sorted(items)
    for size in range(len(items) + 1):
        for combo in itertools.combinations(items, size):
            yield frozenset(combo)


def _is_clique(e: Pdag, nodes: Iterable[int]) -> bool:
    return all(e.is_adjacent(a, b) for a, b in itertools.combinations(sorted(nodes), 2))


def _semi_directed_path(e: Pdag, source: int, target: int, blocked: frozenset[int]) -> bool:
    """True when a path source ... target follows directed edges forward or undirected edges, avoiding blocked."""
    graph = nx.DiGraph()
    graph.add_nodes_from(k for k in range(e.p) if k not in blocked)
    graph.add_edges_from((a, b) for a, b in e.directed if a not in blocked and b not in blocked)
    for a, b in e.undirected:
        if a not in blocked and b not in blocked:
            graph.add_edges_from([(a, b), (b, a)])
    return nx.has_path(graph, source, target)


def _insert_pdag(e: Pdag, i: int, j: int, S: frozenset[int]) -> Optional[Pdag]:
    if i == j or e.is_adjacent(i, j) or not S <= e.neighbors(j) - e.adjacents(i):
        return None
    guard = (e.neighbors(j) & e.adjacents(i)) | S
    if not _is_clique(e, guard) or _semi_directed_path(e, j, i, guard):
        return None
    return e.edit(
        add_directed=[(i, j)] + [(k, j) for k in S],
        remove_undirected=[(k, j) for k in S],
    )


def _delete_pdag(e: Pdag, i: int, j: int, S: frozenset[int]) -> Optional[Pdag]:
    undirected = (min(i, j), max(i, j)) in e.undirected
    if not ((i, j) in e.directed or undirected):
        return None
    common = e.neighbors(j) & e.adjacents(i)
    if not S <= common or not _is_clique(e, common - S):
        return None
    add_directed = [(j, k) for k in S]
    remove_undirected = [(k, j) for k in S]
    for k in S:
        if k in e.neighbors(i):
            add_directed.append((i, k))
            remove_undirected.append((k, i))
    if undirected:
        remove_undirected.append((i, j))
    return e.edit(add_directed=add_directed, remove_directed=[(i, j)], remove_undirected=remove_undirected)


def _complete(h: Optional[Pdag]) -> Optional[Pdag]:
    if h is None:
        return None
    g = consistent_extension(h)
    return None if g is None else dag_to_cpdag(g)


def _apply_unrestricted(e: Pdag, op: GesOperator) -> Optional[Pdag]:
    if op.kind == "insert":
        return _complete(_insert_pdag(e, op.i, op.j, op.S))
    if op.kind == "delete":
        return _complete(_delete_pdag(e, op.i, op.j, op.S))
    middle = _apply_unrestricted(e, op.parts[0])
    return None if middle is None else _apply_unrestricted(middle, op.parts[1])


def _insert_operators(e: Pdag) -> list[GesOperator]:
    ops = []
    for i, j in itertools.permutations(range(e.p), 2):
        if not e.is_adjacent(i, j):
            for S in _subsets(e.neighbors(j) - e.adjacents(i)):
                ops.append(GesOperator("insert", i, j, S))
    return ops


def _delete_operators(e: Pdag, head: Optional[int] = None) -> list[GesOperator]:
    pairs = list(e.directed) + [(a, b) for a, b in e.undirected] + [(b, a) for a, b in e.undirected]
    ops = []
    for i, j in sorted(pairs):
        if head is not None and j != head:
            continue
        for S in _subsets(e.neighbors(j) & e.adjacents(i)):
            ops.append(GesOperator("delete", i, j, S))
    return ops


def enumerate_cpdag_operators(e: Pdag, kinds: Iterable[str] = OPERATOR_KINDS) -> list[GesOperator]:
    """All Insert/Delete descriptors of e plus insert-then-delete pairs at a shared head node."""
    kinds = frozenset(kinds)
    ops: list[GesOperator] = []
    inserts = _insert_operators(e)
    if "insert" in kinds:
        ops.extend(inserts)
    if "delete" in kinds:
        ops.extend(_delete_operators(e))
    if "swap" in kinds:
        for ins in inserts:
            middle = _apply_unrestricted(e, ins)
            if middle is None:
                continue
            for dele in _delete_operators(middle, head=ins.j):
                if dele.i != ins.i:
                    ops.append(GesOperator("swap", ins.i, ins.j, parts=(ins, dele)))
    return sorted(ops, key=GesOperator.sort_key)


def apply_operator(
    e: Pdag,
    op: GesOperator,
    caps: Optional[DegreeCaps] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
) -> Optional[Pdag]:
    """Resulting CPDAG, or None when the operator is invalid or leaves the caps."""
    result = _apply_unrestricted(e, op)
    if result is None or result == e:
        return None
    if caps is not None and caps != UNRESTRICTED and member_within_caps(result, caps, limit) is None:
        return None
    return result


@lru_cache(maxsize=4096)
def operator_outcomes(
    e: Pdag,
    caps: Optional[DegreeCaps] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
    kinds: tuple[str, ...] = OPERATOR_KINDS,
) -> tuple[tuple[Pdag, GesOperator], ...]:
    """Distinct valid results of the operators on e, each with its first operator."""
    seen: dict[Pdag, GesOperator] = {}
    for op in enumerate_cpdag_operators(e, kinds):
        result = apply_operator(e, op, caps, limit)
        if result is not None and result not in seen:
            seen[result] = op
    return tuple(seen.items())


@lru_cache(maxsize=4096)
def cpdag_neighborhood_exact(
    e: Pdag,
    caps: Optional[DegreeCaps] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
    kinds: frozenset[str] = ALL_KINDS,
) -> frozenset[Pdag]:
    """Classes of all N_ads neighbors of all members of e, kept when they have a member inside caps."""
    found = set()
    for g in class_members(e, limit):
        for _, h in dag_neighbors(g, kinds=kinds):
            found.add(dag_to_cpdag(h))
    found.discard(e)
    if caps is not None and caps != UNRESTRICTED:
        found = {c for c in found if member_within_caps(c, caps, limit) is not None}
    return frozenset(found)


def class_neighbors(
    e: Pdag,
    mode: ProposalMode = ProposalMode.OPERATOR,
    caps: Optional[DegreeCaps] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
) -> list[Pdag]:
    """Proposal support of e in a deterministic order."""
    if mode is ProposalMode.OPERATOR:
        states = [c for c, _ in operator_outcomes(e, caps, limit)]
    else:
        states = list(cpdag_neighborhood_exact(e, caps, limit))
    return sorted(states, key=Pdag.sort_key)


def proposal_ratio(
    e: Pdag,
    e_next: Pdag,
    mode: ProposalMode = ProposalMode.OPERATOR,
    caps: Optional[DegreeCaps] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
) -> float:
    """K(e', e) / K(e, e') for the uniform proposal over the chosen neighborhood."""
    forward = class_neighbors(e, mode, caps, limit)
    if e_next not in forward:
        raise UnreachablePairError(f"{e_next.describe()} is not a neighbor of {e.describe()}")
    backward = class_neighbors(e_next, mode, caps, limit)
    return len(forward) / len(backward)


def neighborhood_bounds(p: int, d_in: int, d_out: int) -> tuple[int, int, float]:
    """Lower and upper bounds on |N_ads| of a sparse class and the exponent t0 = log_p 2^(d_in+d_out)."""
    lower = p * (p - 1) // 2
    upper = 3 * p * (p - 1) * (d_in + d_out) * 2 ** (d_in + d_out)
    return lower, upper, (d_in + d_out) * math.log(2) / math.log(p)
