"""Canonical transition functions on DAGs and equivalence classes, and path verification.

Everything here enumerates class members and orderings, so it is meant for
small p (at most 6 nodes).
"""

import itertools
import logging
from typing import Optional

import numpy as np

from .errors import ConfigError, LimitExceededError, NoValidMoveError, OutOfSpaceError
from .graphs import (
    DEFAULT_CLASS_LIMIT,
    Dag,
    DegreeCaps,
    Ordering,
    Pdag,
    class_members,
    dag_to_cpdag,
    enumerate_equivalence_class,
    is_imap,
    member_within_caps,
    minimal_imap,
    topological_orders,
)
from .moves import cpdag_neighborhood_exact
from .protocol import PathReport
from .scoring import Scorer
from .selection import selection_step
from .sem import modified_cholesky

logger = logging.getLogger(__name__)

MAX_NODES = 6


class CanonicalContext:
    """True DAG, score access and degree caps shared by the canonical constructions."""

    def __init__(
        self,
        true_dag: Dag,
        scorer: Scorer,
        caps: Optional[DegreeCaps] = None,
        covariance: Optional[np.ndarray] = None,
        limit: int = DEFAULT_CLASS_LIMIT,
    ):
        if true_dag.p > MAX_NODES:
            raise LimitExceededError(f"canonical constructions enumerate orderings; p={true_dag.p} > {MAX_NODES}")
        self.true_dag = true_dag
        self.true_class = dag_to_cpdag(true_dag)
        self.scorer = scorer
        self.caps = caps or scorer.caps
        self.covariance = covariance
        self.limit = limit
        self.ties: list[str] = []
        self._imaps: dict[Ordering, Dag] = {}
        self._representatives: dict[Pdag, tuple[int, Dag, Ordering]] = {}

    @property
    def p(self) -> int:
        return self.true_dag.p

    @property
    def d_in(self) -> int:
        return self.caps.d_in if self.caps.d_in is not None else self.p

    def imap(self, sigma: Ordering) -> Dag:
        """G*_sigma, memoized per ordering."""
        g = self._imaps.get(sigma)
        if g is None:
            g = minimal_imap(self.true_dag, sigma)
            self._imaps[sigma] = g
        return g

    def cholesky_imap(self, sigma: Ordering) -> Dag:
        """G*_sigma read off the support of the modified Cholesky factor of the true covariance."""
        if self.covariance is None:
            raise ConfigError("no true covariance attached to the context")
        return modified_cholesky(self.covariance, sigma).dag

    def orderings(self):
        return (Ordering(perm) for perm in itertools.permutations(range(self.p)))

    def d_star_sigma(self, sigma: Ordering) -> int:
        g = self.imap(sigma)
        return max((g.degree(j) for j in range(self.p)), default=0)

    @property
    def d_star(self) -> int:
        """Largest degree over all minimal I-maps."""
        return max(self.d_star_sigma(sigma) for sigma in self.orderings())

    def note_tie(self, message: str) -> None:
        self.ties.append(message)
        logger.debug("Tie: %s", message)


def g_j_sigma(ctx: CanonicalContext, sigma: Ordering, j: int, S) -> frozenset[int]:
    """Locally optimal step of the parent set of j toward S*_{sigma,j}."""
    S = frozenset(S)
    if not S <= sigma.predecessors(j) or len(S) > ctx.d_in:
        raise OutOfSpaceError(f"parent set {sorted(S)} of node {j} is outside the ordered model space")
    return selection_step(
        lambda parents: ctx.scorer.local(j, parents),
        S,
        ctx.imap(sigma).parents[j],
        ctx.d_in,
        on_tie=ctx.note_tie,
        label=f"at node {j}",
    )


def _in_space(ctx: CanonicalContext, g: Dag) -> bool:
    return ctx.caps.admits(g)


def representative(ctx: CanonicalContext, e: Pdag) -> tuple[int, Dag, Ordering]:
    """(h*, member, ordering) minimizing Hd(G, G*_sigma) + |G*_sigma| - |G*|; ties by (sigma, edges)."""
    cached = ctx._representatives.get(e)
    if cached is not None:
        return cached
    base = ctx.true_dag.n_edges
    best = None
    for g in class_members(e, ctx.limit):
        if not _in_space(ctx, g):
            continue
        for sigma in topological_orders(g):
            imap = ctx.imap(sigma)
            value = g.hamming(imap) + imap.n_edges - base
            key = (value, sigma.perm, g.sort_key())
            if best is None or key < best[0]:
                best = (key, g, sigma)
    if best is None:
        raise OutOfSpaceError(f"class {e.describe()} has no member within the degree caps")
    result = (best[0][0], best[1], best[2])
    ctx._representatives[e] = result
    return result


def h_star(ctx: CanonicalContext, e: Pdag) -> int:
    """Distance of a class to the true class; zero only at the true class."""
    return representative(ctx, e)[0]


def _deletion_step(ctx: CanonicalContext, e: Pdag) -> Pdag:
    members = sorted(class_members(e, ctx.limit), key=lambda g: (not _in_space(ctx, g), g.sort_key()))
    for g0 in members:
        for i, j in g0.edges:
            h = g0.remove_edge(i, j)
            if not is_imap(h, ctx.true_dag):
                continue
            result = dag_to_cpdag(h)
            if member_within_caps(result, ctx.caps, ctx.limit) is not None:
                return result
    raise NoValidMoveError(f"no edge deletion from {e.describe()} keeps an I-map of the true graph")


def canonical_step(ctx: CanonicalContext, e: Pdag) -> Pdag:
    """One move of the canonical transition function on classes; the true class is its fixed point."""
    if e == ctx.true_class:
        return e
    _, g, sigma = representative(ctx, e)
    target = ctx.imap(sigma)
    if g == target:
        return _deletion_step(ctx, e)
    for j in sigma.perm:
        if g.parents[j] == target.parents[j]:
            continue
        h = g.with_parents(j, g_j_sigma(ctx, sigma, j, g.parents[j]), check=False)
        if _in_space(ctx, h):
            return dag_to_cpdag(h)
        logger.debug("g_%d leaves the degree caps at %s", j, g.describe())
    raise NoValidMoveError(f"every canonical move from {g.describe()} violates the degree caps")


def r_star(ctx: CanonicalContext) -> int:
    """Largest equivalence class among the minimal I-maps."""
    return max(len(enumerate_equivalence_class(ctx.imap(sigma), ctx.limit)) for sigma in ctx.orderings())


def _is_imap_class(ctx: CanonicalContext, e: Pdag) -> bool:
    _, g, sigma = representative(ctx, e)
    return g == ctx.imap(sigma)


def verify_path(ctx: CanonicalContext, e: Pdag) -> PathReport:
    """Follow the canonical steps from e to the true class and check the length bounds."""
    d_star = ctx.d_star
    k_bound = (d_star + ctx.d_in) * ctx.p
    length_bound = (2 * d_star + ctx.d_in) * ctx.p
    h_values = [h_star(ctx, e)]
    steps: list[str] = []
    deltas: list[float] = []
    descent_ok = neighbors_ok = True
    k = 0 if _is_imap_class(ctx, e) else None
    current = e
    current_score = ctx.scorer.cpdag(current, ctx.limit)
    while current != ctx.true_class:
        if len(steps) > 2 * length_bound + ctx.p:
            raise LimitExceededError(f"canonical path from {e.describe()} does not terminate")
        nxt = canonical_step(ctx, current)
        if nxt not in cpdag_neighborhood_exact(current, ctx.caps, ctx.limit):
            neighbors_ok = False
            logger.warning("Canonical step %s -> %s is not a neighborhood move", current.describe(), nxt.describe())
        h_values.append(h_star(ctx, nxt))
        if h_values[-1] >= h_values[-2]:
            descent_ok = False
        next_score = ctx.scorer.cpdag(nxt, ctx.limit)
        deltas.append(next_score - current_score)
        steps.append(nxt.describe())
        current, current_score = nxt, next_score
        if k is None and _is_imap_class(ctx, current):
            k = len(steps)
    k = k if k is not None else len(steps)
    return PathReport(
        start=e.describe(),
        steps=steps,
        delta_scores=deltas,
        h_values=h_values,
        k=k,
        length=len(steps),
        k_bound=k_bound,
        length_bound=length_bound,
        k_ok=k <= k_bound,
        length_ok=len(steps) <= length_bound,
        descent_ok=descent_ok,
        neighbors_ok=neighbors_ok,
    )
