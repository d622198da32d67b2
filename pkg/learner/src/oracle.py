"""Exhaustive small-p oracle: model spaces, exact posteriors, exact kernels and mixing diagnostics."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable, Iterable, Optional, Sequence

import networkx as nx
import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .canonical import CanonicalContext, canonical_step
from .errors import (
    InvalidNodeError,
    LimitExceededError,
    NotErgodicError,
    OutOfSpaceError,
    SingularSystemError,
    UnreachablePairError,
    UnsupportedKindError,
)
from .graphs import (
    DEFAULT_CLASS_LIMIT,
    UNRESTRICTED,
    Dag,
    DegreeCaps,
    Ordering,
    Pdag,
    dag_to_cpdag,
    enumerate_dags,
    enumerate_ordered_dags,
)
from .moves import class_neighbors
from .protocol import BoundReport, ProposalMode, SamplerKind, ScoreParams
from .samplers import class_siblings, ordered_neighbors, structure_proposal
from .scoring import Scorer
from .sem import Dataset

logger = logging.getLogger(__name__)

MAX_NODES = 6
MIXING_CAP = 10**7
TV_THRESHOLD = 0.25
ROW_TOL = 1e-12


class SpaceKind(str, Enum):
    """What the states of an enumerated space are."""

    DAGS = "dags"
    ORDERED = "ordered-dags"
    CPDAGS = "cpdags"


@dataclass
class StateSpace:
    """Enumerated states with a position index."""

    kind: SpaceKind
    p: int
    states: tuple
    caps: DegreeCaps = UNRESTRICTED
    sigma: Optional[Ordering] = None
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {state: i for i, state in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise InvalidNodeError("duplicate states in the enumerated space")

    def position(self, state: Hashable) -> int:
        try:
            return self.index[state]
        except KeyError:
            raise OutOfSpaceError(f"{state.describe()} is not in the enumerated space") from None

    def __contains__(self, state) -> bool:
        return state in self.index

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


def enumerate_space(
    p: int,
    caps: Optional[DegreeCaps] = None,
    kind: SpaceKind = SpaceKind.CPDAGS,
    sigma: Optional[Ordering] = None,
) -> StateSpace:
    """All DAGs, all DAGs compatible with sigma, or all classes with a member inside caps."""
    if p > MAX_NODES:
        raise LimitExceededError(f"exhaustive enumeration is limited to p <= {MAX_NODES}")
    caps = caps or UNRESTRICTED
    if kind is SpaceKind.ORDERED:
        sigma = sigma or Ordering.identity(p)
        states = sorted(enumerate_ordered_dags(sigma, caps), key=Dag.sort_key)
    elif kind is SpaceKind.DAGS:
        states = sorted(enumerate_dags(p, caps), key=Dag.sort_key)
    else:
        states = sorted({dag_to_cpdag(g) for g in enumerate_dags(p, caps)}, key=Pdag.sort_key)
    logger.debug("Enumerated %d states of kind %s for p=%d", len(states), kind.value, p)
    return StateSpace(kind, p, tuple(states), caps, sigma)


def log_scores(space: StateSpace, scorer: Scorer, limit: int = DEFAULT_CLASS_LIMIT) -> np.ndarray:
    if space.kind is SpaceKind.CPDAGS:
        return np.array([scorer.cpdag(e, limit) for e in space])
    return np.array([scorer.dag(g) for g in space])


def exact_posterior(
    space: StateSpace, data: Dataset, params: ScoreParams, scorer: Optional[Scorer] = None
) -> np.ndarray:
    """Posterior over the enumerated space: softmax of the log scores."""
    scorer = scorer or Scorer(data, params)
    scores = log_scores(space, scorer)
    return np.exp(scores - logsumexp(scores))


@dataclass
class TransitionMatrix:
    """Row-stochastic kernel over a state space with its stationary distribution."""

    space: StateSpace
    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        rows = self.P.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > ROW_TOL:
            raise InvalidNodeError("transition matrix rows do not sum to one")

    @property
    def p(self) -> int:
        return self.space.p

    def __len__(self) -> int:
        return len(self.space)

    def detailed_balance_residual(self) -> float:
        flow = self.pi[:, None] * self.P
        return float(np.max(np.abs(flow - flow.T)))

    def stationarity_residual(self) -> float:
        return float(np.max(np.abs(self.pi @ self.P - self.pi)))

    def row_sum_residual(self) -> float:
        return float(np.max(np.abs(self.P.sum(axis=1) - 1.0)))


def _proposals(space: StateSpace, kind: SamplerKind, x, mode: ProposalMode, q: Optional[float], limit: int):
    """(y, K(x, y), K(y, x)) for every state the proposal can reach from x."""
    if kind is SamplerKind.RWGES:
        forward = class_neighbors(x, mode, None, limit)
        return [(y, 1.0 / len(forward), 1.0 / len(class_neighbors(y, mode, None, limit))) for y in forward]
    if kind is SamplerKind.ADS:
        forward = ordered_neighbors(x, space.sigma)
        return [(h, 1.0 / len(forward), 1.0 / len(ordered_neighbors(h, space.sigma))) for _, h in forward]
    targets = {h for _, h in ordered_neighbors(x)} | set(class_siblings(x, limit))
    return [
        (h, structure_proposal(x, h, q, limit), structure_proposal(h, x, q, limit))
        for h in sorted(targets, key=Dag.sort_key)
    ]


_KIND_SPACE = {
    SamplerKind.RWGES: SpaceKind.CPDAGS,
    SamplerKind.ADS: SpaceKind.ORDERED,
    SamplerKind.STRUCTURE: SpaceKind.DAGS,
}


def build_transition_matrix(
    space: StateSpace,
    kind: SamplerKind,
    data: Dataset,
    params: ScoreParams,
    mode: ProposalMode = ProposalMode.EXACT,
    q: Optional[float] = None,
    lazy: bool = False,
    scorer: Optional[Scorer] = None,
    limit: int = DEFAULT_CLASS_LIMIT,
) -> TransitionMatrix:
    """Exact Metropolis-Hastings kernel with self-loop mass; proposals leaving the space are rejected."""
    if _KIND_SPACE[kind] is not space.kind:
        raise UnsupportedKindError(f"{kind.value} chains live on {_KIND_SPACE[kind].value}, not {space.kind.value}")
    if kind is SamplerKind.STRUCTURE and (q is None or not 0.0 < q < 1.0):
        raise UnsupportedKindError("structure MCMC kernel needs 0 < q < 1")
    scorer = scorer or Scorer(data, params)
    tm = _metropolis(space, scorer, lambda x: _proposals(space, kind, x, mode, q, limit), limit)
    return lazy_kernel(tm) if lazy else tm


def _metropolis(
    space: StateSpace,
    scorer: Scorer,
    proposals: Callable[[Hashable], Iterable[tuple[Hashable, float, float]]],
    limit: int,
) -> TransitionMatrix:
    scores = log_scores(space, scorer, limit)
    pi = np.exp(scores - logsumexp(scores))
    N = len(space)
    P = np.zeros((N, N))
    for i, x in enumerate(space):
        for y, forward, backward in proposals(x):
            j = space.index.get(y)
            if j is None or j == i:
                continue
            log_accept = min(0.0, scores[j] - scores[i] + math.log(backward) - math.log(forward))
            P[i, j] += forward * math.exp(log_accept)
        P[i, i] = max(0.0, 1.0 - P[i].sum())
    return TransitionMatrix(space, P, pi)


def restricted_kernel(
    space: StateSpace,
    scorer: Scorer,
    neighbors: Callable[[Hashable], Iterable[Hashable]],
    limit: int = DEFAULT_CLASS_LIMIT,
) -> TransitionMatrix:
    """Metropolis-Hastings kernel proposing uniformly from neighbors(x).

    The relation must be symmetric on the space; neighbors outside it count
    toward the proposal size and are rejected.
    """
    table = {x: tuple(neighbors(x)) for x in space}
    for x, ys in table.items():
        for y in ys:
            if y in space and x not in table[y]:
                raise UnreachablePairError(f"state {space.position(y)} does not propose state {space.position(x)}")

    def proposals(x):
        forward = table[x]
        return [(y, 1.0 / len(forward), 1.0 / len(table[y])) for y in forward if y in space]

    return _metropolis(space, scorer, proposals, limit)


def lazy_kernel(tm: TransitionMatrix) -> TransitionMatrix:
    """(P + I) / 2, same stationary distribution and nonnegative spectrum."""
    return TransitionMatrix(tm.space, 0.5 * (tm.P + np.eye(len(tm))), tm.pi)


def eigenvalues(tm: TransitionMatrix) -> np.ndarray:
    """Spectrum of a reversible kernel via the symmetric similarity D^1/2 P D^-1/2, descending."""
    root = np.sqrt(tm.pi)
    S = root[:, None] * tm.P / root[None, :]
    return np.sort(scipy.linalg.eigvalsh(0.5 * (S + S.T)))[::-1]


def spectral_gap(tm: TransitionMatrix) -> float:
    """1 - lambda_2."""
    values = eigenvalues(tm)
    return float(1.0 - values[1]) if len(values) > 1 else 1.0


def check_ergodic(tm: TransitionMatrix) -> None:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(tm)))
    rows, cols = np.nonzero(tm.P > 0)
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    if not nx.is_strongly_connected(graph):
        raise NotErgodicError("transition matrix is not irreducible")
    if not nx.is_aperiodic(graph):
        raise NotErgodicError("transition matrix is periodic")


@dataclass(frozen=True)
class MixingTime:
    """Exact mixing time; lower_bound means the cap was reached first."""

    t: int
    lower_bound: bool = False


def tv_distance(tm: TransitionMatrix, t: int) -> float:
    """max_x TV(P^t(x, .), pi)."""
    Pt = np.linalg.matrix_power(tm.P, t)
    return float(0.5 * np.max(np.abs(Pt - tm.pi[None, :]).sum(axis=1)))


def exact_mixing_time(
    tm: TransitionMatrix, threshold: float = TV_THRESHOLD, cap: int = MIXING_CAP, strict: bool = False
) -> MixingTime:
    """Smallest t with worst-case TV distance at most 1/4: doubling, then bisection."""
    check_ergodic(tm)
    t = 1
    while tv_distance(tm, t) > threshold:
        if t >= cap:
            if strict:
                raise LimitExceededError(f"mixing time exceeds {cap}")
            logger.info("Mixing time exceeds the cap %d", cap)
            return MixingTime(cap, lower_bound=True)
        t = min(2 * t, cap)
    lo, hi = t // 2, t
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tv_distance(tm, mid) <= threshold:
            hi = mid
        else:
            lo = mid
    return MixingTime(max(hi, 1))


def hitting_time(tm: TransitionMatrix, target: int | Hashable) -> np.ndarray:
    """Expected hitting times of target from every state, solving (I - P_rest) h = 1."""
    idx = target if isinstance(target, (int, np.integer)) else tm.space.position(target)
    rest = [i for i in range(len(tm)) if i != idx]
    h = np.zeros(len(tm))
    if not rest:
        return h
    A = np.eye(len(rest)) - tm.P[np.ix_(rest, rest)]
    try:
        values = scipy.linalg.solve(A, np.ones(len(rest)))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularSystemError(f"target {idx} is not reachable from every state") from e
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise SingularSystemError(f"target {idx} is not reachable from every state")
    h[rest] = values
    return h


def slow_mixing_certificate(tm: TransitionMatrix, state: int | Hashable) -> dict:
    """Holding probability and mass at a local mode, with the conductance lower bound on T_mix."""
    idx = state if isinstance(state, (int, np.integer)) else tm.space.position(state)
    holding = float(tm.P[idx, idx])
    mass = float(tm.pi[idx])
    escape = 1.0 - holding
    certified = mass <= 0.5
    return {
        "state": idx,
        "self_transition": holding,
        "pi": mass,
        "escape": escape,
        "certified": certified,
        "mixing_lower_bound": (1.0 / (4.0 * escape) if escape > 0 else math.inf) if certified else None,
    }


def canonical_map(space: StateSpace, ctx: CanonicalContext) -> tuple[list[int], int]:
    """Canonical transition function as indices over a class space, and the index of its fixed point."""
    if space.kind is not SpaceKind.CPDAGS:
        raise UnsupportedKindError("canonical map is defined on equivalence classes")
    g = [space.position(canonical_step(ctx, e)) for e in space]
    return g, space.position(ctx.true_class)


def _descent(g: Sequence[int], start: int, theta_star: int) -> list[int]:
    path = [start]
    while path[-1] != theta_star:
        if len(path) > len(g):
            raise LimitExceededError(f"canonical map from state {start} never reaches the fixed point")
        path.append(g[path[-1]])
    return path


def path_ensemble(g: Sequence[int], theta_star: int) -> dict[tuple[int, int], list[int]]:
    """Paths between every ordered pair of states induced by g."""
    descents = [_descent(g, s, theta_star) for s in range(len(g))]
    paths = {}
    for a in range(len(g)):
        for b in range(len(g)):
            if a == b:
                continue
            down_a, down_b = descents[a], descents[b]
            if b in down_a:
                paths[(a, b)] = down_a[: down_a.index(b) + 1]
            elif a in down_b:
                paths[(a, b)] = down_b[: down_b.index(a) + 1][::-1]
            else:
                paths[(a, b)] = down_a + down_b[::-1][1:]
    return paths


def congestion(tm: TransitionMatrix, paths: dict[tuple[int, int], list[int]]) -> float:
    """rho = max over transitions (u, v) of the pi-weighted path load divided by pi(u) P(u, v)."""
    load: dict[tuple[int, int], float] = {}
    for (a, b), path in paths.items():
        weight = tm.pi[a] * tm.pi[b]
        for u, v in zip(path, path[1:]):
            load[(u, v)] = load.get((u, v), 0.0) + weight
    rho = 0.0
    for (u, v), total in load.items():
        capacity = tm.pi[u] * tm.P[u, v]
        if capacity <= 0:
            return math.inf
        rho = max(rho, total / capacity)
    return rho


def verify_theorem1(tm: TransitionMatrix, g: Sequence[int], theta_star: int) -> BoundReport:
    """Evaluate the canonical-path mixing bound and the congestion bound against the exact mixing time."""
    base = math.log(tm.p)
    movers = [s for s in range(len(g)) if s != theta_star]
    preimages = np.bincount([g[s] for s in movers], minlength=len(g))
    t1 = math.log(max(int(preimages.max()), 1)) / base
    t2 = min((math.log(tm.pi[g[s]] / tm.pi[s]) / base for s in movers), default=math.inf)
    step_probs = [tm.P[s, g[s]] for s in movers]
    min_step = min(step_probs, default=1.0)
    t3 = -math.log(min_step) / base if min_step > 0 else math.inf
    l_max = max(len(_descent(g, s, theta_star)) - 1 for s in range(len(g)))
    pi_min = float(tm.pi.min())
    condition_ok = t2 > t1 and math.isfinite(t3)
    bound = None
    if condition_ok:
        bound = 2 * l_max * tm.p**t3 / (1.0 - tm.p ** (-(t2 - t1))) * math.log(4.0 / pi_min)
    paths = path_ensemble(g, theta_star)
    rho = congestion(tm, paths)
    longest = max((len(path) - 1 for path in paths.values()), default=0)
    mixing = exact_mixing_time(tm)
    holds = None
    if bound is not None and not mixing.lower_bound:
        holds = mixing.t <= bound
    return BoundReport(
        p=tm.p,
        t1=t1,
        t2=t2,
        t3=t3,
        l_max=l_max,
        pi_min=pi_min,
        condition_ok=condition_ok,
        bound=bound,
        congestion=rho,
        path_bound=rho * longest * math.log(4.0 / pi_min),
        t_mix=mixing.t,
        t_mix_lower_bound=mixing.lower_bound,
        holds=holds,
    )
