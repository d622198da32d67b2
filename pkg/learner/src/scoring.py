"""Decomposable empirical-Bayes posterior score for DAGs and equivalence classes."""

import logging
import math
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

from .errors import OutOfSpaceError, RankDeficientError
from .graphs import DEFAULT_CLASS_LIMIT, Dag, Pdag, member_within_caps
from .protocol import ScoreParams
from .sem import Dataset

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-14


def projection_residual(y: np.ndarray, A: np.ndarray) -> np.ndarray:
    """y minus its projection onto the column span of A, via pivoted QR."""
    if A.shape[1] == 0:
        return y.copy()
    q, r, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    if np.min(np.abs(np.diag(r))) <= RANK_TOL * np.linalg.norm(A):
        raise RankDeficientError(f"design with {A.shape[1]} columns is rank deficient")
    return y - q @ (q.T @ y)


def residual_sum_of_squares(data: Dataset, j: int, parents: Iterable[int]) -> float:
    """Squared norm of X_j after projecting off span(X_S)."""
    S = sorted(parents)
    y = data.column(j)
    total = float(y @ y)
    if not S:
        rss = total
    else:
        if j in S:
            raise RankDeficientError(f"node {j} listed among its own parents")
        if len(S) > data.n - 1:
            raise RankDeficientError(f"{len(S)} parents with only n={data.n} rows")
        resid = projection_residual(y, data.X[:, S])
        rss = float(resid @ resid)
    if rss <= RESIDUAL_TOL * max(total, 1.0):
        raise RankDeficientError(f"node {j} has no residual given parents {S}")
    return rss


def local_score(data: Dataset, params: ScoreParams, j: int, parents: Iterable[int]) -> float:
    """psi_j(S) = -|S| log(c1 p^c2 sqrt(1 + alpha/gamma)) - ((alpha n + kappa)/2) log RSS_j(S)."""
    S = frozenset(parents)
    rss = residual_sum_of_squares(data, j, S)
    return -len(S) * params.edge_penalty(data.p) - 0.5 * (params.alpha * data.n + params.kappa) * math.log(rss)


class ScoreCache:
    """Memo of local scores keyed by (node, parent set)."""

    def __init__(self):
        self._values: dict[tuple[int, frozenset[int]], float] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key: tuple[int, frozenset[int]]) -> Optional[float]:
        value = self._values.get(key)
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def put(self, key: tuple[int, frozenset[int]], value: float) -> None:
        self._values[key] = value

    def clear(self) -> None:
        self._values.clear()
        self.hits = self.misses = 0

    def __len__(self) -> int:
        return len(self._values)


class Scorer:
    """A dataset and hyperparameters bound together with a local-score cache."""

    def __init__(self, data: Dataset, params: ScoreParams, cache: Optional[ScoreCache] = None, use_cache: bool = True):
        params.check_nodes(data.p)
        self.data = data
        self.params = params
        self.caps = params.caps
        self.use_cache = use_cache
        self.cache = cache if cache is not None else ScoreCache()

    @property
    def p(self) -> int:
        return self.data.p

    def local(self, j: int, parents: Iterable[int]) -> float:
        key = (j, frozenset(parents))
        if not self.use_cache:
            return local_score(self.data, self.params, *key)
        value = self.cache.get(key)
        if value is None:
            value = local_score(self.data, self.params, *key)
            self.cache.put(key, value)
        return value

    def dag(self, g: Dag) -> float:
        if not self.caps.admits(g):
            return -math.inf
        return sum(self.local(j, g.parents[j]) for j in range(g.p))

    def cpdag(self, e: Pdag, limit: int = DEFAULT_CLASS_LIMIT) -> float:
        member = member_within_caps(e, self.caps, limit)
        if member is None:
            raise OutOfSpaceError(f"class {e.describe()} has no member within the degree caps")
        return self.dag(member)

    def log_prior(self, g: Dag) -> float:
        """log of (c1 p^c2)^-|G|."""
        return -g.n_edges * (math.log(self.params.c1) + self.params.c2 * math.log(self.p))

    def log_marginal(self, g: Dag) -> float:
        """log f_alpha(G) up to a constant shared by all graphs."""
        shrink = -0.5 * g.n_edges * math.log1p(self.params.alpha / self.params.gamma)
        exponent = 0.5 * (self.params.alpha * self.data.n + self.params.kappa)
        return shrink - exponent * sum(
            math.log(residual_sum_of_squares(self.data, j, g.parents[j])) for j in range(g.p)
        )


def dag_score(data: Dataset, params: ScoreParams, g: Dag, cache: Optional[ScoreCache] = None) -> float:
    """psi(G) = sum_j psi_j(Pa_j); -inf outside the degree caps."""
    return Scorer(data, params, cache).dag(g)


def cpdag_score(data: Dataset, params: ScoreParams, e: Pdag, cache: Optional[ScoreCache] = None) -> float:
    """Score of an equivalence class through any member inside the caps."""
    return Scorer(data, params, cache).cpdag(e)
