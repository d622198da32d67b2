"""Nodewise variable selection under the empirical prior.

Under a fixed ordering the parent set of each node is a regression of that node on
its predecessors, so the graph-level canonical step is one selection step per node.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidNodeError, LimitExceededError, OutOfSpaceError
from .graphs import Dag, Ordering, minimal_imap
from .protocol import SelectionReport
from .scoring import Scorer, projection_residual

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12
MAX_MODELS = 200_000


def best_candidate(
    candidates: Sequence,
    value: Callable,
    on_tie: Optional[Callable[[str], None]] = None,
    label: str = "",
):
    """First candidate with the largest value; near-equal values count as ties."""
    scored = [(value(c), c) for c in candidates]
    top = max(v for v, _ in scored)
    winners = [c for v, c in scored if top - v <= TIE_TOL * max(1.0, abs(top))]
    if len(winners) > 1 and on_tie is not None:
        on_tie(f"{label}: {winners} share the best score")
    return winners[0]


def selection_step(
    local: Callable[[frozenset[int]], float],
    S,
    target,
    d: int,
    on_tie: Optional[Callable[[str], None]] = None,
    label: str = "",
) -> frozenset[int]:
    """g(S): drop a spurious covariate once S covers the target, else add a missing one, swapping at size d."""
    S = frozenset(S)
    target = frozenset(target)
    if S == target:
        return S
    redundant = sorted(S - target)
    missing = sorted(target - S)
    if not missing:
        drop = best_candidate(redundant, lambda l: local(S - {l}), on_tie, f"remove {label}")
        return S - {drop}
    if len(S) < d:
        add = best_candidate(missing, lambda k: local(S | {k}), on_tie, f"add {label}")
        return S | {add}
    if not redundant:
        raise OutOfSpaceError(f"true model {label} exceeds the size cap {d}")
    pairs = list(itertools.product(missing, redundant))
    k, l = best_candidate(pairs, lambda kl: local((S | {kl[0]}) - {kl[1]}), on_tie, f"swap {label}")
    return (S | {k}) - {l}


@dataclass
class SelectionProblem:
    """Regression of one node on a set of candidate covariates with a known true model."""

    scorer: Scorer
    response: int
    candidates: frozenset[int]
    true_set: frozenset[int]
    d: int

    def __post_init__(self):
        self.candidates = frozenset(self.candidates)
        self.true_set = frozenset(self.true_set)
        if not 0 <= self.response < self.scorer.p or self.response in self.candidates:
            raise InvalidNodeError(f"response {self.response} is not a valid node outside the candidates")
        if not self.true_set <= self.candidates:
            raise OutOfSpaceError(f"true model {sorted(self.true_set)} is not among the candidates")
        if self.d < 0:
            raise ConfigError(f"size cap must be nonnegative, got {self.d}")

    @classmethod
    def from_ordering(cls, scorer: Scorer, true_dag: Dag, sigma: Ordering, j: int, d: Optional[int] = None):
        """Node j regressed on its predecessors in sigma; the truth is its parent set in G*_sigma."""
        if d is None:
            d = scorer.caps.d_in if scorer.caps.d_in is not None else true_dag.p
        truth = minimal_imap(true_dag, sigma).parents[j]
        return cls(scorer, j, sigma.predecessors(j), truth, d)

    def log_posterior(self, S) -> float:
        return self.scorer.local(self.response, S)

    def n_models(self) -> int:
        m = len(self.candidates)
        return sum(math.comb(m, k) for k in range(min(self.d, m) + 1))

    def models(self, limit: int = MAX_MODELS) -> Iterator[frozenset[int]]:
        """All S within the candidates with |S| <= d, smallest first."""
        if self.n_models() > limit:
            raise LimitExceededError(f"{self.n_models()} models exceed the limit {limit}")
        items = sorted(self.candidates)
        for size in range(min(self.d, len(items)) + 1):
            for combo in itertools.combinations(items, size):
                yield frozenset(combo)

    def step(self, S, on_tie: Optional[Callable[[str], None]] = None) -> frozenset[int]:
        S = frozenset(S)
        if not S <= self.candidates or len(S) > self.d:
            raise OutOfSpaceError(f"model {sorted(S)} is outside the selection space")
        return selection_step(self.log_posterior, S, self.true_set, self.d, on_tie, f"at node {self.response}")

    def distance(self, S) -> int:
        return len(frozenset(S) ^ self.true_set)

    def noise_conditions(self, noise: np.ndarray, omega_star: float, limit: int = MAX_MODELS) -> tuple[float, float]:
        """Normalized smallest residual noise energy and largest one-covariate noise gain over the space."""
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (self.scorer.data.n,):
            raise InvalidNodeError(f"noise must have length n={self.scorer.data.n}")
        X = self.scorer.data.X
        energy: dict[frozenset[int], float] = {}

        def residual_energy(S: frozenset[int]) -> float:
            value = energy.get(S)
            if value is None:
                r = projection_residual(noise, X[:, sorted(S)])
                value = energy[S] = float(r @ r)
            return value

        floor = math.inf
        gain = 0.0
        for S in self.models(limit):
            base = residual_energy(S)
            floor = min(floor, base)
            for k in sorted(self.candidates - S):
                gain = max(gain, base - residual_energy(S | {k}))
        n = self.scorer.data.n
        return floor / (n * omega_star), gain / (omega_star * math.log(self.scorer.p))

    def check(
        self,
        t: Optional[float] = None,
        noise: Optional[np.ndarray] = None,
        omega_star: float = 1.0,
        limit: int = MAX_MODELS,
    ) -> SelectionReport:
        """Apply g to every model other than the truth and record the smallest posterior gain."""
        if len(self.true_set) > self.d:
            raise OutOfSpaceError(f"true model {sorted(self.true_set)} exceeds the size cap {self.d}")
        log_p = math.log(self.scorer.p)
        count = 0
        worst: frozenset[int] = frozenset()
        min_ratio = math.inf
        hamming_ok = True
        for S in self.models(limit):
            if S == self.true_set:
                continue
            nxt = self.step(S)
            count += 1
            if self.distance(nxt) >= self.distance(S):
                hamming_ok = False
            ratio = self.log_posterior(nxt) - self.log_posterior(S)
            if ratio < min_ratio:
                min_ratio, worst = ratio, S
        floor = gain = None
        if noise is not None:
            floor, gain = self.noise_conditions(noise, omega_star, limit)
        report = SelectionReport(
            response=self.response,
            candidates=sorted(self.candidates),
            true_set=sorted(self.true_set),
            d=self.d,
            models=count,
            min_log_ratio=min_ratio,
            min_exponent=min_ratio / log_p if log_p > 0 else math.inf,
            worst_model=sorted(worst),
            hamming_ok=hamming_ok,
            t=t,
            noise_floor=floor,
            noise_gain=gain,
        )
        logger.debug(
            "Selection at node %d over %d models: min exponent %.3f", self.response, count, report.min_exponent
        )
        return report


def nodewise_problems(scorer: Scorer, true_dag: Dag, d: Optional[int] = None) -> Iterator[SelectionProblem]:
    """One problem per node and predecessor set, which covers every ordering."""
    nodes = range(true_dag.p)
    for j in nodes:
        others = [k for k in nodes if k != j]
        for size in range(len(others) + 1):
            for before in itertools.combinations(others, size):
                after = tuple(k for k in others if k not in before)
                sigma = Ordering(before + (j,) + after)
                yield SelectionProblem.from_ordering(scorer, true_dag, sigma, j, d)


def check_nodewise(
    scorer: Scorer, true_dag: Dag, t: Optional[float] = None, d: Optional[int] = None
) -> list[SelectionReport]:
    """Selection reports for every nodewise problem induced by the orderings of true_dag."""
    reports = []
    for problem in nodewise_problems(scorer, true_dag, d):
        if len(problem.true_set) > problem.d:
            logger.debug("Skipping node %d: true model exceeds the size cap", problem.response)
            continue
        reports.append(problem.check(t))
    failed = sum(not r.passed for r in reports)
    logger.info("Checked %d nodewise selection problems, %d below the required gain", len(reports), failed)
    return reports
