"""Metropolis-Hastings chains over equivalence classes and DAGs, plus greedy search."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import OutOfSpaceError
from .graphs import (
    DEFAULT_CLASS_LIMIT,
    Dag,
    Ordering,
    Pdag,
    dag_to_cpdag,
    enumerate_equivalence_class,
)
from .moves import class_neighbors, dag_neighbors, operator_outcomes
from .protocol import ChainConfig, ProposalMode, SamplerKind, ScoreParams, TraceRecord
from .scoring import Scorer
from .sem import Dataset
from .trace import ChainTrace

logger = logging.getLogger(__name__)

SCORE_TOL = 1e-8

# (kind, proposed state or None for a self-loop, log K(y, x) - log K(x, y))
Proposal = tuple[str, Optional[object], float]


@lru_cache(maxsize=65536)
def ordered_neighbors(g: Dag, sigma: Optional[Ordering] = None) -> tuple:
    """Unrestricted N_ads(G), optionally compatible with sigma, as (move, DAG) pairs."""
    return tuple(dag_neighbors(g, sigma=sigma))


@lru_cache(maxsize=65536)
def _neighbor_set(g: Dag) -> frozenset[Dag]:
    return frozenset(h for _, h in ordered_neighbors(g))


@lru_cache(maxsize=16384)
def class_siblings(g: Dag, limit: int = DEFAULT_CLASS_LIMIT) -> tuple[Dag, ...]:
    """Members of the class of g other than g, in a fixed order."""
    return tuple(sorted(enumerate_equivalence_class(g, limit) - {g}, key=Dag.sort_key))


def structure_proposal(g: Dag, h: Dag, q: float, limit: int = DEFAULT_CLASS_LIMIT) -> float:
    """K_s(G, H) = (1-q) U(N_ads(G))(H) + q U(class(G) minus G)(H)."""
    prob = 0.0
    if h in _neighbor_set(g):
        prob += (1.0 - q) / len(ordered_neighbors(g))
    siblings = class_siblings(g, limit)
    if h in siblings:
        prob += q / len(siblings)
    return prob


def _class_score(scorer: Scorer, e: Pdag, limit: int) -> float:
    try:
        return scorer.cpdag(e, limit)
    except OutOfSpaceError:
        return -math.inf


def _edge_kind(before: int, after: int) -> str:
    if after > before:
        return "insert"
    if after < before:
        return "delete"
    return "swap"


def _metropolis(
    init,
    score: Callable[[object], float],
    fresh_score: Callable[[object], float],
    propose: Callable[[object, np.random.Generator], Proposal],
    config: ChainConfig,
    trace: ChainTrace,
    n_edges: Callable[[object], int],
):
    rng = np.random.default_rng(config.seed)
    state = init
    current = score(state)
    if not math.isfinite(current):
        raise OutOfSpaceError(f"initial state {state.describe()} is outside the model space")
    for it in range(1, config.iterations + 1):
        if config.lazy and rng.random() < 0.5:
            trace.record(TraceRecord(iter=it, kind="hold", accepted=False, log_score=current, n_edges=n_edges(state)), state)
        else:
            kind, proposal, log_ratio = propose(state, rng)
            accepted = False
            log_alpha = None
            if proposal is not None:
                candidate = score(proposal)
                log_alpha = candidate - current + log_ratio if math.isfinite(candidate) else -math.inf
                if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
                    state, current, accepted = proposal, candidate, True
            trace.record(
                TraceRecord(
                    iter=it, kind=kind, accepted=accepted, log_score=current, n_edges=n_edges(state), log_alpha=log_alpha
                ),
                state,
            )
        if it % config.checkpoint_every == 0:
            logger.debug("Iteration %d: log score %.4f, %d edges", it, current, n_edges(state))
            recomputed = fresh_score(state)
            if abs(recomputed - current) > SCORE_TOL * max(1.0, abs(recomputed)):
                logger.warning("Score drift at iteration %d: %.10g vs %.10g", it, current, recomputed)
                current = recomputed
    results = trace.get_results()
    logger.info("Chain finished: %d steps, acceptance rate %.3f", results["iterations"], results["acceptance_rate"])
    return state


def rwges_run(
    data: Dataset,
    config: ChainConfig,
    init: Pdag,
    trace: Optional[ChainTrace] = None,
    scorer: Optional[Scorer] = None,
) -> tuple[Pdag, ChainTrace]:
    """Random-walk GES over equivalence classes with uniform proposals on the class neighborhood."""
    scorer = scorer or Scorer(data, config.score)
    fresh = Scorer(data, config.score, use_cache=False)
    trace = trace if trace is not None else ChainTrace(SamplerKind.RWGES.value)
    limit = config.class_limit

    def propose(e: Pdag, rng: np.random.Generator) -> Proposal:
        forward = class_neighbors(e, config.proposal, None, limit)
        if not forward:
            return "none", None, 0.0
        nxt = forward[rng.integers(len(forward))]
        backward = class_neighbors(nxt, config.proposal, None, limit)
        return _edge_kind(e.n_edges, nxt.n_edges), nxt, math.log(len(forward)) - math.log(len(backward))

    logger.info("RW-GES: %d iterations from %s", config.iterations, init.describe())
    final = _metropolis(
        init,
        lambda e: _class_score(scorer, e, limit),
        lambda e: _class_score(fresh, e, limit),
        propose,
        config,
        trace,
        lambda e: e.n_edges,
    )
    return final, trace


def ads_dag_run(
    data: Dataset,
    config: ChainConfig,
    sigma: Ordering,
    init: Dag,
    trace: Optional[ChainTrace] = None,
    scorer: Optional[Scorer] = None,
) -> tuple[Dag, ChainTrace]:
    """Add-delete-swap chain on DAGs compatible with sigma."""
    if not sigma.is_topological(init):
        raise OutOfSpaceError(f"initial DAG {init.describe()} is not compatible with the ordering")
    scorer = scorer or Scorer(data, config.score)
    fresh = Scorer(data, config.score, use_cache=False)
    trace = trace if trace is not None else ChainTrace(SamplerKind.ADS.value)

    def propose(g: Dag, rng: np.random.Generator) -> Proposal:
        forward = ordered_neighbors(g, sigma)
        if not forward:
            return "none", None, 0.0
        move, h = forward[rng.integers(len(forward))]
        return move.kind, h, math.log(len(forward)) - math.log(len(ordered_neighbors(h, sigma)))

    logger.info("Ordered add-delete-swap: %d iterations, sigma=%s", config.iterations, sigma.perm)
    final = _metropolis(init, scorer.dag, fresh.dag, propose, config, trace, lambda g: g.n_edges)
    return final, trace


def structure_mcmc_run(
    data: Dataset,
    config: ChainConfig,
    init: Dag,
    trace: Optional[ChainTrace] = None,
    scorer: Optional[Scorer] = None,
) -> tuple[Dag, ChainTrace]:
    """Structure MCMC on DAGs with an extra jump inside the current equivalence class."""
    scorer = scorer or Scorer(data, config.score)
    fresh = Scorer(data, config.score, use_cache=False)
    trace = trace if trace is not None else ChainTrace(SamplerKind.STRUCTURE.value)
    q = config.q
    limit = config.class_limit

    def propose(g: Dag, rng: np.random.Generator) -> Proposal:
        if rng.random() < q:
            siblings = class_siblings(g, limit)
            if not siblings:
                return "equivalence", None, 0.0
            h = siblings[rng.integers(len(siblings))]
            kind = "equivalence"
        else:
            forward = ordered_neighbors(g)
            if not forward:
                return "none", None, 0.0
            move, h = forward[rng.integers(len(forward))]
            kind = move.kind
        log_ratio = math.log(structure_proposal(h, g, q, limit)) - math.log(structure_proposal(g, h, q, limit))
        return kind, h, log_ratio

    logger.info("Structure MCMC: %d iterations, q=%.3f", config.iterations, q)
    final = _metropolis(init, scorer.dag, fresh.dag, propose, config, trace, lambda g: g.n_edges)
    return final, trace


def greedy_search(
    data: Dataset,
    params: ScoreParams,
    init: Pdag,
    mode: ProposalMode = ProposalMode.OPERATOR,
    limit: int = DEFAULT_CLASS_LIMIT,
    scorer: Optional[Scorer] = None,
) -> tuple[Pdag, list[TraceRecord]]:
    """Move to the best-scoring neighbor until none improves.

    Ties go to the first candidate: operator order (insert, delete, swap, then
    i, j and the conditioning set) in operator mode, class order otherwise.
    """
    scorer = scorer or Scorer(data, params)
    caps = params.caps
    state = init
    current = scorer.cpdag(state, limit)
    path: list[TraceRecord] = []
    it = 0
    while True:
        if mode is ProposalMode.OPERATOR:
            ranked = sorted(operator_outcomes(state, caps, limit), key=lambda item: item[1].sort_key())
            candidates = [(op.kind, c) for c, op in ranked]
        else:
            candidates = [(_edge_kind(state.n_edges, c.n_edges), c) for c in class_neighbors(state, mode, caps, limit)]
        best, best_kind, best_score = None, "", current
        for kind, c in candidates:
            value = scorer.cpdag(c, limit)
            if value > best_score:
                best, best_kind, best_score = c, kind, value
        if best is None:
            break
        it += 1
        path.append(
            TraceRecord(
                iter=it, kind=best_kind, accepted=True, log_score=best_score, n_edges=best.n_edges,
                log_alpha=best_score - current,
            )
        )
        logger.debug("Greedy step %d: %s (%+.4f)", it, best.describe(), best_score - current)
        state, current = best, best_score
    logger.info("Greedy search stopped after %d steps at %s", it, state.describe())
    return state, path


def initial_state(kind: SamplerKind, p: int, dag: Optional[Dag] = None):
    """Empty graph or the given DAG, in the state space of the sampler kind."""
    g = dag if dag is not None else Dag.empty(p)
    return dag_to_cpdag(g) if kind is SamplerKind.RWGES else g


def _run_one(args) -> tuple:
    data, config, init, sigma = args
    trace = ChainTrace(config.kind.value)
    if config.kind is SamplerKind.RWGES:
        final, trace = rwges_run(data, config, init, trace)
    elif config.kind is SamplerKind.ADS:
        final, trace = ads_dag_run(data, config, sigma, init, trace)
    else:
        final, trace = structure_mcmc_run(data, config, init, trace)
    return final, trace


def chain_seeds(seed: int, n_chains: int) -> list[int]:
    """Independent child seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(n_chains)
    return [int(child.generate_state(1)[0]) for child in children]


def run_chains(
    data: Dataset,
    config: ChainConfig,
    init,
    n_chains: int = 1,
    sigma: Optional[Ordering] = None,
    max_workers: Optional[int] = None,
) -> list[tuple[object, ChainTrace]]:
    """Run independent chains, in worker processes when there is more than one."""
    if config.kind is SamplerKind.ADS and sigma is None:
        sigma = Ordering.identity(data.p)
    if n_chains == 1:
        return [_run_one((data, config, init, sigma))]
    jobs = [
        (data, config.model_copy(update={"seed": seed}), init, sigma)
        for seed in chain_seeds(config.seed, n_chains)
    ]
    logger.info("Running %d chains of %s", n_chains, config.kind.value)
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_one, jobs))
