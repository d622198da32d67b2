"""Worked slow-mixing examples on exact orthogonal designs."""

import logging
import math
from typing import Callable, Optional, Sequence

from .errors import UnsupportedKindError
from .graphs import Dag, DegreeCaps, Pdag, dag_to_cpdag
from .moves import GesOperator, apply_operator, class_neighbors
from .oracle import (
    MIXING_CAP,
    SpaceKind,
    TransitionMatrix,
    build_transition_matrix,
    enumerate_space,
    exact_mixing_time,
    restricted_kernel,
    slow_mixing_certificate,
)
from .protocol import DemoReport, MixingPoint, ProposalMode, RatioCheck, SamplerKind, ScoreParams
from .samplers import greedy_search
from .scoring import Scorer
from .sem import EXAMPLE_EDGES, exact_design

logger = logging.getLogger(__name__)

RATIO_RTOL = 1e-6
DEFAULT_GRID = (100, 200, 400, 800, 1600)
RWGES_CHAIN = "rwges-exact"
RESTRICTED_CHAIN = "restricted"
EX2_ESCAPES = ("G4", "G5", "G6")

# One member per class of the 3-node atlas, 1-based edges.
ATLAS_MEMBERS = {
    "G1": [(1, 2)],
    "G2": [(2, 3)],
    "G3": [(1, 3)],
    "G4": [(1, 2), (2, 3)],
    "G5": [(1, 2), (1, 3)],
    "G6": [(1, 3), (3, 2)],
    "G7": [(1, 2), (3, 2)],
    "G8": [(2, 1), (3, 1)],
    "G9": [(1, 3), (2, 3)],
    "G10": [(1, 2), (1, 3), (2, 3)],
    "G11": [],
}


def atlas_dag(name: str) -> Dag:
    return Dag.from_edges(3, [(i - 1, j - 1) for i, j in ATLAS_MEMBERS[name]])


ATLAS: dict[str, Pdag] = {name: dag_to_cpdag(atlas_dag(name)) for name in ATLAS_MEMBERS}


def atlas_name(e: Pdag) -> Optional[str]:
    for name, cls in ATLAS.items():
        if cls == e:
            return name
    return None


def demo_params(n: int, d_in: int = 2, d_out: int = 2) -> ScoreParams:
    """alpha = 1/2, gamma = 1, kappa = 0, c2 = sqrt(n) and c1 chosen so that c1 sqrt(1 + alpha/gamma) = 1."""
    return ScoreParams(alpha=0.5, gamma=1.0, kappa=0.0, c1=1.0 / math.sqrt(1.5), c2=math.sqrt(n), d_in=d_in, d_out=d_out)


def ratio_check(name: str, expected: float, computed: float, rtol: float = RATIO_RTOL) -> RatioCheck:
    rel = abs(computed - expected) / max(abs(expected), 1e-12)
    return RatioCheck(name=name, expected=expected, computed=computed, rel_error=rel, passed=rel <= rtol)


def _log_ratio(scorer: Scorer, a: Pdag, b: Pdag) -> float:
    return scorer.cpdag(a) - scorer.cpdag(b)


def _slopes(points: Sequence[MixingPoint]) -> list[float]:
    return [
        math.log(b.t_mix / a.t_mix) / math.log(b.n / a.n)
        for a, b in zip(points, points[1:])
    ]


def bottleneck_threshold(points: Sequence[MixingPoint]) -> Optional[int]:
    """Smallest grid n such that it and every larger grid point meet the holding bound."""
    threshold = None
    for point in sorted(points, key=lambda pt: pt.n, reverse=True):
        if not point.bottleneck_ok:
            break
        threshold = point.n
    return threshold


def ex1_coefficient(n: int, p: int = 3) -> float:
    """b with b^2 = 4 c2 log p / (alpha n), c2 = sqrt(n), alpha = 1/2."""
    return math.sqrt(4 * math.sqrt(n) * math.log(p) / (0.5 * n))


def _ex1_checks(n: int) -> tuple[list[RatioCheck], Scorer]:
    b = ex1_coefficient(n)
    params = demo_params(n)
    scorer = Scorer(exact_design("ex1", n, b), params)
    half = params.alpha * n / 2
    pen = params.edge_penalty(3)
    b2 = b * b
    top = b2 * b2 + b2 + 1
    g = ATLAS
    checks = [
        ratio_check("G7/G1", -pen + half * math.log1p(b2), _log_ratio(scorer, g["G7"], g["G1"])),
        ratio_check("G7/G2", -pen + half * math.log((b2 + 1) ** 2 / top), _log_ratio(scorer, g["G7"], g["G2"])),
        ratio_check("G7/G10", pen - half * math.log(top / (b2 + 1)), _log_ratio(scorer, g["G7"], g["G10"])),
        ratio_check("G4/G7", half * math.log(top / (b2 + 1)), _log_ratio(scorer, g["G4"], g["G7"])),
    ]
    return checks, scorer


def _ex1_point(n: int, cap: int) -> MixingPoint:
    b = ex1_coefficient(n)
    params = demo_params(n)
    data = exact_design("ex1", n, b)
    space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
    tm = build_transition_matrix(space, SamplerKind.RWGES, data, params, mode=ProposalMode.EXACT)
    holding = float(tm.P[space.position(ATLAS["G7"]), space.position(ATLAS["G7"])])
    mixing = exact_mixing_time(tm, cap=cap)
    return MixingPoint(
        n=n,
        t_mix=mixing.t,
        lower_bound=mixing.lower_bound,
        self_transition=holding,
        bottleneck_ok=holding >= 1 - 3 * 3 ** (-math.sqrt(n) / 2),
    )


def _ex1(n: int, grid: Sequence[int], cap: int) -> DemoReport:
    checks, scorer = _ex1_checks(n)
    params = scorer.params
    space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
    tm = build_transition_matrix(space, SamplerKind.RWGES, scorer.data, params, mode=ProposalMode.EXACT, scorer=scorer)
    certificate = slow_mixing_certificate(tm, ATLAS["G7"])
    stop, _ = greedy_search(scorer.data, params, ATLAS["G7"], mode=ProposalMode.EXACT, scorer=scorer)
    bottleneck = {
        **certificate,
        "local_mode": "G7",
        "true_class": "G4",
        "pi_true": float(tm.pi[space.position(ATLAS["G4"])]),
        "required_self_transition": 1 - 3 * 3 ** (-math.sqrt(n) / 2),
        "greedy_from_local_mode": atlas_name(stop) or stop.describe(),
    }
    points = [_ex1_point(m, cap) for m in grid]
    return DemoReport(
        example="ex1",
        n=n,
        ratio_checks=checks,
        bottleneck=bottleneck,
        mixing=points,
        chain=RWGES_CHAIN,
        slopes=_slopes(points),
        threshold_n=bottleneck_threshold(points),
        passed=all(c.passed for c in checks),
    )


def ex2_neighbors(caps: DegreeCaps) -> Callable[[Pdag], list[Pdag]]:
    """Exact class neighborhood with G10 joined only to G4, G5 and G6."""
    local = ATLAS["G10"]
    escapes = {ATLAS[name] for name in EX2_ESCAPES}

    def neighbors(e: Pdag) -> list[Pdag]:
        found = class_neighbors(e, ProposalMode.EXACT, caps)
        if e == local:
            return [f for f in found if f in escapes]
        return [f for f in found if f != local or e in escapes]

    return neighbors


def ex2_kernel(n: int, coefficients: Sequence[float], scorer: Optional[Scorer] = None) -> TransitionMatrix:
    """Restricted kernel on the 3-node classes for the second example at sample size n."""
    params = demo_params(n)
    scorer = scorer or Scorer(exact_design("ex2", n, list(coefficients)), params)
    space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
    return restricted_kernel(space, scorer, ex2_neighbors(params.caps))


def _ex2(n: int, grid: Sequence[int], cap: int, coefficients: Sequence[float]) -> DemoReport:
    a1, a2 = coefficients
    params = demo_params(n)
    scorer = Scorer(exact_design("ex2", n, [a1, a2]), params)
    half = params.alpha * n / 2
    pen = params.edge_penalty(3)
    g = ATLAS
    s1, s2 = a1 * a1 + 1, a2 * a2 + 1
    checks = [
        ratio_check("G10/G9", -pen, _log_ratio(scorer, g["G10"], g["G9"])),
        ratio_check("G10/G4", -pen + half * math.log(s1), _log_ratio(scorer, g["G10"], g["G4"])),
        ratio_check("G10/G5", -pen + half * math.log(s2), _log_ratio(scorer, g["G10"], g["G5"])),
        ratio_check("G10/G6", -pen + half * math.log(s1 * s2 / (s1 + s2 - 1)), _log_ratio(scorer, g["G10"], g["G6"])),
    ]
    escapes = {name: _log_ratio(scorer, g["G10"], g[name]) for name in EX2_ESCAPES}
    fitted_c = min(escapes.values()) / n
    holding_lower = 1 - sum(min(1 / 3, math.exp(-value)) for value in escapes.values())

    space = enumerate_space(3, params.caps, SpaceKind.CPDAGS)
    tm = build_transition_matrix(space, SamplerKind.RWGES, scorer.data, params, mode=ProposalMode.EXACT, scorer=scorer)
    certificate = slow_mixing_certificate(ex2_kernel(n, coefficients, scorer), g["G10"])
    bottleneck = {
        "local_mode": "G10",
        "true_class": "G9",
        "restricted_neighbors": sorted(escapes),
        "log_escape_ratios": escapes,
        "self_transition_lower": holding_lower,
        "required_self_transition": 1 - 3 * math.exp(-fitted_c * n),
        "bottleneck_ok": fitted_c > 0 and holding_lower >= 1 - 3 * math.exp(-fitted_c * n),
        "pi_local_mode": certificate["pi"],
        "certified": certificate["certified"],
        "self_transition": certificate["self_transition"],
        "rwges_self_transition": float(tm.P[space.position(g["G10"]), space.position(g["G10"])]),
    }

    points = []
    for m in grid:
        kernel = ex2_kernel(m, coefficients)
        mixing = exact_mixing_time(kernel, cap=cap)
        points.append(
            MixingPoint(
                n=m,
                t_mix=mixing.t,
                lower_bound=mixing.lower_bound,
                self_transition=float(kernel.P[kernel.space.position(g["G10"]), kernel.space.position(g["G10"])]),
            )
        )
    return DemoReport(
        example="ex2",
        n=n,
        ratio_checks=checks,
        bottleneck=bottleneck,
        mixing=points,
        chain=RESTRICTED_CHAIN,
        slopes=_slopes(points),
        fitted_c=fitted_c,
        passed=all(c.passed for c in checks),
    )


def ex3_operators() -> list[tuple[str, GesOperator]]:
    """The eight tabulated moves on the class of H, 0-based."""
    inserts = [(0, 1), (0, 2), (3, 4)]
    deletes = [(1, 2), (2, 3), (2, 4), (1, 3), (1, 4)]
    ops = [(f"H{k + 1}: insert {i + 1}-{j + 1}", GesOperator("insert", i, j)) for k, (i, j) in enumerate(inserts)]
    ops += [
        (f"H{k + 4}: delete {i + 1}-{j + 1}", GesOperator("delete", i, j)) for k, (i, j) in enumerate(deletes)
    ]
    return ops


def ex3_local_mode() -> Dag:
    """H: the true graph plus 1->4."""
    p, edges = EXAMPLE_EDGES["ex3"]
    return Dag.from_edges(p, list(edges) + [(0, 3)])


def _ex3(n: int) -> DemoReport:
    params = demo_params(n, d_in=4, d_out=4)
    scorer = Scorer(exact_design("ex3", n), params)
    pen = params.edge_penalty(5)
    h = dag_to_cpdag(ex3_local_mode())
    caps = DegreeCaps(params.d_in, params.d_out)
    checks = []
    deletions = {}
    outcomes = set()
    for label, op in ex3_operators():
        result = apply_operator(h, op, caps)
        if result is None:
            checks.append(RatioCheck(name=label, expected=-pen, computed=math.nan, rel_error=math.inf, passed=False))
            continue
        outcomes.add(result)
        value = _log_ratio(scorer, result, h)
        if op.kind == "insert":
            checks.append(ratio_check(label, -pen, value))
        else:
            deletions[label] = value
    fitted_c = -max(deletions.values()) / n if deletions else None
    bottleneck = {
        "local_mode": h.describe(),
        "valid_operations": len(outcomes),
        "distinct": len(outcomes) == len(ex3_operators()),
        "log_deletion_ratios": deletions,
        "deletions_ok": fitted_c is not None and fitted_c > 0,
    }
    return DemoReport(
        example="ex3",
        n=n,
        ratio_checks=checks,
        bottleneck=bottleneck,
        fitted_c=fitted_c,
        passed=all(c.passed for c in checks) and bottleneck["distinct"] and bottleneck["deletions_ok"],
    )


def slow_mixing_demo(
    example: str,
    n: int = 400,
    grid: Optional[Sequence[int]] = None,
    coefficients: Sequence[float] = (1.0, 1.0),
    cap: int = MIXING_CAP,
) -> DemoReport:
    """Ratio checks, bottleneck analysis and mixing-time grid for ex1, ex2 or ex3."""
    logger.info("Running demo %s at n=%d", example, n)
    grid = DEFAULT_GRID if grid is None else tuple(grid)
    if example == "ex1":
        return _ex1(n, grid, cap)
    if example == "ex2":
        return _ex2(n, grid, cap, coefficients)
    if example == "ex3":
        return _ex3(n)
    raise UnsupportedKindError(f"unknown example {example!r}")
