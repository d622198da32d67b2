"""Gaussian structural equation models, synthetic data and assumption checks."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import (
    ConfigError,
    DimensionMismatchError,
    InfeasibleDegreeError,
    LimitExceededError,
    NotPositiveDefiniteError,
    UnsupportedKindError,
)
from .graphs import Dag, DegreeCaps, Ordering, minimal_imap, topological_order
from .protocol import AssumptionReport, ScoreParams

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-9
PERMUTATION_CAP = 7

# 0-based edge lists of the worked examples
EXAMPLE_EDGES: dict[str, tuple[int, list[tuple[int, int]]]] = {
    "ex1": (3, [(0, 1), (1, 2)]),
    "ex2": (3, [(0, 2), (1, 2)]),
    "ex3": (5, [(0, 4), (1, 4), (2, 4), (1, 2), (1, 3), (2, 3)]),
}


@dataclass(eq=False)
class SemModel:
    """Linear SEM X_j = sum_i B_ij X_i + eps_j with eps_j ~ N(0, omega_j)."""

    B: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        p = self.B.shape[0]
        if self.B.shape != (p, p) or self.omega.shape != (p,):
            raise DimensionMismatchError("B must be p x p and omega length p")
        if np.any(self.omega <= 0):
            raise ConfigError("noise variances must be positive")
        self.dag  # support must be acyclic

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @cached_property
    def dag(self) -> Dag:
        rows, cols = np.nonzero(np.abs(self.B) > ZERO_TOL)
        return Dag.from_edges(self.p, zip(rows.tolist(), cols.tolist()))

    def covariance(self) -> np.ndarray:
        return sigma_from_sem(self)


@dataclass(eq=False)
class Dataset:
    """n x p observations with a lazily cached Gram matrix."""

    X: np.ndarray
    columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if not self.columns:
            self.columns = [f"x{j + 1}" for j in range(self.p)]
        if len(self.columns) != self.p:
            raise DimensionMismatchError("column names do not match the data width")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return self.X.T @ self.X

    def column(self, j: int) -> np.ndarray:
        return self.X[:, j]


def sigma_from_sem(m: SemModel) -> np.ndarray:
    """Sigma = (I - B^T)^-1 Omega (I - B)^-1."""
    eye = np.eye(m.p)
    try:
        inv = scipy.linalg.solve(eye - m.B, eye)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError("I - B is singular") from e
    sigma = inv.T @ np.diag(m.omega) @ inv
    return (sigma + sigma.T) / 2


def _check_covariance(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatchError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    try:
        scipy.linalg.cholesky(sigma, lower=True)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError("covariance is not positive definite") from e
    return sigma


def modified_cholesky(sigma_matrix: np.ndarray, sigma: Ordering) -> SemModel:
    """Unique (B, Omega) compatible with sigma reproducing the covariance."""
    cov = _check_covariance(sigma_matrix)
    p = cov.shape[0]
    if sigma.p != p:
        raise DimensionMismatchError(f"ordering over {sigma.p} nodes for a {p}-node covariance")
    B = np.zeros((p, p))
    omega = np.zeros(p)
    for position, j in enumerate(sigma.perm):
        before = list(sigma.perm[:position])
        if before:
            beta = scipy.linalg.solve(cov[np.ix_(before, before)], cov[before, j], assume_a="pos")
            omega[j] = cov[j, j] - cov[j, before] @ beta
            beta[np.abs(beta) < ZERO_TOL] = 0.0
            B[before, j] = beta
        else:
            omega[j] = cov[j, j]
    return SemModel(B, omega)


def sample_sem(
    p: int,
    d_in: int,
    d_out: int,
    weight_low: float,
    weight_high: float,
    rng: np.random.Generator,
    edge_prob: Optional[float] = None,
    omega_low: float = 0.5,
    omega_high: float = 1.5,
) -> tuple[Dag, SemModel]:
    """Random DAG in G_p(d_in, d_out) with weights uniform on +-[weight_low, weight_high]."""
    if not 0 < weight_low < weight_high:
        raise ConfigError("need 0 < weight_low < weight_high")
    if edge_prob is None:
        edge_prob = min(1.0, 2.0 / max(p - 1, 1))
    if edge_prob == 0:
        return Dag.empty(p), SemModel(np.zeros((p, p)), rng.uniform(omega_low, omega_high, p))
    if d_in < 1 or d_out < 1:
        raise InfeasibleDegreeError("degree caps below 1 admit no edges")
    caps = DegreeCaps(d_in, d_out)
    order = rng.permutation(p)
    pairs = [(order[a], order[b]) for a, b in itertools.combinations(range(p), 2)]
    rng.shuffle(pairs)
    indeg = np.zeros(p, dtype=int)
    outdeg = np.zeros(p, dtype=int)
    B = np.zeros((p, p))
    for i, j in pairs:
        if rng.random() >= edge_prob:
            continue
        if not (caps.node_ok(indeg[j] + 1, outdeg[j]) and caps.node_ok(indeg[i], outdeg[i] + 1)):
            continue
        sign = rng.choice([-1.0, 1.0])
        B[i, j] = sign * rng.uniform(weight_low, weight_high)
        indeg[j] += 1
        outdeg[i] += 1
    m = SemModel(B, rng.uniform(omega_low, omega_high, p))
    return m.dag, m


def sample_data(m: SemModel, n: int, rng: np.random.Generator) -> Dataset:
    """Draw n rows in topological order."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    noise = rng.standard_normal((n, m.p)) * np.sqrt(m.omega)
    X = np.zeros((n, m.p))
    for j in topological_order(m.dag):
        X[:, j] = X @ m.B[:, j] + noise[:, j]
    return Dataset(X)


def orthogonal_latents(n: int, p: int) -> np.ndarray:
    """n x p matrix of +-1 entries with exactly orthogonal columns of squared norm n."""
    block = 1 << max(p - 1, 0).bit_length()
    if n < p or n % block:
        raise ConfigError(f"n must be a multiple of {block} and at least {p}")
    return np.tile(scipy.linalg.hadamard(block)[:, :p].astype(float), (n // block, 1))


def example_sem(kind: str, coefficients: Union[float, Sequence[float]] = 1.0) -> SemModel:
    """SEM of a worked example with unit noise variances."""
    if kind not in EXAMPLE_EDGES:
        raise UnsupportedKindError(f"unknown example {kind!r}")
    p, edges = EXAMPLE_EDGES[kind]
    weights = np.broadcast_to(np.asarray(coefficients, dtype=float), (len(edges),))
    B = np.zeros((p, p))
    for (i, j), w in zip(edges, weights):
        B[i, j] = w
    return SemModel(B, np.ones(p))


def exact_design(kind: str, n: int, coefficients: Union[float, Sequence[float]] = 1.0) -> Dataset:
    """Deterministic design with orthogonal latent columns pushed through the example SEM."""
    m = example_sem(kind, coefficients)
    Z = orthogonal_latents(n, m.p)
    X = scipy.linalg.solve((np.eye(m.p) - m.B).T, Z.T).T
    return Dataset(X)


def _orderings(p: int, rng: Optional[np.random.Generator], samples: int) -> list[Ordering]:
    if p <= PERMUTATION_CAP:
        return [Ordering(perm) for perm in itertools.permutations(range(p))]
    rng = rng or np.random.default_rng(0)
    logger.info("p=%d too large to enumerate orderings; sampling %d", p, samples)
    return [Ordering(tuple(rng.permutation(p).tolist())) for _ in range(samples)]


def _imap_coefficients(cov: np.ndarray, g: Dag) -> list[float]:
    coefs = []
    for j in range(g.p):
        pa = sorted(g.parents[j])
        if pa:
            beta = scipy.linalg.solve(cov[np.ix_(pa, pa)], cov[pa, j], assume_a="pos")
            coefs.extend(beta.tolist())
    return coefs


def check_assumptions(
    source: Union[Dataset, np.ndarray],
    params: ScoreParams,
    true_dag: Optional[Dag] = None,
    n: Optional[int] = None,
    delta0: float = 0.1,
    c_beta: float = 1.0,
    subset_cap: int = 200_000,
    ordering_samples: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> AssumptionReport:
    """Restricted eigenvalues, sparsity ratio, prior calibration, I-map degrees and beta-min margin."""
    if isinstance(source, Dataset):
        cov = source.gram / source.n
        n = source.n if n is None else n
    else:
        cov = _check_covariance(source)
        if n is None:
            raise ConfigError("sample size n is required with a covariance input")
    p = cov.shape[0]

    size = min(2 * params.d_in, p)
    if math.comb(p, size) > subset_cap:
        raise LimitExceededError(f"{math.comb(p, size)} subsets of size {size} exceed cap {subset_cap}")
    lam_min, lam_max = math.inf, 0.0
    for subset in itertools.combinations(range(p), size):
        eig = np.linalg.eigvalsh(cov[np.ix_(subset, subset)])
        lam_min = min(lam_min, float(eig[0]))
        lam_max = max(lam_max, float(eig[-1]))
    nu_lower = (1 - delta0) ** 2 * lam_min
    nu_upper = (1 + delta0) ** 2 * lam_max

    beta_min_sq: Optional[float] = None
    per_sigma_beta: list[Optional[float]] = []
    degrees: list[int] = []
    omega_ok = True
    orderings = _orderings(p, rng, ordering_samples)
    for sigma in orderings:
        chol = modified_cholesky(cov, sigma)
        omega_ok &= bool(np.all((chol.omega > nu_lower) & (chol.omega < nu_upper)))
        if true_dag is not None:
            imap = minimal_imap(true_dag, sigma)
            coefs = _imap_coefficients(cov, imap)
        else:
            imap = chol.dag
            coefs = chol.B[np.abs(chol.B) > ZERO_TOL].tolist()
        degrees.append(max((imap.degree(j) for j in range(p)), default=0))
        smallest = min((c * c for c in coefs), default=None)
        per_sigma_beta.append(smallest)
        if smallest is not None:
            beta_min_sq = smallest if beta_min_sq is None else min(beta_min_sq, smallest)

    log_p = math.log(p) if p > 1 else 0.0
    threshold = 5 * (c_beta + 4 * params.c2) * nu_upper**2 * log_p / (params.alpha * nu_lower**2 * n)
    nu0 = 4 * nu_upper**2 * nu_lower**-4 * (nu_upper - nu_lower) ** 2
    d_star, d_star_sigma = max(degrees), min(degrees)
    c3 = params.c1 * math.sqrt(1 + params.alpha / params.gamma)
    prior_margin = params.c2 - (params.alpha + 1) * (4 * params.d_in + 6)

    def beta_ok(value: Optional[float]) -> bool:
        return value is None or value >= threshold

    flags = {
        "A": nu_lower > 0,
        "B": None,
        "C": params.kappa <= n and 1 <= c3 <= p and prior_margin > 0,
        "D": (nu0 + 1) * d_star_sigma <= params.d_in,
        "DP": (nu0 + 1) * d_star <= params.d_in,
        "E": any(beta_ok(v) for v in per_sigma_beta),
        "EP": all(beta_ok(v) for v in per_sigma_beta),
    }
    report = AssumptionReport(
        nu_lower=nu_lower,
        nu_upper=nu_upper,
        delta0=delta0,
        beta_min_sq=beta_min_sq,
        beta_min_threshold=threshold,
        d_star=d_star,
        d_star_sigma=d_star_sigma,
        sparsity_ratio=params.d_in * log_p / n,
        prior_margin=prior_margin,
        omega_in_range=omega_ok,
        orderings_checked=len(orderings),
        flags=flags,
    )
    logger.info("assumption flags: %s", flags)
    return report
