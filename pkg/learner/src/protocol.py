"""Record type definitions for configuration, traces and reports."""

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .graphs import DegreeCaps


class DegreeMode(str, Enum):
    """How degree caps restrict the model space."""

    IN_OUT = "in-out"
    TOTAL = "total"


class SamplerKind(str, Enum):
    """Markov chain flavours."""

    RWGES = "rwges"
    ADS = "ads"
    STRUCTURE = "structure"


class ProposalMode(str, Enum):
    """Neighborhood used by the class-space proposal."""

    OPERATOR = "operator-count"
    EXACT = "exact-neighborhood"


class ScoreParams(BaseModel):
    """Hyperparameters of the empirical-Bayes score."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.5, gt=0.0, le=1.0, description="Fractional likelihood exponent")
    gamma: float = Field(default=1.0, gt=0.0, description="Prior precision scale of coefficients")
    kappa: float = Field(default=0.0, ge=0.0, description="Inverse-gamma shape offset")
    c1: float = Field(default=1.0, gt=0.0, description="Edge penalty constant")
    c2: float = Field(default=1.0, ge=0.0, description="Edge penalty exponent of p")
    d_in: int = Field(default=2, ge=1, description="Maximum in-degree")
    d_out: int = Field(default=2, ge=1, description="Maximum out-degree")
    degree_mode: DegreeMode = Field(default=DegreeMode.IN_OUT, description="in-out or total cap")

    @property
    def caps(self) -> DegreeCaps:
        return DegreeCaps(self.d_in, self.d_out, total=self.degree_mode is DegreeMode.TOTAL)

    def edge_penalty(self, p: int) -> float:
        """log(c1 * p^c2 * sqrt(1 + alpha/gamma)), the log-score cost of one edge."""
        return (
            math.log(self.c1)
            + self.c2 * math.log(p)
            + 0.5 * math.log1p(self.alpha / self.gamma)
        )

    def check_nodes(self, p: int) -> None:
        if self.d_in > p or self.d_out > p:
            raise ConfigError(f"degree caps ({self.d_in}, {self.d_out}) exceed p={p}")


class ChainConfig(BaseModel):
    """Settings of a single Metropolis-Hastings chain."""

    kind: SamplerKind = Field(default=SamplerKind.RWGES, description="Sampler kind")
    score: ScoreParams = Field(default_factory=ScoreParams, description="Score hyperparameters")
    proposal: ProposalMode = Field(default=ProposalMode.OPERATOR, description="Class proposal")
    lazy: bool = Field(default=False, description="Hold with probability 1/2 each step")
    q: Optional[float] = Field(default=None, description="Equivalence-jump probability")
    iterations: int = Field(default=1000, ge=0, description="Number of MH steps")
    seed: int = Field(default=0, ge=0, description="Random seed")
    checkpoint_every: int = Field(default=1000, ge=1, description="Score recomputation period")
    class_limit: int = Field(default=100_000, ge=1, description="Equivalence-class size cap")
    init: str = Field(default="empty", description="'empty' or an edge-list path")

    @model_validator(mode="after")
    def _check_q(self):
        if self.kind is SamplerKind.STRUCTURE:
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError("structure MCMC requires 0 < q < 1")
        return self


class TraceRecord(BaseModel):
    """One line of a chain trace."""

    iter: int = Field(..., description="Iteration number, starting at 1")
    kind: str = Field(..., description="Move kind proposed")
    accepted: bool = Field(..., description="Whether the proposal was accepted")
    log_score: float = Field(..., description="Log score of the state after the step")
    n_edges: int = Field(..., description="Edge count of the state after the step")
    log_alpha: Optional[float] = Field(default=None, description="Log acceptance ratio")


class RunManifest(BaseModel):
    """Everything needed to replay a CLI invocation."""

    command: str = Field(..., description="Subcommand name")
    argv: list[str] = Field(default_factory=list, description="Arguments after the subcommand")
    config: dict = Field(default_factory=dict, description="Resolved configuration")
    seed: Optional[int] = Field(default=None, description="Root seed")
    inputs: dict[str, str] = Field(default_factory=dict, description="Input paths")
    outputs: dict[str, str] = Field(default_factory=dict, description="Output paths")
    version: str = Field(..., description="Library version")
    started_at: str = Field(..., description="ISO timestamp")
    wall_clock: float = Field(default=0.0, description="Elapsed seconds")


class AssumptionReport(BaseModel):
    """Desk-scale check of the restricted-eigenvalue, sparsity, prior and beta-min assumptions."""

    nu_lower: float = Field(..., description="Lower restricted eigenvalue bound")
    nu_upper: float = Field(..., description="Upper restricted eigenvalue bound")
    delta0: float = Field(..., description="Eigenvalue slack constant")
    beta_min_sq: Optional[float] = Field(default=None, description="Smallest squared coefficient")
    beta_min_threshold: float = Field(..., description="Required squared coefficient")
    d_star: int = Field(..., description="Max minimal-I-map degree over orderings")
    d_star_sigma: int = Field(..., description="Min over orderings of the I-map degree")
    sparsity_ratio: float = Field(..., description="d_in log p / n")
    prior_margin: float = Field(..., description="c2 - (alpha+1)(4 d_in + 6)")
    omega_in_range: bool = Field(..., description="All Cholesky variances inside (nu_lower, nu_upper)")
    orderings_checked: int = Field(..., description="Number of orderings examined")
    flags: dict[str, Optional[bool]] = Field(default_factory=dict, description="Per-assumption verdict")

    @property
    def structure_ok(self) -> bool:
        return all(bool(self.flags.get(key)) for key in ("A", "DP", "EP"))


class RatioCheck(BaseModel):
    """Displayed log posterior ratio against its computed value."""

    name: str = Field(..., description="Which ratio")
    expected: float = Field(..., description="Closed-form log ratio")
    computed: float = Field(..., description="Log ratio from the score")
    rel_error: float = Field(..., description="Relative error")
    passed: bool = Field(..., description="Within tolerance")


class PathReport(BaseModel):
    """Canonical path from a class to the true class."""

    start: str = Field(..., description="Start class as an edge list")
    steps: list[str] = Field(default_factory=list, description="Visited classes, start excluded")
    delta_scores: list[float] = Field(default_factory=list, description="Score change per step")
    h_values: list[int] = Field(default_factory=list, description="h* along the path, start included")
    k: int = Field(..., description="Index where a minimal I-map class is first reached")
    length: int = Field(..., description="Number of steps")
    k_bound: int = Field(..., description="(d* + d_in) p")
    length_bound: int = Field(..., description="(2 d* + d_in) p")
    k_ok: bool = Field(...)
    length_ok: bool = Field(...)
    descent_ok: bool = Field(..., description="h* strictly decreased at each step")
    neighbors_ok: bool = Field(..., description="Every step stays in the exact neighborhood")

    @property
    def passed(self) -> bool:
        return self.k_ok and self.length_ok and self.descent_ok and self.neighbors_ok


class SelectionReport(BaseModel):
    """Posterior gain of the selection transition over every model of one nodewise problem."""

    response: int = Field(..., description="Response node, 0-based")
    candidates: list[int] = Field(..., description="Covariates available to the response")
    true_set: list[int] = Field(..., description="True model")
    d: int = Field(..., description="Model size cap")
    models: int = Field(..., description="Models checked, the true model excluded")
    min_log_ratio: float = Field(..., description="Smallest log post(g(S)) - log post(S)")
    min_exponent: float = Field(..., description="min_log_ratio / log p")
    worst_model: list[int] = Field(default_factory=list, description="Model attaining the smallest gain")
    hamming_ok: bool = Field(..., description="Every step moved strictly closer to the true model")
    t: Optional[float] = Field(default=None, description="Required exponent")
    noise_floor: Optional[float] = Field(
        default=None, description="min over |S| <= d of eps' (I - P_S) eps / (n omega*)"
    )
    noise_gain: Optional[float] = Field(
        default=None, description="max over |S| <= d, k not in S of eps' (P_{S+k} - P_S) eps / (omega* log p)"
    )

    @property
    def passed(self) -> bool:
        return self.hamming_ok and (self.t is None or self.min_exponent >= self.t)


class BoundReport(BaseModel):
    """Canonical-path mixing-time bound components."""

    p: int = Field(..., description="Base of the exponents")
    t1: float = Field(..., description="log_p of the largest preimage under g")
    t2: float = Field(..., description="log_p of the smallest posterior gain along g")
    t3: float = Field(..., description="-log_p of the smallest transition along g")
    l_max: int = Field(..., description="Longest g-path to the fixed point")
    pi_min: float = Field(..., description="Smallest stationary probability")
    condition_ok: bool = Field(..., description="t2 > t1")
    bound: Optional[float] = Field(default=None, description="Mixing-time upper bound")
    congestion: float = Field(..., description="Path congestion of the induced ensemble")
    path_bound: float = Field(..., description="congestion * longest path * log(4/pi_min)")
    t_mix: int = Field(..., description="Exact mixing time")
    t_mix_lower_bound: bool = Field(default=False, description="t_mix hit the cap")
    holds: Optional[bool] = Field(default=None, description="t_mix <= bound")


class MixingPoint(BaseModel):
    """Exact mixing time for one sample size."""

    n: int = Field(...)
    t_mix: int = Field(...)
    lower_bound: bool = Field(default=False, description="Cap reached; t_mix is a lower bound")
    self_transition: Optional[float] = Field(default=None, description="Holding probability at the local mode")
    bottleneck_ok: Optional[bool] = Field(default=None, description="Holding probability meets the bound")


class DemoReport(BaseModel):
    """Slow-mixing example report."""

    example: str = Field(..., description="ex1, ex2 or ex3")
    n: int = Field(..., description="Sample size of the ratio checks")
    ratio_checks: list[RatioCheck] = Field(default_factory=list)
    bottleneck: dict = Field(default_factory=dict, description="Self-transition analysis")
    mixing: list[MixingPoint] = Field(default_factory=list)
    chain: Optional[str] = Field(default=None, description="Kernel the mixing grid was computed on")
    slopes: list[float] = Field(default_factory=list, description="log-log slopes of t_mix in n")
    threshold_n: Optional[int] = Field(
        default=None, description="Smallest grid n from which every point meets the holding bound"
    )
    fitted_c: Optional[float] = Field(default=None, description="Fitted exponential rate")
    passed: bool = Field(..., description="All ratio checks passed")


class ExperimentConfig(BaseModel):
    """Experiment file: defaults plus score and chain tables."""

    seed: int = Field(default=0, ge=0)
    n: int = Field(default=500, ge=1, description="Sample size for gen")
    p: int = Field(default=5, ge=1, description="Node count for gen")
    weight_low: float = Field(default=0.5, gt=0.0)
    weight_high: float = Field(default=1.5, gt=0.0)
    output_dir: str = Field(default="runs")
    score: ScoreParams = Field(default_factory=ScoreParams)
    chain: dict = Field(default_factory=dict, description="ChainConfig fields without score")

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        """Load a TOML file with a [config] table and optional [score] / [chain] tables."""
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        fields = dict(raw.get("config", {}))
        if "score" in raw:
            fields["score"] = raw["score"]
        if "chain" in raw:
            fields["chain"] = raw["chain"]
        try:
            return cls.model_validate(fields)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def chain_config(self, **overrides) -> ChainConfig:
        fields = {"seed": self.seed, **self.chain, **overrides, "score": self.score}
        try:
            return ChainConfig.model_validate(fields)
        except ValidationError as e:
            raise ConfigError(str(e)) from e
