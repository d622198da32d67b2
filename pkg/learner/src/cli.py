"""Command-line front end: data generation, scoring, search, sampling and diagnostics."""

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .canonical import CanonicalContext
from .demos import slow_mixing_demo
from .errors import ConfigError, FormatError, StructureLearningError
from .graphs import Dag, Ordering, dag_to_cpdag
from .io import (
    read_dag,
    read_dataset,
    read_params,
    read_sem,
    write_dataset,
    write_graph,
    write_json,
    write_sem,
)
from .oracle import (
    SpaceKind,
    build_transition_matrix,
    canonical_map,
    enumerate_space,
    exact_mixing_time,
    exact_posterior,
    hitting_time,
    lazy_kernel,
    spectral_gap,
    verify_theorem1,
)
from .protocol import ExperimentConfig, ProposalMode, RunManifest, SamplerKind, ScoreParams
from .samplers import greedy_search, initial_state, run_chains
from .scoring import Scorer
from .sem import check_assumptions, sample_data, sample_sem

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

_SPACE_FOR = {
    SamplerKind.RWGES: SpaceKind.CPDAGS,
    SamplerKind.ADS: SpaceKind.ORDERED,
    SamplerKind.STRUCTURE: SpaceKind.DAGS,
}


def _frame(title: str, rows: list[str]) -> str:
    return "\n".join(["=" * 50, title, "=" * 50, *rows, "=" * 50])


def _write_dict(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, default=str))


def _parse_sigma(text: Optional[str], p: int) -> Ordering:
    if not text:
        return Ordering.identity(p)
    try:
        perm = tuple(int(v) - 1 for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"ordering must be comma-separated 1-based nodes, got {text!r}") from e
    if len(perm) != p:
        raise ConfigError(f"ordering has {len(perm)} nodes, expected {p}")
    return Ordering(perm)


class Session:
    """Resolved configuration and output location for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
        self.out_dir = Path(args.out_dir or self.config.output_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}

    @property
    def seed(self) -> int:
        seed = getattr(self.args, "seed", None)
        return self.config.seed if seed is None else seed

    def params(self) -> ScoreParams:
        path = getattr(self.args, "params", None)
        if path:
            self.inputs["params"] = path
            return read_params(path)
        return self.config.score

    def data(self):
        self.inputs["data"] = self.args.data
        return read_dataset(self.args.data)

    def output(self, name: str, filename: str) -> Path:
        path = self.out_dir / filename
        self.outputs[name] = str(path)
        return path


def cmd_gen(session: Session) -> int:
    args, config = session.args, session.config
    p = args.p or config.p
    n = args.n or config.n
    params = config.score
    rng = np.random.default_rng(session.seed)
    dag, sem = sample_sem(p, params.d_in, params.d_out, config.weight_low, config.weight_high, rng)
    data = sample_data(sem, n, rng)
    write_dataset(data, session.output("data", "data.csv"))
    write_sem(sem, session.output("sem", "sem.json"), data.columns)
    write_graph(dag, session.output("truth", "truth.edges"))
    print(_frame("Generated Data", [f"Nodes: {p}", f"Samples: {n}", f"True graph: {dag.describe()}"]))
    return EXIT_OK


def cmd_score(session: Session) -> int:
    data = session.data()
    params = session.params()
    session.inputs["graph"] = session.args.graph
    g = read_dag(session.args.graph, data.p)
    scorer = Scorer(data, params)
    score = scorer.dag(g)
    payload = {
        "graph": g.describe(),
        "class": dag_to_cpdag(g).describe(),
        "log_score": score,
        "log_prior": scorer.log_prior(g),
        "log_marginal": scorer.log_marginal(g),
        "local": [scorer.local(j, g.parents[j]) for j in range(g.p)],
    }
    _write_dict(payload, session.output("score", "score.json"))
    print(_frame("Graph Score", [f"Graph: {payload['graph']}", f"Log score: {score:.6f}"]))
    return EXIT_OK


def _load_init(session: Session, p: int) -> Optional[Dag]:
    path = getattr(session.args, "init", None)
    if not path or path == "empty":
        return None
    session.inputs["init"] = path
    return read_dag(path, p)


def cmd_greedy(session: Session) -> int:
    data = session.data()
    params = session.params()
    start = initial_state(SamplerKind.RWGES, data.p, _load_init(session, data.p))
    mode = ProposalMode(session.args.proposal)
    final, path = greedy_search(data, params, start, mode=mode)
    write_graph(final, session.output("graph", "greedy.edges"))
    with open(session.output("path", "greedy_path.jsonl"), "w") as fh:
        for record in path:
            fh.write(record.model_dump_json() + "\n")
    print(_frame("Greedy Search", [f"Steps: {len(path)}", f"Final class: {final.describe()}"]))
    return EXIT_OK


def cmd_sample(session: Session) -> int:
    args = session.args
    data = session.data()
    params = session.params()
    overrides = {"kind": SamplerKind(args.kind), "seed": session.seed}
    for name in ("iterations", "q", "proposal"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.lazy:
        overrides["lazy"] = True
    config = session.config.model_copy(update={"score": params}).chain_config(**overrides)
    sigma = _parse_sigma(args.sigma, data.p) if config.kind is SamplerKind.ADS else None
    init = initial_state(config.kind, data.p, _load_init(session, data.p))
    results = run_chains(data, config, init, n_chains=args.chains, sigma=sigma)
    for k, (final, trace) in enumerate(results, start=1):
        trace.export_jsonl(session.output(f"trace_{k}", f"trace_{k}.jsonl"))
        write_graph(final, session.output(f"final_{k}", f"final_{k}.edges"))
        print(trace.get_summary())
    return EXIT_OK


def cmd_enumerate(session: Session) -> int:
    args = session.args
    params = session.params()
    kind = SpaceKind(args.kind)
    p = args.p
    sigma = _parse_sigma(args.sigma, p) if kind is SpaceKind.ORDERED else None
    space = enumerate_space(p, params.caps, kind, sigma)
    payload: dict = {"p": p, "kind": kind.value, "states": len(space)}
    if args.data:
        data = session.data()
        pi = exact_posterior(space, data, params)
        order = np.argsort(-pi)
        payload["posterior"] = [{"state": space.states[i].describe(), "pi": float(pi[i])} for i in order]
    else:
        payload["listing"] = [state.describe() for state in space]
    _write_dict(payload, session.output("space", "space.json"))
    print(_frame("Enumerated Space", [f"Kind: {kind.value}", f"Nodes: {p}", f"States: {len(space)}"]))
    return EXIT_OK


def cmd_mixing(session: Session) -> int:
    args = session.args
    data = session.data()
    params = session.params()
    kind = SamplerKind(args.kind)
    sigma = _parse_sigma(args.sigma, data.p) if kind is SamplerKind.ADS else None
    space = enumerate_space(data.p, params.caps, _SPACE_FOR[kind], sigma)
    tm = build_transition_matrix(space, kind, data, params, mode=ProposalMode(args.proposal), q=args.q)
    if args.lazy:
        tm = lazy_kernel(tm)
    mixing = exact_mixing_time(tm, cap=args.cap)
    payload: dict = {
        "kind": kind.value,
        "states": len(space),
        "t_mix": mixing.t,
        "lower_bound": mixing.lower_bound,
        "spectral_gap": spectral_gap(tm),
        "detailed_balance_residual": tm.detailed_balance_residual(),
    }
    if args.truth:
        session.inputs["truth"] = args.truth
        truth = read_dag(args.truth, data.p)
        target = initial_state(kind, data.p, truth) if kind is SamplerKind.RWGES else truth
        if target in space:
            payload["max_hitting_time"] = float(hitting_time(tm, target).max())
        if kind is SamplerKind.RWGES:
            ctx = CanonicalContext(truth, Scorer(data, params))
            g, star = canonical_map(space, ctx)
            payload["path_bound"] = verify_theorem1(tm, g, star).model_dump()
    _write_dict(payload, session.output("mixing", "mixing.json"))
    rows = [f"Kind: {kind.value}", f"States: {len(space)}", f"T_mix: {'>= ' if mixing.lower_bound else ''}{mixing.t}"]
    print(_frame("Exact Mixing Time", rows))
    return EXIT_OK


def cmd_demo(session: Session) -> int:
    args = session.args
    grid = [int(v) for v in args.grid.split(",")] if args.grid else None
    report = slow_mixing_demo(args.example, n=args.n, grid=grid, coefficients=(args.a1, args.a2), cap=args.cap)
    write_json(report, session.output("report", f"demo_{args.example}.json"))
    rows = [f"{c.name}: expected {c.expected:.6f}, computed {c.computed:.6f}, {'ok' if c.passed else 'FAIL'}" for c in report.ratio_checks]
    if report.mixing:
        rows.append(f"Chain: {report.chain}")
    rows += [f"n={m.n}: T_mix {'>= ' if m.lower_bound else ''}{m.t_mix}" for m in report.mixing]
    if report.threshold_n is not None:
        rows.append(f"Bottleneck holds from n={report.threshold_n}")
    print(_frame(f"Slow Mixing Demo {args.example}", rows))
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_check_assumptions(session: Session) -> int:
    args = session.args
    params = session.params()
    truth = None
    if args.sem:
        session.inputs["sem"] = args.sem
        sem = read_sem(args.sem)
        source = sem.covariance()
        truth = sem.dag
        if args.n is None:
            raise ConfigError("--n is required with --sem")
    else:
        source = session.data()
    if args.truth:
        session.inputs["truth"] = args.truth
        truth = read_dag(args.truth)
    report = check_assumptions(source, params, true_dag=truth, n=args.n)
    write_json(report, session.output("report", "assumptions.json"))
    rows = [f"{key}: {value}" for key, value in report.flags.items()]
    print(_frame("Assumption Check", rows + [f"Structure conditions hold: {report.structure_ok}"]))
    return EXIT_OK if report.structure_ok else EXIT_FAILURE


def cmd_run_manifest(session: Session) -> int:
    path = session.args.manifest
    try:
        manifest = RunManifest.model_validate_json(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise FormatError(str(e), path) from e
    logger.info("Replaying %s %s", manifest.command, manifest.argv)
    return main([manifest.command, *manifest.argv])


COMMANDS = {
    "gen": cmd_gen,
    "score": cmd_score,
    "greedy": cmd_greedy,
    "sample": cmd_sample,
    "enumerate": cmd_enumerate,
    "mixing": cmd_mixing,
    "demo": cmd_demo,
    "check-assumptions": cmd_check_assumptions,
    "run-manifest": cmd_run_manifest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment TOML file")
    common.add_argument("--out-dir", help="Directory for outputs and the run manifest")
    common.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )

    parser = argparse.ArgumentParser(description="Bayesian structure learning over sparse DAG equivalence classes")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="Sample a random SEM and data")
    gen.add_argument("--p", type=int, help="Number of nodes")
    gen.add_argument("--n", type=int, help="Number of samples")
    gen.add_argument("--seed", type=int, help="Random seed")

    def with_data(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", required=True, help="CSV dataset with a header row")
        p.add_argument("--params", help="ScoreParams JSON (defaults to the config file)")

    score = sub.add_parser("score", parents=[common], help="Score a graph file")
    with_data(score)
    score.add_argument("--graph", required=True, help="Edge-list graph")

    greedy = sub.add_parser("greedy", parents=[common], help="Greedy search over equivalence classes")
    with_data(greedy)
    greedy.add_argument("--init", default="empty", help="'empty' or an edge-list file")
    greedy.add_argument(
        "--proposal", default=ProposalMode.OPERATOR.value, choices=[m.value for m in ProposalMode], help="Neighborhood"
    )

    sample = sub.add_parser("sample", parents=[common], help="Run Metropolis-Hastings chains")
    sample.add_argument("kind", choices=[k.value for k in SamplerKind], help="Sampler")
    with_data(sample)
    sample.add_argument("--iterations", type=int, help="Steps per chain")
    sample.add_argument("--seed", type=int, help="Root seed")
    sample.add_argument("--chains", type=int, default=1, help="Independent chains")
    sample.add_argument("--q", type=float, help="Equivalence-jump probability (structure)")
    sample.add_argument("--proposal", choices=[m.value for m in ProposalMode], help="Class neighborhood (rwges)")
    sample.add_argument("--sigma", help="Ordering for ads, 1-based comma-separated")
    sample.add_argument("--lazy", action="store_true", help="Hold with probability 1/2")
    sample.add_argument("--init", default="empty", help="'empty' or an edge-list file")

    enum = sub.add_parser("enumerate", parents=[common], help="Enumerate a small model space")
    enum.add_argument("--p", type=int, required=True, help="Number of nodes")
    enum.add_argument("--kind", default=SpaceKind.CPDAGS.value, choices=[k.value for k in SpaceKind], help="States")
    enum.add_argument("--sigma", help="Ordering for ordered-dags")
    enum.add_argument("--data", help="CSV dataset; adds the exact posterior")
    enum.add_argument("--params", help="ScoreParams JSON")

    mixing = sub.add_parser("mixing", parents=[common], help="Exact kernel diagnostics")
    with_data(mixing)
    mixing.add_argument("--kind", default=SamplerKind.RWGES.value, choices=[k.value for k in SamplerKind])
    mixing.add_argument(
        "--proposal", default=ProposalMode.EXACT.value, choices=[m.value for m in ProposalMode], help="Neighborhood"
    )
    mixing.add_argument("--q", type=float, help="Equivalence-jump probability (structure)")
    mixing.add_argument("--sigma", help="Ordering for ads")
    mixing.add_argument("--lazy", action="store_true", help="Use (P + I) / 2")
    mixing.add_argument("--cap", type=int, default=10**7, help="Mixing-time search cap")
    mixing.add_argument("--truth", help="True DAG; adds hitting times and the canonical-path bound")

    demo = sub.add_parser("demo", parents=[common], help="Slow-mixing worked examples")
    demo.add_argument("example", choices=["ex1", "ex2", "ex3"])
    demo.add_argument("--n", type=int, default=400, help="Sample size of the ratio checks")
    demo.add_argument("--grid", help="Comma-separated sample sizes for the mixing-time grid")
    demo.add_argument("--a1", type=float, default=1.0, help="First coefficient (ex2)")
    demo.add_argument("--a2", type=float, default=1.0, help="Second coefficient (ex2)")
    demo.add_argument("--cap", type=int, default=10**7, help="Mixing-time search cap")

    check = sub.add_parser("check-assumptions", parents=[common], help="Desk-scale assumption checks")
    check.add_argument("--data", help="CSV dataset")
    check.add_argument("--sem", help="SEM JSON; uses its exact covariance")
    check.add_argument("--n", type=int, help="Sample size (required with --sem)")
    check.add_argument("--truth", help="True DAG edge list")
    check.add_argument("--params", help="ScoreParams JSON")

    replay = sub.add_parser("run-manifest", parents=[common], help="Replay a run manifest")
    replay.add_argument("manifest", help="Manifest JSON")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command == "check-assumptions" and not (args.data or args.sem):
        print("check-assumptions needs --data or --sem", file=sys.stderr)
        return EXIT_USAGE

    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    try:
        session = Session(args)
        code = COMMANDS[args.command](session)
    except (ConfigError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StructureLearningError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    if args.command != "run-manifest":
        manifest = RunManifest(
            command=args.command,
            argv=argv[1:],
            config=session.config.model_dump(mode="json"),
            seed=session.seed,
            inputs=session.inputs,
            outputs=session.outputs,
            version=__version__,
            started_at=started.isoformat(),
            wall_clock=time.perf_counter() - clock,
        )
        write_json(manifest, session.out_dir / f"{args.command}.manifest.json")
    return code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
