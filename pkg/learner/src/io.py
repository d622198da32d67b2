"""Reading and writing datasets, SEMs, parameters and edge-list graphs."""

import csv
import json
import logging
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import FormatError, StructureLearningError
from .graphs import Dag, Pdag, consistent_extension, dag_to_cpdag
from .protocol import ScoreParams
from .sem import Dataset, SemModel

logger = logging.getLogger(__name__)

EDGE_PATTERN = re.compile(r"^(\d+)\s*(->|--)\s*(\d+)$")
NODES_PATTERN = re.compile(r"^nodes\s+(\d+)$")


class SemEdge(BaseModel):
    """One weighted edge of a SEM file; nodes are 1-based."""

    model_config = ConfigDict(populate_by_name=True)

    source: int = Field(..., alias="from", ge=1, description="Parent node")
    target: int = Field(..., alias="to", ge=1, description="Child node")
    weight: float = Field(..., description="Coefficient B[from][to]")


class SemRecord(BaseModel):
    """JSON form of a linear SEM."""

    p: int = Field(..., ge=1, description="Number of variables")
    edges: list[SemEdge] = Field(default_factory=list, description="Nonzero coefficients")
    omega: list[float] = Field(..., description="Noise variances")
    columns: list[str] = Field(default_factory=list, description="Variable names")


def read_dataset(path: Union[str, Path]) -> Dataset:
    """CSV with a header row of column names and one observation per line."""
    source = str(path)
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise FormatError(f"cannot open: {e.strerror}", source) from e
    rows: list[list[float]] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise FormatError("missing header row", source, 1)
        columns = [name.strip() for name in header]
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(columns):
                raise FormatError(f"expected {len(columns)} fields, got {len(row)}", source, reader.line_num)
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise FormatError(f"non-numeric value: {e}", source, reader.line_num) from e
    if not rows:
        raise FormatError("no data rows", source, 2)
    X = np.asarray(rows)
    if not np.all(np.isfinite(X)):
        raise FormatError("non-finite value in data", source)
    logger.debug("Read %d x %d dataset from %s", X.shape[0], X.shape[1], source)
    return Dataset(X, columns)


def write_dataset(data: Dataset, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.columns)
        for row in data.X:
            writer.writerow([repr(float(v)) for v in row])


def _load_json(path: Union[str, Path]) -> object:
    source = str(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise FormatError(f"cannot open: {e.strerror}", source) from e
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, source, e.lineno) from e


def _validate(model: type[BaseModel], raw: object, source: str) -> BaseModel:
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise FormatError(str(e), source) from e


def read_sem(path: Union[str, Path]) -> SemModel:
    source = str(path)
    record = _validate(SemRecord, _load_json(path), source)
    B = np.zeros((record.p, record.p))
    for edge in record.edges:
        if edge.source > record.p or edge.target > record.p:
            raise FormatError(f"edge {edge.source}->{edge.target} out of range for p={record.p}", source)
        if B[edge.source - 1, edge.target - 1] != 0:
            raise FormatError(f"edge {edge.source}->{edge.target} listed twice", source)
        B[edge.source - 1, edge.target - 1] = edge.weight
    try:
        return SemModel(B, np.asarray(record.omega))
    except StructureLearningError as e:
        raise FormatError(str(e), source) from e


def write_sem(m: SemModel, path: Union[str, Path], columns: Optional[list[str]] = None) -> None:
    edges = [SemEdge(source=i + 1, target=j + 1, weight=float(m.B[i, j])) for i, j in m.dag.edges]
    record = SemRecord(p=m.p, edges=edges, omega=m.omega.tolist(), columns=columns or [])
    Path(path).write_text(record.model_dump_json(indent=2, by_alias=True))


def read_params(path: Union[str, Path]) -> ScoreParams:
    return _validate(ScoreParams, _load_json(path), str(path))


def write_json(model: BaseModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model.model_dump_json(indent=2))


def read_graph(path: Union[str, Path], p: Optional[int] = None) -> Pdag:
    """Edge list with 1-based `i -> j` and `i -- j` lines, `#` comments and an optional `nodes N` line."""
    source = str(path)
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise FormatError(f"cannot open: {e.strerror}", source) from e
    directed, undirected = [], []
    declared: Optional[int] = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        nodes = NODES_PATTERN.match(line)
        if nodes:
            declared = int(nodes.group(1))
            continue
        edge = EDGE_PATTERN.match(line)
        if not edge:
            raise FormatError(f"cannot parse {raw.strip()!r}", source, lineno)
        i, j = int(edge.group(1)) - 1, int(edge.group(3)) - 1
        if i < 0 or j < 0 or i == j:
            raise FormatError(f"invalid edge {raw.strip()!r}", source, lineno)
        (directed if edge.group(2) == "->" else undirected).append((i, j))
    if declared is not None and p is not None and declared != p:
        raise FormatError(f"graph declares {declared} nodes, expected {p}", source)
    size = declared if declared is not None else p
    if size is None:
        size = 1 + max((max(e) for e in directed + undirected), default=0)
    try:
        return Pdag(size, frozenset(directed), frozenset(undirected))
    except StructureLearningError as e:
        raise FormatError(str(e), source) from e


def read_dag(path: Union[str, Path], p: Optional[int] = None) -> Dag:
    """A DAG file; undirected edges are oriented by a consistent extension."""
    g = read_graph(path, p)
    if not g.undirected:
        try:
            return Dag.from_edges(g.p, g.directed)
        except StructureLearningError as e:
            raise FormatError(str(e), str(path)) from e
    dag = consistent_extension(g)
    if dag is None:
        raise FormatError("graph admits no consistent DAG extension", str(path))
    return dag


def read_cpdag(path: Union[str, Path], p: Optional[int] = None) -> Pdag:
    """Equivalence class of the graph in the file."""
    return dag_to_cpdag(read_dag(path, p))


def write_graph(g: Union[Dag, Pdag], path: Union[str, Path]) -> None:
    lines = [f"nodes {g.p}"]
    if isinstance(g, Dag):
        lines += [f"{i + 1} -> {j + 1}" for i, j in g.edges]
    else:
        lines += [f"{i + 1} -> {j + 1}" for i, j in sorted(g.directed)]
        lines += [f"{i + 1} -- {j + 1}" for i, j in sorted(g.undirected)]
    Path(path).write_text("\n".join(lines) + "\n")
