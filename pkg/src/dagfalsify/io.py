"""Graph text files, dataset CSV ingestion and report JSON.

Graph format, one statement per line::

    # comment
    A -> B
    node D

Node indices follow the sorted node names, so a file always parses to the
same :class:`Dag`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
from pathlib import Path
from typing import Iterable

import numpy as np

from .citests.base import Dataset
from .falsifier import FalsificationReport
from .graph import Dag

logger = logging.getLogger(__name__)

MISSING_POLICIES = ("reject", "drop_rows")
MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}

_NAME = r"[^\s#]+"
_EDGE_RE = re.compile(rf"^({_NAME})\s*->\s*({_NAME})$")
_NODE_RE = re.compile(rf"^node\s+({_NAME})$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<text>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class BindError(ValueError):
    """Dataset columns and graph nodes do not match by name."""


def parse_graph(text: str, path: str | None = None) -> Dag:
    """Parse the graph text format.

    Examples
    --------
    >>> g = parse_graph("A -> B\\nB -> C")
    >>> sorted(g.edges), g.node_names
    ([(0, 1), (1, 2)], ('A', 'B', 'C'))
    """
    names: set[str] = set()
    edges: list[tuple[str, str, int]] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _NODE_RE.match(line)
        if m:
            names.add(m.group(1))
            continue
        m = _EDGE_RE.match(line)
        if not m or "->" in m.group(1) or "->" in m.group(2):
            raise ParseError(f"cannot parse {raw.strip()!r}; expected 'src -> dst' or 'node name'", lineno, path)
        src, dst = m.groups()
        if src == dst:
            raise ParseError(f"self-loop on {src!r}", lineno, path)
        if (src, dst) in seen:
            raise ParseError(f"duplicate edge {src} -> {dst} (first on line {seen[src, dst]})", lineno, path)
        seen[(src, dst)] = lineno
        names.update((src, dst))
        edges.append((src, dst, lineno))
    order = sorted(names)
    index = {name: k for k, name in enumerate(order)}
    # acyclicity is checked by Dag, whose CycleError names one cycle
    return Dag(len(order), frozenset((index[a], index[b]) for a, b, _ in edges), tuple(order))


def read_graph(path: str | os.PathLike) -> Dag:
    return parse_graph(Path(path).read_text(), str(path))


def format_graph(g: Dag) -> str:
    """Text form of ``g``; unnamed graphs get zero-padded names ``X0..``."""
    if g.node_names is not None:
        names = list(g.node_names)
    else:
        width = len(str(max(g.n - 1, 0)))
        names = [f"X{k:0{width}d}" for k in range(g.n)]
    lines = [f"{names[a]} -> {names[b]}" for a, b in sorted(g.edges)]
    touched = {v for e in g.edges for v in e}
    lines += [f"node {names[k]}" for k in range(g.n) if k not in touched]
    return "\n".join(lines) + "\n"


def write_graph(g: Dag, path: str | os.PathLike) -> None:
    Path(path).write_text(format_graph(g))


def read_dataset(path: str | os.PathLike, missing_policy: str = "reject") -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    Empty cells and the tokens NA, NaN, null, none and ``?`` are gaps. Under
    ``reject`` any gap is an error; under ``drop_rows`` rows with a gap are
    removed and the count is logged. Cells that are neither numbers nor gap
    tokens are always errors.
    """
    policy = missing_policy.replace("-", "_")
    if policy not in MISSING_POLICIES:
        raise ValueError(f"missing_policy must be one of {MISSING_POLICIES}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty CSV file", path=str(path))
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise ParseError("header must hold distinct, non-empty column names", 1, str(path))
    values, dropped = [], 0
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", lineno, str(path))
        out, gap = [], False
        for name, cell in zip(header, row):
            cell = cell.strip()
            if cell.lower() in MISSING_TOKENS:
                gap = True
                out.append(math.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} in column {name!r}", lineno, str(path)) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r} in column {name!r}", lineno, str(path))
            out.append(v)
        if gap:
            if policy == "reject":
                raise ParseError("missing value (use missing policy drop_rows to skip such rows)",
                                 lineno, str(path))
            dropped += 1
            continue
        values.append(out)
    if dropped:
        logger.warning("dropped %d row(s) with missing values from %s", dropped, path)
    return Dataset(np.array(values, dtype=float).reshape(len(values), len(header)), tuple(header))


def write_dataset(d: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(d.column_names)
        for row in d.values:
            w.writerow([repr(float(v)) for v in row])


def bind_dataset(g: Dag, d: Dataset, exclude: Iterable[str] = ()) -> tuple[Dag, Dataset]:
    """Match dataset columns to graph nodes by name.

    Nodes listed in ``exclude`` are removed from the graph (with their
    edges) and their columns dropped, as one does for variables that cannot
    be measured reliably. Every remaining node needs a column and every
    remaining column a node.
    """
    if g.node_names is None:
        raise BindError("graph has no node names; name-based binding needs a named graph")
    exclude = set(exclude)
    unknown_excl = exclude - set(g.node_names) - set(d.column_names)
    if unknown_excl:
        raise BindError(f"excluded names not found in graph or data: {sorted(unknown_excl)}")
    keep = [k for k, name in enumerate(g.node_names) if name not in exclude]
    sub = g.subgraph(keep) if len(keep) < g.n else g
    nodes = set(sub.node_names)
    cols = {c for c in d.column_names if c not in exclude}
    missing, extra = sorted(nodes - cols), sorted(cols - nodes)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"graph nodes without a data column: {missing}")
        if extra:
            parts.append(f"data columns without a graph node: {extra}")
        raise BindError("; ".join(parts))
    if exclude:
        logger.info("excluded nodes from evaluation: %s", sorted(exclude))
    logger.info("bound %d columns to graph nodes by name", len(nodes))
    return sub, d.select(list(sub.node_names))


def report_to_json(report: FalsificationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def write_report(report: FalsificationReport, path: str | os.PathLike) -> None:
    Path(path).write_text(report_to_json(report))


def read_report(path: str | os.PathLike, strict: bool = True) -> FalsificationReport:
    return FalsificationReport.from_dict(json.loads(Path(path).read_text()), strict=strict)
