"""Areal adjacency graphs for the intrinsic CAR prior."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, ValidationError

__all__ = ["AdjacencyGraph", "load_adjacency", "complete_graph", "line_graph", "lattice_graph", "write_adjacency"]


@dataclass(frozen=True)
class AdjacencyGraph:
    region_ids: tuple[str, ...]
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.region_ids) != len(self.neighbors):
            raise ValidationError("region_ids and neighbors differ in length")
        if len(set(self.region_ids)) != len(self.region_ids):
            raise ValidationError("duplicate region ids")
        for i, nb in enumerate(self.neighbors):
            if i in nb:
                raise ValidationError(f"self-loop at region {self.region_ids[i]!r}")
            if len(set(nb)) != len(nb):
                raise ValidationError(f"duplicate edge at region {self.region_ids[i]!r}")
            for j in nb:
                if i not in self.neighbors[j]:
                    raise ValidationError(
                        f"asymmetric edge {self.region_ids[i]!r} -> {self.region_ids[j]!r}"
                    )

    @property
    def size(self) -> int:
        return len(self.region_ids)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=int)

    @property
    def n_edges(self) -> int:
        return int(self.degrees.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]

    @property
    def islands(self) -> tuple[int, ...]:
        return tuple(i for i, nb in enumerate(self.neighbors) if not nb)

    @property
    def components(self) -> tuple[tuple[int, ...], ...]:
        """Connected components, islands included, ordered by smallest member."""
        n = self.size
        e = self.edges()
        rows = [i for i, _ in e] + [j for _, j in e]
        cols = [j for _, j in e] + [i for i, _ in e]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(i)
        return tuple(sorted((tuple(g) for g in groups.values()), key=lambda g: g[0]))

    def laplacian(self) -> np.ndarray:
        """ICAR structure matrix D - W."""
        n = self.size
        r = np.zeros((n, n))
        for i, nb in enumerate(self.neighbors):
            r[i, i] = len(nb)
            for j in nb:
                r[i, j] = -1.0
        return r

    def index(self, region_id: str) -> int:
        return self.region_ids.index(region_id)

    def reorder(self, region_ids: Sequence[str]) -> "AdjacencyGraph":
        """Same graph with regions listed in ``region_ids`` order (must be a permutation)."""
        region_ids = tuple(region_ids)
        if sorted(region_ids) != sorted(self.region_ids):
            missing = sorted(set(self.region_ids) ^ set(region_ids))
            raise ValidationError(f"graph and data regions differ: {missing}")
        pos = {r: k for k, r in enumerate(region_ids)}
        old = self.region_ids
        nbrs = [()] * len(region_ids)
        for i, nb in enumerate(self.neighbors):
            nbrs[pos[old[i]]] = tuple(sorted(pos[old[j]] for j in nb))
        return AdjacencyGraph(region_ids, tuple(nbrs))


def _from_edges(pairs: Iterable[tuple[str, str]], region_ids: Sequence[str]) -> AdjacencyGraph:
    pos = {r: k for k, r in enumerate(region_ids)}
    sets: list[set[int]] = [set() for _ in region_ids]
    for a, b in pairs:
        i, j = pos[a], pos[b]
        sets[i].add(j)
        sets[j].add(i)
    return AdjacencyGraph(tuple(region_ids), tuple(tuple(sorted(s)) for s in sets))


def load_adjacency(source, declared_ids: Sequence[str] | None = None) -> AdjacencyGraph:
    """Read an undirected edge list (CSV with header ``region_a,region_b``).

    ``source`` may be a path, an open text stream, or an iterable of
    ``(region_a, region_b)`` tuples. When ``declared_ids`` (the counts-file
    regions) is given, every edge endpoint must be declared there; declared
    regions without edges become islands, and the graph follows the
    declared order.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_adjacency(fh, declared_ids)
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["region_a", "region_b"]:
            raise ValidationError(f"adjacency header must be 'region_a,region_b', got {header!r}")
        rows = [(k + 2, row) for k, row in enumerate(reader) if row and any(c.strip() for c in row)]
    else:
        rows = [(k + 1, list(row)) for k, row in enumerate(source)]

    pairs = []
    for lineno, row in rows:
        if len(row) != 2:
            raise ValidationError(f"adjacency row {lineno}: expected 2 fields, got {len(row)}")
        a, b = str(row[0]).strip(), str(row[1]).strip()
        if not a or not b:
            raise ValidationError(f"adjacency row {lineno}: empty region id")
        if a == b:
            raise ValidationError(f"adjacency row {lineno}: self-loop on region {a!r}")
        pairs.append((a, b))

    mentioned = list(dict.fromkeys(r for p in pairs for r in p))
    if declared_ids is None:
        region_ids = mentioned
    else:
        declared = list(declared_ids)
        unmatched = sorted(set(mentioned) - set(declared))
        if unmatched:
            raise ValidationError(f"adjacency mentions regions absent from counts: {unmatched}")
        region_ids = declared
    return _from_edges(pairs, region_ids)


def write_adjacency(path, graph: AdjacencyGraph) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_a", "region_b"])
        for i, j in graph.edges():
            w.writerow([graph.region_ids[i], graph.region_ids[j]])


def _ids(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"R{k + 1:0{width}d}" for k in range(n)]


def complete_graph(n_regions: int, region_ids: Sequence[str] | None = None) -> AdjacencyGraph:
    """Every region neighbours all others (degree ``I - 1``)."""
    if int(n_regions) != n_regions or n_regions < 2:
        raise DomainError(f"complete graph needs at least 2 regions, got {n_regions!r}")
    n = int(n_regions)
    ids = list(region_ids) if region_ids is not None else _ids(n)
    return AdjacencyGraph(tuple(ids), tuple(tuple(j for j in range(n) if j != i) for i in range(n)))


def line_graph(n_regions: int) -> AdjacencyGraph:
    n = int(n_regions)
    if n < 2:
        raise DomainError(f"line graph needs at least 2 regions, got {n_regions!r}")
    ids = _ids(n)
    return _from_edges([(ids[k], ids[k + 1]) for k in range(n - 1)], ids)


def lattice_graph(rows: int, cols: int, queen: bool = False) -> AdjacencyGraph:
    """Rook (or queen) contiguity on a ``rows x cols`` grid, row-major ids."""
    ids = _ids(rows * cols)
    pairs = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            steps = [(0, 1), (1, 0)] + ([(1, 1), (1, -1)] if queen else [])
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    pairs.append((ids[k], ids[rr * cols + cc]))
    return _from_edges(pairs, ids)
