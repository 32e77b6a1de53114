"""Communication graphs over the observer network and their Laplacians.

Nodes are 0-indexed in the API; the text format is 1-indexed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components

from .numerics import DEFAULT_TOL, ToleranceConfig


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    m: int
    edges: frozenset
    laplacian: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)

    @property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.m, self.m), dtype=int)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    @property
    def pattern(self) -> np.ndarray:
        """Block pattern allowed by the graph: adjacency plus the diagonal."""
        return (self.adjacency + np.eye(self.m, dtype=int) > 0).astype(int)


def build_graph(m: int, edges) -> CommGraph:
    """Assemble the graph Laplacian from 0-indexed undirected edges."""
    if m <= 2:
        raise GraphError(f"need more than two observers, got m={m}")
    canon = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if not (0 <= i < m and 0 <= j < m):
            raise GraphError(f"edge ({i}, {j}) has an endpoint outside 0..{m - 1}")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        canon.add((min(i, j), max(i, j)))
    # integer assembly keeps row sums exactly zero
    L = np.zeros((m, m), dtype=np.int64)
    for i, j in canon:
        L[i, j] = L[j, i] = -1
    L[np.diag_indices(m)] = -L.sum(axis=1)
    lam = np.sort(linalg.eigvalsh(L.astype(float)))
    return CommGraph(m, frozenset(canon), L, lam)


def spectral_gap(g: CommGraph) -> tuple[float, float]:
    """Second-smallest and largest Laplacian eigenvalues."""
    return float(g.lam[1]), float(g.lam[-1])


def _traversal_connected(g: CommGraph) -> bool:
    ncomp, _ = connected_components(g.adjacency, directed=False)
    return ncomp == 1


def components(g: CommGraph) -> list[list[int]]:
    ncomp, labels = connected_components(g.adjacency, directed=False)
    return [sorted(np.flatnonzero(labels == c).tolist()) for c in range(ncomp)]


def is_connected(g: CommGraph, cfg: ToleranceConfig = DEFAULT_TOL) -> bool:
    by_traversal = _traversal_connected(g)
    by_spectrum = g.lam[1] > cfg.unit_circle_tol
    if by_traversal != by_spectrum:
        raise GraphError(
            f"connectivity disagreement: traversal={by_traversal}, lambda_2={g.lam[1]:.3e}"
        )
    return by_traversal


def neighbor_sets(g: CommGraph) -> list[list[int]]:
    """N_i including i itself, sorted."""
    nbrs = [{i} for i in range(g.m)]
    for i, j in g.edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    return [sorted(s) for s in nbrs]


def parse_graph(text: str) -> CommGraph:
    """Parse ``m`` followed by one 1-indexed ``i j`` edge per line.

    Blank lines and ``#`` comments are ignored.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise GraphError("empty graph file")
    lineno, tok = rows[0]
    if len(tok) != 1:
        raise GraphError(f"line {lineno}: expected node count")
    try:
        m = int(tok[0])
    except ValueError:
        raise GraphError(f"line {lineno}: node count is not an integer") from None
    edges = []
    for lineno, tok in rows[1:]:
        if len(tok) != 2:
            raise GraphError(f"line {lineno}: expected 'i j'")
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError:
            raise GraphError(f"line {lineno}: edge endpoints must be integers") from None
        if not (1 <= i <= m and 1 <= j <= m):
            raise GraphError(f"line {lineno}: endpoint outside 1..{m}")
        if i == j:
            raise GraphError(f"line {lineno}: self-loop at node {i}")
        edges.append((i - 1, j - 1))
    return build_graph(m, edges)


def format_graph(g: CommGraph) -> str:
    lines = [str(g.m)] + [f"{i + 1} {j + 1}" for i, j in sorted(g.edges)]
    return "\n".join(lines) + "\n"
