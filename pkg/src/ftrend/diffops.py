"""Difference operators for chains (time series) and graphs.

A chain operator of order ``k`` has ``T - k - 1`` rows, each carrying the
alternating binomial coefficients of order ``k + 1``.  Graph operators follow
the incidence-matrix recursion: odd orders are ``n x n``, even orders are
``m x n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np
from scipy import sparse

from ftrend.errors import DimensionError

# Below this signal length the operator is also kept dense; sparse matvec
# overhead dominates at that size.
DENSE_CUTOFF = 64


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..n-1``.

    Edges are stored 0-based with ``i < j``; the public file format is
    1-based (see :func:`ftrend.io.read_edges`).
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"graph needs at least 2 vertices, got {self.n}")
        seen = set()
        normalized = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at vertex {i + 1}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i + 1}, {j + 1}) outside 1..{self.n}")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise ValueError(f"duplicate edge ({e[0] + 1}, {e[1] + 1})")
            seen.add(e)
            normalized.append(e)
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def m(self) -> int:
        return len(self.edges)

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def induced(self, keep: Iterable[int]) -> "Graph":
        """Subgraph on ``keep`` re-indexed to ``0..len(keep)-1`` in order."""
        keep = list(keep)
        index = {v: p for p, v in enumerate(keep)}
        edges = tuple(
            (index[i], index[j]) for i, j in self.edges if i in index and j in index
        )
        return Graph(len(keep), edges)


@dataclass(frozen=True, eq=False)
class DifferenceOperator:
    """An ``r x N`` penalty operator.

    ``matrix`` is CSR; ``dense`` is populated for short signals and used by
    :meth:`apply` / :meth:`apply_t` when present.
    """

    matrix: sparse.csr_matrix
    order: int
    kind: Literal["chain", "graph"]
    dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = sparse.csr_matrix(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if self.dense is None and m.shape[1] < DENSE_CUTOFF:
            object.__setattr__(self, "dense", m.toarray())

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @property
    def r(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, B: np.ndarray) -> np.ndarray:
        if B.shape[0] != self.N:
            raise DimensionError(f"operator has {self.N} columns, input has {B.shape[0]} rows")
        if self.dense is not None:
            return self.dense @ B
        return np.asarray(self.matrix @ B)

    def apply_t(self, V: np.ndarray) -> np.ndarray:
        if V.shape[0] != self.r:
            raise DimensionError(f"operator has {self.r} rows, input has {V.shape[0]} rows")
        if self.dense is not None:
            return self.dense.T @ V
        return np.asarray(self.matrix.T @ V)

    def gram(self) -> sparse.csr_matrix:
        """``DᵀD`` as a sparse matrix."""
        return (self.matrix.T @ self.matrix).tocsr()

    def bandwidth(self) -> int | None:
        """Half-bandwidth of ``DᵀD`` for chain operators, else ``None``."""
        return self.order + 1 if self.kind == "chain" else None


def _first_difference(n_rows: int) -> sparse.csr_matrix:
    # (n_rows) x (n_rows + 1) with 1 on the diagonal and -1 to its right
    return sparse.diags([np.ones(n_rows), -np.ones(n_rows)], [0, 1], shape=(n_rows, n_rows + 1), format="csr")


def chain_diff(T: int, k: int) -> DifferenceOperator:
    """Order-``k`` difference operator for a sequence of length ``T``.

    Built by the recursion ``Δ(0) = D(0)``, ``Δ(k) = D(k) Δ(k-1)`` where
    ``D(j)`` is the ``(T-j-1) x (T-j)`` first-difference matrix.
    """
    if k < 0:
        raise ValueError(f"order must be nonnegative, got {k}")
    if T <= k + 1:
        raise DimensionError(f"chain of length {T} has no order-{k} differences (need T >= {k + 2})")
    op = _first_difference(T - 1)
    for j in range(1, k + 1):
        op = _first_difference(T - j - 1) @ op
    return DifferenceOperator(op.tocsr(), k, "chain")


def graph_incidence(g: Graph) -> DifferenceOperator:
    """Oriented incidence matrix: ``+1`` at the smaller endpoint, ``-1`` at the larger."""
    m = g.m
    if m:
        rows = np.repeat(np.arange(m), 2)
        cols = np.array(g.edges, dtype=int).ravel()
        vals = np.tile([1.0, -1.0], m)
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(m, g.n))
    else:
        mat = sparse.csr_matrix((0, g.n))
    return DifferenceOperator(mat, 0, "graph")


def graph_diff(g: Graph, k: int) -> DifferenceOperator:
    """Order-``k`` graph difference operator.

    ``Δ(k+1) = Δ(0)ᵀ Δ(k)`` for even ``k`` and ``Δ(0) Δ(k)`` for odd ``k``,
    so order 1 is the combinatorial Laplacian.
    """
    if k < 0:
        raise ValueError(f"order must be nonnegative, got {k}")
    inc = graph_incidence(g).matrix
    op = inc
    for j in range(k):
        op = (inc.T @ op) if j % 2 == 0 else (inc @ op)
    return DifferenceOperator(sparse.csr_matrix(op), k, "graph")


def build_operator(kind: str, k: int, N: int | None = None, graph: Graph | None = None) -> DifferenceOperator:
    if kind == "chain":
        if N is None:
            raise ValueError("chain operator needs a length")
        return chain_diff(N, k)
    if kind == "graph":
        if graph is None:
            raise ValueError("graph operator needs a graph")
        if N is not None and graph.n != N:
            raise DimensionError(f"graph has {graph.n} vertices but data has {N} curves")
        return graph_diff(graph, k)
    raise ValueError(f"unknown structure {kind!r}")
