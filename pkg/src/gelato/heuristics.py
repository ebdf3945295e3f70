"""Topological link-prediction scorers.

Local heuristics (Common Neighbors, Adamic-Adar, Resource Allocation) use
the unweighted structure: Adamic-Adar weights common neighbors by
1/ln(d_z) (natural log; a common neighbor always has degree >= 2, so the
ln 1 singularity cannot arise) and Resource Allocation by 1/d_z.

The Autocovariance similarity of a graph with degree vector d, volume
vol, and transition matrix P = D^-1 A is

    R = diag(d)/vol @ P^t - d d^T / vol^2

the gap between the t-step and stationary co-visit probabilities of a
random walk. Rows of R are computed by repeated vector-times-sparse-matrix
products and streamed in source blocks; the full n x n matrix is never
materialized. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, NumericError
from .graph import Graph

HEURISTIC_KINDS = ("CN", "AA", "RA")


@dataclass(frozen=True)
class AcParams:
    t: int = 3

    def __post_init__(self):
        if self.t < 0:
            raise ConfigError("walk length t must be >= 0")


@dataclass
class ScoreBlock:
    sources: np.ndarray
    scores: np.ndarray  # (len(sources), n)


def transition_matrix(g: Graph) -> sparse.csr_matrix:
    """Row-stochastic P = D^-1 A; every row must have positive degree.

    Shares the graph's CSR index structure, so P.data[k] scales
    g.data[k]; the reverse-mode walk replay relies on this alignment.
    """
    d = g.degrees
    if np.any(d <= 0.0):
        bad = int(np.argmax(d <= 0.0))
        raise NumericError(
            f"node {bad} has zero degree: no valid transition distribution "
            "(add self-loops first)")
    data = g.data / d[g.row_of_arcs()]
    return sparse.csr_matrix((data, g.indices, g.indptr), shape=(g.n, g.n))


def _walk_hits(P: sparse.csr_matrix, sources: np.ndarray, t: int,
               keep_steps: bool = False):
    """Rows of P^t for the given sources: (len(sources), n) dense.

    With keep_steps, also returns [X_0, ..., X_{t-1}] (X_k = rows of P^k)
    for reverse-mode replay.
    """
    n = P.shape[0]
    steps = []
    X = np.zeros((len(sources), n))
    X[np.arange(len(sources)), sources] = 1.0
    for _ in range(t):
        if keep_steps:
            steps.append(X)
        X = X @ P
    return (X, steps) if keep_steps else X


def autocovariance_rows(g: Graph, sources, params: AcParams) -> ScoreBlock:
    """Autocovariance rows R[u, :] for each source u."""
    sources = np.asarray(sources, dtype=np.int64).reshape(-1)
    d = g.degrees
    vol = g.volume
    P = transition_matrix(g)
    T = _walk_hits(P, sources, params.t)
    scores = (d[sources] / vol)[:, None] * T - np.outer(d[sources], d) / vol ** 2
    return ScoreBlock(sources=sources, scores=scores)


def autocovariance_pairs(g: Graph, pairs, params: AcParams,
                         block_size: int = 256) -> np.ndarray:
    """Autocovariance scores for explicit pairs, grouped by source node.

    One row computation is shared by all pairs with the same source, and
    distinct sources are processed in blocks of `block_size` to bound
    memory at block_size * n floats.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.empty(0)
    uniq, inverse = np.unique(pairs[:, 0], return_inverse=True)
    out = np.empty(len(pairs))
    for start in range(0, len(uniq), block_size):
        blk = uniq[start:start + block_size]
        block = autocovariance_rows(g, blk, params)
        in_blk = (inverse >= start) & (inverse < start + len(blk))
        out[in_blk] = block.scores[inverse[in_blk] - start, pairs[in_blk, 1]]
    return out


# -- local heuristics -------------------------------------------------------

def _unweighted(g: Graph):
    """Binary non-loop adjacency and unweighted degrees."""
    rows = g.row_of_arcs()
    keep = rows != g.indices
    adj = sparse.csr_matrix(
        (np.ones(int(keep.sum())), (rows[keep], g.indices[keep])),
        shape=(g.n, g.n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return adj, deg


def _neighbor_weights(kind: str, deg: np.ndarray) -> np.ndarray:
    """Per-node weight of serving as a common neighbor.

    Nodes of unweighted degree <= 1 cannot be common neighbors, so their
    weight is set to 0 rather than hitting 1/ln(1) or 1/0.
    """
    w = np.zeros_like(deg)
    ok = deg > 1
    if kind == "CN":
        w[deg > 0] = 1.0
    elif kind == "AA":
        w[ok] = 1.0 / np.log(deg[ok])
    elif kind == "RA":
        w[deg > 0] = 1.0 / deg[deg > 0]
    else:
        raise ConfigError(f"unknown heuristic kind {kind!r}")
    return w


def local_heuristic(kind: str, g: Graph, pair) -> float:
    """CN/AA/RA score of one node pair."""
    u, v = int(pair[0]), int(pair[1])
    nu = g.neighbors(u)
    nv = g.neighbors(v)
    common = np.intersect1d(nu[nu != u], nv[nv != v], assume_unique=True)
    if len(common) == 0:
        return 0.0
    _, deg = _unweighted(g)
    if kind == "CN":
        return float(len(common))
    return float(_neighbor_weights(kind, deg)[common].sum())


def local_heuristic_rows(kind: str, g: Graph, sources) -> np.ndarray:
    """Dense (len(sources), n) block of CN/AA/RA scores."""
    sources = np.asarray(sources, dtype=np.int64).reshape(-1)
    adj, deg = _unweighted(g)
    w = _neighbor_weights(kind, deg)
    weighted = adj.multiply(w[None, :]).tocsr()
    return (adj[sources] @ weighted.T).toarray()
