"""Attribute-driven graph enhancement.

Three stages produce the enhanced adjacency that feeds the random-walk
scorer:

1. Augmentation: the ceil(eta * m) most cosine-similar non-edges are
   added to the edge set. Selection uses untrained attribute similarity
   only and is frozen for the rest of a run.
2. A small MLP maps the permutation-invariant pair encoding
   [x_u + x_v ; |x_u - x_v|] to a trained weight w_uv in (0, 1)
   (sigmoid output, so trained weights keep the transition matrix valid).
3. Combination: for every pair in the augmented edge set,

       weight(u, v) = alpha * A_uv + (1 - alpha) * (beta * w_uv
                      + (1 - beta) * cos(x_u, x_v))

   clamped at zero from below (the cosine term can be negative); exact
   zeros are dropped from the structure. Self-loops are then added per
   config so every row has a valid transition distribution.

Checkpoint format (binary): magic "GPAR", little-endian 64-bit unsigned
r and hidden, then float64 little-endian values of W1 (hidden x 2r,
row-major), b1, W2, b2.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError
from .graph import AttributeMatrix, Graph, _assemble_csr, cosine_pairs
from .rng import Stream, counter_uniforms, derive

PARAM_MAGIC = b"GPAR"

_INIT_TAG = 0x696E6974


@dataclass
class EnhancerConfig:
    eta: float = 0.0
    alpha: float = 0.0
    beta: float = 1.0
    self_loop_mode: str = "isolated-only"
    self_loop_weight: float = 1.0

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must be in [0, 1]")
        if self.self_loop_mode not in ("all", "isolated-only"):
            raise ConfigError(
                f"unknown self-loop mode {self.self_loop_mode!r}")
        if self.self_loop_weight <= 0:
            raise ConfigError("self-loop weight must be positive")


@dataclass
class MlpParams:
    """One-hidden-layer MLP weights for pairwise edge scoring."""

    W1: np.ndarray  # (hidden, 2r)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden,)
    b2: float

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def r(self) -> int:
        return self.W1.shape[1] // 2

    @property
    def count(self) -> int:
        """Total trainable parameters: 2r*h + h + h + 1, graph-size free."""
        return self.W1.size + self.b1.size + self.W2.size + 1

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(),
                         float(self.b2))


def init_mlp_params(r: int, hidden: int = 128, seed: int = 0) -> MlpParams:
    """Uniform symmetric init scaled by 1/sqrt(fan-in), seed-controlled."""
    stream = Stream(derive(seed, _INIT_TAG))
    s1 = 1.0 / math.sqrt(2 * r)
    s2 = 1.0 / math.sqrt(hidden)
    W1 = (stream.uniforms(hidden * 2 * r).reshape(hidden, 2 * r) * 2 - 1) * s1
    b1 = (stream.uniforms(hidden) * 2 - 1) * s1
    W2 = (stream.uniforms(hidden) * 2 - 1) * s2
    b2 = float((stream.uniforms(1)[0] * 2 - 1) * s2)
    return MlpParams(W1, b1, W2, b2)


def save_params(path, params: MlpParams) -> None:
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(struct.pack("<QQ", params.r, params.hidden))
        fh.write(params.W1.astype("<f8").tobytes())
        fh.write(params.b1.astype("<f8").tobytes())
        fh.write(params.W2.astype("<f8").tobytes())
        fh.write(struct.pack("<d", params.b2))


def load_params(path) -> MlpParams:
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != PARAM_MAGIC:
                raise DataError(f"{path}: not a parameter checkpoint")
            r, hidden = struct.unpack("<QQ", fh.read(16))
            payload = np.frombuffer(fh.read(), dtype="<f8")
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    need = hidden * 2 * r + hidden + hidden + 1
    if payload.size != need:
        raise DataError(f"{path}: expected {need} values, got {payload.size}")
    W1 = payload[:hidden * 2 * r].reshape(hidden, 2 * r).copy()
    off = hidden * 2 * r
    b1 = payload[off:off + hidden].copy()
    W2 = payload[off + hidden:off + 2 * hidden].copy()
    b2 = float(payload[-1])
    return MlpParams(W1, b1, W2, b2)


# -- augmentation -----------------------------------------------------------

def select_augmentation_pairs(X: AttributeMatrix, g: Graph, eta: float,
                              block_size: int = 512):
    """Top ceil(eta * m) most cosine-similar non-edges of `g`.

    Returns (pairs, threshold) where threshold is the smallest selected
    similarity (+inf when nothing is selected). Ties at the cutoff are
    broken toward lexicographically smaller (u, v). The similarity matrix
    is scanned in row blocks, never materialized in full.
    """
    if eta < 0:
        raise ConfigError("eta must be >= 0")
    n = g.n
    m = g.num_edges
    count = int(math.ceil(eta * m))
    if count == 0:
        return np.empty((0, 2), dtype=np.int64), math.inf
    non_edges = n * (n - 1) // 2 - len(g.edge_pairs())
    if count > non_edges:
        raise ConfigError(
            f"eta={eta} asks for {count} pairs but only {non_edges} "
            "non-edges exist")
    unit = X.unit_rows()
    cand_s, cand_u, cand_v = [], [], []
    cols = np.arange(n)
    for start in range(0, n, block_size):
        rows = np.arange(start, min(start + block_size, n))
        sims = unit[rows] @ unit.T
        mask = cols[None, :] > rows[:, None]
        for i, u in enumerate(rows):
            nbrs = g.neighbors(u)
            mask[i, nbrs] = False
        ru, cu = np.nonzero(mask)
        s = sims[ru, cu]
        if len(s) > count:
            kth = np.partition(s, len(s) - count)[len(s) - count]
            keep = s >= kth
            ru, cu, s = ru[keep], cu[keep], s[keep]
        cand_s.append(s)
        cand_u.append(rows[ru])
        cand_v.append(cu)
    s = np.concatenate(cand_s)
    u = np.concatenate(cand_u)
    v = np.concatenate(cand_v)
    order = np.lexsort((v, u, -s))[:count]
    threshold = float(s[order].min())
    pairs = np.column_stack([u[order], v[order]])
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs, threshold


# -- MLP edge weights -------------------------------------------------------

def pair_features(X: AttributeMatrix, pairs: np.ndarray) -> np.ndarray:
    """Permutation-invariant encoding [x_u + x_v ; |x_u - x_v|]."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    xu = X.values[pairs[:, 0]]
    xv = X.values[pairs[:, 1]]
    return np.hstack([xu + xv, np.abs(xu - xv)])


def dropout_masks(hidden: int, pair_ids: np.ndarray, rate: float,
                  key: int) -> np.ndarray:
    """Inverted-dropout keep masks, keyed by (stream key, pair id, unit).

    Counter-based, so a pair's mask is independent of which batch or
    worker touches it.
    """
    pair_ids = np.asarray(pair_ids, dtype=np.int64).reshape(-1)
    counters = pair_ids[:, None] * hidden + np.arange(hidden)[None, :]
    u = counter_uniforms(key, counters.reshape(-1)).reshape(len(pair_ids), hidden)
    return u >= rate


def mlp_forward(params: MlpParams, Z: np.ndarray,
                keep_mask: np.ndarray | None = None,
                rate: float = 0.0, cache: dict | None = None) -> np.ndarray:
    """Batched forward pass: w = sigmoid(W2 . relu(W1 z + b1) + b2).

    With `cache` given, the intermediates needed for the backward pass
    (input encoding, ReLU support, post-dropout hidden) are stored in it.
    """
    Hpre = Z @ params.W1.T + params.b1
    H = np.maximum(Hpre, 0.0)
    if keep_mask is not None:
        Hd = H * (keep_mask / (1.0 - rate))
    else:
        Hd = H
    w = expit(Hd @ params.W2 + params.b2)
    if cache is not None:
        cache.update(Z=Z, relu_support=Hpre > 0.0, Hd=Hd,
                     keep_mask=keep_mask, rate=rate, w=w)
    return w


def mlp_edge_weight(params: MlpParams, X: AttributeMatrix, pair,
                    training: bool = False, dropout_rate: float = 0.5,
                    dropout_key: int = 0, pair_id: int = 0) -> float:
    """Trained weight of one pair; symmetric in (u, v) by construction."""
    Z = pair_features(X, np.asarray([[pair[0], pair[1]]]))
    mask = None
    if training and dropout_rate > 0.0:
        mask = dropout_masks(params.hidden, np.asarray([pair_id]),
                             dropout_rate, dropout_key)
    return float(mlp_forward(params, Z, mask, dropout_rate)[0])


# -- enhanced graph ---------------------------------------------------------

@dataclass
class EnhancedGraph:
    """Learned adjacency over the augmented edge set, self-loops applied.

    `pairs` lists the canonical augmented edge set (original edges first,
    then added pairs); `pair_weights` holds the combined weights before
    any zero-drop; the remaining fields record enough of the forward pass
    for reverse-mode replay.
    """

    graph: Graph
    pairs: np.ndarray
    pair_weights: np.ndarray
    added_pairs: np.ndarray
    base_weights: np.ndarray      # A_uv per pair (0 for added pairs)
    cos: np.ndarray               # s(x_u, x_v) per pair
    trained: np.ndarray           # w_uv per pair
    active: np.ndarray            # combined weight > 0 (kept in structure)
    arc_positions: np.ndarray     # (n_active, 2) data indices of both arcs
    alpha: float
    beta: float
    pair_ids: np.ndarray | None = None
    dropout_key: int = 0
    dropout_rate: float = 0.0
    training: bool = False
    mlp_cache: dict | None = None  # Z, Hpre mask, Hd kept for backward


def assemble_enhanced(X: AttributeMatrix, params: MlpParams | None,
                      cfg: EnhancerConfig, n: int,
                      base_pairs: np.ndarray, base_weights: np.ndarray,
                      added_pairs: np.ndarray,
                      training: bool = False, dropout_rate: float = 0.0,
                      dropout_key: int = 0,
                      pair_ids: np.ndarray | None = None,
                      cos: np.ndarray | None = None,
                      Z: np.ndarray | None = None,
                      keep_cache: bool = False) -> EnhancedGraph:
    """Combine weights over an explicit augmented pair set and build CSR.

    `base_pairs` carries the structural edges in play (the residual set
    during positive-masked training); `added_pairs` is the frozen
    augmentation. `pair_ids` indexes pairs into the frozen full pair list
    for dropout keying and defaults to positional ids. Precomputed
    cosines / pair encodings may be passed in to avoid re-gathering them
    every batch; with keep_cache the MLP intermediates are retained for
    reverse-mode replay.
    """
    base_pairs = np.asarray(base_pairs, dtype=np.int64).reshape(-1, 2)
    added_pairs = np.asarray(added_pairs, dtype=np.int64).reshape(-1, 2)
    pairs = np.vstack([base_pairs, added_pairs])
    a_w = np.concatenate([np.asarray(base_weights, dtype=np.float64),
                          np.zeros(len(added_pairs))])
    if pair_ids is None:
        pair_ids = np.arange(len(pairs))

    if cos is None:
        cos = cosine_pairs(X, pairs) if len(pairs) else np.empty(0)

    mlp_cache = {} if keep_cache else None
    if cfg.beta > 0.0 and cfg.alpha < 1.0:
        if params is None:
            raise ConfigError("MLP parameters required when beta > 0")
        if Z is None:
            Z = pair_features(X, pairs)
        mask = None
        if training and dropout_rate > 0.0:
            mask = dropout_masks(params.hidden, pair_ids, dropout_rate,
                                 dropout_key)
        w = mlp_forward(params, Z, mask, dropout_rate, cache=mlp_cache)
    else:
        w = np.zeros(len(pairs))

    combined = (cfg.alpha * a_w
                + (1.0 - cfg.alpha) * (cfg.beta * w + (1.0 - cfg.beta) * cos))
    weights = np.maximum(combined, 0.0)
    active = weights > 0.0

    act_pairs = pairs[active]
    act_w = weights[active]
    rows = np.concatenate([act_pairs[:, 0], act_pairs[:, 1]])
    cols = np.concatenate([act_pairs[:, 1], act_pairs[:, 0]])
    dat = np.concatenate([act_w, act_w])

    # self-loops per config, after the zero-drop
    deg = np.bincount(rows, weights=dat, minlength=n)
    if cfg.self_loop_mode == "all":
        loop_nodes = np.arange(n)
    else:
        loop_nodes = np.flatnonzero(deg == 0.0)
    rows = np.concatenate([rows, loop_nodes])
    cols = np.concatenate([cols, loop_nodes])
    dat = np.concatenate([dat, np.full(len(loop_nodes), cfg.self_loop_weight)])

    graph, order = _assemble_csr(n, rows, cols, dat, undirected=True)
    position = np.empty(len(rows), dtype=np.int64)
    position[order] = np.arange(len(rows))
    k = len(act_pairs)
    arc_positions = np.column_stack([position[:k], position[k:2 * k]])

    return EnhancedGraph(
        graph=graph, pairs=pairs, pair_weights=weights,
        added_pairs=added_pairs, base_weights=a_w, cos=cos, trained=w,
        active=active, arc_positions=arc_positions,
        alpha=cfg.alpha, beta=cfg.beta, pair_ids=pair_ids,
        dropout_key=dropout_key, dropout_rate=dropout_rate,
        training=training, mlp_cache=mlp_cache or None)


def build_enhanced_graph(g: Graph, X: AttributeMatrix,
                         params: MlpParams | None, cfg: EnhancerConfig,
                         training: bool = False,
                         added_pairs: np.ndarray | None = None,
                         dropout_rate: float = 0.0,
                         dropout_key: int = 0) -> EnhancedGraph:
    """Enhanced graph over the full edge set of `g` plus the augmentation.

    When `added_pairs` is None the augmentation is selected here from the
    untrained similarities; callers that rebuild the graph per batch
    should select once and pass the frozen array.
    """
    base_pairs, base_weights = g.edge_pairs(return_weights=True)
    if added_pairs is None:
        added_pairs, _ = select_augmentation_pairs(X, g, cfg.eta)
    return assemble_enhanced(
        X, params, cfg, g.n, base_pairs, base_weights, added_pairs,
        training=training, dropout_rate=dropout_rate,
        dropout_key=dropout_key)
