"""Unbiased edge splits, negative pools, and positive-masking batches.

Positive edges are partitioned into train/valid/test sets. Negative pools
are defined set-theoretically per phase and never materialized:

* test negatives  = all disconnected non-self pairs of the input graph
* valid negatives = test negatives + test positives
* train negatives = valid negatives + valid positives

i.e. positives of a later phase are legal negatives for an earlier phase,
which mirrors the fact that they are unobserved at that point.

Reproducibility contract: the split permutation is the stable argsort of
SplitMix64 outputs for the split seed (see :mod:`gelato.rng`); the
shuffled canonical edge list is consumed as [train | valid | test]
segments with sizes (m - v - t, v = floor(valid_ratio*m),
t = floor(test_ratio*m)). Floors are taken with 1e-9 slack to absorb
float representation error in the ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import Graph
from .rng import Stream, derive

PHASES = ("train", "valid", "test")

_NEG_TAG = 0x6E656773  # stream namespace for negative sampling
_BATCH_TAG = 0x62617463  # stream namespace for batch partitions


@dataclass
class EdgeSplit:
    """Positive-edge partition plus the metadata the pools derive from."""

    n: int
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    seed: int
    ratios: tuple

    @property
    def num_edges(self) -> int:
        return len(self.train_pos) + len(self.valid_pos) + len(self.test_pos)

    def positives(self, phase: str) -> np.ndarray:
        _check_phase(phase)
        return getattr(self, f"{phase}_pos")


@dataclass
class MaskedBatch:
    """One positive-masking batch: scored positives vs residual structure."""

    batch_pos: np.ndarray
    residual_edges: np.ndarray
    negatives: np.ndarray | None = None


def _check_phase(phase):
    if phase not in PHASES:
        raise ConfigError(f"unknown phase {phase!r}; expected one of {PHASES}")


def pair_codes(pairs: np.ndarray, n: int) -> np.ndarray:
    """Encode canonical pairs as u * n + v for set arithmetic."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs[:, 0] * n + pairs[:, 1]


def split_edges(g: Graph, ratios=(0.85, 0.05, 0.10), seed: int = 0) -> EdgeSplit:
    """Randomly partition the canonical edges of `g` into an EdgeSplit.

    Deterministic for a fixed (graph, ratios, seed); the remainder after
    flooring the valid/test sizes goes to train.
    """
    if not g.undirected:
        raise DataError("edge splits are defined for undirected graphs")
    ratios = tuple(float(x) for x in ratios)
    if len(ratios) != 3 or any(x <= 0 for x in ratios):
        raise ConfigError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios}")
    pairs = g.edge_pairs()
    m = len(pairs)
    if m < 3:
        raise DataError(f"graph too small to split: {m} edges")
    n_valid = int(math.floor(ratios[1] * m + 1e-9))
    n_test = int(math.floor(ratios[2] * m + 1e-9))
    n_train = m - n_valid - n_test
    shuffled = Stream(seed).shuffled(pairs)
    return EdgeSplit(
        n=g.n,
        train_pos=shuffled[:n_train],
        valid_pos=shuffled[n_train:n_train + n_valid],
        test_pos=shuffled[n_train + n_valid:],
        seed=seed,
        ratios=ratios,
    )


def negative_pool_size(g: Graph, split: EdgeSplit, phase: str) -> int:
    """Exact size of the phase's negative pool (never materialized)."""
    _check_phase(phase)
    n = split.n
    total = n * (n - 1) // 2
    base = total - split.num_edges
    if phase == "test":
        return base
    if phase == "valid":
        return base + len(split.test_pos)
    return base + len(split.test_pos) + len(split.valid_pos)


def excluded_codes(split: EdgeSplit, phase: str) -> np.ndarray:
    """Sorted codes of the positive pairs excluded from the phase's pool."""
    _check_phase(phase)
    sets = [split.train_pos]
    if phase in ("valid", "test"):
        sets.append(split.valid_pos)
    if phase == "test":
        sets.append(split.test_pos)
    codes = np.concatenate([pair_codes(s, split.n) for s in sets]) \
        if sets else np.empty(0, dtype=np.int64)
    return np.sort(codes)


def sample_negatives(g: Graph, split: EdgeSplit, phase: str, count: int,
                     seed: int) -> np.ndarray:
    """Sample `count` pairs uniformly without replacement from the pool.

    Rejection sampling against the excluded positive set: candidate pairs
    are drawn as two node ids from the seed's stream, canonicalized, and
    kept in draw order after dropping self-pairs, excluded positives, and
    repeats. Deterministic per seed. Pools are O(n^2) and never built.
    """
    _check_phase(phase)
    pool = negative_pool_size(g, split, phase)
    if count > pool:
        raise ConfigError(f"requested {count} negatives but the {phase} "
                          f"pool only has {pool}")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    n = split.n
    excl = excluded_codes(split, phase)
    stream = Stream(derive(seed, _NEG_TAG))
    chosen = []
    chosen_sorted = np.empty(0, dtype=np.int64)
    need = count
    while need > 0:
        k = max(64, int(need * 1.4) + 16)
        us = stream.below(n, k)
        vs = stream.below(n, k)
        lo, hi = np.minimum(us, vs), np.maximum(us, vs)
        codes = lo * n + hi
        codes = codes[lo != hi]
        if len(excl):
            pos = np.searchsorted(excl, codes)
            pos = np.minimum(pos, len(excl) - 1)
            codes = codes[excl[pos] != codes]
        # dedup within the draw, preserving first-draw order
        _, first = np.unique(codes, return_index=True)
        codes = codes[np.sort(first)]
        if len(chosen_sorted):
            fresh = ~np.isin(codes, chosen_sorted, assume_unique=False)
            codes = codes[fresh]
        take = codes[:need]
        if len(take):
            chosen.append(take)
            chosen_sorted = np.sort(np.concatenate(chosen))
            need = count - len(chosen_sorted)
    codes = np.concatenate(chosen)
    return np.column_stack([codes // n, codes % n])


def positive_masking_batches(split: EdgeSplit, batch_count: int = 10,
                             seed: int = 0) -> list:
    """Partition train positives into shuffled near-equal masked batches.

    Each batch pairs its positives with the residual structure
    train_pos minus batch_pos; a batch_count that would leave an empty
    residual (batch_count=1 with >= 2 train edges) is rejected because
    the model needs some structure to score against.
    """
    m = len(split.train_pos)
    if not 1 <= batch_count <= m:
        raise ConfigError(f"batch_count must be in [1, {m}], got {batch_count}")
    if batch_count == 1 and m >= 2:
        raise ConfigError("batch_count=1 leaves an empty residual graph")
    perm = Stream(derive(seed, _BATCH_TAG)).permutation(m)
    shuffled = split.train_pos[perm]
    base, rem = divmod(m, batch_count)
    batches = []
    start = 0
    for i in range(batch_count):
        size = base + (1 if i < rem else 0)
        sel = np.zeros(m, dtype=bool)
        sel[start:start + size] = True
        batches.append(MaskedBatch(batch_pos=shuffled[sel],
                                   residual_edges=shuffled[~sel]))
        start += size
    return batches


# -- split file format ----------------------------------------------------

def write_split(path, split: EdgeSplit) -> None:
    """Write the split as text: header (n, seed, ratios), then sections."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# gelato edge split\n")
        fh.write(f"n {split.n}\n")
        fh.write(f"seed {split.seed}\n")
        fh.write("ratios {!r} {!r} {!r}\n".format(*split.ratios))
        for name in ("TRAIN", "VALID", "TEST"):
            pairs = split.positives(name.lower())
            fh.write(f"{name} {len(pairs)}\n")
            for u, v in pairs:
                fh.write(f"{u} {v}\n")


def read_split(path) -> EdgeSplit:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
    except OSError as exc:
        raise DataError(f"cannot read split file {path}: {exc}") from exc
    lines = [ln for ln in lines if ln]
    header = {}
    i = 0
    while i < len(lines) and lines[i].split()[0] not in ("TRAIN", "VALID", "TEST"):
        key, *rest = lines[i].split()
        header[key] = rest
        i += 1
    try:
        n = int(header["n"][0])
        seed = int(header["seed"][0])
        ratios = tuple(float(x) for x in header["ratios"])
    except (KeyError, IndexError, ValueError) as exc:
        raise DataError(f"bad split header in {path}: {exc}") from exc
    sections = {}
    while i < len(lines):
        name, count = lines[i].split()
        count = int(count)
        rows = [tuple(map(int, lines[j].split()))
                for j in range(i + 1, i + 1 + count)]
        sections[name] = np.asarray(rows, dtype=np.int64).reshape(count, 2)
        i += 1 + count
    for name in ("TRAIN", "VALID", "TEST"):
        if name not in sections:
            raise DataError(f"split file {path} missing section {name}")
    return EdgeSplit(n=n, train_pos=sections["TRAIN"],
                     valid_pos=sections["VALID"], test_pos=sections["TEST"],
                     seed=seed, ratios=ratios)
