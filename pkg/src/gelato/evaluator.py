"""Unbiased rank-based evaluation over the full candidate space.

The negative pool of a phase (all disconnected pairs, possibly plus
later-phase positives) is streamed in source-node blocks and reduced to a
sufficient statistic per test positive: how many pool negatives score
strictly above it and how many tie it. All four metrics derive from these
counts, so the O(n^2) pool is never materialized.

Tie policy: prec@k, hits@k, and AP rank positives *below* equal-scored
negatives (pessimistic, deterministic); equal-scored positives are
serialized in their input order where an integer rank is needed. AUC uses
the standard Mann-Whitney half credit for ties. prec@k receives k as a
fraction of the positive count, rounded half-up.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .splits import EdgeSplit, excluded_codes, negative_pool_size, \
    sample_negatives

TIE_POLICIES = ("pessimistic",)


@dataclass
class RankSummary:
    """Per-positive ranking counts against a negative pool."""

    pos_scores: np.ndarray      # (P,)
    neg_above: np.ndarray       # (P,) strictly higher-scored negatives
    neg_tied: np.ndarray        # (P,) equal-scored negatives
    total_negatives: int
    tie_policy: str = "pessimistic"

    def __post_init__(self):
        self.pos_scores = np.asarray(self.pos_scores, dtype=np.float64)
        self.neg_above = np.asarray(self.neg_above, dtype=np.int64)
        self.neg_tied = np.asarray(self.neg_tied, dtype=np.int64)
        if np.any(self.neg_above + self.neg_tied > self.total_negatives):
            raise DataError("tie/above counts exceed the pool size")

    @property
    def num_positives(self) -> int:
        return len(self.pos_scores)

    @classmethod
    def from_counts(cls, pos_scores, neg_above, neg_tied, total_negatives):
        """Build directly from counts (synthetic/analytic constructions)."""
        return cls(pos_scores, neg_above, neg_tied, int(total_negatives))


def counts_against(sorted_neg_scores: np.ndarray,
                   pos_scores: np.ndarray):
    """(above, tied) counts of each positive vs an ascending score array."""
    right = np.searchsorted(sorted_neg_scores, pos_scores, side="right")
    left = np.searchsorted(sorted_neg_scores, pos_scores, side="left")
    above = len(sorted_neg_scores) - right
    return above.astype(np.int64), (right - left).astype(np.int64)


def _score_pairs(scorer, pairs: np.ndarray, block_size: int = 256) -> np.ndarray:
    """Score explicit pairs via the scorer's row interface, grouped by source."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.empty(0)
    uniq, inverse = np.unique(pairs[:, 0], return_inverse=True)
    out = np.empty(len(pairs))
    for start in range(0, len(uniq), block_size):
        blk = uniq[start:start + block_size]
        rows = scorer.rows(blk)
        sel = (inverse >= start) & (inverse < start + len(blk))
        out[sel] = rows[inverse[sel] - start, pairs[sel, 1]]
    if not np.isfinite(out).all():
        raise NumericError("scorer returned non-finite pair scores")
    return out


def rank_summary(scorer, g, split: EdgeSplit, phase: str,
                 tie_policy: str = "pessimistic", block_size: int = 1024,
                 workers: int = 1) -> RankSummary:
    """Stream the phase's negative pool and count (above, tied) per positive.

    The scorer must expose rows(sources) -> (len(sources), n) float64.
    Block results are combined by integer addition, so counts are
    deterministic under any worker schedule.
    """
    if tie_policy not in TIE_POLICIES:
        raise ConfigError(f"unknown tie policy {tie_policy!r}")
    positives = split.positives(phase)
    pos_scores = _score_pairs(scorer, positives)

    n = split.n
    excl = excluded_codes(split, phase)
    pool = negative_pool_size(g, split, phase)

    def scan(start):
        rows = np.arange(start, min(start + block_size, n))
        block = scorer.rows(rows)
        cols = np.arange(n)
        mask = cols[None, :] > rows[:, None]
        if len(excl):
            lo = np.searchsorted(excl, rows[0] * n)
            hi = np.searchsorted(excl, (rows[-1] + 1) * n)
            eu, ev = excl[lo:hi] // n, excl[lo:hi] % n
            mask[eu - rows[0], ev] = False
        vals = block[mask]
        if not np.isfinite(vals).all():
            raise NumericError("scorer returned non-finite pool scores")
        vals.sort()
        above, tied = counts_against(vals, pos_scores)
        return above, tied, len(vals)

    starts = list(range(0, n, block_size))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(scan, starts))
    else:
        results = [scan(s) for s in starts]

    above = np.zeros(len(positives), dtype=np.int64)
    tied = np.zeros(len(positives), dtype=np.int64)
    streamed = 0
    for a, t, c in results:
        above += a
        tied += t
        streamed += c
    if streamed != pool:
        raise NumericError(
            f"streamed {streamed} pool pairs but expected {pool}")
    return RankSummary(pos_scores, above, tied, pool, tie_policy)


# -- metrics ----------------------------------------------------------------

def _sorted_order(rs: RankSummary) -> np.ndarray:
    """Positives by descending score, ties kept in input order."""
    return np.argsort(-rs.pos_scores, kind="stable")


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def precision_at_k(rs: RankSummary, k_fraction: float) -> float:
    """Fraction of the top-k globally ranked candidates that are positive.

    k = round(k_fraction * |positives|), half-up. A positive's global
    rank counts every higher-scored candidate, all tied negatives, and
    tied positives that precede it in input order.
    """
    if not 0.0 < k_fraction <= 1.0:
        raise ConfigError("k_fraction must be in (0, 1]")
    k = round_half_up(k_fraction * rs.num_positives)
    if k < 1:
        raise ConfigError(
            f"k_fraction={k_fraction} rounds to k=0 positives")
    order = _sorted_order(rs)
    ranks = (rs.neg_above[order] + rs.neg_tied[order]
             + np.arange(rs.num_positives) + 1)
    return float(np.count_nonzero(ranks <= k) / k)


def hits_at_k(rs: RankSummary, k: int) -> float:
    """Fraction of positives individually ranked above the k-th negative."""
    if k < 1:
        raise ConfigError("hits@k needs k >= 1")
    return float(np.mean(rs.neg_above + rs.neg_tied < k))


def average_precision(rs: RankSummary) -> float:
    """Mean precision at each positive, pessimistic ties.

    For a positive with i positives scoring at-or-above it (itself and
    any ties included), the precision there is i / (i + negatives at or
    above). Equals the area under the step-interpolated PR curve.
    """
    if rs.num_positives == 0:
        raise DataError("average precision needs at least one positive")
    order = _sorted_order(rs)
    s = rs.pos_scores[order]
    at_or_above = np.searchsorted(-s, -s, side="right")
    terms = at_or_above / (at_or_above + rs.neg_above[order] + rs.neg_tied[order])
    return float(np.mean(terms))


def auc(rs: RankSummary) -> float:
    """Mann-Whitney AUC with half credit for ties."""
    if rs.num_positives == 0 or rs.total_negatives == 0:
        raise DataError("AUC needs at least one positive and one negative")
    below = rs.total_negatives - rs.neg_above - rs.neg_tied
    credit = below + 0.5 * rs.neg_tied
    return float(credit.sum() / (rs.num_positives * rs.total_negatives))


def pr_curve(rs: RankSummary) -> np.ndarray:
    """(recall, precision) step points, one per distinct positive score."""
    order = _sorted_order(rs)
    s = rs.pos_scores[order]
    at_or_above = np.searchsorted(-s, -s, side="right")
    prec = at_or_above / (at_or_above + rs.neg_above[order] + rs.neg_tied[order])
    last_of_group = np.r_[s[1:] != s[:-1], True]
    recall = at_or_above / rs.num_positives
    return np.column_stack([recall[last_of_group], prec[last_of_group]])


# -- reports ------------------------------------------------------------------

@dataclass
class MetricsReport:
    ap: float
    auc: float
    prec_at: dict
    hits_at: dict
    pr_curve: np.ndarray
    biased: bool = False
    meta: dict = field(default_factory=dict)


def compute_report(rs: RankSummary, prec_fractions=(0.25, 0.5, 1.0),
                   hits_ks=(100, 1000), biased: bool = False,
                   meta: dict | None = None) -> MetricsReport:
    meta = dict(meta or {})
    meta.setdefault("tie_policy", rs.tie_policy)
    meta.setdefault("k_rounding", "half-up")
    meta.setdefault("num_positives", rs.num_positives)
    meta.setdefault("num_negatives", rs.total_negatives)
    return MetricsReport(
        ap=average_precision(rs),
        auc=auc(rs),
        prec_at={float(f): precision_at_k(rs, f) for f in prec_fractions},
        hits_at={int(k): hits_at_k(rs, k) for k in hits_ks},
        pr_curve=pr_curve(rs),
        biased=biased,
        meta=meta,
    )


def biased_sample_metrics(scorer, g, split: EdgeSplit, neg_per_pos: int,
                          seed: int, phase: str = "test",
                          prec_fractions=(0.25, 0.5, 1.0),
                          hits_ks=(100, 1000)) -> MetricsReport:
    """Metrics on a downsampled negative universe (the comparison mode).

    Samples neg_per_pos negatives per positive from the phase pool and
    ranks positives against the sampled set only. Reports are flagged
    BIASED: they overestimate performance relative to the full pool.
    """
    if neg_per_pos < 1:
        raise ConfigError("neg_per_pos must be >= 1")
    positives = split.positives(phase)
    count = neg_per_pos * len(positives)
    negatives = sample_negatives(g, split, phase, count, seed)
    pos_scores = _score_pairs(scorer, positives)
    neg_scores = np.sort(_score_pairs(scorer, negatives))
    above, tied = counts_against(neg_scores, pos_scores)
    rs = RankSummary(pos_scores, above, tied, count)
    return compute_report(rs, prec_fractions, hits_ks, biased=True,
                          meta={"neg_per_pos": neg_per_pos, "seed": seed,
                                "phase": phase})


def report_to_json(report: MetricsReport) -> str:
    payload = {
        "ap": report.ap,
        "auc": report.auc,
        "prec_at": {repr(k): v for k, v in sorted(report.prec_at.items())},
        "hits_at": {str(k): v for k, v in sorted(report.hits_at.items())},
        "biased": report.biased,
        "meta": {k: report.meta[k] for k in sorted(report.meta)},
        "pr_curve_points": len(report.pr_curve),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_pr_csv(path, report: MetricsReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("recall,precision\n")
        for rec, prec in report.pr_curve:
            fh.write(f"{rec!r},{prec!r}\n")
