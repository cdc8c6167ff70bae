"""Multi-label ranking metrics: average precision, coverage error, ranking loss.

Ranks count ties against a label: ``rank(j) = #{k : s_k >= s_j}``. In ranking
loss a tied (relevant, irrelevant) pair is a violation. Instances on which a
metric is undefined are skipped and counted rather than imputed.

Every metric takes an optional boolean mask selecting which label entries of
each instance are part of the output; masked-out labels are ignored. Class
indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ShapeError, UndefinedMetricError

__all__ = [
    "MetricValues",
    "METRIC_NAMES",
    "rank_of",
    "ranks",
    "average_precision",
    "coverage_error",
    "ranking_loss",
    "evaluate",
]

METRIC_NAMES = ("average_precision", "coverage_error", "ranking_loss")

# rows per block in the N x K x K comparisons, bounds peak memory
_BLOCK = 512


def _check(scores, labels, mask=None):
    S = np.asarray(scores, dtype=np.float64)
    Y = np.asarray(labels)
    M = np.ones(S.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if S.ndim == 1:
        S, Y, M = S[None, :], Y[None, :], M[None, :]
    if not S.shape == Y.shape == M.shape or S.ndim != 2:
        raise ShapeError(
            f"scores {S.shape}, labels {Y.shape} and mask {M.shape} must be equal N x K shapes"
        )
    if not np.isfinite(S[M]).all():
        raise ValueError("scores must be finite")
    return S, Y.astype(bool), M


def rank_of(scores, j: int) -> int:
    """Rank of class ``j``: how many classes score at least as high (itself included)."""
    s = np.asarray(scores, dtype=np.float64)
    if not 0 <= j < s.size:
        raise IndexError(f"class index {j} out of range for {s.size} classes")
    return int(np.count_nonzero(s >= s[j]))


def ranks(scores, mask=None) -> np.ndarray:
    """``rank_of`` for every entry of an N x K score matrix.

    With ``mask``, only the entries where it is true take part in the count.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    M = np.ones(S.shape, dtype=bool) if mask is None else np.atleast_2d(mask).astype(bool)
    out = np.empty(S.shape, dtype=np.int64)
    for a in range(0, S.shape[0], _BLOCK):
        B = S[a:a + _BLOCK]
        ge = (B[:, None, :] >= B[:, :, None]) & M[a:a + _BLOCK, None, :]
        out[a:a + _BLOCK] = ge.sum(axis=2)
    return out


def _finish(values, skipped, name):
    if values.size == 0:
        raise UndefinedMetricError(f"{name}: every instance was skipped")
    return float(np.mean(values)), int(skipped)


# Each kernel takes scores S, relevance Y and the mask M of label entries that
# are part of the output; labels outside M are ignored entirely.


def _average_precision(S, Y, M):
    Y = Y & M
    keep = Y.any(axis=1)
    S, Y, M = S[keep], Y[keep], M[keep]
    vals = np.empty(S.shape[0])
    for a in range(0, S.shape[0], _BLOCK):
        B, L = S[a:a + _BLOCK], Y[a:a + _BLOCK]
        # ge[n, j, k] = s_k >= s_j, restricted to k in the mask
        ge = (B[:, None, :] >= B[:, :, None]) & M[a:a + _BLOCK, None, :]
        rank = ge.sum(axis=2)
        hits = (ge & L[:, None, :]).sum(axis=2)
        prec = np.where(L, hits / np.maximum(rank, 1), 0.0)
        # left-to-right over classes, so the result does not depend on
        # numpy's reduction order
        acc = np.zeros(prec.shape[0])
        for j in range(prec.shape[1]):
            acc += prec[:, j]
        vals[a:a + _BLOCK] = acc / L.sum(axis=1)
    return _finish(vals, (~keep).sum(), "average_precision")


def _coverage_error(S, Y, M):
    Y = Y & M
    keep = Y.any(axis=1)
    R = ranks(S[keep], M[keep])
    vals = np.where(Y[keep], R, 0).max(axis=1).astype(np.float64)
    return _finish(vals, (~keep).sum(), "coverage_error")


def _ranking_loss(S, Y, M):
    pos = Y & M
    neg = ~Y & M
    n_pos, n_neg = pos.sum(axis=1), neg.sum(axis=1)
    keep = (n_pos > 0) & (n_neg > 0)
    S, pos, neg = S[keep], pos[keep], neg[keep]
    n_pos, n_neg = n_pos[keep], n_neg[keep]
    vals = np.empty(S.shape[0])
    for a in range(0, S.shape[0], _BLOCK):
        B, P, Q = S[a:a + _BLOCK], pos[a:a + _BLOCK], neg[a:a + _BLOCK]
        # bad[n, r, i]: relevant r scored at or below irrelevant i
        bad = (B[:, :, None] <= B[:, None, :]) & P[:, :, None] & Q[:, None, :]
        vals[a:a + _BLOCK] = bad.sum(axis=(1, 2)) / (n_pos[a:a + _BLOCK] * n_neg[a:a + _BLOCK])
    return _finish(vals, (~keep).sum(), "ranking_loss")


def average_precision(scores, labels, mask=None) -> float:
    """Mean over instances of the label-ranking average precision (higher is better).

    ``mask`` (N x K booleans) restricts each instance to the labels it marks,
    as if the other labels did not exist.
    """
    return _average_precision(*_check(scores, labels, mask))[0]


def coverage_error(scores, labels, mask=None) -> float:
    """Mean over instances of the worst rank of a relevant label (lower is better)."""
    return _coverage_error(*_check(scores, labels, mask))[0]


def ranking_loss(scores, labels, mask=None) -> float:
    """Mean fraction of mis-ordered (relevant, irrelevant) pairs (lower is better)."""
    return _ranking_loss(*_check(scores, labels, mask))[0]


@dataclass
class MetricValues:
    """The three metrics for one set of predictions.

    A metric that is undefined for every instance is NaN (only produced by
    ``evaluate(..., strict=False)``); it serialises as None.
    """

    average_precision: float
    coverage_error: float
    ranking_loss: float
    skipped_instances: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        for name in METRIC_NAMES:
            if math.isnan(d[name]):
                d[name] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricValues":
        d = dict(d)
        for name in METRIC_NAMES:
            if d[name] is None:
                d[name] = math.nan
        return cls(**d)


def evaluate(scores, labels, mask=None, strict: bool = True) -> MetricValues:
    """All three metrics at once, with the number of skipped instances per metric.

    Passing the ``accepted`` matrix of a filtered prediction as ``mask`` scores
    only the retained label predictions of each instance. With
    ``strict=False`` a metric undefined on every instance becomes NaN instead
    of raising UndefinedMetricError.
    """
    S, Y, M = _check(scores, labels, mask)
    values, skipped = {}, {}
    for name, kernel in (
        ("average_precision", _average_precision),
        ("coverage_error", _coverage_error),
        ("ranking_loss", _ranking_loss),
    ):
        try:
            values[name], skipped[name] = kernel(S, Y, M)
        except UndefinedMetricError:
            if strict:
                raise
            values[name], skipped[name] = math.nan, S.shape[0]
    return MetricValues(**values, skipped_instances=skipped)
