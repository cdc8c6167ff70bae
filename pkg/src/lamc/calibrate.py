"""Class-wise conformal thresholds and label-wise filtering of predictions.

For every class the scores the model gives to calibration instances that
truly carry the class are collected, and the threshold is the
``k = ceil((1 - alpha)(n + 1))``-th smallest of them (clamped to ``[1, n]``).
At test time a label is kept only if its score is strictly above the
threshold of its class.

Only score matrices and label matrices enter this module; the model is
touched solely through :func:`score_matrix`, which accepts any callable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import MultiLabelDataset
from .exceptions import ConfigurationError, DatasetError, ShapeError

__all__ = [
    "ACCEPT_ALL",
    "ThresholdVector",
    "FilteredPrediction",
    "score_matrix",
    "class_score_sets",
    "collect_scores",
    "quantile_index",
    "quantile_threshold",
    "calibrate",
    "calibrate_scores",
    "filter_predictions",
    "masked_scores",
]

#: Threshold of a class without calibration positives: every score passes ``>``.
ACCEPT_ALL = -math.inf


def score_matrix(model, X) -> np.ndarray:
    """Run any score function (an MlpModel or a plain callable) on ``X``."""
    s = np.asarray(model(np.asarray(X, dtype=np.float64)), dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != len(X):
        raise ShapeError(f"score function returned shape {s.shape} for {len(X)} inputs")
    return s


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")


def class_score_sets(
    scores, labels, per_label_cap: Optional[int] = None, seed: int = 0
) -> list:
    """Per class, the scores of the instances whose true label is 1.

    With ``per_label_cap`` at most that many positives are kept per class,
    chosen uniformly with a generator seeded by ``(seed, class)``. The draws
    are nested: the sample for a smaller cap is a prefix of the sample for a
    larger one.
    """
    S = np.asarray(scores, dtype=np.float64)
    Y = np.asarray(labels)
    if S.shape != Y.shape or S.ndim != 2:
        raise ShapeError(f"scores {S.shape} and labels {Y.shape} must be equal N x K shapes")
    if per_label_cap is not None and per_label_cap < 1:
        raise ConfigurationError(f"per_label_cap must be at least 1, got {per_label_cap}")
    sets = []
    for i in range(S.shape[1]):
        rows = np.flatnonzero(Y[:, i] == 1)
        if per_label_cap is not None and rows.size > per_label_cap:
            rng = np.random.default_rng([seed, i])
            rows = rng.permutation(rows)[:per_label_cap]
        sets.append(S[rows, i])
    return sets


def collect_scores(
    model, cal: MultiLabelDataset, per_label_cap: Optional[int] = None, seed: int = 0
):
    """Score sets ``S_i`` on a calibration split; returns ``(sets, counts)``."""
    sets = class_score_sets(score_matrix(model, cal.features), cal.labels, per_label_cap, seed)
    return sets, np.array([s.size for s in sets], dtype=np.int64)


def quantile_index(n: int, alpha: float) -> int:
    """1-based order-statistic index used for a score set of size ``n`` (0 if empty)."""
    _check_alpha(alpha)
    if n == 0:
        return 0
    return min(max(math.ceil((1.0 - alpha) * (n + 1)), 1), n)


def quantile_threshold(S, alpha: float) -> float:
    """The ``quantile_index(len(S), alpha)``-th smallest element of ``S``.

    Returns ACCEPT_ALL for an empty set.
    """
    S = np.asarray(S, dtype=np.float64).ravel()
    k = quantile_index(S.size, alpha)
    if k == 0:
        return ACCEPT_ALL
    return float(np.partition(S, k - 1)[k - 1])


@dataclass(frozen=True, eq=False)
class ThresholdVector:
    """Calibrated per-class thresholds plus the data they came from.

    ``q[i]`` is ACCEPT_ALL (``-inf``) for a class with ``per_class_n[i] == 0``,
    in which case ``per_class_k[i]`` is 0.
    """

    q: np.ndarray
    alpha: float
    per_class_n: np.ndarray
    per_class_k: np.ndarray
    label_names: Optional[tuple] = None

    def __post_init__(self):
        for name in ("q", "per_class_n", "per_class_k"):
            a = np.array(getattr(self, name), dtype=np.float64 if name == "q" else np.int64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (self.q.shape == self.per_class_n.shape == self.per_class_k.shape):
            raise ShapeError("threshold metadata lengths differ")

    def __len__(self):
        return self.q.size

    @property
    def accept_all(self) -> np.ndarray:
        return self.q == ACCEPT_ALL

    @classmethod
    def accepting_all(cls, k: int, alpha: float = 0.5) -> "ThresholdVector":
        """Thresholds that reject nothing; filtering with them is the identity."""
        return cls(np.full(k, ACCEPT_ALL), alpha, np.zeros(k), np.zeros(k))

    def names(self) -> list:
        if self.label_names is not None:
            return list(self.label_names)
        return [f"label{i}" for i in range(len(self))]

    def records(self) -> list:
        """One dict per class: label_name, n_cal, k, q (float or "ACCEPT_ALL")."""
        return [
            {
                "label_name": name,
                "n_cal": int(n),
                "k": int(k),
                "q": "ACCEPT_ALL" if q == ACCEPT_ALL else float(q),
            }
            for name, n, k, q in zip(self.names(), self.per_class_n, self.per_class_k, self.q)
        ]

    def to_text(self) -> str:
        """Tab-separated report, one line per class after an ``alpha`` line and a header."""
        lines = [f"# alpha={self.alpha!r}", "label_name\tn_cal\tk\tq"]
        for r in self.records():
            q = r["q"] if isinstance(r["q"], str) else repr(r["q"])
            lines.append(f"{r['label_name']}\t{r['n_cal']}\t{r['k']}\t{q}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ThresholdVector":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# alpha="):
            raise DatasetError("threshold report must start with '# alpha='")
        alpha = float(lines[0][len("# alpha="):])
        names, n, k, q = [], [], [], []
        for ln in lines[2:]:
            name, nc, kk, qq = ln.split("\t")
            names.append(name)
            n.append(int(nc))
            k.append(int(kk))
            q.append(ACCEPT_ALL if qq == "ACCEPT_ALL" else float(qq))
        return cls(np.array(q), alpha, np.array(n), np.array(k), tuple(names))

    def __eq__(self, other):
        if not isinstance(other, ThresholdVector):
            return NotImplemented
        return (
            np.array_equal(self.q, other.q)
            and self.alpha == other.alpha
            and np.array_equal(self.per_class_n, other.per_class_n)
            and np.array_equal(self.per_class_k, other.per_class_k)
        )

    __hash__ = None


def calibrate_scores(
    scores,
    labels,
    alpha: float,
    per_label_cap: Optional[int] = None,
    seed: int = 0,
    label_names: Optional[Sequence[str]] = None,
) -> ThresholdVector:
    """Thresholds from a calibration score matrix and its true labels."""
    _check_alpha(alpha)
    sets = class_score_sets(scores, labels, per_label_cap, seed)
    n = np.array([s.size for s in sets])
    k = np.array([quantile_index(m, alpha) for m in n])
    q = np.array([quantile_threshold(s, alpha) for s in sets])
    empty = np.flatnonzero(n == 0)
    if empty.size:
        warnings.warn(
            f"{empty.size} class(es) have no calibration positives and accept everything: "
            f"{empty.tolist()}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ThresholdVector(q, alpha, n, k, None if label_names is None else tuple(label_names))


def calibrate(
    model,
    cal: MultiLabelDataset,
    alpha: float = 0.5,
    per_label_cap: Optional[int] = None,
    seed: int = 0,
) -> ThresholdVector:
    """Per-class thresholds for ``model`` (MlpModel or any score callable) on ``cal``."""
    _check_alpha(alpha)
    return calibrate_scores(
        score_matrix(model, cal.features), cal.labels, alpha, per_label_cap, seed, cal.label_names
    )


@dataclass(frozen=True, eq=False)
class FilteredPrediction:
    scores: np.ndarray
    accepted: np.ndarray


def filter_predictions(thresholds: ThresholdVector, scores) -> FilteredPrediction:
    """Accept label i where ``scores[..., i] > q[i]``; works on a vector or an N x K matrix."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1:] != thresholds.q.shape:
        raise ShapeError(f"scores have {s.shape[-1:]} classes, thresholds have {len(thresholds)}")
    return FilteredPrediction(s, s > thresholds.q)


def masked_scores(fp: FilteredPrediction) -> np.ndarray:
    """Scores with every rejected entry set to 0.0."""
    return np.where(fp.accepted, fp.scores, 0.0)
