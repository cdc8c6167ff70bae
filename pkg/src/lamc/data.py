"""Multi-label datasets: validation, CSV I/O, splitting, single-positive views
and a synthetic generator.

The on-disk format is a dense CSV whose first line is ``#labels=K``; each
following line holds ``d`` feature values followed by ``K`` label bits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, DatasetError, EmptyViewError, ParseError

logger = logging.getLogger(__name__)

__all__ = [
    "MultiLabelDataset",
    "SinglePositiveView",
    "SplitSpec",
    "Splits",
    "load_dataset",
    "save_dataset",
    "split",
    "project_single_positive",
    "generate_synthetic",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    """Dense features (N x d) with a fully observed binary label matrix (N x K).

    Arrays are copied and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: Optional[tuple] = None
    label_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        Y = np.asarray(self.labels)
        if X.ndim != 2 or Y.ndim != 2:
            raise DatasetError(
                f"features and labels must be 2-D, got {X.ndim}-D and {Y.ndim}-D"
            )
        if X.shape[0] != Y.shape[0]:
            raise DatasetError(
                f"features have {X.shape[0]} rows but labels have {Y.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError("need at least one instance and one feature")
        if Y.shape[1] < 2:
            raise DatasetError(f"need at least 2 labels, got {Y.shape[1]}")
        bad = ~np.isin(Y, (0, 1))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DatasetError(f"label at row {r}, column {c} is {Y[r, c]!r}, not 0 or 1")
        if not np.isfinite(X).all():
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"feature at row {r}, column {c} is not finite")
        for name, names, size in (
            ("feature_names", self.feature_names, X.shape[1]),
            ("label_names", self.label_names, Y.shape[1]),
        ):
            if names is not None and len(names) != size:
                raise DatasetError(f"{name} has {len(names)} entries, expected {size}")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(Y.astype(np.int8)))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    def __len__(self):
        return self.n_instances

    def subset(self, rows) -> "MultiLabelDataset":
        """Rows ``rows`` (indices or mask) as a new dataset, names kept."""
        rows = np.asarray(rows)
        return MultiLabelDataset(
            self.features[rows], self.labels[rows], self.feature_names, self.label_names
        )

    def cardinality(self) -> float:
        """Mean number of positive labels per instance."""
        return float(self.labels.sum(axis=1).mean())

    def __eq__(self, other):
        if not isinstance(other, MultiLabelDataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.feature_names == other.feature_names
            and self.label_names == other.label_names
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SinglePositiveView:
    """Training view with one observed positive label per instance.

    ``positive_index`` is 0-based. ``n_dropped`` counts instances of the source
    split that had no positive label and were left out of ``base``.
    """

    base: MultiLabelDataset
    positive_index: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        p = np.asarray(self.positive_index, dtype=np.intp)
        if p.shape != (self.base.n_instances,):
            raise DatasetError(
                f"positive_index has shape {p.shape}, expected ({self.base.n_instances},)"
            )
        if (p < 0).any() or (p >= self.base.n_labels).any():
            raise DatasetError("positive_index out of range")
        if not (self.base.labels[np.arange(p.size), p] == 1).all():
            raise DatasetError("positive_index selects a label that is not positive")
        object.__setattr__(self, "positive_index", _frozen(p))

    def __len__(self):
        return self.base.n_instances

    def onehot(self) -> np.ndarray:
        """The observed single-positive labels as an N x K 0/1 float matrix."""
        out = np.zeros(self.base.labels.shape)
        out[np.arange(len(self)), self.positive_index] = 1.0
        return out


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for the train / calibration / validation / test partition."""

    train_frac: float = 0.7
    cal_frac: float = 0.1
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if any(f < 0 for f in fr):
            raise ConfigurationError(f"split fractions must be nonnegative, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions sum to {sum(fr)!r}, not 1")

    @property
    def fractions(self) -> tuple:
        return (self.train_frac, self.cal_frac, self.val_frac, self.test_frac)


@dataclass(frozen=True)
class Splits:
    train: MultiLabelDataset
    cal: Optional[MultiLabelDataset]
    val: Optional[MultiLabelDataset]
    test: Optional[MultiLabelDataset]
    indices: dict = field(default_factory=dict, compare=False, repr=False)


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------


def load_dataset(path, format: str = "dense-csv") -> MultiLabelDataset:
    """Read a dense-CSV multi-label dataset.

    Raises ParseError (with the 1-based line number) for malformed rows and
    DatasetError for labels outside {0, 1} or non-finite features.
    """
    if format != "dense-csv":
        raise ConfigurationError(f"unsupported dataset format {format!r}")
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: file is empty")
    header = lines[0].strip()
    if not header.startswith("#labels="):
        raise ParseError(f"{path}: expected '#labels=K' header, got {header!r}", line=1)
    try:
        k = int(header[len("#labels="):])
    except ValueError:
        raise ParseError(f"{path}: bad label count in header {header!r}", line=1) from None
    if k < 2:
        raise ParseError(f"{path}: need at least 2 labels, header says {k}", line=1)
    rows = lines[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    width = None
    feats, labs = [], []
    for lineno, line in enumerate(rows, start=2):
        cells = line.split(",")
        if width is None:
            width = len(cells)
            if width <= k:
                raise ParseError(
                    f"{path}: row has {width} columns, need more than {k} labels", line=lineno
                )
        elif len(cells) != width:
            raise ParseError(
                f"{path}: expected {width} columns, got {len(cells)}", line=lineno
            )
        try:
            x = [float(c) for c in cells[:-k]]
        except ValueError as e:
            raise ParseError(f"{path}: {e}", line=lineno) from None
        bits = []
        for j, c in enumerate(cells[-k:]):
            c = c.strip()
            if c not in ("0", "1"):
                raise DatasetError(
                    f"{path}: line {lineno} (data row {lineno - 1}), label column {j}: "
                    f"value {c!r} is not 0 or 1"
                )
            bits.append(int(c))
        if not all(math.isfinite(v) for v in x):
            raise DatasetError(f"{path}: line {lineno}: non-finite feature value")
        feats.append(x)
        labs.append(bits)
    return MultiLabelDataset(np.array(feats), np.array(labs, dtype=np.int8))


def save_dataset(ds: MultiLabelDataset, path) -> None:
    """Write ``ds`` in the dense-CSV format; ``load_dataset`` reads it back exactly.

    The format has no place for feature or label names, so they are not written.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#labels={ds.n_labels}\n")
        for x, y in zip(ds.features, ds.labels):
            # repr() of a Python float is the shortest string that round-trips
            fh.write(",".join([repr(float(v)) for v in x] + [str(int(b)) for b in y]))
            fh.write("\n")


# --------------------------------------------------------------------------
# Splitting and single-positive projection
# --------------------------------------------------------------------------


_SPLIT_NAMES = ("train", "cal", "val", "test")


def split(ds: MultiLabelDataset, spec: SplitSpec) -> Splits:
    """Seeded disjoint partition of the rows of ``ds``.

    Calibration, validation and test receive ``floor(frac * N)`` rows each,
    train gets the rest. A zero fraction yields None for that split.
    """
    n = ds.n_instances
    sizes = {}
    for name, frac in zip(_SPLIT_NAMES[1:], spec.fractions[1:]):
        # the small slack keeps e.g. 0.29 * 100 from flooring to 28
        sizes[name] = int(math.floor(frac * n + 1e-9))
    sizes["train"] = n - sum(sizes.values())
    for name, frac in zip(_SPLIT_NAMES, spec.fractions):
        if frac > 0 and sizes[name] < 1:
            raise ConfigurationError(
                f"{name} fraction {frac} yields 0 of {n} instances"
            )

    perm = np.random.default_rng(spec.seed).permutation(n)
    out, indices, start = {}, {}, 0
    for name in _SPLIT_NAMES:
        idx = np.sort(perm[start:start + sizes[name]])
        start += sizes[name]
        indices[name] = idx
        out[name] = ds.subset(idx) if idx.size else None
    if out["train"] is None:
        raise ConfigurationError("train split is empty")
    return Splits(**out, indices=indices)


def project_single_positive(ds: MultiLabelDataset, seed: int = 0) -> SinglePositiveView:
    """Keep one uniformly chosen positive label per instance.

    Instances without any positive label are dropped; their number is stored
    in ``n_dropped`` and logged.
    """
    counts = ds.labels.sum(axis=1)
    keep = counts > 0
    n_dropped = int((~keep).sum())
    if not keep.any():
        raise EmptyViewError("no instance has a positive label")
    if n_dropped:
        logger.info("dropped %d of %d instances without positive labels", n_dropped, len(ds))
    base = ds.subset(np.flatnonzero(keep)) if n_dropped else ds

    rng = np.random.default_rng(seed)
    c = counts[keep]
    # pick the r-th positive of each row, r uniform in [0, count)
    r = rng.integers(0, c)
    order = np.cumsum(base.labels, axis=1)
    chosen = np.argmax(order > r[:, None], axis=1)
    return SinglePositiveView(base, chosen, n_dropped)


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------


def generate_synthetic(
    n: int,
    d: int,
    k: int,
    cardinality: float = 2.0,
    noise: float = 0.0,
    seed: int = 0,
    separation: float = 3.0,
    feature_std: float = 1.0,
) -> MultiLabelDataset:
    """Gaussian-prototype multi-label data.

    Each class c has a prototype ``mu_c ~ N(0, separation^2 I_d / d)``. An
    instance draws ``1 + Binomial(k - 1, (cardinality - 1) / (k - 1))``
    distinct labels uniformly, so the expected cardinality equals
    ``cardinality``; its features are the sum of the prototypes of its labels
    plus isotropic Gaussian noise. With probability ``noise`` the features are
    instead drawn around the prototype of one class the instance does not
    carry, which makes the labels inconsistent with the features.
    """
    if n < 1 or d < 1:
        raise ConfigurationError("n and d must be positive")
    if k < 2:
        raise ConfigurationError(f"need k >= 2, got {k}")
    if not 1 <= cardinality <= k:
        raise ConfigurationError(f"cardinality must lie in [1, {k}], got {cardinality}")
    if not 0 <= noise < 1:
        raise ConfigurationError(f"noise must lie in [0, 1), got {noise}")

    rng = np.random.default_rng(seed)
    protos = rng.normal(0.0, separation / math.sqrt(d), size=(k, d))

    extra = rng.binomial(k - 1, (cardinality - 1) / (k - 1), size=n)
    # ranking i.i.d. uniforms gives a uniformly random label subset per row
    order = np.argsort(rng.random((n, k)), axis=1)
    Y = np.zeros((n, k), dtype=np.int8)
    rows = np.arange(n)
    for j in range(k):
        on = extra + 1 > j
        Y[rows[on], order[on, j]] = 1

    X = Y @ protos + rng.normal(0.0, feature_std, size=(n, d))

    flip = rng.random(n) < noise
    for i in np.flatnonzero(flip):
        others = np.flatnonzero(Y[i] == 0)
        if others.size == 0:
            others = np.arange(k)
        c = rng.choice(others)
        X[i] = protos[c] + rng.normal(0.0, feature_std, size=d)

    return MultiLabelDataset(
        X,
        Y,
        feature_names=tuple(f"x{i}" for i in range(d)),
        label_names=tuple(f"label{j}" for j in range(k)),
    )
