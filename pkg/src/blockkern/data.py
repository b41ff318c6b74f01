"""Dataset loading, preprocessing chains and synthetic blobs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import project_unit_sphere

STEPS = ("minmax", "zscore", "l2")

# center box and spread of the synthetic generator; recorded in metadata
BLOB_BOX = 10.0
BLOB_SPREAD = 1.0

DEFAULT_PREPROCESS = {
    "rbf": ("minmax",),
    "tl1": ("minmax",),
    "poly": ("l2",),
    "elm": ("zscore", "l2"),
}


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class DataMatrix:
    """An ``n x d`` sample matrix with optional integer labels."""

    values: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("data contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.n,):
                raise ValueError(f"expected {self.n} labels, got {self.labels.shape}")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return DataMatrix(self.values[idx], labels, dict(self.meta))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_array(X) -> np.ndarray:
    """Plain float64 array view of a ``DataMatrix`` or array-like."""
    if isinstance(X, DataMatrix):
        return X.values
    return np.asarray(X, dtype=np.float64)


def _label(token, where):
    try:
        v = float(token)
    except ValueError:
        raise DataFormatError(f"{where}: non-numeric label {token!r}") from None
    return int(v) if v.is_integer() else v


def load_libsvm(path) -> DataMatrix:
    """Read a LIBSVM sparse text file into a dense ``DataMatrix``.

    Feature indices are 1-based and must be strictly ascending within a line.
    The dimension is the largest index seen; absent features are zero.
    """
    labels, rows = [], []
    d = 0
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            where = f"{path}:{lineno}"
            labels.append(_label(tokens[0], where))
            idx, val = [], []
            last = 0
            for tok in tokens[1:]:
                key, sep, value = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"{where}: malformed feature {tok!r}")
                try:
                    j, v = int(key), float(value)
                except ValueError:
                    raise DataFormatError(f"{where}: malformed feature {tok!r}") from None
                if j < 1:
                    raise DataFormatError(f"{where}: feature index {j} is not 1-based")
                if j <= last:
                    raise DataFormatError(f"{where}: feature indices not ascending ({last} then {j})")
                last = j
                idx.append(j - 1)
                val.append(v)
            d = max(d, last)
            rows.append((idx, val))
    if not rows:
        raise DataFormatError(f"{path}: no samples")
    if d == 0:
        raise DataFormatError(f"{path}: no features")
    values = np.zeros((len(rows), d))
    for i, (idx, val) in enumerate(rows):
        values[i, idx] = val
    return DataMatrix(values, np.asarray(labels), {"source": str(path), "format": "libsvm"})


def save_libsvm(X, path, labels=None):
    """Write ``X`` in LIBSVM format. Zeros are omitted; floats round-trip exactly."""
    values = as_array(X)
    if labels is None:
        labels = X.labels if isinstance(X, DataMatrix) and X.labels is not None else np.zeros(len(values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab, row in zip(labels, values):
            nz = np.flatnonzero(row)
            feats = " ".join(f"{j + 1}:{float(row[j])!r}" for j in nz)
            fh.write(f"{lab} {feats}".rstrip() + "\n")


def load_csv(path, has_labels=False) -> DataMatrix:
    """Read a rectangular numeric CSV; with ``has_labels`` the last column is the label."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    rows = []
    width = None
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        if width is None:
            width = len(rec)
        elif len(rec) != width:
            raise DataFormatError(f"{path}: row {lineno} has {len(rec)} columns, expected {width}")
        try:
            rows.append([float(c) for c in rec])
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric cell in row {lineno}") from None
    if not rows:
        raise DataFormatError(f"{path}: no samples")
    arr = np.asarray(rows)
    meta = {"source": str(path), "format": "csv"}
    if has_labels:
        if arr.shape[1] < 2:
            raise DataFormatError(f"{path}: need at least one feature besides the label")
        y = arr[:, -1]
        y = y.astype(np.int64) if np.all(y == np.round(y)) else y
        return DataMatrix(arr[:, :-1], y, meta)
    return DataMatrix(arr, None, meta)


def load(path, has_labels=None) -> DataMatrix:
    """Load by extension: ``.csv``/``.data`` as CSV (labels last by default), else LIBSVM."""
    suffix = Path(path).suffix.lower()
    if suffix in (".csv", ".data", ".txt") and _looks_dense(path):
        return load_csv(path, has_labels=True if has_labels is None else has_labels)
    return load_libsvm(path)


def _looks_dense(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                return ":" not in line
    return True


def make_blobs(n, d, clusters, spread=BLOB_SPREAD, seed=0) -> DataMatrix:
    """Isotropic Gaussian blobs around centers drawn uniformly from ``[-10, 10]^d``.

    Samples are split as evenly as possible (earlier blobs take the remainder)
    and shuffled. Labels give the generating blob.
    """
    if clusters < 1 or n < clusters or d < 1:
        raise ValueError(f"invalid blob configuration n={n}, d={d}, clusters={clusters}")
    if spread < 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-BLOB_BOX, BLOB_BOX, size=(clusters, d))
    sizes = np.full(clusters, n // clusters)
    sizes[: n % clusters] += 1
    labels = np.repeat(np.arange(clusters), sizes)
    values = centers[labels] + spread * rng.standard_normal((n, d))
    order = rng.permutation(n)
    meta = {
        "source": "blobs",
        "n": n,
        "d": d,
        "clusters": clusters,
        "spread": spread,
        "box": BLOB_BOX,
        "seed": seed,
        "centers": centers,
    }
    return DataMatrix(values[order], labels[order], meta)


def parse_steps(spec) -> tuple:
    """Normalize a preprocessing chain given as a comma string or sequence."""
    if spec is None:
        return ()
    if isinstance(spec, str):
        spec = [s for s in spec.replace("+", ",").split(",") if s.strip()]
    aliases = {"minmax": "minmax", "minmaxunit": "minmax", "zscore": "zscore",
               "l2": "l2", "l2rownormalize": "l2", "none": ""}
    steps = []
    for s in spec:
        key = aliases.get(s.strip().lower().replace("_", "").replace("-", ""))
        if key is None:
            raise ValueError(f"unknown preprocessing step {s!r}; expected one of {STEPS}")
        if key:
            steps.append(key)
    return tuple(steps)


@dataclass
class FittedPreprocess:
    """A preprocessing chain with its per-column statistics frozen.

    Applying ``transform`` to new points reproduces the training-time mapping,
    which out-of-sample queries need.
    """

    steps: tuple
    params: list

    def transform(self, X):
        Y = np.atleast_2d(as_array(X)).astype(np.float64, copy=True)
        for step, p in zip(self.steps, self.params):
            if step == "l2":
                Y = project_unit_sphere(Y)
            else:
                shift, scale = p
                Y = np.divide(Y - shift, scale, out=np.zeros_like(Y), where=scale > 0)
        return Y


def fit_preprocess(X, steps) -> FittedPreprocess:
    steps = parse_steps(steps)
    Y = as_array(X).astype(np.float64, copy=True)
    params = []
    for step in steps:
        if step == "minmax":
            lo = Y.min(axis=0)
            span = Y.max(axis=0) - lo
            p = (lo, span)
        elif step == "zscore":
            p = (Y.mean(axis=0), Y.std(axis=0))
        else:
            p = None
        params.append(p)
        Y = FittedPreprocess((step,), [p]).transform(Y)
    return FittedPreprocess(steps, params)


def preprocess(X, steps):
    """Apply a preprocessing chain in order.

    ``minmax`` maps every column to ``[0, 1]`` (constant columns to 0),
    ``zscore`` standardizes columns (constant columns to 0) and ``l2``
    projects rows onto the unit sphere. Returns the same container type
    it was given.
    """
    Y = fit_preprocess(X, steps).transform(X)
    if isinstance(X, DataMatrix):
        meta = dict(X.meta, preprocess=list(parse_steps(steps)))
        return DataMatrix(Y, X.labels, meta)
    return Y


def subsample(X, m, seed=0):
    """Uniform subsample of ``m`` rows without replacement (identity if ``m >= n``)."""
    n = X.n if isinstance(X, DataMatrix) else len(X)
    if m is None or m >= n:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))
    return X.subset(idx) if isinstance(X, DataMatrix) else np.asarray(X)[idx]
