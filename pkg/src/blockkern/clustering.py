"""Lloyd's c-means on a random subset, used to expose block structure."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data import as_array

MOVE_TOL = 1e-6


@dataclass
class ClusterAssignment:
    """Result of :func:`cmeans_fit`.

    ``index_sets[i]`` holds the ascending global row indices of cluster ``i``;
    ``permutation`` is their concatenation, so ``X[permutation]`` is the
    cluster-ordered data.
    """

    centroids: np.ndarray
    labels: np.ndarray
    index_sets: list
    objective: list = field(default_factory=list)
    converged: bool = True

    @property
    def c(self):
        return len(self.index_sets)

    @property
    def n(self):
        return len(self.labels)

    @property
    def permutation(self):
        return np.concatenate(self.index_sets)

    @property
    def inverse_permutation(self):
        perm = self.permutation
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return inv

    @property
    def sizes(self):
        return np.array([len(s) for s in self.index_sets])

    @classmethod
    def from_labels(cls, labels, centroids):
        labels = np.asarray(labels, dtype=np.intp)
        c = len(centroids)
        sets = [np.flatnonzero(labels == i) for i in range(c)]
        return cls(np.asarray(centroids, dtype=np.float64), labels, sets)

    def check(self):
        """Assert the partition invariants; returns ``self`` for chaining."""
        perm = self.permutation
        if len(perm) != self.n or not np.array_equal(np.sort(perm), np.arange(self.n)):
            raise AssertionError("index sets do not partition 0..n-1")
        if any(len(s) == 0 for s in self.index_sets):
            raise AssertionError("empty cluster")
        return self


def nearest(X, centroids):
    """Index of the nearest centroid per row; ties go to the lower index."""
    D = cdist(X, centroids, "sqeuclidean")
    return np.argmin(D, axis=1), D


def _lloyd(S, C, max_iter):
    """Lloyd iterations on subset ``S`` from initial centroids ``C``."""
    c = len(C)
    objective = []
    converged = False
    for _ in range(max_iter):
        lab, D = nearest(S, C)
        objective.append(float(D[np.arange(len(S)), lab].sum()))
        new = C.copy()
        counts = np.bincount(lab, minlength=c)
        for i in np.flatnonzero(counts):
            new[i] = S[lab == i].mean(axis=0)
        for i in np.flatnonzero(counts == 0):
            # re-seed an empty cluster at the subset point farthest from its centroid
            _, D = nearest(S, new)
            far = int(np.argmax(D.min(axis=1)))
            new[i] = S[far]
        move = np.max(np.linalg.norm(new - C, axis=1))
        C = new
        if move < MOVE_TOL:
            converged = True
            break
    lab, D = nearest(S, C)
    objective.append(float(D[np.arange(len(S)), lab].sum()))
    return C, objective, converged


def _repair_empty(X, labels, C):
    """Move the worst-fitting point of a multi-member cluster into each empty cluster."""
    c = len(C)
    for i in range(c):
        if np.any(labels == i):
            continue
        counts = np.bincount(labels, minlength=c)
        d = np.linalg.norm(X - C[labels], axis=1)
        d[counts[labels] < 2] = -np.inf
        j = int(np.argmax(d))
        labels[j] = i
    return labels


def default_subset_size(n, c):
    return int(min(n, np.ceil(20 * c * np.sqrt(n))))


def cmeans_fit(X, c, subset_size=None, max_iter=100, seed=0) -> ClusterAssignment:
    """Cluster ``X`` into ``c`` groups.

    Lloyd's algorithm runs on a uniformly sampled subset of ``subset_size``
    rows (default ``min(n, 20 c sqrt(n))``), initialised at ``c`` distinct
    subset points; every row is then assigned to its nearest centroid.
    """
    X = as_array(X)
    n = len(X)
    if c < 1:
        raise ValueError(f"number of clusters must be >= 1, got {c}")
    if c > n:
        raise ValueError(f"number of clusters {c} exceeds number of points {n}")
    if subset_size is None:
        subset_size = default_subset_size(n, c)
    if subset_size < c:
        raise ValueError(f"subset size {subset_size} smaller than number of clusters {c}")
    rng = np.random.default_rng(seed)
    m = min(subset_size, n)
    sub = np.sort(rng.choice(n, size=m, replace=False)) if m < n else np.arange(n)
    S = X[sub]
    init = rng.choice(m, size=c, replace=False)
    C, objective, converged = _lloyd(S, S[init].copy(), max_iter)

    labels, _ = nearest(X, C)
    labels = _repair_empty(X, labels, C)
    out = ClusterAssignment.from_labels(labels, C)
    out.objective = objective
    out.converged = converged
    return out.check()


def permute_rows(X, assignment: ClusterAssignment):
    """Rows of ``X`` in cluster order."""
    X = as_array(X)
    if len(X) != assignment.n:
        raise ValueError(f"assignment covers {assignment.n} rows, data has {len(X)}")
    return X[assignment.permutation]


def unpermute_rows(Xp, assignment: ClusterAssignment):
    """Inverse of :func:`permute_rows`."""
    Xp = np.asarray(Xp)
    if len(Xp) != assignment.n:
        raise ValueError(f"assignment covers {assignment.n} rows, data has {len(Xp)}")
    return Xp[assignment.inverse_permutation]
