"""Memory efficient kernel approximation: clustering, block Nystrom, link solves."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .clustering import cmeans_fit
from .data import as_array
from .kernels import KernelSpec, gram_block, self_similarity
from .lowrank import nystrom_block
from .model import MekaModel

STRATEGIES = ("uniform", "proportional")

# Gram matrices of the sampled factor rows above this condition number get a ridge
COND_LIMIT = 1e12
RIDGE = 1e-8

# stream tags for per-task seeds
_PART_NYSTROM, _PART_LINK = 1, 2


def distribute_ranks(strategy, cluster_sizes, k):
    """Per-cluster ranks.

    ``uniform`` gives every cluster rank ``k`` (capped at the cluster size).
    ``proportional`` gives cluster ``i`` about ``|V_i| / n * k`` with every
    rank at least 1 and at most ``|V_i|``; the ranks sum to ``k`` by
    largest-remainder rounding.
    """
    sizes = np.asarray(cluster_sizes, dtype=np.int64)
    c = len(sizes)
    if c == 0 or np.any(sizes < 1):
        raise ValueError("cluster sizes must be positive")
    if k < 1:
        raise ValueError(f"target rank must be >= 1, got {k}")
    strategy = strategy.lower()
    if strategy == "uniform":
        return [int(min(k, s)) for s in sizes]
    if strategy != "proportional":
        raise ValueError(f"unknown rank strategy {strategy!r}; expected one of {STRATEGIES}")
    if k < c:
        raise ValueError(f"proportional strategy needs k >= c, got k={k}, c={c}")
    if k > sizes.sum():
        raise ValueError(f"target rank {k} exceeds the number of points {sizes.sum()}")
    share = sizes / sizes.sum() * k
    ranks = np.floor(share).astype(np.int64)
    frac = share - ranks
    for i in np.argsort(-frac, kind="stable")[: k - ranks.sum()]:
        ranks[i] += 1
    # floor of 1 and cap at the cluster size, keeping the total fixed
    while True:
        low = np.flatnonzero(ranks < 1)
        high = np.flatnonzero(ranks > sizes)
        if low.size == 0 and high.size == 0:
            break
        if low.size:
            i = low[0]
            room = np.flatnonzero(ranks > 1)
        else:
            i = high[0]
            room = np.flatnonzero(ranks < sizes)
        donor = room[np.argmax(ranks[room] if low.size else sizes[room] - ranks[room])]
        step = 1 if low.size else -1
        ranks[i] += step
        ranks[donor] -= step
    return [int(r) for r in ranks]


def solve_offdiag_link(Qi_sub, Qj_sub, Kbar):
    """Least-squares link block ``argmin_L ||Kbar - Qi_sub L Qj_sub^T||_F``.

    Closed form ``(Qi^T Qi)^{-1} Qi^T Kbar Qj (Qj^T Qj)^{-1}``. When either
    Gram matrix is worse conditioned than ``1e12`` a ridge of
    ``1e-8 trace(Q^T Q) / k`` is added and a warning is issued.
    """
    Qi_sub = np.asarray(Qi_sub, dtype=np.float64)
    Qj_sub = np.asarray(Qj_sub, dtype=np.float64)
    Gi = _regularized_gram(Qi_sub)
    Gj = _regularized_gram(Qj_sub)
    M = Qi_sub.T @ np.asarray(Kbar, dtype=np.float64) @ Qj_sub
    left = np.linalg.solve(Gi, M)
    return np.ascontiguousarray(np.linalg.solve(Gj, left.T).T)


def _regularized_gram(Q):
    G = Q.T @ Q
    cond = np.linalg.cond(G)
    if not cond < COND_LIMIT:
        warnings.warn(f"ill-conditioned link system (cond={cond:.3g}); adding ridge", RuntimeWarning, stacklevel=3)
        G = G + RIDGE * np.trace(G) / len(G) * np.eye(len(G))
    return G


def _seed(seed, part, *ids):
    return np.random.default_rng(np.random.SeedSequence([int(seed), part, *map(int, ids)]))


def truncated_pairs(centroids, fraction):
    """Cluster pairs ``(i, j)``, ``i < j``, whose links are dropped.

    Pairs are ranked by centroid distance, farthest first, and the leading
    ``round(fraction * c(c-1)/2)`` are returned.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"truncation fraction must be in [0, 1], got {fraction}")
    c = len(centroids)
    pairs = [(i, j) for i in range(c) for j in range(i + 1, c)]
    if not pairs:
        return set()
    dist = np.array([np.linalg.norm(centroids[i] - centroids[j]) for i, j in pairs])
    order = np.argsort(-dist, kind="stable")
    count = int(math.floor(fraction * len(pairs) + 0.5))
    return {pairs[t] for t in order[:count]}


def build(X, spec: KernelSpec, c, k, strategy="uniform", truncation_fraction=0.0, seed=0,
          landmarks=None, link_samples=None, normalize=False, subset_size=None, max_iter=100,
          preprocess=()) -> MekaModel:
    """Build the block low-rank approximation of the kernel matrix of ``X``.

    Parameters
    ----------
    X : array or DataMatrix
        Preprocessed data, ``n x d``.
    spec : KernelSpec
    c : int
        Number of clusters.
    k : int
        Target rank; per cluster for ``uniform``, in total for ``proportional``.
    strategy : {"uniform", "proportional"}
    truncation_fraction : float
        Fraction of cluster pairs, farthest centroids first, whose link blocks
        are set to zero.
    seed : int
    landmarks : int, optional
        Landmarks per block; defaults to ``min(2 k_i, n_i)``.
    link_samples : int, optional
        Rows sampled per side for each link solve; defaults to ``min(2 k_i, n_i)``.
    normalize : bool
        Work with the unit-diagonal kernel ``k(x,y) / sqrt(k(x,x) k(y,y))``.
    subset_size, max_iter
        Passed to :func:`cmeans_fit`.
    preprocess : sequence of str
        Recorded in the model config; the data must already be transformed.
    """
    X = as_array(X)
    if c < 1 or k < 1:
        raise ValueError(f"need c >= 1 and k >= 1, got c={c}, k={k}")
    selfsim = self_similarity(spec, X)
    ss = selfsim if normalize else None

    assignment = cmeans_fit(X, c, subset_size=subset_size, max_iter=max_iter, seed=seed)
    ranks = distribute_ranks(strategy, assignment.sizes, k)

    blocks = []
    for i, (rows, ki) in enumerate(zip(assignment.index_sets, ranks)):
        li = min(landmarks if landmarks is not None else 2 * ki, len(rows))
        li = max(li, ki)
        b = nystrom_block(spec, X, rows, li, ki, seed=_seed(seed, _PART_NYSTROM, i), normalize=normalize, selfsim=ss)
        b.index = i
        blocks.append(b)

    dropped = truncated_pairs(assignment.centroids, truncation_fraction)
    links = {}
    for i in range(c):
        for j in range(i + 1, c):
            if (i, j) in dropped:
                continue
            bi, bj = blocks[i], blocks[j]
            rng = _seed(seed, _PART_LINK, i, j)
            si = _sample(rng, bi, link_samples)
            sj = _sample(rng, bj, link_samples)
            Kbar = gram_block(spec, X, bi.rows[si], bj.rows[sj], normalize=normalize, selfsim=ss)
            links[(i, j)] = solve_offdiag_link(bi.Q[si], bj.Q[sj], Kbar)

    config = {
        "c": int(c),
        "k": int(k),
        "strategy": strategy,
        "truncation_fraction": float(truncation_fraction),
        "truncation_rule": "centroid-distance",
        "truncated_pairs": sorted([list(p) for p in dropped]),
        "seed": int(seed),
        "landmarks": landmarks,
        "link_samples": link_samples,
        "subset_size": subset_size,
        "max_iter": int(max_iter),
        "preprocess": list(preprocess),
        "cluster_sizes": [int(s) for s in assignment.sizes],
        "ranks": [b.k for b in blocks],
        "cmeans_converged": bool(assignment.converged),
        "centroids": assignment.centroids.tolist(),
    }
    return MekaModel(spec, blocks, links, selfsim, 0.0, bool(normalize), config)


def _sample(rng, block, m):
    size = block.size
    m = min(m if m is not None else 2 * block.k, size)
    m = max(m, min(block.k, size))
    if m >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=m, replace=False))
