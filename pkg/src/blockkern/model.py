"""The trained block factorization and everything that can be done with it.

The implied matrix is

    K~ = P (Q L Q^T) P^T + lambda_shift I

with ``Q`` the direct sum of the per-cluster factors, ``L`` the symmetric link
matrix (sign vectors on the diagonal, dense or absent off-diagonal blocks) and
``P`` the scatter from cluster order back to the original row order. Nothing
of size ``n x n`` is formed except in :func:`reconstruct_dense`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import as_array
from .kernels import KernelSpec, cross, gram_block, self_similarity

# dense oracles refuse beyond this size
DENSE_LIMIT = 12000


@dataclass
class MekaModel:
    """Block low-rank kernel approximation.

    ``links`` maps an ordered pair ``(i, j)`` with ``i < j`` to the dense
    ``k_i x k_j`` block ``L^{i,j}``; the ``(j, i)`` block is its transpose
    and truncated pairs are simply missing.
    """

    spec: KernelSpec
    blocks: list
    links: dict
    self_similarities: np.ndarray
    lambda_shift: float = 0.0
    normalize: bool = False
    config: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.self_similarities)

    @property
    def c(self):
        return len(self.blocks)

    @property
    def ranks(self):
        return [b.k for b in self.blocks]

    @property
    def total_rank(self):
        return int(sum(self.ranks))

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.ranks)])

    @property
    def permutation(self):
        return np.concatenate([b.rows for b in self.blocks])

    def link_block(self, i, j):
        """``L^{i,j}`` as a dense array (zeros when truncated)."""
        if i == j:
            return np.diag(self.blocks[i].signs)
        if i < j:
            B = self.links.get((i, j))
            return np.zeros((self.blocks[i].k, self.blocks[j].k)) if B is None else B
        return self.link_block(j, i).T

    def link_matrix(self):
        """Dense ``L``; size ``(sum k_i)^2``."""
        return np.block([[self.link_block(i, j) for j in range(self.c)] for i in range(self.c)])

    def with_shift(self, lambda_shift):
        return replace(self, lambda_shift=float(lambda_shift), config=dict(self.config))


def _apply_link(model: MekaModel, z):
    """``w = L z`` for a list of per-block coefficient vectors (or matrices)."""
    w = [b.signs.reshape((-1,) + (1,) * (zi.ndim - 1)) * zi for b, zi in zip(model.blocks, z)]
    for (i, j), B in model.links.items():
        w[i] = w[i] + B @ z[j]
        w[j] = w[j] + B.T @ z[i]
    return w


def matvec(model: MekaModel, x) -> np.ndarray:
    """``K~ x`` in ``O(n k_max + (sum k_i)^2)`` operations."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n,):
        raise ValueError(f"expected a vector of length {model.n}, got shape {x.shape}")
    z = [b.Q.T @ x[b.rows] for b in model.blocks]
    w = _apply_link(model, z)
    y = np.empty(model.n)
    for b, wi in zip(model.blocks, w):
        y[b.rows] = b.Q @ wi
    if model.lambda_shift:
        y += model.lambda_shift * x
    return y


def as_operator(model: MekaModel):
    """The model as a ``scipy.sparse.linalg.LinearOperator``."""
    from scipy.sparse.linalg import LinearOperator

    return LinearOperator((model.n, model.n), matvec=lambda v: matvec(model, np.ravel(v)), dtype=np.float64)


def rows(model: MekaModel, idx) -> np.ndarray:
    """Rows ``idx`` of the implied matrix, shape ``(len(idx), n)``."""
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    where = np.empty(model.n, dtype=np.intp)
    local = np.empty(model.n, dtype=np.intp)
    for i, b in enumerate(model.blocks):
        where[b.rows] = i
        local[b.rows] = np.arange(b.size)
    out = np.zeros((len(idx), model.n))
    for i, b in enumerate(model.blocks):
        sel = np.flatnonzero(where[idx] == i)
        if sel.size == 0:
            continue
        Qsel = b.Q[local[idx[sel]]]
        for j, bj in enumerate(model.blocks):
            out[np.ix_(sel, bj.rows)] = (Qsel @ model.link_block(i, j)) @ bj.Q.T
    if model.lambda_shift:
        out[np.arange(len(idx)), idx] += model.lambda_shift
    return out


def reconstruct_dense(model: MekaModel) -> np.ndarray:
    """The implied matrix as a dense symmetric array. Oracle use only."""
    if model.n > DENSE_LIMIT:
        raise MemoryError(f"n={model.n} exceeds the dense limit {DENSE_LIMIT}; subsample first")
    return rows(model, np.arange(model.n))


def rel_error(K, K_approx) -> float:
    """Relative Frobenius error ``||K - K_approx||_F / ||K||_F``."""
    K = np.asarray(K, dtype=np.float64)
    K_approx = np.asarray(K_approx, dtype=np.float64)
    if K.shape != K_approx.shape:
        raise ValueError(f"shape mismatch: {K.shape} vs {K_approx.shape}")
    ref = np.linalg.norm(K)
    if ref == 0:
        raise ZeroDivisionError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(K - K_approx) / ref)


def rel_error_streamed(model: MekaModel, X, chunk=512):
    """Relative Frobenius error against the exact kernel, computed in row chunks.

    Never holds more than ``chunk x n`` entries of either matrix. Returns
    ``(rel_error, err_norm, ref_norm)``.
    """
    X = as_array(X)
    all_idx = np.arange(model.n)
    selfsim = model.self_similarities if model.normalize else None
    err2 = ref2 = 0.0
    for start in range(0, model.n, chunk):
        idx = all_idx[start:start + chunk]
        K = gram_block(model.spec, X, idx, all_idx, normalize=model.normalize, selfsim=selfsim)
        D = K - rows(model, idx)
        err2 += float(np.sum(D * D))
        ref2 += float(np.sum(K * K))
    if ref2 == 0:
        raise ZeroDivisionError("reference matrix has zero Frobenius norm")
    return float(np.sqrt(err2 / ref2)), float(np.sqrt(err2)), float(np.sqrt(ref2))


def _query_self(model, x):
    s = self_similarity(model.spec, x[None, :])[0]
    if model.normalize and not s > 0:
        raise ValueError("non-positive self-similarity for the query point")
    return s


def oos_direct(model: MekaModel, x_new, support_idx, X_train) -> np.ndarray:
    """Exact kernel values between a new point and training points ``support_idx``.

    ``x_new`` must already be preprocessed like the training data. Entries are
    normalized when the model was built on a normalized kernel; the shift is
    never added here (see :func:`oos_self_similarity`).
    """
    x = np.asarray(x_new, dtype=np.float64).reshape(-1)
    Xt = as_array(X_train)
    idx = np.asarray(support_idx, dtype=np.intp).reshape(-1)
    row = cross(model.spec, x[None, :], Xt[idx])[0]
    if model.normalize:
        s = model.self_similarities[idx]
        if np.any(~(s > 0)):
            raise ValueError(f"non-positive self-similarity at index {int(idx[np.argmin(s > 0)])}")
        row = row / (np.sqrt(_query_self(model, x)) * np.sqrt(s))
    return row


def oos_self_similarity(model: MekaModel, x_new) -> float:
    """``k(x', x')`` of a new point as seen by the (shift-corrected) model."""
    x = np.asarray(x_new, dtype=np.float64).reshape(-1)
    s = 1.0 if model.normalize else _query_self(model, x)
    return float(s + model.lambda_shift)


def oos_block(model: MekaModel, x_new) -> int:
    """Index of the block a new point belongs to, by nearest stored centroid."""
    if model.c == 1:
        return 0
    C = model.config.get("centroids")
    if C is None:
        raise ValueError("model config carries no centroids")
    x = np.asarray(x_new, dtype=np.float64).reshape(-1)
    return int(np.argmin(np.sum((np.asarray(C) - x) ** 2, axis=1)))


def oos_indirect(model: MekaModel, x_new) -> np.ndarray:
    """Extended factor row ``q'`` of a new point, length ``sum k_i``.

    The point joins the block of its nearest centroid, just as a training
    row owns a factor row only in its own block. The kernel values between
    ``x_new`` and that block's landmarks are mapped through the stored
    eigenvectors and inverse square roots; the other blocks stay zero.
    """
    x = np.asarray(x_new, dtype=np.float64).reshape(-1)
    for b in model.blocks:
        if b.U is None or b.inv_sqrt is None or b.landmark_points is None:
            raise ValueError(f"block {b.index} carries no landmark cache")
    i = oos_block(model, x)
    b = model.blocks[i]
    v = cross(model.spec, x[None, :], b.landmark_points)[0]
    if model.normalize:
        v = v / (np.sqrt(_query_self(model, x)) * np.sqrt(model.self_similarities[b.landmarks]))
    q = np.zeros(model.offsets[-1])
    q[model.offsets[i]:model.offsets[i + 1]] = b.map_landmark_row(v)
    return q


def oos_indirect_similarities(model: MekaModel, q) -> np.ndarray:
    """Similarities ``q' L Q^T`` of an extended row to every training point (original order)."""
    q = np.asarray(q, dtype=np.float64)
    off = model.offsets
    if q.shape != (off[-1],):
        raise ValueError(f"expected an extended row of length {off[-1]}, got {q.shape}")
    w = _apply_link(model, [q[off[i]:off[i + 1]] for i in range(model.c)])
    out = np.empty(model.n)
    for b, wi in zip(model.blocks, w):
        out[b.rows] = b.Q @ wi
    return out


def memory_report(model: MekaModel) -> dict:
    """Count the stored reals of the model relative to a dense ``n x n`` kernel."""
    blocks = sum(b.stored_floats() for b in model.blocks)
    links = sum(B.size for B in model.links.values())
    floats = blocks + links + model.self_similarities.size + 1
    indices = sum(b.rows.size + b.landmarks.size for b in model.blocks)
    return {
        "stored_floats": int(floats),
        "stored_indices": int(indices),
        "factor_floats": int(sum(b.Q.size for b in model.blocks)),
        "link_floats": int(links + sum(b.signs.size for b in model.blocks)),
        "cache_floats": int(sum(b.U.size + b.inv_sqrt.size + b.landmark_points.size for b in model.blocks)),
        "ratio_vs_dense": floats / float(model.n) ** 2,
    }


def memory_budget(model: MekaModel) -> int:
    """Upper bound ``n k_max + (sum k_i)^2 + 3n + c (2 k_max)^2`` on the stored floats."""
    kmax = max(model.ranks)
    return int(model.n * kmax + model.total_rank**2 + 3 * model.n + model.c * (2 * kmax) ** 2)
