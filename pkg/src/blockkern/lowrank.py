"""Per-block Nystrom factors that also cover indefinite blocks.

A block ``K_i`` is approximated as ``Q_i diag(S_i) Q_i^T`` where

    Q_i = K_{block, landmarks} U |Lambda|^{-1/2},    S_i = sign(Lambda)

and ``(Lambda, U)`` are the retained eigenpairs of the landmark matrix ``W``
ordered by decreasing magnitude. For positive semi-definite blocks every sign
is +1 and this is the usual ``H H^T`` split of the Nystrom expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import as_array
from .kernels import KernelSpec, gram_block

# eigenvalues of W below this fraction of the largest magnitude are dropped
PINV_RTOL = 1e-10


class DegenerateBlockError(ArithmeticError):
    """All landmark eigenvalues fell below the pseudo-inverse threshold."""


@dataclass
class BlockFactor:
    """Low-rank factor of one diagonal block.

    Attributes
    ----------
    index : int
        Cluster number.
    rows : ndarray
        Global row indices of the block, in the row order of ``Q``.
    Q : ndarray
        ``n_i x k_i`` factor.
    signs : ndarray
        ``k_i`` entries in {+1, -1}.
    landmarks : ndarray
        Global indices of the landmark points.
    landmark_points : ndarray
        Coordinates of the landmarks, kept for out-of-sample mapping.
    U : ndarray
        ``l_i x k_i`` retained eigenvectors of the landmark matrix.
    inv_sqrt : ndarray
        ``|Lambda|^{-1/2}`` for the retained eigenvalues.
    """

    index: int
    rows: np.ndarray
    Q: np.ndarray
    signs: np.ndarray
    landmarks: np.ndarray
    landmark_points: np.ndarray
    U: np.ndarray
    inv_sqrt: np.ndarray

    @property
    def k(self):
        return self.Q.shape[1]

    @property
    def size(self):
        return self.Q.shape[0]

    @property
    def eigenvalues(self):
        return self.signs / self.inv_sqrt**2

    def approx(self):
        """Dense ``Q S Q^T`` for this block (oracle use)."""
        return (self.Q * self.signs) @ self.Q.T

    def map_landmark_row(self, v):
        """Map kernel values against the landmarks to a row of the extended ``Q``."""
        return (np.asarray(v) @ self.U) * self.inv_sqrt

    def stored_floats(self):
        return self.Q.size + self.signs.size + self.landmark_points.size + self.U.size + self.inv_sqrt.size


def factor_landmarks(C, W, k, rtol=PINV_RTOL):
    """Split ``C W_k^+ C^T`` into ``Q diag(S) Q^T``.

    Parameters
    ----------
    C : (m, l) array
        Kernel values between the block rows and the landmarks.
    W : (l, l) array
        Kernel matrix among the landmarks.
    k : int
        Maximum number of eigenpairs to keep.

    Returns
    -------
    Q, signs, U, inv_sqrt
    """
    W = 0.5 * (W + W.T)
    lam, V = np.linalg.eigh(W)
    # by magnitude, ties broken toward the positive eigenvalue
    order = np.lexsort((-lam, -np.abs(lam)))
    lam, V = lam[order], V[:, order]
    top = np.abs(lam[0]) if lam.size else 0.0
    keep = np.flatnonzero(np.abs(lam) > rtol * top)[:k] if top > 0 else np.array([], dtype=int)
    if keep.size == 0:
        raise DegenerateBlockError("landmark matrix has no eigenvalue above the pseudo-inverse threshold")
    # C order so a saved and reloaded factor multiplies bit for bit the same
    lam, U = lam[keep], np.ascontiguousarray(V[:, keep])
    inv_sqrt = 1.0 / np.sqrt(np.abs(lam))
    Q = (C @ U) * inv_sqrt
    return Q, np.sign(lam), U, inv_sqrt


def nystrom_block(spec: KernelSpec, X, block_idx, l, k, seed=0, normalize=False, selfsim=None) -> BlockFactor:
    """Nystrom factor of the diagonal block indexed by ``block_idx``.

    ``l`` landmarks are drawn uniformly without replacement from the block
    and at most ``k`` eigenpairs of the landmark matrix are retained. ``seed``
    may be an int or a ``numpy.random.Generator``.
    """
    X = as_array(X)
    rows = np.asarray(block_idx, dtype=np.intp)
    m = len(rows)
    if not 1 <= k <= l <= m:
        raise ValueError(f"need 1 <= k <= l <= block size, got k={k}, l={l}, size={m}")
    rng = np.random.default_rng(seed)
    lm = rows[np.sort(rng.choice(m, size=l, replace=False))] if l < m else rows.copy()
    C = gram_block(spec, X, rows, lm, normalize=normalize, selfsim=selfsim)
    W = C[np.searchsorted(rows, lm)] if _is_sorted(rows) else gram_block(spec, X, lm, lm, normalize, selfsim)
    Q, signs, U, inv_sqrt = factor_landmarks(C, W, k)
    return BlockFactor(0, rows, Q, signs, lm, X[lm].copy(), U, inv_sqrt)


def _is_sorted(a):
    return a.size < 2 or bool(np.all(a[1:] > a[:-1]))
