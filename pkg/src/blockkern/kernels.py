"""Kernel functions, block evaluation and spherical normalization.

Four kernels are supported:

    rbf   exp(-gamma * ||x - y||^2)
    poly  (1 - ||x - y||^2 / a^2)^p, evaluated as alpha * (q + <x, y>)^p
    elm   (2/pi) arcsin((1 + <x,y>) / sqrt((s + <x,x>)(s + <y,y>))), s = 1 + 1/(2 sigma_w^2)
    tl1   max(rho - ||x - y||_1, 0)

``rbf`` and ``tl1`` are distance based; ``poly`` and ``elm`` are inner-product
based and only become shift-invariant once the inputs live on the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

KINDS = ("rbf", "poly", "elm", "tl1")
DISTANCE_KINDS = ("rbf", "tl1")

# arcsin arguments may exceed 1 by rounding; anything beyond this is a bug upstream
ARCSIN_SLACK = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """A kernel function together with its parameters.

    Only the parameters belonging to ``kind`` are consulted; use the
    ``rbf``/``poly``/``elm``/``tl1`` constructors rather than filling
    fields by hand.
    """

    kind: str
    gamma: float = 1.0
    a: float = 2.0
    p: int = 1
    sigma_w: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError(f"rbf requires gamma > 0, got {self.gamma}")
        if self.kind == "poly":
            if not self.a > 0:
                raise ValueError(f"poly requires a > 0, got {self.a}")
            if int(self.p) != self.p or self.p < 1:
                raise ValueError(f"poly requires integer p >= 1, got {self.p}")
        if self.kind == "elm" and not self.sigma_w > 0:
            raise ValueError(f"elm requires sigma_w > 0, got {self.sigma_w}")
        if self.kind == "tl1" and not self.rho >= 0:
            raise ValueError(f"tl1 requires rho >= 0, got {self.rho}")

    @classmethod
    def rbf(cls, gamma):
        return cls("rbf", gamma=float(gamma))

    @classmethod
    def poly(cls, a, p):
        return cls("poly", a=float(a), p=int(p))

    @classmethod
    def elm(cls, sigma_w=1.0):
        return cls("elm", sigma_w=float(sigma_w))

    @classmethod
    def tl1(cls, rho):
        return cls("tl1", rho=float(rho))

    @property
    def q(self):
        """Offset of the inner-product form of the polynomial kernel."""
        return self.a**2 / 2.0 - 1.0

    @property
    def alpha(self):
        """Scale of the inner-product form, (2/a^2)^p."""
        return (2.0 / self.a**2) ** self.p

    @property
    def elm_offset(self):
        return 1.0 + 1.0 / (2.0 * self.sigma_w**2)

    @property
    def is_distance_based(self):
        return self.kind in DISTANCE_KINDS

    def is_indefinite(self, d):
        """Whether the kernel is known to produce indefinite gram matrices in dimension ``d``."""
        return self.kind == "tl1" and 0 < self.rho <= d

    @property
    def potentially_indefinite(self):
        """Polynomial kernels with a > 2 lose definiteness on the sphere."""
        return self.kind == "poly" and self.a > 2

    def params(self):
        """The parameters relevant to ``kind`` as a plain dict."""
        return {
            "rbf": {"gamma": self.gamma},
            "poly": {"a": self.a, "p": self.p},
            "elm": {"sigma_w": self.sigma_w},
            "tl1": {"rho": self.rho},
        }[self.kind]

    def to_dict(self):
        return {"kind": self.kind, **self.params()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), **d)

    def __str__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.kind}({args})"


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite kernel input")
    return x, y


def _safe_arcsin(ratio):
    ratio = np.asarray(ratio, dtype=np.float64)
    worst = np.max(np.abs(ratio)) if ratio.size else 0.0
    if worst > 1.0 + ARCSIN_SLACK:
        raise FloatingPointError(f"arcsin argument {worst!r} outside [-1, 1]")
    return np.arcsin(np.clip(ratio, -1.0, 1.0))


def _from_sqdist(spec, sqd):
    # only rbf consumes squared distances
    return np.exp(-spec.gamma * sqd)


def _from_inner(spec, G, nx, ny):
    """Inner-product kernels from a gram ``G`` and squared norms ``nx``, ``ny``."""
    if spec.kind == "poly":
        return spec.alpha * np.power(spec.q + G, spec.p)
    s = spec.elm_offset
    denom = np.sqrt(np.multiply.outer(s + nx, s + ny))
    return (2.0 / np.pi) * _safe_arcsin((1.0 + G) / denom)


def evaluate(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for a single pair. Symmetric bit for bit."""
    x, y = _check_pair(x, y)
    # same code path as block evaluation; per-pair reductions are order independent
    return float(cross(spec, x[None, :], y[None, :])[0, 0])


def self_similarity(spec: KernelSpec, X) -> np.ndarray:
    """``k(x_i, x_i)`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if spec.kind == "rbf":
        return np.ones(len(X))
    if spec.kind == "tl1":
        return np.full(len(X), spec.rho)
    sq = np.einsum("ij,ij->i", X, X)
    if spec.kind == "poly":
        return spec.alpha * np.power(spec.q + sq, spec.p)
    s = spec.elm_offset
    return (2.0 / np.pi) * _safe_arcsin((1.0 + sq) / (s + sq))


def cross(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and the rows of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    if spec.kind == "rbf":
        return _from_sqdist(spec, cdist(A, B, "sqeuclidean"))
    if spec.kind == "tl1":
        return np.maximum(spec.rho - cdist(A, B, "cityblock"), 0.0)
    G = A @ B.T
    return _from_inner(spec, G, np.einsum("ij,ij->i", A, A), np.einsum("ij,ij->i", B, B))


def gram_block(spec: KernelSpec, X, row_idx, col_idx, normalize=False, selfsim=None) -> np.ndarray:
    """Evaluate the sub-block ``K[row_idx][:, col_idx]`` of the gram matrix of ``X``.

    Only the requested block is allocated. With ``normalize`` every entry is
    divided by ``sqrt(k(x_r, x_r) k(x_c, x_c))``; ``selfsim`` may carry those
    diagonal values precomputed for all of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    rows = np.asarray(row_idx, dtype=np.intp).reshape(-1)
    cols = np.asarray(col_idx, dtype=np.intp).reshape(-1)
    for name, idx in (("row", rows), ("column", cols)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"{name} index out of range for n={n}")
    K = cross(spec, X[rows], X[cols])
    if normalize:
        if selfsim is None:
            dr, dc = self_similarity(spec, X[rows]), self_similarity(spec, X[cols])
        else:
            dr, dc = selfsim[rows], selfsim[cols]
        K = K / np.sqrt(np.multiply.outer(_positive(dr, rows), _positive(dc, cols)))
    return K


def _positive(diag, idx):
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise ValueError(f"non-positive self-similarity at index {int(idx[bad[0]])}")
    return diag


def gram(spec: KernelSpec, X, normalize=False) -> np.ndarray:
    """Full dense gram matrix. Intended for small problems and oracles."""
    idx = np.arange(len(X))
    return gram_block(spec, X, idx, idx, normalize=normalize)


def project_unit_sphere(X) -> np.ndarray:
    """Scale every row of ``X`` to unit Euclidean norm."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"cannot project zero-norm row {int(zero[0])} onto the unit sphere")
    return X / norms[:, None]


def normalize_gram(K) -> np.ndarray:
    """Rescale a kernel matrix to unit diagonal, ``K_ij / sqrt(K_ii K_jj)``."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    d = np.sqrt(_positive(np.diag(K).copy(), np.arange(len(K))))
    out = K / np.multiply.outer(d, d)
    # the diagonal is exactly one by definition, not up to rounding
    np.fill_diagonal(out, 1.0)
    return out


# short alias mirroring the single-pair call sites in the docs
eval = evaluate
