"""Extreme eigenvalues through matrix-vector products, and the PSD shift."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .model import DENSE_LIMIT, MekaModel, matvec as model_matvec

BREAKDOWN = 1e-14
MAX_RESTARTS = 3
DEFAULT_MARGIN = 0.01
PSD_RTOL = 1e-8


class LanczosError(ArithmeticError):
    """The Lanczos recurrence broke down on every start vector."""


@dataclass
class SpectrumReport:
    lambda_min_est: float
    lambda_max_est: float
    iterations: int
    ritz_values: np.ndarray
    converged: bool
    residual_bound: float
    matvecs: int = 0
    restarts: int = 0
    extra: dict = field(default_factory=dict)


def default_iterations(n):
    """``ceil(2 sqrt(n))``, capped at ``n``."""
    return int(min(n, math.ceil(2 * math.sqrt(n))))


def _extremes(alpha, beta):
    """Smallest/largest Ritz values and their residual bounds."""
    j = len(alpha)
    if j == 1:
        return alpha[0], alpha[0], 1.0, 1.0
    lo, vlo = eigh_tridiagonal(alpha, beta, select="i", select_range=(0, 0))
    hi, vhi = eigh_tridiagonal(alpha, beta, select="i", select_range=(j - 1, j - 1))
    return lo[0], hi[0], abs(vlo[-1, 0]), abs(vhi[-1, 0])


def lanczos_extreme(matvec, n, max_iter=None, tol=1e-8, seed=0) -> SpectrumReport:
    """Estimate the extreme eigenvalues of a symmetric operator.

    Runs at most ``max_iter`` (default ``ceil(2 sqrt(n))``) Lanczos steps with
    full reorthogonalization from a random unit vector. The run stops early
    once both extreme Ritz pairs satisfy ``|beta_j s_j| < tol * max|ritz|``, or
    when the Krylov space becomes invariant.
    """
    if n < 1:
        raise ValueError("operator dimension must be >= 1")
    j_max = default_iterations(n) if max_iter is None else int(min(max_iter, n))
    if j_max < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    rng = np.random.default_rng(seed)
    matvecs = 0
    for restart in range(MAX_RESTARTS + 1):
        V = np.zeros((j_max, n))
        alpha = np.zeros(j_max)
        beta = np.zeros(j_max)
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        scale = 0.0
        j = 0
        converged = False
        bound = np.inf
        while j < j_max:
            V[j] = v
            w = np.asarray(matvec(v), dtype=np.float64)
            matvecs += 1
            alpha[j] = v @ w
            w -= alpha[j] * v
            if j:
                w -= beta[j - 1] * V[j - 1]
            # two passes of classical Gram-Schmidt against every stored vector
            for _ in range(2):
                w -= V[: j + 1].T @ (V[: j + 1] @ w)
            b = np.linalg.norm(w)
            beta[j] = b
            scale = max(scale, abs(alpha[j]), b)
            j += 1
            lo, hi, slo, shi = _extremes(alpha[:j], beta[: j - 1])
            bound = max(b * slo, b * shi)
            if b < BREAKDOWN * max(scale, 1.0):
                converged = True
                break
            if bound < tol * max(abs(lo), abs(hi)):
                converged = True
                break
            v = w / b
        if j == 1 and n > 1 and beta[0] < BREAKDOWN * max(scale, 1.0):
            # the start vector was an eigenvector; nothing learned about the extremes
            continue
        ritz = eigh_tridiagonal(alpha[:j], beta[: j - 1], eigvals_only=True) if j > 1 else alpha[:1].copy()
        return SpectrumReport(float(ritz[0]), float(ritz[-1]), j, ritz, converged, float(bound),
                              matvecs, restart)
    raise LanczosError(f"Lanczos broke down on {MAX_RESTARTS + 1} start vectors")


def psd_tolerance(lambda_max):
    return PSD_RTOL * max(abs(lambda_max), 0.0)


def shift_correct(model: MekaModel, margin=DEFAULT_MARGIN, max_iter=None, tol=1e-8, seed=0,
                  escalate=True):
    """Return a copy of ``model`` whose shift makes the implied matrix PSD.

    The smallest eigenvalue is estimated by :func:`lanczos_extreme` on the
    model's matvec. If the first run has not converged and ``escalate`` is
    set, the iteration budget is doubled until it converges or reaches ``n``.
    The Lanczos summary is recorded under ``config["shift"]``.
    """
    def op(v):
        return model_matvec(model, v)

    budget = default_iterations(model.n) if max_iter is None else int(max_iter)
    report = lanczos_extreme(op, model.n, budget, tol, seed)
    while escalate and not report.converged and budget < model.n:
        budget = min(2 * budget, model.n)
        report = lanczos_extreme(op, model.n, budget, tol, seed)
    lam_min = report.lambda_min_est
    if lam_min >= -psd_tolerance(report.lambda_max_est):
        shift = model.lambda_shift
    else:
        shift = model.lambda_shift + abs(lam_min) * (1.0 + margin)
    out = model.with_shift(shift)
    out.config["shift"] = {
        "lambda_min_est": lam_min,
        "lambda_max_est": report.lambda_max_est,
        "iterations": report.iterations,
        "converged": report.converged,
        "margin": margin,
        "residual_bound": report.residual_bound,
    }
    return out


def exact_spectrum(K) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    if len(K) > DENSE_LIMIT:
        raise MemoryError(f"n={len(K)} exceeds the dense limit {DENSE_LIMIT}")
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asym > 1e-10 * max(1.0, np.max(np.abs(K))):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    return np.linalg.eigvalsh(K)


def count_negative(eigs, tol=1e-10) -> int:
    """Number of eigenvalues below ``-tol * max(max|eig|, 1)``."""
    eigs = np.asarray(eigs, dtype=np.float64)
    if eigs.size == 0:
        return 0
    return int(np.sum(eigs < -tol * max(np.max(np.abs(eigs)), 1.0)))
