"""Acceptance criteria, each checked at its stated tolerance.

Every criterion records one ``C<n> PASS|FAIL ...`` line, printed at the end
of the session. External datasets are read from ``$BLOCKKERN_DATA``
(default ``<repo>/data``): ``spambase.data`` (UCI CSV, label last) and
``cpusmall`` (LIBSVM). Criteria that need a missing file are reported as
FAIL with the reason and the corresponding pytest items are skipped.
"""

import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from blockkern.data import fit_preprocess, load, make_blobs, preprocess
from blockkern.kernels import KernelSpec, gram
from blockkern.meka import build
from blockkern.model import (matvec, memory_budget, memory_report, oos_direct, oos_indirect,
                             oos_indirect_similarities, reconstruct_dense, rel_error, rel_error_streamed)
from blockkern.spectrum import count_negative, default_iterations, exact_spectrum, lanczos_extreme, shift_correct

LINES = {}
DATA_DIR = Path(os.environ.get("BLOCKKERN_DATA", Path(__file__).resolve().parents[1] / "data"))


def record(key, ok, detail):
    LINES[key] = f"{key} {'PASS' if ok else 'FAIL'}  {detail}"
    print(LINES[key])


# ---- C1 exact degeneration -------------------------------------------------

def c1_setup(seed=0):
    X = preprocess(make_blobs(300, 2, 3, seed=seed).values, ["minmax"])
    return X, KernelSpec.rbf(1.0)


def test_c1_exact_degeneration():
    t0 = time.perf_counter()
    X, spec = c1_setup()
    m = build(X, spec, 1, len(X), landmarks=len(X))
    err = rel_error(gram(spec, X), reconstruct_dense(m))
    dt = time.perf_counter() - t0
    ok = err <= 1e-8 and dt < 5
    record("C1", ok, f"rel_error={err:.3e} (<=1e-8), {dt:.2f}s (<5s)")
    assert ok


# ---- C2 Lanczos against dense EVD ------------------------------------------

def mixed_sign_matrix(rng, n):
    """Random orthogonal basis with log-uniform magnitudes and random signs."""
    V, R = np.linalg.qr(rng.standard_normal((n, n)))
    V *= np.sign(np.diag(R))
    lam = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-6, 0, n)
    A = (V * lam) @ V.T
    return (A + A.T) / 2


def test_c2_lanczos_oracle():
    n, trials = 500, 50
    j = math.ceil(2 * math.sqrt(n))
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for t in range(trials):
        A = mixed_sign_matrix(rng, n)
        eigs = np.linalg.eigvalsh(A)
        rep = lanczos_extreme(lambda v: A @ v, n, max_iter=j, seed=t)
        assert rep.iterations <= j
        worst = max(worst, abs(rep.lambda_min_est - eigs[0]) / np.max(np.abs(eigs)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 60
    record("C2", ok, f"max |dlambda_min|/||K||_2={worst:.2e} (<=1e-6) over {trials} matrices, j={j}, {dt:.1f}s (<60s)")
    assert ok


# ---- C3 / C4 kernel grid ---------------------------------------------------

GRID_KERNELS = {"rbf": KernelSpec.rbf(1.0), "elm": KernelSpec.elm(1.0), "tl1": KernelSpec.tl1(0.7 * 10)}
GRID_STEPS = {"rbf": ["minmax"], "elm": ["zscore", "l2"], "tl1": ["minmax"]}


@pytest.fixture(scope="module")
def grid():
    D = make_blobs(2000, 10, 5, seed=0).values
    t0 = time.perf_counter()
    cells = []
    for name, spec in GRID_KERNELS.items():
        X = preprocess(D, GRID_STEPS[name])
        for c in (3, 5, 10):
            for k in (8, 16, 32):
                m = build(X, spec, c, k, seed=0)
                before = exact_spectrum(reconstruct_dense(m))
                s = shift_correct(m, seed=0)
                after = exact_spectrum(reconstruct_dense(s))
                cells.append({"kernel": name, "c": c, "k": k, "neg": count_negative(before),
                              "min_after": after[0], "max_after": np.max(np.abs(after))})
    return cells, time.perf_counter() - t0


def test_c3_psd_after_shift(grid):
    cells, dt = grid
    bad = [c for c in cells if c["min_after"] < -1e-8 * c["max_after"]]
    worst = min(c["min_after"] / c["max_after"] for c in cells)
    ok = not bad and dt < 600
    record("C3", ok, f"{len(cells) - len(bad)}/{len(cells)} shifted cells PSD, worst min/max|eig|={worst:.2e} "
                     f"(>=-1e-8), {dt:.0f}s (<600s)")
    assert ok


def test_c4_negative_eigenvalues(grid):
    cells, _ = grid
    frac = np.mean([c["neg"] > 0 for c in cells])
    # one dataset, so the correlation runs over all of its grid cells
    rho = spearmanr([c["k"] for c in cells], [c["neg"] for c in cells]).statistic
    per_kernel = {}
    for name in GRID_KERNELS:
        sub = [c for c in cells if c["kernel"] == name]
        per_kernel[name] = spearmanr([c["k"] for c in sub], [c["neg"] for c in sub]).statistic
    ok = frac >= 0.9 and rho > 0
    info = ", ".join(f"{k}={v:.2f}" for k, v in per_kernel.items())
    record("C4", ok, f"{frac:.0%} of cells with neg_count>0 (>=90%); Spearman(k, neg_count)={rho:.2f} (>0) "
                     f"[per kernel, informational: {info}]")
    assert ok


# ---- C5 approximation error bands -----------------------------------------

C5 = {}


def data_file(*names):
    for name in names:
        p = DATA_DIR / name
        if p.exists():
            return p
    return None


def seeded_errors(X, spec, c, k, seeds=range(10)):
    m1, m2 = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for s in seeds:
            m = build(X, spec, c, k, seed=s)
            m1.append(rel_error_streamed(m, X)[0])
            m2.append(rel_error_streamed(shift_correct(m, seed=s), X)[0])
    return np.array(m1), np.array(m2)


def c5_line():
    parts = ["artificial1", "spambase_rbf", "cpusmall_rbf", "spambase_tl1"]
    if not all(p in C5 for p in parts):
        return
    ok = all(C5[p][0] for p in parts)
    record("C5", ok, "; ".join(f"{p}: {C5[p][1]}" for p in parts))


def c5_finish(key, ok, detail, skip_reason=None):
    C5[key] = (ok, detail)
    c5_line()
    if skip_reason:
        pytest.skip(skip_reason)
    assert ok, detail


def test_c5_artificial1_analog():
    D = make_blobs(7500, 2, 3, seed=0).values
    X = preprocess(D, ["minmax"])
    m1, m2 = seeded_errors(X, KernelSpec.rbf(1.0), 3, 64)
    ok = m1.mean() <= 0.01 and m2.mean() <= 0.01
    c5_finish("artificial1", ok, f"M1={m1.mean():.2e} M2={m2.mean():.2e} (<=0.01)")


def _spambase():
    return data_file("spambase.data", "spambase.csv")


def _cpusmall():
    return data_file("cpusmall", "cpusmall_scale", "cpusmall.txt")


def test_c5_spambase_rbf():
    p = _spambase()
    if p is None:
        c5_finish("spambase_rbf", False, f"not run, {DATA_DIR}/spambase.data missing", "spambase not available")
    X = preprocess(load(p).values, ["minmax"])
    m1, _ = seeded_errors(X, KernelSpec.rbf(0.1), 3, 128)
    c5_finish("spambase_rbf", m1.mean() <= 0.05, f"M1={m1.mean():.3f} (<=0.05)")


def test_c5_cpusmall_rbf():
    p = _cpusmall()
    if p is None:
        c5_finish("cpusmall_rbf", False, f"not run, {DATA_DIR}/cpusmall missing", "cpusmall not available")
    X = preprocess(load(p).values, ["minmax"])
    _, m2 = seeded_errors(X, KernelSpec.rbf(10.0), 3, 16)
    c5_finish("cpusmall_rbf", 0.5 <= m2.mean() <= 6.8, f"M2={m2.mean():.3f} (in [0.5, 6.8])")


def test_c5_spambase_tl1():
    p = _spambase()
    if p is None:
        c5_finish("spambase_tl1", False, f"not run, {DATA_DIR}/spambase.data missing", "spambase not available")
    X = preprocess(load(p).values, ["minmax"])
    _, m2 = seeded_errors(X, KernelSpec.tl1(39.9), 3, 128)
    c5_finish("spambase_tl1", m2.mean() <= 0.25, f"M2={m2.mean():.3f} (<=0.25)")


# ---- C6 memory -------------------------------------------------------------

def test_c6_memory_ratio():
    p = _spambase()
    if p is not None:
        X, source = preprocess(load(p).values, ["minmax"]), "spambase"
    else:
        # the stored-float count depends only on n, d, c and the ranks once every
        # cluster holds at least 2k points, so a same-shape surrogate gives the same count
        X, source = preprocess(make_blobs(4601, 57, 3, seed=0).values, ["minmax"]), "4601x57 surrogate"
    m = build(X, KernelSpec.rbf(0.1), 3, 128)
    assert min(b.size for b in m.blocks) >= 256
    ratio = memory_report(m)["ratio_vs_dense"]

    over = 0.0
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(100, 1500))
        c = int(rng.integers(1, 8))
        k = int(rng.integers(1, 40))
        Y = rng.uniform(size=(n, int(rng.integers(1, 20))))
        mm = build(Y, KernelSpec.rbf(1.0), c, k, seed=int(rng.integers(1000)))
        over = max(over, memory_report(mm)["stored_floats"] / memory_budget(mm) - 1)
    over = max(over, memory_report(m)["stored_floats"] / memory_budget(m) - 1)
    ok = 0.03 <= ratio <= 0.05 and over <= 0.01
    record("C6", ok, f"ratio={ratio:.2%} on {source} (in [3%, 5%]); worst stored/budget-1={over:+.3f} (<=+0.01)")
    assert ok


# ---- C7 matvec against dense -----------------------------------------------

def test_c7_matvec_dense():
    rng = np.random.default_rng(7)
    kernels = [KernelSpec.rbf(2.0), KernelSpec.tl1(1.2), KernelSpec.elm(1.0), KernelSpec.poly(3.0, 2)]
    steps = {"rbf": ["minmax"], "tl1": ["minmax"], "elm": ["zscore", "l2"], "poly": ["l2"]}
    worst_col = worst_sym = worst_lin = 0.0
    for t in range(20):
        n = int(rng.integers(50, 401))
        spec = kernels[t % 4]
        X = preprocess(make_blobs(n, 3, 4, seed=t).values, steps[spec.kind])
        m = build(X, spec, int(rng.integers(1, 6)), int(rng.integers(2, 12)),
                  truncation_fraction=float(rng.choice([0.0, 0.3, 1.0])), seed=t)
        if t % 3 == 0:
            m = m.with_shift(float(rng.uniform(0, 1)))
        A = reconstruct_dense(m)
        scale = np.max(np.abs(A))
        E = np.eye(n)
        cols = np.column_stack([matvec(m, E[:, j]) for j in range(n)])
        worst_col = max(worst_col, np.max(np.abs(cols - A)) / scale)
        x, y = rng.normal(size=n), rng.normal(size=n)
        mx, my = matvec(m, x), matvec(m, y)
        worst_sym = max(worst_sym, abs(y @ mx - x @ my) / (np.linalg.norm(mx) * np.linalg.norm(y)))
        a, b = rng.normal(size=2)
        lin = matvec(m, a * x + b * y) - (a * mx + b * my)
        worst_lin = max(worst_lin, np.linalg.norm(lin) / (abs(a) * np.linalg.norm(mx) + abs(b) * np.linalg.norm(my)))
    ok = worst_col <= 1e-10 and worst_sym <= 1e-10 and worst_lin <= 1e-10
    record("C7", ok, f"columns {worst_col:.1e}, symmetry {worst_sym:.1e}, linearity {worst_lin:.1e} "
                     f"(all <=1e-10, relative) over 20 builds")
    assert ok


# ---- C8 out-of-sample consistency -----------------------------------------

def test_c8_out_of_sample():
    # criterion 1 setup; queries are 100 further draws from the same generator
    D = make_blobs(400, 2, 3, seed=0).values
    f = fit_preprocess(D[:300], ["minmax"])
    X, queries = f.transform(D[:300]), f.transform(D[300:])
    spec = KernelSpec.rbf(1.0)
    m = build(X, spec, 1, 300, landmarks=300)
    support = np.arange(m.n)
    worst_q = max(np.max(np.abs(oos_indirect_similarities(m, oos_indirect(m, x)) - oos_direct(m, x, support, X)))
                  for x in queries)
    K = gram(spec, X)
    worst_t = max(np.max(np.abs(oos_indirect_similarities(m, oos_indirect(m, X[t])) - K[t])) for t in range(m.n))
    ok = worst_q <= 1e-6 and worst_t <= 1e-8
    record("C8", ok, f"indirect vs direct {worst_q:.1e} (<=1e-6) on 100 queries; "
                     f"training rows {worst_t:.1e} (<=1e-8)")
    assert ok


# ---- C9 shift Frobenius identity ------------------------------------------

def test_c9_shift_identity():
    rng = np.random.default_rng(9)
    worst_id = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 600))
        lam = float(rng.uniform(-50, 50))
        worst_id = max(worst_id, abs(np.linalg.norm(lam * np.eye(n)) - math.sqrt(n) * abs(lam)) / (math.sqrt(n) * abs(lam)))
    slack = -np.inf
    for t in range(10):
        X = preprocess(make_blobs(200, 3, 3, seed=t).values, ["minmax"])
        spec = KernelSpec.tl1(2.1) if t % 2 else KernelSpec.rbf(3.0)
        K = gram(spec, X)
        m = build(X, spec, 3, 6, seed=t)
        s = shift_correct(m, seed=t)
        ref = np.linalg.norm(K)
        e1, e2 = rel_error(K, reconstruct_dense(m)), rel_error(K, reconstruct_dense(s))
        bound = e1 + math.sqrt(m.n) * s.lambda_shift / ref + 1e-10
        slack = max(slack, e2 - bound)
    ok = worst_id <= 4 * np.finfo(float).eps and slack <= 0
    record("C9", ok, f"||lambda I||_F identity rel err {worst_id:.1e} (machine precision); "
                     f"max M2 - (M1 + sqrt(n) shift/||K||_F + 1e-10) = {slack:.2e} (<=0)")
    assert ok
