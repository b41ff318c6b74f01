# %% [markdown]
# Negative eigenvalues from block approximation
# ==============================================
#
# A positive semi-definite kernel stays PSD under the Nyström method, but
# the off-diagonal links of a block approximation are fitted by least
# squares and carry no such guarantee. This script builds a few models and
# counts the negative eigenvalues they introduce.

# %%
import numpy as np

from blockkern import KernelSpec, build, count_negative, exact_spectrum, make_blobs, preprocess, reconstruct_dense
from blockkern.kernels import gram

X = preprocess(make_blobs(1000, 5, 4, seed=0).values, ["minmax"])
spec = KernelSpec.rbf(1.0)
K = gram(spec, X)
print("exact kernel, negative eigenvalues:", count_negative(exact_spectrum(K)))

# %% [markdown]
# More clusters means more off-diagonal links and more places for the
# least-squares fit to break definiteness.

# %%
for c in (2, 4, 8):
    for k in (8, 32):
        m = build(X, spec, c, k, seed=0)
        lam = exact_spectrum(reconstruct_dense(m))
        print(f"c={c:2d} k={k:2d}  neg={count_negative(lam):3d}  lambda_min={lam[0]: .3e}")

# %% [markdown]
# TL1 is indefinite in general, though on well separated data its gram
# matrix can still be PSD. The block approximation adds negative
# eigenvalues all the same.

# %%
tl1 = KernelSpec.tl1(0.7 * X.shape[1])
m = build(X, tl1, 4, 32, seed=0)
lam_exact = exact_spectrum(gram(tl1, X))
lam_approx = exact_spectrum(reconstruct_dense(m))
print("TL1 exact   neg:", count_negative(lam_exact), " lambda_min:", lam_exact[0])
print("TL1 approx  neg:", count_negative(lam_approx), " lambda_min:", lam_approx[0])
