# %% [markdown]
# Storage, saved models and new points
# ====================================
#
# The block model stores one factor per cluster plus small link matrices.
# This script checks the memory footprint, saves and reloads a model and
# compares the two out-of-sample paths.

# %%
import tempfile
from pathlib import Path

import numpy as np

from blockkern import (KernelSpec, build, container, make_blobs, matvec, memory_report, oos_direct, oos_indirect,
                       oos_indirect_similarities)
from blockkern.data import fit_preprocess

D = make_blobs(3000, 6, 4, seed=2).values
f = fit_preprocess(D[:2500], ["minmax"])
X = f.transform(D[:2500])
m = build(X, KernelSpec.rbf(1.0), 4, 32, seed=0)
print(memory_report(m))

# %%
path = Path(tempfile.mkdtemp()) / "model.bin"
container.save(m, path)
r = container.load(path)
x = np.random.default_rng(0).normal(size=m.n)
print("reloaded matvec identical:", np.array_equal(matvec(r, x), matvec(m, x)))

# %% [markdown]
# The direct path evaluates the kernel against every training point. The
# indirect path projects the query onto each block's landmarks and reads
# similarities through the stored factors.

# %%
for q in f.transform(D[2500:2505]):
    direct = oos_direct(m, q, np.arange(m.n), X)
    indirect = oos_indirect_similarities(m, oos_indirect(m, q))
    print(f"max |direct - indirect| = {np.max(np.abs(direct - indirect)):.2e}")
