"""Block low-rank approximation of (possibly indefinite) kernel matrices with a PSD shift."""

from .clustering import ClusterAssignment, cmeans_fit, permute_rows, unpermute_rows
from .container import load, save
from .data import DataMatrix, load_csv, load_libsvm, make_blobs, preprocess, save_libsvm
from .kernels import KernelSpec, gram, gram_block, normalize_gram, project_unit_sphere
from .lowrank import BlockFactor, nystrom_block
from .meka import build, distribute_ranks, solve_offdiag_link
from .model import (MekaModel, matvec, memory_report, oos_direct, oos_indirect,
                    oos_indirect_similarities, oos_self_similarity, reconstruct_dense, rel_error)
from .spectrum import SpectrumReport, count_negative, exact_spectrum, lanczos_extreme, shift_correct

__version__ = "0.1.0"
