import numpy as np
import pytest

from gcrp import _kernels
from gcrp.model import validate_params


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so per-test timings measure work,
    not JIT latency (compilation results are cached on disk afterwards)."""
    p = validate_params(0.5, 0.5)
    out = np.empty(4)
    _kernels.rng_stream(np.uint64(1), out)
    cps = np.array([8], dtype=np.int64)
    counts = np.zeros(10, dtype=np.int64)
    tree = np.zeros(10)
    cp_v = np.zeros(1, dtype=np.int64)
    cp_h = np.zeros((1, 2), dtype=np.int64)
    cp_t = np.zeros(1, dtype=np.int64)
    _kernels.sim_kernel(p.alpha, p.theta, 0, 8, np.uint64(3), cps, 2,
                        counts, tree, cp_v, cp_h, cp_t)
    from gcrp.martingales import run_tracked
    run_tracked(p, 64, seed=1, k_max_m=3, audit=True)
    seeds = np.array([1, 2], dtype=np.uint64)
    bv = np.zeros((2, 8), dtype=np.int16)
    b1 = np.zeros((2, 8), dtype=np.int16)
    _kernels.sim_small_batch(p.alpha, p.theta, 0, 8, seeds, bv, b1)
