"""Joint-type counting kernels: numba-compiled with a pure-numpy fallback.

The simulator spends nearly all its time testing which codewords are jointly
typical with the observed sequences, i.e. comparing per-row symbol counts
against precomputed bounds. Set CASCADE_RD_NO_NUMBA=1 to force the numpy
path; both backends return bit-identical masks.
"""

import os

import numpy as np


def typical_mask_numpy(ids: np.ndarray, n_symbols: int,
                       lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Rows of `ids` whose symbol counts all fall inside [lo, hi].

    ids is (rows, n) of joint-symbol indices in [0, n_symbols); bounds are
    inclusive. Counting uses one flat bincount over offset indices.
    """
    rows, _ = ids.shape
    flat = (ids + n_symbols * np.arange(rows, dtype=np.int64)[:, None]).ravel()
    counts = np.bincount(flat, minlength=rows * n_symbols).reshape(rows, n_symbols)
    return ((counts >= lo) & (counts <= hi)).all(axis=1)


USE_NUMBA = os.environ.get("CASCADE_RD_NO_NUMBA", "") != "1"

if USE_NUMBA:
    try:
        from numba import njit

        @njit(cache=True, nogil=True)
        def _typical_mask_jit(ids, n_symbols, lo, hi):  # pragma: no cover
            rows, n = ids.shape
            out = np.zeros(rows, dtype=np.bool_)
            counts = np.zeros(n_symbols, dtype=np.int64)
            for r in range(rows):
                counts[:] = 0
                ok = True
                for i in range(n):
                    s = ids[r, i]
                    counts[s] += 1
                    if counts[s] > hi[s]:  # counts only grow: safe early exit
                        ok = False
                        break
                if ok:
                    for s in range(n_symbols):
                        if counts[s] < lo[s]:
                            ok = False
                            break
                out[r] = ok
            return out

        def typical_mask_numba(ids, n_symbols, lo, hi):
            return _typical_mask_jit(
                np.ascontiguousarray(ids, dtype=np.int64), n_symbols, lo, hi
            )

        typical_mask = typical_mask_numba
    except ImportError:  # numba missing: silently degrade to numpy
        typical_mask = typical_mask_numpy
        USE_NUMBA = False
else:
    typical_mask = typical_mask_numpy
