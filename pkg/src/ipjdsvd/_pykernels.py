"""Pure numpy fallbacks for the CSR product kernels.

Signatures mirror the compiled module: results are written into ``out``.
"""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, out):
    rows = _row_ids(indptr)
    out[:] = np.bincount(rows, weights=data * x[indices], minlength=out.shape[0])


def csr_rmatvec(indptr, indices, data, y, out):
    rows = _row_ids(indptr)
    out[:] = np.bincount(indices, weights=data * y[rows], minlength=out.shape[0])
