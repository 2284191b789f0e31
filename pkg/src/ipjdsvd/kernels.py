"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Setting ``IPJDSVD_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
csr_matvec = _pykernels.csr_matvec
csr_rmatvec = _pykernels.csr_rmatvec

if os.environ.get("IPJDSVD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        csr_matvec = _ckernels.csr_matvec
        csr_rmatvec = _ckernels.csr_rmatvec


def get_kernels(backend=None):
    """Return ``(csr_matvec, csr_rmatvec)`` for ``backend``.

    ``None`` means the backend selected at import. Asking for ``"cython"``
    when the extension is missing raises ImportError.
    """
    if backend is None:
        return csr_matvec, csr_rmatvec
    if backend == "python":
        return _pykernels.csr_matvec, _pykernels.csr_rmatvec
    if backend == "cython":
        from . import _ckernels
        return _ckernels.csr_matvec, _ckernels.csr_rmatvec
    raise ValueError(f"unknown kernel backend {backend!r}")
