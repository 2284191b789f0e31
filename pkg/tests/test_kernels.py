import os
import subprocess
import sys

import numpy as np
import pytest

from ipjdsvd import kernels
from ipjdsvd.sparse import SparseMatrix


def _backends():
    out = ["python"]
    try:
        kernels.get_kernels("cython")
    except ImportError:
        pass
    else:
        out.append("cython")
    return out


@pytest.fixture(params=_backends())
def backend(request):
    return kernels.get_kernels(request.param)


def _csr(rng, m, n, density=0.3):
    d = rng.standard_normal((m, n))
    d[rng.uniform(size=(m, n)) > density] = 0.0
    a = SparseMatrix.from_dense(d)
    return a, d


class TestKernels:
    @pytest.mark.parametrize("shape", [(1, 1), (5, 3), (3, 5), (40, 17)])
    def test_matvec(self, backend, shape):
        matvec, rmatvec = backend
        rng = np.random.default_rng(sum(shape))
        a, d = _csr(rng, *shape)
        x, y = rng.standard_normal(shape[1]), rng.standard_normal(shape[0])
        out = np.empty(shape[0])
        matvec(a.indptr, a.indices, a.data, x, out)
        np.testing.assert_allclose(out, d @ x, atol=1e-13)
        out = np.empty(shape[1])
        rmatvec(a.indptr, a.indices, a.data, y, out)
        np.testing.assert_allclose(out, d.T @ y, atol=1e-13)

    def test_empty_rows(self, backend):
        matvec, rmatvec = backend
        a = SparseMatrix.from_coo((4, 3), [1], [2], [5.0])
        out = np.full(4, 9.0)
        matvec(a.indptr, a.indices, a.data, np.ones(3), out)
        np.testing.assert_array_equal(out, [0, 5.0, 0, 0])
        out = np.full(3, 9.0)
        rmatvec(a.indptr, a.indices, a.data, np.ones(4), out)
        np.testing.assert_array_equal(out, [0, 0, 5.0])

    def test_backends_agree(self):
        names = _backends()
        if len(names) < 2:
            pytest.skip("compiled extension not built")
        rng = np.random.default_rng(7)
        a, _ = _csr(rng, 200, 150, 0.05)
        x = rng.standard_normal(150)
        outs = []
        for name in names:
            mv, _ = kernels.get_kernels(name)
            o = np.empty(200)
            mv(a.indptr, a.indices, a.data, x, o)
            outs.append(o)
        np.testing.assert_allclose(outs[0], outs[1], rtol=1e-14, atol=1e-14)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.get_kernels("fortran")

    def test_env_forces_fallback(self):
        env = dict(os.environ, IPJDSVD_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "import ipjdsvd; print(ipjdsvd.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"


def test_use_backend_switches_both_views():
    rng = np.random.default_rng(9)
    d = rng.standard_normal((6, 4))
    a = SparseMatrix.from_dense(d)
    at = a.transpose()
    for name in _backends():
        a.use_backend(name)
        np.testing.assert_allclose(at.apply(np.ones(6)), d.T @ np.ones(6), atol=1e-13)
        np.testing.assert_allclose(a.apply(np.ones(4)), d @ np.ones(4), atol=1e-13)
