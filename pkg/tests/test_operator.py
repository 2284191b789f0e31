import numpy as np
import pytest

from ipjdsvd.operator import (
    ProjectedAugmentedOp,
    assemble_reduced_op,
    make_projected_op,
    reduction_basis,
)
from ipjdsvd.sparse import SparseMatrix


@pytest.fixture
def problem():
    rng = np.random.default_rng(0)
    d = rng.standard_normal((9, 6))
    up, _ = np.linalg.qr(rng.standard_normal((9, 2)))
    vp, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    return SparseMatrix.from_dense(d), d, up, vp, rng


def _dense_reference(d, tau, up, vp):
    m, n = d.shape
    b = np.block([[-tau * np.eye(m), d], [d.T, -tau * np.eye(n)]])
    p = np.eye(m + n)
    p[:m, :m] -= up @ up.T
    p[m:, m:] -= vp @ vp.T
    return p @ b @ p


class TestProjectedOp:
    def test_matches_dense_formula(self, problem):
        a, d, up, vp, rng = problem
        op = make_projected_op(a, 0.7, up, vp)
        w = rng.standard_normal(15)
        np.testing.assert_allclose(op.apply(w), _dense_reference(d, 0.7, up, vp) @ w, atol=1e-13)
        np.testing.assert_allclose(op.dense(), _dense_reference(d, 0.7, up, vp), atol=1e-13)

    def test_symmetric(self, problem):
        a, _, up, vp, rng = problem
        op = ProjectedAugmentedOp(a, 1.3, up, vp)
        x, y = rng.standard_normal(15), rng.standard_normal(15)
        assert x @ op.apply(y) == pytest.approx(y @ op.apply(x), rel=1e-13)

    def test_output_doubly_orthogonal(self, problem):
        a, _, up, vp, rng = problem
        out = ProjectedAugmentedOp(a, 0.2, up, vp) @ rng.standard_normal(15)
        assert np.abs(up.T @ out[:9]).max() < 1e-14
        assert np.abs(vp.T @ out[9:]).max() < 1e-14

    def test_counts_two_products_per_application(self, problem):
        a, _, up, vp, rng = problem
        op = ProjectedAugmentedOp(a, 0.2, up, vp)
        a.reset_count()
        for _ in range(3):
            op.apply(rng.standard_normal(15))
        assert a.mv_count == 6 and op.applications == 3
        op.dense()
        assert a.mv_count == 6

    def test_no_projection(self, problem):
        a, d, _, _, rng = problem
        op = ProjectedAugmentedOp(a, 0.0)
        assert op.p == 0
        w = rng.standard_normal(15)
        np.testing.assert_allclose(op.apply(w), np.concatenate([d @ w[9:], d.T @ w[:9]]), atol=1e-13)

    def test_rejects_non_orthonormal(self, problem):
        a, _, up, vp, _ = problem
        with pytest.raises(ValueError, match="U_p is not orthonormal"):
            ProjectedAugmentedOp(a, 0.0, 2 * up, vp)

    def test_rejects_column_mismatch(self, problem):
        a, _, up, vp, _ = problem
        with pytest.raises(ValueError, match="columns"):
            ProjectedAugmentedOp(a, 0.0, up, vp[:, :1])

    def test_wrong_length(self, problem):
        a, _, up, vp, _ = problem
        with pytest.raises(ValueError, match="length 15"):
            ProjectedAugmentedOp(a, 0.0, up, vp).apply(np.ones(14))

    def test_dense_cap(self, problem):
        a, _, up, vp, _ = problem
        with pytest.raises(ValueError, match="audit cap"):
            ProjectedAugmentedOp(a, 0.0, up, vp).dense(cap=10)


class TestReduced:
    def test_basis_completes(self, problem):
        a, _, up, vp, rng = problem
        op = ProjectedAugmentedOp(a, 0.5, up, vp)
        w, p, q = reduction_basis(op, rng)
        assert w.shape == (15, 11)
        np.testing.assert_allclose(w.T @ w, np.eye(11), atol=1e-14)
        assert np.abs(up.T @ p).max() < 1e-14 and np.abs(vp.T @ q).max() < 1e-14

    def test_reduced_is_compression(self, problem):
        a, d, up, vp, rng = problem
        op = ProjectedAugmentedOp(a, 0.5, up, vp)
        red, w = assemble_reduced_op(op, rng=rng, return_basis=True)
        np.testing.assert_allclose(red, w.T @ _dense_reference(d, 0.5, up, vp) @ w, atol=1e-13)
        np.testing.assert_allclose(red, red.T, atol=0)

    def test_reduced_spectrum_exact_vectors(self):
        # projecting out (u1, v1) of diag(1, 2, 3, 4) leaves +-sigma - tau for sigma = 2, 3, 4
        a = SparseMatrix.from_dense(np.diag([1.0, 2.0, 3.0, 4.0]))
        e1 = np.eye(4)[:, :1]
        red = assemble_reduced_op(ProjectedAugmentedOp(a, 1.1, e1, e1))
        expect = np.sort(np.concatenate([np.array([2, 3, 4.0]) - 1.1, -np.array([2, 3, 4.0]) - 1.1]))
        np.testing.assert_allclose(np.linalg.eigvalsh(red), expect, atol=1e-14)

    def test_tall_has_minus_tau_block(self):
        rng = np.random.default_rng(3)
        d = rng.standard_normal((7, 4))
        red = assemble_reduced_op(ProjectedAugmentedOp(SparseMatrix.from_dense(d), 0.3))
        lam = np.linalg.eigvalsh(red)
        assert np.sum(np.abs(lam + 0.3) < 1e-12) == 3
