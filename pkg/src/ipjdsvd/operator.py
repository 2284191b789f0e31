"""Implicit projected augmented operator of the correction equation.

For shift ``tau`` and orthonormal blocks ``U_p`` (M x p), ``V_p`` (N x p)
the operator is

    W B W,   B = [[-tau I, A], [A^T, -tau I]],
    W = diag(I - U_p U_p^T, I - V_p V_p^T),

acting on stacked vectors ``w = (s, t)`` of length M + N. It is never
formed at solver scale.
"""

from __future__ import annotations

import numpy as np

from .dense import complete_basis
from .sparse import SparseMatrix

ORTHO_TOL = 1e-8
AUDIT_CAP = 400


def _check_orthonormal(block, name):
    if block.shape[1] == 0:
        return
    dev = np.abs(block.T @ block - np.eye(block.shape[1])).max()
    if dev > ORTHO_TOL:
        raise ValueError(f"{name} is not orthonormal (max deviation {dev:.2e})")


class ProjectedAugmentedOp:
    def __init__(self, a: SparseMatrix, tau, up=None, vp=None):
        m, n = a.shape
        up = np.zeros((m, 0)) if up is None else np.asarray(up, dtype=np.float64).reshape(m, -1)
        vp = np.zeros((n, 0)) if vp is None else np.asarray(vp, dtype=np.float64).reshape(n, -1)
        if up.shape[1] != vp.shape[1]:
            raise ValueError(f"U_p has {up.shape[1]} columns but V_p has {vp.shape[1]}")
        _check_orthonormal(up, "U_p")
        _check_orthonormal(vp, "V_p")
        self.a = a
        self.tau = float(tau)
        self.up = up
        self.vp = vp
        self.m, self.n = m, n
        self.applications = 0

    @property
    def p(self):
        return self.up.shape[1]

    @property
    def size(self):
        return self.m + self.n

    def project(self, w):
        """Apply ``diag(I - U_p U_p^T, I - V_p V_p^T)``."""
        w = np.array(w, dtype=np.float64)
        if self.p:
            s, t = w[: self.m], w[self.m:]
            s -= self.up @ (self.up.T @ s)
            t -= self.vp @ (self.vp.T @ t)
        return w

    def apply(self, w):
        """Operator times ``w``; costs one product with A and one with A^T."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.size,):
            raise ValueError(f"operator expects length {self.size}, got {w.shape}")
        x = self.project(w)
        s, t = x[: self.m], x[self.m:]
        out = np.empty(self.size)
        out[: self.m] = self.a.apply(t) - self.tau * s
        out[self.m:] = self.a.apply_transpose(s) - self.tau * t
        self.applications += 1
        return self.project(out)

    __matmul__ = apply

    def dense(self, cap=AUDIT_CAP):
        """Dense ``(M+N) x (M+N)`` matrix of the operator (audit use, no tally)."""
        if self.size > cap:
            raise ValueError(f"M+N = {self.size} exceeds the audit cap {cap}")
        a = self.a.toarray()
        b = np.block([[-self.tau * np.eye(self.m), a], [a.T, -self.tau * np.eye(self.n)]])
        proj = np.eye(self.size)
        if self.p:
            proj[: self.m, : self.m] -= self.up @ self.up.T
            proj[self.m:, self.m:] -= self.vp @ self.vp.T
        return proj @ b @ proj


def make_projected_op(a, tau, up=None, vp=None):
    return ProjectedAugmentedOp(a, tau, up, vp)


def apply_op(op, w):
    return op.apply(w)


def reduction_basis(op, rng=None):
    """``W = diag(P, Q)`` whose columns span the range of the projector."""
    rng = np.random.default_rng(0) if rng is None else rng
    p_blk = complete_basis(op.up, op.m, rng)
    q_blk = complete_basis(op.vp, op.n, rng)
    w = np.zeros((op.size, p_blk.shape[1] + q_blk.shape[1]))
    w[: op.m, : p_blk.shape[1]] = p_blk
    w[op.m:, p_blk.shape[1]:] = q_blk
    return w, p_blk, q_blk


def assemble_reduced_op(op, cap=AUDIT_CAP, rng=None, return_basis=False):
    """Dense reduced matrix ``W^T B W`` of order M + N - 2p.

    ``W = diag(P, Q)`` completes ``[U_p, P]`` and ``[V_p, Q]`` to orthogonal
    matrices. The products with A go through a dense copy, so the tally
    on the matrix handle is untouched.
    """
    if op.size > cap:
        raise ValueError(f"M+N = {op.size} exceeds the audit cap {cap}")
    w, p_blk, q_blk = reduction_basis(op, rng)
    a = op.a.toarray()
    mp, nq = p_blk.shape[1], q_blk.shape[1]
    red = np.empty((mp + nq, mp + nq))
    red[:mp, :mp] = -op.tau * np.eye(mp)
    red[mp:, mp:] = -op.tau * np.eye(nq)
    core = p_blk.T @ a @ q_blk
    red[:mp, mp:] = core
    red[mp:, :mp] = core.T
    if return_basis:
        return red, w
    return red
