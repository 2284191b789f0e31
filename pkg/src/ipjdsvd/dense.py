"""Small dense kernels: projected SVD, Gram-Schmidt, and a Jacobi SVD oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DROP_TOL = 1e-10


@dataclass
class SmallSvd:
    """Singular triplets of a small matrix, ordered by distance to the target.

    ``theta[i]``, ``left[:, i]``, ``right[:, i]`` satisfy
    ``H @ right[:, i] = theta[i] * left[:, i]``. ``order`` maps positions
    in this ordering back to the position in the LAPACK output.
    """

    theta: np.ndarray
    left: np.ndarray
    right: np.ndarray
    order: np.ndarray


def target_order(values, tau):
    """Permutation sorting ``values`` by ``|value - tau|``.

    Ties go to the smaller value, then to the lower original index.
    """
    values = np.asarray(values, dtype=float)
    idx = np.arange(values.size)
    return np.lexsort((idx, values, np.abs(values - tau)))


def small_svd(h, tau):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        raise ValueError("small_svd expects a nonempty square matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("small_svd: matrix has non-finite entries")
    c, s, dt = np.linalg.svd(h)
    order = target_order(s, tau)
    return SmallSvd(s[order], c[:, order], dt.T[:, order], order)


class Dropped(Exception):
    """Signal that a vector lies numerically inside the span it was orthogonalized against."""


def orthonormalize_against(v, q=None, drop_tol=DROP_TOL):
    """Classical Gram-Schmidt with one re-orthogonalization pass.

    Returns the normalized component of ``v`` orthogonal to the columns of
    ``q``. Raises :class:`Dropped` when that component has norm at most
    ``drop_tol * ||v||``.
    """
    v = np.array(v, dtype=np.float64)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise Dropped("zero vector")
    w = v
    if q is not None and q.shape[1] > 0:
        for _ in range(2):
            w = w - q @ (q.T @ w)
    nw = np.linalg.norm(w)
    if nw <= drop_tol * nv:
        raise Dropped(f"residual norm {nw:.3e} below {drop_tol:g} * {nv:.3e}")
    w = w / nw
    if q is not None and q.shape[1] > 0:
        # unit-scale cleanup; keeps orthogonality at machine level
        w = w - q @ (q.T @ w)
        w /= np.linalg.norm(w)
    return w


def random_orthonormal(rng, n, q=None):
    """Random unit vector orthogonal to the columns of ``q``."""
    if q is not None and q.shape[1] >= n:
        raise ValueError("no orthogonal complement left")
    while True:
        try:
            return orthonormalize_against(rng.standard_normal(n), q)
        except Dropped:
            continue


def complete_basis(q, n, rng):
    """Orthonormal ``P`` with ``[q, P]`` square orthogonal (``n`` rows)."""
    p = 0 if q is None else q.shape[1]
    basis = np.zeros((n, p)) if q is None else q
    cols = []
    for _ in range(n - p):
        w = random_orthonormal(rng, n, basis)
        cols.append(w)
        basis = np.column_stack([basis, w])
    if not cols:
        return np.zeros((n, 0))
    return np.column_stack(cols)


def jacobi_svd(a, tol=1e-15, max_sweeps=80):
    """Full SVD of a dense matrix by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, vt)`` with ``s`` descending, ``u`` of shape ``(M, M)``
    and ``vt`` of shape ``(N, N)`` for ``M >= N`` input; wide input is
    handled through the transpose. Independent of LAPACK's SVD so that it
    can serve as a reference for checking solver output.
    """
    a = np.array(a, dtype=np.float64)
    m, n = a.shape
    if m < n:
        u, s, vt = jacobi_svd(a.T, tol, max_sweeps)
        return vt.T, s, u.T
    work = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                x, y = work[:, i], work[:, j]
                alpha = x @ x
                beta = y @ y
                gamma = x @ y
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wi = c * x - s * y
                wj = s * x + c * y
                work[:, i], work[:, j] = wi, wj
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if not rotated:
            break
    sig = np.linalg.norm(work, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, work, v = sig[order], work[:, order], v[:, order]
    u = np.zeros((m, n))
    rng = np.random.default_rng(0)
    scale = sig[0] if n and sig[0] > 0 else 1.0
    for i in range(n):
        if sig[i] > 1e-14 * scale:
            u[:, i] = work[:, i] / sig[i]
        else:
            u[:, i] = random_orthonormal(rng, m, u[:, :i])
    # re-orthonormalize columns belonging to tiny singular values
    uq = u.copy()
    for i in range(n):
        uq[:, i] = orthonormalize_against(u[:, i], uq[:, :i], drop_tol=0.0)
    ufull = np.column_stack([uq, complete_basis(uq, m, rng)]) if m > n else uq
    return ufull, sig, v.T
