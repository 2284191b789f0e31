"""Thick-restart Jacobi-Davidson SVD with inner preconditioning.

The outer loop extracts Ritz triplets from a pair of searching subspaces,
locks converged triplets (deflation), drops them from the subspaces
(purgation), and otherwise expands the subspaces with an approximate
solution of a projected correction equation solved by MINRES. In
``IPJDSVD`` mode the projector of that equation also removes every Ritz
pair judged clustered at the target; ``JDSVD`` mode removes only the
current approximation.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dense import Dropped, orthonormalize_against, random_orthonormal, small_svd
from .minres import MinresStatus, minres
from .operator import ProjectedAugmentedOp
from .sparse import SparseMatrix

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    JDSVD = "jdsvd"
    IPJDSVD = "ipjdsvd"


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAXIT = "maxit"


@dataclass
class SolverConfig:
    tau: float = 0.0
    ell: int = 1
    tol: float = 1e-8
    k_max: int = 30
    k_min: int = 3
    eps_inner: float = 1e-4
    pretol1: float = 0.05
    pretol2: float = 0.01
    mode: Mode = Mode.IPJDSVD
    u0: np.ndarray | None = None
    v0: np.ndarray | None = None
    maxit_outer: int | None = None
    maxit_inner: int | None = None
    audit_cap: int = 400
    seed: int = 0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.validate()

    def validate(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.ell < 1:
            raise ValueError("ell must be at least 1")
        if not 1 < self.k_min < self.k_max:
            raise ValueError("need 1 < k_min < k_max")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if not self.eps_inner > 0:
            raise ValueError("eps_inner must be positive")
        if self.pretol1 < 0 or self.pretol2 < 0:
            raise ValueError("pretol1 and pretol2 must be nonnegative")

    @property
    def outer_limit(self):
        return self.maxit_outer if self.maxit_outer is not None else 500 * self.ell


@dataclass
class SubspacePair:
    """Orthonormal bases ``u`` (M x k), ``v`` (N x k) and ``h = u^T A v``.

    ``au = A v`` and ``atu = A^T u`` are carried along so Ritz residuals
    cost no products with A.
    """

    u: np.ndarray
    v: np.ndarray
    h: np.ndarray
    au: np.ndarray
    atu: np.ndarray

    @property
    def k(self):
        return self.u.shape[1]

    @classmethod
    def empty(cls, m, n):
        return cls(np.zeros((m, 0)), np.zeros((n, 0)), np.zeros((0, 0)),
                   np.zeros((m, 0)), np.zeros((n, 0)))

    def projection_error(self, a_dense):
        """``max |h - u^T A v|`` against a dense copy of A."""
        if self.k == 0:
            return 0.0
        return float(np.abs(self.h - self.u.T @ a_dense @ self.v).max())


@dataclass
class RitzSet:
    theta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    au: np.ndarray
    atu: np.ndarray
    res_u: np.ndarray
    res_v: np.ndarray

    @property
    def k(self):
        return self.theta.size

    @property
    def rnorms(self):
        return np.sqrt((self.res_u ** 2).sum(axis=0) + (self.res_v ** 2).sum(axis=0))

    def residual(self, i):
        return np.concatenate([self.res_u[:, i], self.res_v[:, i]])


@dataclass
class DeflationSet:
    sigma: list = field(default_factory=list)
    u: np.ndarray = None
    v: np.ndarray = None
    residuals: list = field(default_factory=list)

    @classmethod
    def empty(cls, m, n):
        return cls([], np.zeros((m, 0)), np.zeros((n, 0)), [])

    @property
    def count(self):
        return len(self.sigma)

    def add(self, theta, u, v, residual):
        self.sigma.append(float(theta))
        self.u = np.column_stack([self.u, u])
        self.v = np.column_stack([self.v, v])
        self.residuals.append(residual)


@dataclass
class RunReport:
    values: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual_norms: np.ndarray
    outer_iterations: int
    mvs: int
    mv_breakdown: dict
    inner_histories: list
    trace: list
    events: list
    wall_time: float
    status: Status
    config: SolverConfig
    shape: tuple
    norme: float
    transposed: bool

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    @property
    def aggregate_residual(self):
        return float(np.sqrt(np.sum(np.square(self.residual_norms))))


def extract_ritz(sub: SubspacePair, tau) -> RitzSet:
    """Standard extraction: Ritz triplets of the subspaces ordered by ``|theta - tau|``."""
    svd = small_svd(sub.h, tau)
    theta = svd.theta
    u = sub.u @ svd.left
    v = sub.v @ svd.right
    au = sub.au @ svd.right
    atu = sub.atu @ svd.left
    return RitzSet(theta, u, v, au, atu, au - u * theta, atu - v * theta)


def check_convergence(rnorm, norme, tol):
    return rnorm <= norme * tol


def select_cluster(ritz: RitzSet, cfg: SolverConfig, norme):
    """Indices (0-based) of the Ritz triplets used in the projector.

    Index 0 is always included; index ``i >= 1`` joins when its value is
    within ``pretol1`` (relative to ``max(theta, 1)``) of the target and
    its residual is at most ``norme * pretol2``.
    """
    rn = ritz.rnorms
    chosen = [0]
    for i in range(1, ritz.k):
        th = ritz.theta[i]
        if abs(th - cfg.tau) <= max(th, 1.0) * cfg.pretol1 and rn[i] <= norme * cfg.pretol2:
            chosen.append(i)
    return chosen


def assemble_correction(ritz: RitzSet, selected, defl: DeflationSet, a, tau):
    """Projected operator and right-hand side of the correction equation.

    ``U_p = [U_c, u_selected]``, ``V_p = [V_c, v_selected]`` and
    ``r_p = -diag(I - U_c U_c^T, I - V_c V_c^T) r`` with ``r`` the residual
    of the first Ritz triplet.
    """
    if not selected or selected[0] != 0:
        raise ValueError("selection must start with the first Ritz triplet")
    up = np.column_stack([defl.u, ritz.u[:, selected]])
    vp = np.column_stack([defl.v, ritz.v[:, selected]])
    op = ProjectedAugmentedOp(a, tau, up, vp)
    ru = ritz.res_u[:, 0].copy()
    rv = ritz.res_v[:, 0].copy()
    if defl.count:
        ru -= defl.u @ (defl.u.T @ ru)
        rv -= defl.v @ (defl.v.T @ rv)
    return op, -np.concatenate([ru, rv])


def inner_tolerance(ritz: RitzSet, eps_inner, norme):
    """Relative MINRES tolerance ``min(rho * eps_inner, 0.1)``.

    ``rho`` is the smallest gap between the first Ritz value and the
    others, relative to ``norme`` and clamped to [1e-2, 1e2]; with a single
    Ritz value ``rho = 1``.
    """
    if ritz.k < 2 or norme == 0:
        rho = 1.0
    else:
        gap = np.abs(ritz.theta[1:] - ritz.theta[0]).min()
        rho = float(np.clip(gap / norme, 1e-2, 1e2))
    return min(rho * eps_inner, 0.1)


def _grow(sub: SubspacePair, u_new, v_new, a):
    """Append orthonormal columns and update h with two products."""
    av = a.apply(v_new)
    atu = a.apply_transpose(u_new)
    u = np.column_stack([sub.u, u_new])
    v = np.column_stack([sub.v, v_new])
    k = sub.k
    h = np.zeros((k + 1, k + 1))
    h[:k, :k] = sub.h
    h[:, k] = u.T @ av
    h[k, :k] = atu @ sub.v
    return SubspacePair(u, v, h, np.column_stack([sub.au, av]), np.column_stack([sub.atu, atu]))


def expand_subspace(sub: SubspacePair, s, t, a, uc=None, vc=None, rng=None):
    """Orthonormalize ``s``, ``t`` against the bases (and locked vectors) and append.

    A vector that lies numerically inside the current span is replaced by
    a random orthonormal one. Returns ``(new_subspace, dropped_flags)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    qu = sub.u if uc is None or uc.shape[1] == 0 else np.column_stack([uc, sub.u])
    qv = sub.v if vc is None or vc.shape[1] == 0 else np.column_stack([vc, sub.v])
    dropped = [False, False]
    try:
        u_new = orthonormalize_against(s, qu)
    except Dropped:
        dropped[0] = True
        u_new = random_orthonormal(rng, qu.shape[0], qu)
    try:
        v_new = orthonormalize_against(t, qv)
    except Dropped:
        dropped[1] = True
        v_new = random_orthonormal(rng, qv.shape[0], qv)
    return _grow(sub, u_new, v_new, a), tuple(dropped)


def _restricted(ritz: RitzSet, idx):
    idx = list(idx)
    return SubspacePair(ritz.u[:, idx], ritz.v[:, idx], np.diag(ritz.theta[idx]),
                        ritz.au[:, idx], ritz.atu[:, idx])


def thick_restart(ritz: RitzSet, selected, k_min):
    """Restart to ``max(k_min, len(selected))`` Ritz pairs with diagonal h.

    With at most ``k_min`` selected pairs the ``k_min`` pairs nearest the
    target are kept; otherwise exactly the selected ones.
    """
    if len(selected) <= k_min:
        return _restricted(ritz, range(min(k_min, ritz.k)))
    return _restricted(ritz, selected)


def purge_after_convergence(ritz: RitzSet):
    """Drop the first Ritz pair; the rest keep a diagonal projection matrix."""
    return _restricted(ritz, range(1, ritz.k))


def _fresh_residual(a, theta, u, v):
    ru = a.apply(v) - theta * u
    rv = a.apply_transpose(u) - theta * v
    return ru, rv


def solve(a: SparseMatrix, cfg: SolverConfig | None = None, **kwargs) -> RunReport:
    """Compute the ``cfg.ell`` singular triplets of ``a`` nearest ``cfg.tau``.

    Triplets come back in the order they converged. Wide matrices are
    handled through the transpose; the returned ``u`` and ``v`` always
    satisfy ``A v_i ~ sigma_i u_i``.
    """
    if cfg is None:
        cfg = SolverConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a SolverConfig or keyword arguments, not both")
    start_time = time.perf_counter()
    m0, n0 = a.shape
    if cfg.ell > min(m0, n0):
        raise ValueError(f"ell = {cfg.ell} exceeds min(M, N) = {min(m0, n0)}")
    transposed = m0 < n0
    if cfg.tau == 0.0 and m0 != n0:
        log.warning("tau = 0 on a %d x %d matrix: the augmented operator has %d spurious zero "
                    "eigenvalues and the iteration may not converge; use a small positive tau",
                    m0, n0, abs(m0 - n0))
    op_a = a.transpose() if transposed else a
    m, n = op_a.shape
    u0, v0 = (cfg.v0, cfg.u0) if transposed else (cfg.u0, cfg.v0)
    u0 = np.full(m, 1.0 / np.sqrt(m)) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.full(n, 1.0 / np.sqrt(n)) if v0 is None else np.asarray(v0, dtype=float)
    if u0.shape != (m,) or v0.shape != (n,):
        raise ValueError("starting vectors have the wrong length")

    rng = np.random.default_rng(cfg.seed)
    norme = op_a.norm_estimates().norme
    tau = cfg.tau
    maxit_inner = cfg.maxit_inner if cfg.maxit_inner is not None else min(m + n, 3000)
    mv_start = a.mv_count
    breakdown = {"expansion": 0, "inner": 0, "verification": 0}
    trace, events, inner_histories = [], [], []

    defl = DeflationSet.empty(m, n)
    sub, _ = expand_subspace(SubspacePair.empty(m, n), u0, v0, op_a, rng=rng)
    breakdown["expansion"] += 2
    outer = 0
    status = Status.MAXIT

    while True:
        ritz = extract_ritz(sub, tau)
        done = False
        while True:
            rn = ritz.rnorms
            if not check_convergence(rn[0], norme, cfg.tol):
                break
            # confirm with fresh products before locking
            ru, rv = _fresh_residual(op_a, ritz.theta[0], ritz.u[:, 0], ritz.v[:, 0])
            breakdown["verification"] += 2
            fresh = float(np.sqrt(ru @ ru + rv @ rv))
            passed = check_convergence(fresh, norme, cfg.tol)
            events.append({"event": "verified", "outer": outer, "passed": bool(passed)})
            if not passed:
                ritz.res_u[:, 0], ritz.res_v[:, 0] = ru, rv
                break
            defl.add(ritz.theta[0], ritz.u[:, 0], ritz.v[:, 0], fresh)
            before = a.mv_count
            event = {"event": "converged", "outer": outer, "index": defl.count,
                     "value": float(ritz.theta[0]), "residual": fresh, "k_before": ritz.k}
            log.debug("triplet %d converged: %.15g (residual %.3e)", defl.count, ritz.theta[0], fresh)
            if defl.count == cfg.ell:
                events.append(event)
                done = True
                break
            if ritz.k > 1:
                sub = purge_after_convergence(ritz)
                event["purge_mvs"] = a.mv_count - before
                event["k_after"] = sub.k
                events.append(event)
                ritz = extract_ritz(sub, tau)
            else:
                event["purge_mvs"] = 0
                event["k_after"] = 0
                events.append(event)
                w_u = random_orthonormal(rng, m, defl.u)
                w_v = random_orthonormal(rng, n, defl.v)
                sub, _ = expand_subspace(SubspacePair.empty(m, n), w_u, w_v, op_a,
                                         uc=defl.u, vc=defl.v, rng=rng)
                breakdown["expansion"] += 2
                events.append({"event": "reinitialized", "outer": outer})
                ritz = extract_ritz(sub, tau)
        if done:
            status = Status.CONVERGED
            break
        if outer >= cfg.outer_limit:
            break

        if cfg.mode is Mode.IPJDSVD:
            selected = select_cluster(ritz, cfg, norme)
        else:
            selected = [0]
        op, rhs = assemble_correction(ritz, selected, defl, op_a, tau)
        rtol = inner_tolerance(ritz, cfg.eps_inner, norme)
        res = minres(op, rhs, rtol=rtol, maxit=maxit_inner)
        outer += 1
        breakdown["inner"] += 2 * res.op_applications
        inner_histories.append(res.residual_history)
        s, t = res.solution[:m], res.solution[m:]

        entry = {
            "outer": outer,
            "k": ritz.k,
            "theta1": float(ritz.theta[0]),
            "rnorm1": float(ritz.rnorms[0]),
            "m_tilde": len(selected),
            "inner_iterations": res.iterations,
            "inner_status": res.status.value,
            "inner_rtol": rtol,
            "inner_mvs": 2 * res.op_applications,
            "converged_count": defl.count,
            "restarted": False,
        }
        if defl.count:
            entry["deflation_orthogonality"] = float(max(
                np.abs(sub.u.T @ defl.u).max(), np.abs(sub.v.T @ defl.v).max()))
        else:
            entry["deflation_orthogonality"] = 0.0
        if res.status is not MinresStatus.CONVERGED:
            log.debug("outer %d: MINRES %s after %d steps", outer, res.status.value, res.iterations)

        k_cap = min(cfg.k_max, n - defl.count)
        if ritz.k >= k_cap:
            sub = thick_restart(ritz, selected, cfg.k_min)
            if sub.k >= k_cap:
                sub = _restricted(ritz, range(k_cap - 1))
            if sub.k == 0:
                # only one right direction is left, so the best left vector is A v
                s = ritz.au[:, 0]
                t = ritz.v[:, 0]
            entry["restarted"] = True
            entry["k_after_restart"] = sub.k
        sub, dropped = expand_subspace(sub, s, t, op_a, defl.u, defl.v, rng)
        breakdown["expansion"] += 2
        entry["dropped"] = list(dropped)
        entry["k_after_expand"] = sub.k
        trace.append(entry)

    rn = np.array([r for r in defl.residuals])
    uc, vc = (defl.v, defl.u) if transposed else (defl.u, defl.v)
    return RunReport(
        values=np.array(defl.sigma),
        u=uc,
        v=vc,
        residual_norms=rn,
        outer_iterations=outer,
        mvs=a.mv_count - mv_start,
        mv_breakdown=breakdown,
        inner_histories=inner_histories,
        trace=trace,
        events=events,
        wall_time=time.perf_counter() - start_time,
        status=status,
        config=cfg,
        shape=(m0, n0),
        norme=norme,
        transposed=transposed,
    )
