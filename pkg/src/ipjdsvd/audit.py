"""MINRES convergence audits for the correction equations.

Small problems with a known SVD are built, the correction operator is
installed with exact or deliberately perturbed singular vectors, and the
MINRES residual histories are compared with the closed-form bounds. The
reference SVD comes from :func:`ipjdsvd.dense.jacobi_svd`, not from the
solver being audited.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dense import complete_basis, jacobi_svd, target_order
from .minres import minres
from .operator import AUDIT_CAP, ProjectedAugmentedOp, assemble_reduced_op
from .sparse import SparseMatrix

SLACK = 1e-12


class Case(str, enum.Enum):
    LARGEST = "LARGEST"
    SMALLEST = "SMALLEST"
    INTERIOR = "INTERIOR"


class BoundInapplicable(ValueError):
    """The perturbation radius is too large for the bound to hold."""


@dataclass(frozen=True)
class OracleSpectrum:
    """Singular values labeled by distance to ``tau`` plus the extremes."""

    sigma: np.ndarray          # ordered by |sigma - tau|
    descending: np.ndarray     # sorted largest first
    tau: float
    m_rows: int
    n_cols: int

    @property
    def sigma_max(self):
        return float(self.descending[0])

    @property
    def sigma_min(self):
        return float(self.descending[-1])

    def sigma_max_k(self, k):
        """k-th largest singular value (1-based)."""
        return float(self.descending[k - 1])

    def sigma_min_k(self, k):
        """k-th smallest singular value (1-based)."""
        return float(self.descending[-k])

    def nearest(self, k):
        """k-th closest singular value to tau (1-based)."""
        return float(self.sigma[k - 1])

    @property
    def j_o(self):
        return min(1, self.m_rows - self.n_cols)


def oracle_spectrum(sigma, tau, m_rows=None, n_cols=None) -> OracleSpectrum:
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size if n_cols is None else n_cols
    m = n if m_rows is None else m_rows
    return OracleSpectrum(sigma[target_order(sigma, tau)], np.sort(sigma)[::-1], float(tau), m, n)


def classify(spec: OracleSpectrum, m=1) -> Case:
    """Which of the three target regimes applies when ``m`` values are projected out."""
    tau = spec.tau
    if tau > 0.5 * (spec.sigma_max + spec.sigma_max_k(m + 1)):
        return Case.LARGEST
    if tau < 0.5 * (spec.sigma_min + spec.sigma_min_k(m + 1)):
        return Case.SMALLEST
    return Case.INTERIOR


@dataclass
class GammaFactors:
    case: Case
    case_m: Case
    gamma1: float | None = None
    gamma2: float | None = None
    gamma3: float | None = None
    gamma4: float | None = None
    gamma5: float | None = None
    gamma6: float | None = None


def _gamma(spec, m, case):
    tau = spec.tau
    if case is Case.LARGEST:
        s = spec.sigma_max_k(m + 1)
        return (tau - s) / (tau + s)
    if case is Case.SMALLEST:
        s = spec.sigma_min_k(m + 1)
        return (s * s - tau * tau) / (spec.sigma_max ** 2 - tau * tau)
    return abs(tau - spec.nearest(m + 1)) / (spec.sigma_max + tau)


def gamma_factors(spec: OracleSpectrum, tau=None, m=1) -> GammaFactors:
    """Convergence factors for one projected vector pair and for ``m`` pairs.

    Only the factor matching each regime is filled in; the others stay None.
    """
    if tau is not None and tau != spec.tau:
        spec = oracle_spectrum(spec.descending, tau, spec.m_rows, spec.n_cols)
    c1, cm = classify(spec, 1), classify(spec, m)
    out = GammaFactors(c1, cm)
    setattr(out, {Case.LARGEST: "gamma1", Case.SMALLEST: "gamma2", Case.INTERIOR: "gamma3"}[c1],
            _gamma(spec, 1, c1))
    setattr(out, {Case.LARGEST: "gamma4", Case.SMALLEST: "gamma5", Case.INTERIOR: "gamma6"}[cm],
            _gamma(spec, m, cm))
    return out


_THEOREM_CASE = {"i": Case.LARGEST, "ii": Case.SMALLEST, "iii": Case.INTERIOR}


@dataclass
class BoundCase:
    """A closed-form MINRES residual bound ``j -> bound(j)``.

    One-interval cases (``alpha2 is None``) give ``2 * factor**j``;
    two-interval cases give ``2 * prefactor * factor**[(j - shift) / 2]``.
    """

    theorem: str
    alpha: float
    beta: float
    alpha2: float | None = None
    beta2: float | None = None
    delta: float = 0.0
    j_o: int = 0
    prefactor: float = 1.0

    @property
    def factor(self):
        if self.alpha2 is None:
            kappa = math.sqrt(self.beta / self.alpha)
        else:
            kappa = math.sqrt(self.beta * self.beta2 / (self.alpha * self.alpha2))
        return 1.0 - 2.0 / (1.0 + kappa)

    def __call__(self, j):
        return bound_curve(self, j)


def bound_curve(case: BoundCase, j) -> float:
    if j < 0:
        raise ValueError("iteration index must be nonnegative")
    if case.alpha2 is None:
        return 2.0 * case.factor ** j
    # integer part, truncated toward zero
    power = int((j - case.j_o) / 2)
    return 2.0 * case.prefactor * case.factor ** power


def two_interval_case(theorem, alpha1, beta1, alpha2, beta2, j_o=0, prefactor=1.0, delta=0.0):
    return BoundCase(theorem, alpha1, beta1, alpha2, beta2, delta, j_o, prefactor)


def make_bound_case(theorem: str, spec: OracleSpectrum, m=1, delta=0.0) -> BoundCase:
    """Bound for theorem ids like ``"T3ii"`` or ``"T9iii"``.

    T3/T5 project out one pair, T7/T9 project out ``m`` pairs; T3/T7 use
    exact vectors (``delta = 0``) and T5/T9 a perturbation radius
    ``delta``.
    """
    head, roman = theorem[:2], theorem[2:]
    if head not in ("T3", "T5", "T7", "T9") or roman not in _THEOREM_CASE:
        raise ValueError(f"unknown theorem case {theorem!r}")
    if head in ("T3", "T5"):
        m = 1
    if head in ("T3", "T7"):
        delta = 0.0
    tau = spec.tau
    next_val = spec.nearest(m + 1)
    if delta >= abs(next_val - tau):
        raise BoundInapplicable(
            f"delta = {delta:.3e} is not below |sigma_(m+1) - tau| = {abs(next_val - tau):.3e}")
    case = _THEOREM_CASE[roman]
    smax = spec.sigma_max
    if case is Case.LARGEST:
        s = spec.sigma_max_k(m + 1)
        return BoundCase(theorem, tau - s - delta, tau + s + delta, delta=delta)
    if case is Case.SMALLEST:
        s = spec.sigma_min_k(m + 1)
        j_o = spec.j_o
        if j_o and tau <= 0:
            raise BoundInapplicable("the M > N smallest-value bound needs tau > 0")
        pre = ((smax + delta) / tau) ** j_o if j_o else 1.0
        return BoundCase(theorem, s + tau - delta, smax + tau + delta,
                         s - tau - delta, smax - tau + delta, delta, j_o, pre)
    gap = abs(next_val - tau) - delta
    top = smax + tau + delta
    # equal intervals: sqrt(beta1 beta2 / alpha1 alpha2) = top / gap
    return BoundCase(theorem, gap, top, gap, top, delta, 0, 1.0)


def theorem2_case(alpha, beta, alpha2=None, beta2=None):
    """Bound for a definite spectrum in [alpha, beta] (or -[beta, alpha]) or
    an indefinite one in [-beta, -alpha] U [alpha2, beta2] with equal lengths."""
    if alpha2 is None:
        return BoundCase("T2i", alpha, beta)
    if not math.isclose(beta - alpha, beta2 - alpha2, rel_tol=1e-12, abs_tol=1e-14):
        raise ValueError("the two intervals must have equal lengths")
    return BoundCase("T2ii", alpha, beta, alpha2, beta2)


@dataclass
class AngleReport:
    sin_max: float
    sines: np.ndarray


def _orthonormal_or_raise(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sv = np.linalg.svd(x, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise ValueError(f"{name} is rank deficient")
    if np.abs(sv - 1.0).max() > 1e-8:
        raise ValueError(f"{name} does not have orthonormal columns")
    return x


def subspace_angles(approx, exact) -> AngleReport:
    """Sines of the canonical angles between two equal-dimension subspaces."""
    approx = _orthonormal_or_raise(approx, "approximate block")
    exact = _orthonormal_or_raise(exact, "exact block")
    if approx.shape != exact.shape:
        raise ValueError("blocks must have the same shape")
    resid = approx - exact @ (exact.T @ approx)
    sines = np.clip(np.linalg.svd(resid, compute_uv=False), 0.0, 1.0)
    return AngleReport(float(sines.max()), np.sort(sines)[::-1])


def perturb_block(exact, angle, rng, avoid=None):
    """Rotate every column of ``exact`` by ``angle`` toward a random orthogonal block.

    All canonical angles between the result and ``exact`` equal ``angle``.
    ``avoid`` lists extra columns the rotation directions must be orthogonal to.
    """
    n, m = exact.shape
    q = exact if avoid is None else np.column_stack([exact, avoid])
    x = complete_basis(q, n, rng)[:, :m]
    if x.shape[1] < m:
        raise ValueError("not enough room for the perturbation directions")
    mix, _ = np.linalg.qr(rng.standard_normal((x.shape[1], x.shape[1])))
    x = x @ mix[:, :m] if x.shape[1] > m else x
    return math.cos(angle) * exact + math.sin(angle) * x


# ---------------------------------------------------------------------------
# problem construction


@dataclass
class AuditProblem:
    a: np.ndarray
    sigma: np.ndarray
    tau: float
    m: int
    case: Case

    @property
    def shape(self):
        return self.a.shape


def planted_matrix(sigma, m_rows, n_cols, rng):
    """Dense ``P diag(sigma) Q^T`` with random orthogonal factors (``m_rows >= n_cols``)."""
    p, _ = np.linalg.qr(rng.standard_normal((m_rows, n_cols)))
    q, _ = np.linalg.qr(rng.standard_normal((n_cols, n_cols)))
    return (p * sigma) @ q.T


def random_problem(case: Case, m, rng, size=(12, 40)) -> AuditProblem:
    """Random planted problem whose ``m`` values nearest the target fall in regime ``case``."""
    n_cols = int(rng.integers(max(size[0], m + 3), size[1] + 1))
    m_rows = n_cols + int(rng.integers(0, 6))
    spread = 0.05 * rng.uniform(0.2, 1.0)
    if case is Case.LARGEST:
        top = rng.uniform(4.0, 6.0)
        cluster = top - spread * np.sort(rng.uniform(0, 1, m))
        rest = rng.uniform(0.1, top - 1.0, n_cols - m)
        tau = top + rng.uniform(0.05, 1.0)
    elif case is Case.SMALLEST:
        low = rng.uniform(0.1, 0.4)
        cluster = low + spread * np.sort(rng.uniform(0, 1, m))
        rest = rng.uniform(low + 1.0, low + 4.0, n_cols - m)
        tau = low + spread * rng.uniform(0.0, 1.0)
    else:
        center = rng.uniform(1.5, 2.5)
        cluster = center + spread * (rng.uniform(0, 1, m) - 0.5)
        below = rng.uniform(0.1, center - 0.6, (n_cols - m) // 2)
        above = rng.uniform(center + 0.6, center + 3.0, n_cols - m - below.size)
        rest = np.concatenate([below, above])
        tau = center + 0.25 * spread * rng.uniform(-1, 1)
    sigma = np.concatenate([cluster, rest])
    a = planted_matrix(sigma, m_rows, n_cols, rng)
    return AuditProblem(a, sigma, float(tau), m, case)


@dataclass
class OracleSvd:
    u: np.ndarray   # M x N, columns ordered by distance to tau
    s: np.ndarray
    v: np.ndarray   # N x N
    spectrum: OracleSpectrum

    def block(self, m):
        return self.u[:, :m], self.v[:, :m]


def oracle_svd(a, tau) -> OracleSvd:
    a = np.asarray(a, dtype=float)
    m_rows, n_cols = a.shape
    if m_rows < n_cols:
        raise ValueError("audit problems are stored with M >= N")
    u, s, vt = jacobi_svd(a)
    order = target_order(s, tau)
    return OracleSvd(u[:, order], s[order], vt.T[:, order],
                     oracle_spectrum(s, tau, m_rows, n_cols))


def _random_rhs(rng, up, vp):
    m_rows, n_cols = up.shape[0], vp.shape[0]
    r = rng.standard_normal(m_rows + n_cols)
    ru, rv = r[:m_rows], r[m_rows:]
    ru -= up @ (up.T @ ru)
    rv -= vp @ (vp.T @ rv)
    ru -= up @ (up.T @ ru)
    rv -= vp @ (vp.T @ rv)
    r = np.concatenate([ru, rv])
    return r / np.linalg.norm(r)


# ---------------------------------------------------------------------------
# checks


@dataclass
class EquivalenceResult:
    history_gap: float
    solution_gap: float
    iterations: tuple
    histories: tuple


def verify_equivalence(a, tau, up, vp, rhs, rtol=1e-10, maxit=None, cap=AUDIT_CAP, rng=None):
    """Run MINRES on the implicit projected operator and on the reduced dense matrix.

    Returns the largest gap between the two residual histories relative to
    ``||rhs||`` and the relative gap between ``w_J`` and ``W z_J``.
    """
    if not isinstance(a, SparseMatrix):
        a = SparseMatrix.from_dense(a)
    op = ProjectedAugmentedOp(a, tau, up, vp)
    red, w = assemble_reduced_op(op, cap=cap, rng=rng, return_basis=True)
    rhs = np.asarray(rhs, dtype=float)
    nr = np.linalg.norm(rhs)
    maxit = maxit if maxit is not None else op.size
    full = minres(op, rhs, rtol=rtol, maxit=maxit)
    reduced = minres(red, w.T @ rhs, rtol=rtol, maxit=maxit)
    common = min(len(full.residual_history), len(reduced.residual_history))
    h1 = np.array(full.residual_history[:common])
    h2 = np.array(reduced.residual_history[:common])
    gap = float(np.abs(h1 - h2).max() / nr) if nr else 0.0
    # compare solutions at the same iteration count
    j = min(full.iterations, reduced.iterations)
    if j != full.iterations:
        full = minres(op, rhs, rtol=0.0, maxit=j)
    if j != reduced.iterations:
        reduced = minres(red, w.T @ rhs, rtol=0.0, maxit=j)
    lift = w @ reduced.solution
    scale = max(np.linalg.norm(full.solution), np.finfo(float).tiny)
    sol_gap = float(np.linalg.norm(full.solution - lift) / scale)
    return EquivalenceResult(gap, sol_gap, (full.iterations, reduced.iterations),
                             (list(h1), list(h2)))


def exact_correction_solution(a, tau, up, vp, rhs, cap=AUDIT_CAP):
    """Minimum-norm solution of the projected correction equation by dense pseudo-inverse."""
    if not isinstance(a, SparseMatrix):
        a = SparseMatrix.from_dense(a)
    op = ProjectedAugmentedOp(a, tau, up, vp)
    dense = op.dense(cap=cap)
    return np.linalg.lstsq(dense, rhs, rcond=None)[0]


@dataclass
class TailProbe:
    tail_norm: float
    r_norm: float
    ratio: float
    tail: np.ndarray


def rtail_probe(a, ritz, selected, tau, cap=AUDIT_CAP) -> TailProbe:
    """Size of the term dropped when the projector is widened to the selected pairs.

    ``(s, t)`` is the exact solution of the single-pair correction
    equation; the tail is ``[R1 V'^T t; R2 U'^T s]`` where the columns of
    ``R1``, ``R2`` are the residual blocks of the secondary selected pairs.
    """
    m_rows = ritz.u.shape[0]
    r = ritz.residual(0)
    rn = float(np.linalg.norm(r))
    others = [i for i in selected if i != 0]
    if not others or rn == 0.0:
        tail = np.zeros_like(r)
        return TailProbe(0.0, rn, 0.0, tail)
    w = exact_correction_solution(a, tau, ritz.u[:, [0]], ritz.v[:, [0]], -r, cap=cap)
    s, t = w[:m_rows], w[m_rows:]
    up, vp = ritz.u[:, others], ritz.v[:, others]
    tail = np.concatenate([ritz.res_u[:, others] @ (vp.T @ t), ritz.res_v[:, others] @ (up.T @ s)])
    tn = float(np.linalg.norm(tail))
    return TailProbe(tn, rn, tn / rn ** 2, tail)


@dataclass
class BoundReport:
    theorem: str
    trials: int = 0
    skipped: int = 0
    violations: int = 0
    worst_margin: float = -math.inf
    seeds: list = field(default_factory=list)
    min_iterations: int = 0
    max_iterations: int = 0

    @property
    def passed(self):
        return self.violations == 0 and self.trials > 0

    def as_dict(self):
        return {
            "theorem": self.theorem,
            "trials": self.trials,
            "skipped": self.skipped,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "iterations": [self.min_iterations, self.max_iterations],
            "seeds": self.seeds,
        }


def history_margin(history, bound: BoundCase):
    """Largest ``ratio_j - bound(j)`` over the run (negative means satisfied)."""
    h = np.asarray(history, dtype=float)
    ratios = h / h[0]
    bounds = np.array([bound_curve(bound, j) for j in range(h.size)])
    return float((ratios - bounds).max())


def run_bound_trial(a, tau, up, vp, bound: BoundCase, rng, maxit=None):
    op = ProjectedAugmentedOp(SparseMatrix.from_dense(a), tau, up, vp)
    rhs = _random_rhs(rng, up, vp)
    maxit = maxit if maxit is not None else 2 * op.size
    out = minres(op, rhs, rtol=1e-13, maxit=maxit)
    return history_margin(out.residual_history, bound), out.iterations


def check_bound_satisfaction(theorem, trials=50, seed=0, size=(12, 40), m_range=(2, 4)):
    """Randomized check of one theorem case (ids ``T2i``, ``T2ii``, ``T3i`` ... ``T9iii``)."""
    report = BoundReport(theorem)
    iters = []
    root = np.random.SeedSequence(seed)
    for child in root.spawn(trials):
        trial_seed = int(child.generate_state(1)[0])
        rng = np.random.default_rng(trial_seed)
        report.seeds.append(trial_seed)
        if theorem.startswith("T2"):
            margin, its = _theorem2_trial(theorem, rng)
        else:
            try:
                margin, its = _svd_trial(theorem, rng, size, m_range)
            except BoundInapplicable:
                report.skipped += 1
                continue
        report.trials += 1
        iters.append(its)
        report.worst_margin = max(report.worst_margin, margin)
        if margin > SLACK:
            report.violations += 1
    if iters:
        report.min_iterations, report.max_iterations = int(min(iters)), int(max(iters))
    return report


def _theorem2_trial(theorem, rng):
    n = int(rng.integers(20, 120))
    alpha = rng.uniform(0.05, 1.0)
    length = rng.uniform(0.5, 20.0)
    if theorem == "T2i":
        lam = rng.uniform(alpha, alpha + length, n)
        lam[:2] = alpha, alpha + length
        if rng.uniform() < 0.5:
            lam = -lam
        bound = theorem2_case(alpha, alpha + length)
    elif theorem == "T2ii":
        alpha2 = rng.uniform(0.05, 1.0)
        neg = -rng.uniform(alpha, alpha + length, n // 2)
        pos = rng.uniform(alpha2, alpha2 + length, n - n // 2)
        neg[:2] = -alpha, -(alpha + length)
        pos[:2] = alpha2, alpha2 + length
        lam = np.concatenate([neg, pos])
        bound = theorem2_case(alpha, alpha + length, alpha2, alpha2 + length)
    else:
        raise ValueError(f"unknown theorem case {theorem!r}")
    rhs = rng.standard_normal(lam.size)
    out = minres(lambda x: lam * x, rhs, rtol=1e-13, maxit=4 * lam.size)
    return history_margin(out.residual_history, bound), out.iterations


def _svd_trial(theorem, rng, size, m_range):
    head, roman = theorem[:2], theorem[2:]
    case = _THEOREM_CASE[roman]
    m = 1 if head in ("T3", "T5") else int(rng.integers(m_range[0], m_range[1] + 1))
    prob = random_problem(case, m, rng, size)
    orc = oracle_svd(prob.a, prob.tau)
    spec = orc.spectrum
    if classify(spec, m) is not case:
        raise BoundInapplicable("generated problem left the requested regime")
    up, vp = orc.block(m)
    delta = 0.0
    if head in ("T5", "T9"):
        up, vp, delta = _planted_perturbation(orc, m, rng, spec)
    bound = make_bound_case(theorem, spec, m=m, delta=delta)
    return run_bound_trial(prob.a, prob.tau, up, vp, bound, rng)


def _planted_perturbation(orc: OracleSvd, m, rng, spec, fill=None):
    """Perturbed blocks with known canonical angles and the matching delta."""
    sep = abs(spec.nearest(m + 1) - spec.tau)
    smax = spec.sigma_max
    fill = rng.uniform(0.05, 0.9) if fill is None else fill
    # delta = smax (sin a + sin b)^2 = fill * sep
    total = math.sqrt(fill * sep / smax)
    split = rng.uniform(0.2, 0.8)
    a_u = math.asin(min(total * split, 1.0))
    a_v = math.asin(min(total * (1 - split), 1.0))
    ue, ve = orc.block(m)
    up = perturb_block(ue, a_u, rng)
    vp = perturb_block(ve, a_v, rng)
    su = subspace_angles(up, ue).sin_max
    sv = subspace_angles(vp, ve).sin_max
    delta = smax * (su + sv) ** 2
    return up, vp, delta


@dataclass
class PerturbationReport:
    trials: int = 0
    failures: int = 0
    worst_ratio: float = 0.0   # max deviation / delta

    @property
    def passed(self):
        return self.trials > 0 and self.failures == 0

    def as_dict(self):
        return {"trials": self.trials, "failures": self.failures, "worst_ratio": self.worst_ratio}


def check_reduced_perturbation(trials=30, seed=0, size=(12, 40), m_range=(1, 4)):
    """Sorted eigenvalues of the reduced matrices built from exact and perturbed
    blocks differ by at most ``||A|| (||sin Phi|| + ||sin Psi||)^2``."""
    report = PerturbationReport()
    root = np.random.SeedSequence(seed)
    cases = list(Case)
    for idx, child in enumerate(root.spawn(trials)):
        rng = np.random.default_rng(child)
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        prob = random_problem(cases[idx % 3], m, rng, size)
        orc = oracle_svd(prob.a, prob.tau)
        ue, ve = orc.block(m)
        ang_u, ang_v = rng.uniform(0.0, 0.3, 2)
        up = perturb_block(ue, ang_u, rng)
        vp = perturb_block(ve, ang_v, rng)
        a_sp = SparseMatrix.from_dense(prob.a)
        exact = assemble_reduced_op(ProjectedAugmentedOp(a_sp, prob.tau, ue, ve), rng=rng)
        pert = assemble_reduced_op(ProjectedAugmentedOp(a_sp, prob.tau, up, vp), rng=rng)
        dev = np.abs(np.linalg.eigvalsh(exact) - np.linalg.eigvalsh(pert)).max()
        delta = orc.spectrum.sigma_max * (subspace_angles(up, ue).sin_max
                                          + subspace_angles(vp, ve).sin_max) ** 2
        report.trials += 1
        ratio = dev / delta if delta > 0 else (0.0 if dev < 1e-12 else math.inf)
        report.worst_ratio = max(report.worst_ratio, ratio)
        if dev > delta + 1e-12:
            report.failures += 1
    return report


def equivalence_suite(instances=10, seed=0, cap=AUDIT_CAP, rtol=1e-10):
    """Paired MINRES runs (implicit vs reduced dense) on planted problems.

    Each instance projects out the exact singular vectors of the ``p``
    values nearest the target (``p = 0`` leaves the operator unprojected
    with the target in a spectral gap). Sizes stay within ``cap``.
    """
    rows = []
    root = np.random.SeedSequence(seed)
    cases = list(Case)
    hi = max(14, min(150, cap // 2 - 6))
    for idx, child in enumerate(root.spawn(instances)):
        rng = np.random.default_rng(child)
        p = idx % 4
        prob = random_problem(cases[idx % 3], max(p, 1), rng, size=(12, hi))
        orc = oracle_svd(prob.a, prob.tau)
        if p == 0:
            up = np.zeros((prob.a.shape[0], 0))
            vp = np.zeros((prob.a.shape[1], 0))
            tau = _gap_target(orc.spectrum)
        else:
            up, vp = orc.block(p)
            tau = prob.tau
        rhs = _random_rhs(rng, up, vp) if p else rng.standard_normal(sum(prob.a.shape))
        res = verify_equivalence(prob.a, tau, up, vp, rhs, rtol=rtol, cap=cap, rng=rng)
        rows.append({"shape": list(prob.a.shape), "p": p, "tau": tau,
                     "iterations": res.iterations[0], "history_gap": res.history_gap,
                     "solution_gap": res.solution_gap})
    return rows


def _gap_target(spec: OracleSpectrum):
    """Midpoint of the widest gap between consecutive singular values."""
    s = np.sort(spec.descending)
    k = int(np.argmax(np.diff(s)))
    return float(0.5 * (s[k] + s[k + 1]))


def rtail_sequence(steps=8, eps0=1e-3, seed=0, k=5, cluster=(0.0, 0.01, 0.02), tau=1.0):
    """Probe the tail term along subspaces converging to the target cluster.

    A 30 x 20 matrix has singular values ``tau + cluster`` and the rest in
    [2, 4]. Subspace ``j`` spans the exact vectors of the ``k`` nearest
    values plus a fixed random perturbation scaled by ``eps0 / 2**j``, so
    every Ritz pair's error halves from one step to the next. Returns one
    :class:`TailProbe` per step (``steps + 1`` in total).
    """
    from .jdsvd import SubspacePair, extract_ritz

    rng = np.random.default_rng(seed)
    m_rows, n_cols = 30, 20
    sigma = np.concatenate([tau + np.asarray(cluster), rng.uniform(2.0, 4.0, n_cols - len(cluster))])
    a = planted_matrix(sigma, m_rows, n_cols, rng)
    orc = oracle_svd(a, tau)
    gu = rng.standard_normal((m_rows, k))
    gv = rng.standard_normal((n_cols, k))
    selected = list(range(len(cluster)))
    probes = []
    for j in range(steps + 1):
        eps = eps0 * 0.5 ** j
        u, _ = np.linalg.qr(orc.u[:, :k] + eps * gu)
        v, _ = np.linalg.qr(orc.v[:, :k] + eps * gv)
        ritz = extract_ritz(SubspacePair(u, v, u.T @ a @ v, a @ v, a.T @ u), tau)
        probes.append(rtail_probe(a, ritz, selected, tau))
    return probes


AUDIT_CASES = ("T2i", "T2ii", "T3i", "T3ii", "T3iii", "T5i", "T5ii", "T5iii",
               "T7i", "T7ii", "T7iii", "T9i", "T9ii", "T9iii")


AUDIT_NAMES = ("thm2", "thm3", "thm5", "thm7", "thm8", "thm9", "equivalence", "rtail", "all")
EQUIVALENCE_TOL = 1e-10


def run_audit(name, trials=50, seed=0, cap=AUDIT_CAP):
    """Audit entry point used by the command line. Returns a JSON-ready dict."""
    name = name.lower()
    groups = {
        "thm2": ("T2i", "T2ii"),
        "thm3": ("T3i", "T3ii", "T3iii"),
        "thm5": ("T5i", "T5ii", "T5iii"),
        "thm7": ("T7i", "T7ii", "T7iii"),
        "thm9": ("T9i", "T9ii", "T9iii"),
    }
    results = {"audit": name, "trials": trials, "seed": seed, "bounds": [], "perturbation": None,
               "equivalence": None, "rtail": None}
    if name in groups or name == "all":
        ids = AUDIT_CASES if name == "all" else groups[name]
        for i, tid in enumerate(ids):
            results["bounds"].append(check_bound_satisfaction(tid, trials, seed + i).as_dict())
    if name in ("thm8", "all"):
        results["perturbation"] = check_reduced_perturbation(trials, seed).as_dict()
    if name in ("equivalence", "all"):
        results["equivalence"] = equivalence_suite(seed=seed, cap=cap)
    if name in ("rtail", "all"):
        results["rtail"] = [{"r_norm": p.r_norm, "tail_norm": p.tail_norm, "ratio": p.ratio}
                            for p in rtail_sequence(seed=seed)]
    if not any(results[k] for k in ("bounds", "perturbation", "equivalence", "rtail")):
        raise ValueError(f"unknown audit {name!r}; choose from {', '.join(AUDIT_NAMES)}")
    violations = sum(b["violations"] for b in results["bounds"])
    if results["perturbation"] is not None:
        violations += results["perturbation"]["failures"]
    if results["equivalence"] is not None:
        violations += sum(r["history_gap"] > EQUIVALENCE_TOL for r in results["equivalence"])
    results["violations"] = violations
    return results
