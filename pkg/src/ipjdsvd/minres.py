"""MINRES for symmetric, possibly indefinite or singular, operators.

Plain Paige-Saunders recurrences with a zero initial guess, no
preconditioner and no Lanczos re-orthogonalization. The recurrence
residual norms are kept for every iteration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

STAGNATION_WINDOW = 50
STAGNATION_DROP = 1e-14


class MinresStatus(str, enum.Enum):
    CONVERGED = "CONVERGED"
    MAXIT = "MAXIT"
    STAGNATED = "STAGNATED"


@dataclass
class MinresOutcome:
    solution: np.ndarray
    residual_history: list = field(default_factory=list)
    iterations: int = 0
    status: MinresStatus = MinresStatus.CONVERGED
    op_applications: int = 0
    true_residual: float = 0.0

    @property
    def residual(self):
        return self.residual_history[-1]


def as_operator(op):
    """Wrap a dense matrix, an object with ``apply`` or a callable."""
    if isinstance(op, np.ndarray):
        mat = op
        return lambda w: mat @ w
    if hasattr(op, "apply"):
        return op.apply
    if callable(op):
        return op
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


def minres(op, rhs, rtol=1e-8, maxit=None):
    """Solve ``op @ x = rhs`` starting from ``x = 0``.

    Stops when the recurrence residual drops to ``rtol * ||rhs||``, after
    ``maxit`` iterations, or when it can no longer decrease: the Krylov
    space is exhausted, the residual lies in the operator's null space,
    or it has not dropped by a relative 1e-14 over 50 iterations. After the loop the residual is
    recomputed explicitly (one more operator application), so a run of
    ``J`` iterations applies the operator ``J + 1`` times. A zero ``rhs``
    returns at once without touching the operator.
    """
    matvec = as_operator(op)
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    if not np.all(np.isfinite(b)):
        raise FloatingPointError("minres: right-hand side is not finite")
    if maxit is None:
        maxit = min(n, 3000)
    x = np.zeros(n)
    beta1 = float(np.linalg.norm(b))
    if beta1 == 0.0:
        return MinresOutcome(x, [0.0], 0, MinresStatus.CONVERGED, 0, 0.0)

    history = [beta1]
    target = rtol * beta1
    eps = np.finfo(float).eps

    r1 = b.copy()
    r2 = b.copy()
    y = b.copy()
    beta = beta1
    oldb = 0.0
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    tnorm2 = 0.0
    status = MinresStatus.MAXIT
    applications = 0
    itn = 0

    while itn < maxit:
        itn += 1
        v = y / beta
        y = np.asarray(matvec(v), dtype=np.float64)
        applications += 1
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        oldb = beta
        beta = float(np.linalg.norm(y))
        tnorm2 += alfa * alfa + oldb * oldb + beta * beta
        anorm = math.sqrt(tnorm2)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        # ||A r|| / ||r|| for the current residual, relative to ||A||
        ls_ratio = math.hypot(gbar, dbar) / anorm if anorm > 0 else 0.0
        gamma = max(math.hypot(gbar, beta), eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(abs(phibar))

        if not (math.isfinite(phibar) and math.isfinite(alfa) and math.isfinite(beta)):
            raise FloatingPointError(f"minres: non-finite value at iteration {itn}")
        if abs(phibar) <= target:
            status = MinresStatus.CONVERGED
            break
        if beta <= 10 * eps * anorm or ls_ratio <= 10 * eps:
            # Krylov space exhausted, or the residual lies in the null space
            status = MinresStatus.STAGNATED
            break
        if itn >= STAGNATION_WINDOW:
            old = history[-1 - STAGNATION_WINDOW]
            if old - history[-1] <= STAGNATION_DROP * old:
                status = MinresStatus.STAGNATED
                break

    true_res = float(np.linalg.norm(np.asarray(matvec(x)) - b))
    applications += 1
    return MinresOutcome(x, history, itn, status, applications, true_res)
