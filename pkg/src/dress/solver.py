"""Damped Newton iteration for small smooth estimating equations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import Divergence, NonConvergence, SingularSystem

#: Jacobians with a larger 2-norm condition number are treated as singular.
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 20
    divergence_norm: float = 1e6


def checked_solve(A: np.ndarray, b: np.ndarray, what: str, stage: str | None = None) -> np.ndarray:
    """Solve ``A x = b``, raising SingularSystem when A is ill-conditioned."""
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"{what} is singular (condition number {cond:.3g})", cond, stage)
    return np.linalg.solve(A, b)


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float


def _polish(fun, jac, x, F, resid, it) -> NewtonResult:
    """One extra full Newton step past the tolerance, kept only if it helps."""
    if resid == 0.0:
        return NewtonResult(x, it, resid)
    try:
        x_new = x + np.linalg.solve(jac(x), -F)
    except np.linalg.LinAlgError:
        return NewtonResult(x, it, resid)
    F_new = fun(x_new)
    r_new = float(np.max(np.abs(F_new)))
    if np.isfinite(r_new) and r_new < resid:
        return NewtonResult(x_new, it + 1, r_new)
    return NewtonResult(x, it, resid)


def damped_newton(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    stage: str | None = None,
) -> NewtonResult:
    """Find a root of ``fun`` by Newton steps with step halving.

    A full step is halved (up to ``cfg.max_halvings`` times) while it does not
    decrease the Euclidean norm of the residual.  Convergence is declared when
    the residual max-norm drops to ``cfg.tol``; one further full step is then
    taken when it reduces the residual, which is cheap near a simple root.
    """
    x = np.array(x0, dtype=float)
    F = fun(x)
    merit = np.linalg.norm(F)
    for it in range(cfg.max_iter + 1):
        resid = float(np.max(np.abs(F))) if F.size else 0.0
        if resid <= cfg.tol:
            return _polish(fun, jac, x, F, resid, it)
        if it == cfg.max_iter:
            break
        step = checked_solve(jac(x), -F, "Newton Jacobian", stage)
        t = 1.0
        for _ in range(cfg.max_halvings + 1):
            x_new = x + t * step
            F_new = fun(x_new)
            merit_new = np.linalg.norm(F_new)
            if np.all(np.isfinite(F_new)) and merit_new < merit:
                break
            t *= 0.5
        else:
            # No decrease along the Newton direction; keep the smallest step
            # only if it is finite so the next iteration can try again.
            if not np.all(np.isfinite(F_new)):
                raise NonConvergence("residual became non-finite", float(merit), it + 1, stage)
        x, F, merit = x_new, F_new, merit_new
        if np.linalg.norm(x) > cfg.divergence_norm:
            raise Divergence(
                f"iterate norm {np.linalg.norm(x):.3g} exceeds {cfg.divergence_norm:g}", stage
            )
    raise NonConvergence(
        f"no convergence after {cfg.max_iter} iterations (residual {resid:.3g})",
        resid,
        cfg.max_iter,
        stage,
    )
