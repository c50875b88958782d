"""Convex quadratic minimization over the probability simplex.

Solves ``min m' Q m + u' m  s.t.  sum(m) = 1, m >= 0`` with a primal
active-set method. A working set of variables is locked at zero; the
equality-constrained subproblem over the remaining coordinates is solved in
a null-space basis of the sum constraint, and the iterate either steps as
far as feasibility allows toward that solution or uses the subproblem
multipliers to release a locked variable. Q must be symmetric positive
semidefinite; a singular reduced Hessian gets a one-time ridge of
``1e-12 * trace(Q) / f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverStalledError


@dataclass(frozen=True)
class SimplexQP:
    """Problem data: symmetric PSD matrix Q and linear term u."""

    q_mat: np.ndarray
    u_vec: np.ndarray

    def __post_init__(self):
        q_mat = np.asarray(self.q_mat, dtype=float).copy()
        u_vec = np.asarray(self.u_vec, dtype=float).copy()
        if q_mat.ndim != 2 or q_mat.shape[0] != q_mat.shape[1]:
            raise ValueError(f"Q must be square, got {q_mat.shape}")
        if u_vec.shape != (q_mat.shape[0],):
            raise ValueError(f"u has shape {u_vec.shape}, expected ({q_mat.shape[0]},)")
        if not (np.isfinite(q_mat).all() and np.isfinite(u_vec).all()):
            raise ValueError("Q/u contain non-finite values")
        if q_mat.size and np.abs(q_mat - q_mat.T).max() > 1e-10:
            raise ValueError("Q is not symmetric")
        q_mat = 0.5 * (q_mat + q_mat.T)
        q_mat.setflags(write=False)
        u_vec.setflags(write=False)
        object.__setattr__(self, "q_mat", q_mat)
        object.__setattr__(self, "u_vec", u_vec)

    @property
    def f(self) -> int:
        return self.u_vec.shape[0]


@dataclass(frozen=True)
class QPSolution:
    m: np.ndarray
    objective: float
    active_set: tuple[int, ...]
    kkt_residual: float
    n_iter: int
    ridge_applied: bool


def qp_objective(qp: SimplexQP, m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    return float(m @ qp.q_mat @ m + qp.u_vec @ m)


def kkt_residual(qp: SimplexQP, m: np.ndarray, lam: float | None = None) -> float:
    """Max violation of the stationarity/feasibility/sign conditions at m."""
    m = np.asarray(m, dtype=float)
    g = 2.0 * qp.q_mat @ m + qp.u_vec
    support = m > 1e-12
    if lam is None:
        lam = -float(np.mean(g[support])) if support.any() else 0.0
    stationarity = float(np.abs(g[support] + lam).max()) if support.any() else 0.0
    dual = float(max(0.0, np.max(-(g[~support] + lam), initial=0.0)))
    primal = abs(float(m.sum()) - 1.0) + float(max(0.0, -float(m.min())))
    return max(stationarity, dual, primal)


def _helmert_basis(nf: int) -> np.ndarray:
    """Orthonormal basis of the zero-sum subspace, shape (nf, nf - 1)."""
    basis = np.zeros((nf, nf - 1))
    for k in range(1, nf):
        basis[:k, k - 1] = 1.0
        basis[k, k - 1] = -float(k)
        basis[:, k - 1] /= np.sqrt(k * (k + 1.0))
    return basis


def _free_direction(q_mat, g, free, ridge):
    """Direction over the free coordinates in the zero-sum subspace.

    Returns (p_free, is_ray, ridged). With a solvable reduced system
    ``p_free`` points exactly at the subproblem minimizer (a full step
    reaches it); when the reduced Hessian is singular and the subproblem has
    no minimizer, the projected steepest-descent ray is returned instead.
    """
    basis = _helmert_basis(int(free.sum()))
    qf = q_mat[np.ix_(free, free)]
    hess = 2.0 * basis.T @ qf @ basis
    grad = basis.T @ g[free]
    for shift in (0.0, 2.0 * ridge):
        shifted = hess if shift == 0.0 else hess + shift * np.eye(hess.shape[0])
        try:
            chol = np.linalg.cholesky(shifted)
        except np.linalg.LinAlgError:
            continue
        y = np.linalg.solve(chol.T, np.linalg.solve(chol, -grad))
        return basis @ y, False, shift > 0.0
    y, *_ = np.linalg.lstsq(hess, -grad, rcond=None)
    if np.abs(hess @ y + grad).max() <= 1e-8 * (1.0 + np.abs(grad).max()):
        return basis @ y, False, True
    return basis @ -grad, True, True


def solve_simplex_qp(qp: SimplexQP, start: np.ndarray | None = None) -> QPSolution:
    """Active-set solve; ``start`` must be a feasible point (default uniform)."""
    f = qp.f
    q_mat, u_vec = qp.q_mat, qp.u_vec

    if f == 1:
        m = np.array([1.0])
        return QPSolution(m, qp_objective(qp, m), (), kkt_residual(qp, m), 0, False)

    if np.abs(q_mat).max() == 0.0:
        # pure linear objective: optimum at a vertex, smallest index on ties
        k = int(np.argmin(u_vec))
        m = np.zeros(f)
        m[k] = 1.0
        active = tuple(i for i in range(f) if i != k)
        return QPSolution(
            m, qp_objective(qp, m), active, kkt_residual(qp, m, -u_vec[k]), 0, False
        )

    if start is None:
        m = np.full(f, 1.0 / f)
    else:
        m = np.asarray(start, dtype=float).copy()
        if m.shape != (f,) or m.min() < -1e-12 or abs(m.sum() - 1.0) > 1e-8:
            raise ValueError("start must be a feasible simplex point")
        m = np.maximum(m, 0.0)
        m /= m.sum()

    working = m <= 0.0
    ridge = 1e-12 * float(np.trace(q_mat)) / f
    ridge_applied = False
    tol_mult = 1e-10 * (1.0 + np.abs(q_mat).max() + np.abs(u_vec).max())
    budget = 100 + 20 * f + 2 * f * f

    for it in range(1, budget + 1):
        free = ~working
        g = 2.0 * q_mat @ m + u_vec

        if int(free.sum()) == 1:
            p_free, is_ray = np.zeros(1), False
        else:
            p_free, is_ray, ridged = _free_direction(q_mat, g, free, ridge)
            ridge_applied = ridge_applied or ridged

        if not is_ray and np.abs(p_free).max() <= 1e-12 * (1.0 + np.abs(m).max()):
            lam = -float(np.mean(g[free]))
            if not working.any():
                break
            mult = g[working] + lam
            if mult.min() >= -tol_mult:
                break
            # release the worst violator; ties go to the smallest index
            idx_working = np.flatnonzero(working)
            working[idx_working[int(np.argmin(mult))]] = False
            continue

        blocking = p_free < -1e-16
        alpha = np.inf if is_ray else 1.0
        blocker = -1
        if blocking.any():
            ratios = m[free][blocking] / -p_free[blocking]
            best = float(ratios.min())
            if best < alpha:
                alpha = best
                cand = np.flatnonzero(free)[blocking][ratios == best]
                blocker = int(cand.min())
        if not np.isfinite(alpha):
            raise SolverStalledError("unbounded ray on the simplex", kkt_residual(qp, m))
        m[free] = np.maximum(m[free] + alpha * p_free, 0.0)
        if blocker >= 0:
            m[blocker] = 0.0
            working[blocker] = True

    else:
        raise SolverStalledError(
            f"no convergence within {budget} active-set iterations", kkt_residual(qp, m)
        )

    m = np.maximum(m, 0.0)
    m /= m.sum()
    active = tuple(int(i) for i in np.flatnonzero(m == 0.0))
    return QPSolution(
        m, qp_objective(qp, m), active, kkt_residual(qp, m), it, ridge_applied
    )
