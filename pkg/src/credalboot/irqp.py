"""Iterative row-wise quadratic programming over evidential partitions.

Fits one mass row per object so that the pairwise same/different-cluster
masses of the partition track target intervals on same-cluster
probabilities: block coordinate descent where each row update is an exact
simplex-constrained QP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import make_rng, n_pairs, squareform_pairs, stage_seed
from .credal import (
    CredalPartition,
    FocalSetFamily,
    normalize_masses,
    structure_matrices,
)
from .qp import SimplexQP, solve_simplex_qp

__all__ = [
    "TargetPairs",
    "IrqpConfig",
    "IrqpTrace",
    "IrqpResult",
    "targets_from_intervals",
    "objective_j",
    "assemble_row_qp",
    "irqp_fit",
]


@dataclass(frozen=True)
class TargetPairs:
    """Per-pair probability bounds in flat lexicographic order (i < j)."""

    n: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 objects, got n={self.n}")
        lower = np.asarray(self.lower, dtype=float).copy()
        upper = np.asarray(self.upper, dtype=float).copy()
        expected = (n_pairs(self.n),)
        if lower.shape != expected or upper.shape != expected:
            raise ValueError(
                f"bound arrays must have shape {expected}, "
                f"got {lower.shape} and {upper.shape}"
            )
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("target bounds must be finite")
        if lower.min() < 0.0 or upper.max() > 1.0:
            raise ValueError("target bounds must lie in [0, 1]")
        if (lower > upper).any():
            raise ValueError("lower target bound exceeds upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def m_star(self) -> np.ndarray:
        """Stacked (npairs, 2) targets: same-cluster mass, different-cluster mass."""
        return np.column_stack([self.lower, 1.0 - self.upper])


def targets_from_intervals(intervals) -> TargetPairs:
    """Build fitting targets from a pairwise confidence-interval matrix."""
    return TargetPairs(intervals.n, intervals.flat_lower(), intervals.flat_upper())


@dataclass(frozen=True)
class IrqpConfig:
    """Sweep control: stop when the damped relative objective change
    falls below ``epsilon`` (weight ``rho`` on the running average)."""

    epsilon: float = 1e-6
    rho: float = 0.5
    max_sweeps: int = 200
    seed: int = 0
    n_starts: int = 1

    def __post_init__(self):
        if not 0.0 < self.epsilon:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.n_starts < 1:
            raise ValueError(f"n_starts must be >= 1, got {self.n_starts}")


@dataclass(frozen=True)
class IrqpTrace:
    """Objective values per sweep (including the start) and stop diagnostics."""

    j_values: np.ndarray
    e_values: np.ndarray
    n_sweeps: int
    converged: bool

    def __post_init__(self):
        j_values = np.asarray(self.j_values, dtype=float).copy()
        e_values = np.asarray(self.e_values, dtype=float).copy()
        j_values.setflags(write=False)
        e_values.setflags(write=False)
        object.__setattr__(self, "j_values", j_values)
        object.__setattr__(self, "e_values", e_values)


@dataclass(frozen=True)
class IrqpResult:
    partition: CredalPartition
    trace: IrqpTrace
    j_final: float
    start_index: int = 0


def _target_matrices(targets: TargetPairs) -> tuple[np.ndarray, np.ndarray]:
    l_full = squareform_pairs(targets.lower, targets.n)
    d_full = squareform_pairs(1.0 - targets.upper, targets.n)
    return l_full, d_full


def _objective(masses, s_mat, c_mat, l_full, d_full) -> float:
    n = masses.shape[0]
    same = masses @ s_mat @ masses.T
    diff = masses @ c_mat @ masses.T
    iu, ju = np.triu_indices(n, k=1)
    r_same = same[iu, ju] - l_full[iu, ju]
    r_diff = diff[iu, ju] - d_full[iu, ju]
    return float(r_same @ r_same + r_diff @ r_diff)


def objective_j(masses: np.ndarray, family: FocalSetFamily,
                targets: TargetPairs) -> float:
    """Sum of squared deviations of pairwise masses from their targets."""
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (targets.n, family.f):
        raise ValueError(
            f"masses must have shape ({targets.n}, {family.f}), got {masses.shape}"
        )
    s_mat, c_mat = structure_matrices(family)
    l_full, d_full = _target_matrices(targets)
    return _objective(masses, s_mat, c_mat, l_full, d_full)


def assemble_row_qp(masses: np.ndarray, family: FocalSetFamily,
                    targets: TargetPairs, i: int) -> tuple[SimplexQP, float]:
    """QP data for row ``i`` with every other row held fixed.

    Returns (qp, const) with qp_objective(qp, m) + const equal to the part
    of the global objective that involves row ``i``.
    """
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (targets.n, family.f):
        raise ValueError(
            f"masses must have shape ({targets.n}, {family.f}), got {masses.shape}"
        )
    if not 0 <= i < targets.n:
        raise ValueError(f"row index {i} out of range for n={targets.n}")
    s_mat, c_mat = structure_matrices(family)
    l_full, d_full = _target_matrices(targets)
    gram = masses.T @ masses - np.outer(masses[i], masses[i])
    q_mat, u_vec = _row_qp(masses, s_mat, c_mat, l_full, d_full, gram, i)
    const = float(l_full[i] @ l_full[i] + d_full[i] @ d_full[i])
    return SimplexQP(q_mat, u_vec), const


def _row_qp(masses, s_mat, c_mat, l_full, d_full, gram_wo_i, i):
    # quadratic term sums (S m_j)(S m_j)' + (C m_j)(C m_j)' over j != i,
    # which collapses onto the Gram matrix of the other rows
    q_mat = s_mat @ gram_wo_i @ s_mat + c_mat @ gram_wo_i @ c_mat
    # the diagonal of l_full/d_full is zero, so including j = i is harmless
    u_vec = -2.0 * (s_mat @ (masses.T @ l_full[i]) + c_mat @ (masses.T @ d_full[i]))
    return q_mat, u_vec


def _single_run(masses, family, targets, config) -> IrqpResult:
    s_mat, c_mat = structure_matrices(family)
    l_full, d_full = _target_matrices(targets)
    masses = masses.copy()
    n = targets.n

    j_prev = _objective(masses, s_mat, c_mat, l_full, d_full)
    j_values = [j_prev]
    e_values: list[float] = []
    converged = j_prev == 0.0
    e_run = 1.0

    if not converged:
        for _ in range(config.max_sweeps):
            gram = masses.T @ masses
            for i in range(n):
                row = masses[i].copy()
                q_mat, u_vec = _row_qp(
                    masses, s_mat, c_mat, l_full, d_full,
                    gram - np.outer(row, row), i,
                )
                sol = solve_simplex_qp(SimplexQP(q_mat, u_vec), start=row)
                gram += np.outer(sol.m, sol.m) - np.outer(row, row)
                masses[i] = sol.m
            j_t = _objective(masses, s_mat, c_mat, l_full, d_full)
            j_values.append(j_t)
            e_run = config.rho * e_run + (1.0 - config.rho) * abs(j_t - j_prev) / j_prev
            e_values.append(e_run)
            if j_t == 0.0 or e_run < config.epsilon:
                converged = True
                break
            j_prev = j_t

    partition = CredalPartition(family, masses)
    j_final = _objective(partition.masses, s_mat, c_mat, l_full, d_full)
    trace = IrqpTrace(
        np.asarray(j_values), np.asarray(e_values), len(j_values) - 1, converged
    )
    return IrqpResult(partition, trace, j_final)


def irqp_fit(targets: TargetPairs, family: FocalSetFamily,
             config: IrqpConfig | None = None, *,
             start: np.ndarray | None = None) -> IrqpResult:
    """Fit an evidential partition to pairwise interval targets.

    Starts from seeded Dirichlet mass rows (``config.n_starts`` independent
    starts, best final objective wins; ties keep the earlier start) or from
    ``start`` when given, in which case exactly one run is performed.  Rows
    are updated in index order within each sweep.
    """
    if config is None:
        config = IrqpConfig()
    f = family.f

    if start is not None:
        init = normalize_masses(np.asarray(start, dtype=float), f)
        init = np.atleast_2d(init)
        if init.shape != (targets.n, f):
            raise ValueError(
                f"start must have shape ({targets.n}, {f}), got {init.shape}"
            )
        return _single_run(init, family, targets, config)

    best: IrqpResult | None = None
    for s in range(config.n_starts):
        rng = make_rng(stage_seed(config.seed, "irqp-start", s))
        init = rng.dirichlet(np.ones(f), size=targets.n)
        result = _single_run(init, family, targets, config)
        if best is None or result.j_final < best.j_final:
            best = IrqpResult(result.partition, result.trace, result.j_final, s)
    return best
