"""Gaussian mixture containers, densities, posteriors, and pairwise probabilities.

The three covariance families are named by tag:

- ``EII``: one shared spherical covariance ``lambda * I``
- ``EEE``: one shared full covariance
- ``VVV``: unconstrained per-component covariances

All density work happens in log space; a point's posterior over components
is the softmax of the per-component log joints, and the probability that two
points were drawn from the same component is the dot product of their
posterior vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateCovarianceError, PosteriorUndefinedError

MODEL_TAGS = ("EII", "EEE", "VVV")

_LOG_2PI = float(np.log(2.0 * np.pi))

# Equality tolerances used when checking what a model tag promises about the
# covariance stack (shared / spherical structure).
_SYM_TOL = 1e-10
_TAG_RTOL = 1e-8
_TAG_ATOL = 1e-12


def _chol_with_floor(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky factor of ``sigma``, flooring once on failure.

    If the first factorization fails, ``eps * I`` with
    ``eps = 1e-8 * trace(sigma) / d`` is added and the factorization retried;
    a second failure raises :class:`DegenerateCovarianceError`.

    Returns the (possibly floored) matrix and its lower Cholesky factor.
    """
    try:
        return sigma, np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    d = sigma.shape[0]
    eps = 1e-8 * float(np.trace(sigma)) / d
    floored = sigma + eps * np.eye(d)
    try:
        return floored, np.linalg.cholesky(floored)
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError(
            "covariance not positive definite after one floor attempt"
        ) from None


@dataclass(frozen=True)
class Dataset:
    """A fixed n x d table of finite float observations."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-d, got shape {rows.shape}")
        if rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError(f"need at least one row and one column, got {rows.shape}")
        if not np.isfinite(rows).all():
            raise ValueError("rows contain non-finite values")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class MixtureParams:
    """Weights, means, and covariances of a finite Gaussian mixture.

    Construction validates the simplex constraint on ``weights``, symmetry
    and positive definiteness of every covariance, and the structural promise
    of ``model_tag``. Covariances that fail Cholesky once are replaced by
    their floored version (see :func:`_chol_with_floor`); instances are
    immutable afterwards.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    model_tag: str
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).copy()
        means = np.asarray(self.means, dtype=float).copy()
        covs = np.asarray(self.covariances, dtype=float).copy()

        if weights.ndim != 1:
            raise ValueError("weights must be a vector")
        c = weights.shape[0]
        if means.ndim != 2 or means.shape[0] != c:
            raise ValueError("means must have shape (c, d)")
        d = means.shape[1]
        if covs.shape != (c, d, d):
            raise ValueError(f"covariances must have shape {(c, d, d)}, got {covs.shape}")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        if not (np.isfinite(means).all() and np.isfinite(covs).all()):
            raise ValueError("means/covariances contain non-finite values")
        if self.model_tag not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model_tag!r}")

        for k in range(c):
            if np.abs(covs[k] - covs[k].T).max() > _SYM_TOL:
                raise ValueError(f"covariance {k} is not symmetric")
            covs[k] = 0.5 * (covs[k] + covs[k].T)

        chol = np.empty_like(covs)
        for k in range(c):
            covs[k], chol[k] = _chol_with_floor(covs[k])

        if self.model_tag == "EII":
            lam = covs[0, 0, 0]
            target = lam * np.eye(d)
            for k in range(c):
                if not np.allclose(covs[k], target, rtol=_TAG_RTOL, atol=_TAG_ATOL):
                    raise ValueError("EII requires one shared spherical covariance")
        elif self.model_tag == "EEE":
            for k in range(1, c):
                if not np.allclose(covs[k], covs[0], rtol=_TAG_RTOL, atol=_TAG_ATOL):
                    raise ValueError("EEE requires one shared covariance")

        for arr in (weights, means, covs, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_chol", chol)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


def _as_batch(x: np.ndarray, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"point has dimension {x.shape[0]}, expected {d}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"expected shape (n, {d}), got {x.shape}")
    return x, False


def component_log_pdf(x: np.ndarray, params: MixtureParams) -> np.ndarray:
    """Per-component Gaussian log densities, shape (n, c)."""
    xb, single = _as_batch(x, params.d)
    n, d = xb.shape
    c = params.n_components
    out = np.empty((n, c))
    for k in range(c):
        chol = params._chol[k]
        log_det = np.log(np.diag(chol)).sum()
        inv_l = solve_triangular(chol, np.eye(d), lower=True)
        y = (xb - params.means[k]) @ inv_l.T
        maha = np.einsum("ij,ij->i", y, y)
        out[:, k] = -0.5 * (d * _LOG_2PI + maha) - log_det
    return out[0] if single else out


def _log_joint(x: np.ndarray, params: MixtureParams) -> np.ndarray:
    """log(weight_k) + component log pdf, with zero weights mapped to -inf."""
    comp = np.atleast_2d(component_log_pdf(x, params))
    log_w = np.full(params.n_components, -np.inf)
    pos = params.weights > 0
    log_w[pos] = np.log(params.weights[pos])
    return comp + log_w


def log_density(x: np.ndarray, params: MixtureParams) -> float | np.ndarray:
    """Mixture log density, evaluated by log-sum-exp over components."""
    _, single = _as_batch(x, params.d)
    joint = _log_joint(x, params)
    m = joint.max(axis=1)
    out = np.where(
        np.isfinite(m),
        m + np.log(np.exp(joint - np.where(np.isfinite(m), m, 0.0)[:, None]).sum(axis=1)),
        -np.inf,
    )
    return float(out[0]) if single else out


def posterior(x: np.ndarray, params: MixtureParams) -> np.ndarray:
    """Posterior component membership probabilities, rows summing to one."""
    _, single = _as_batch(x, params.d)
    joint = _log_joint(x, params)
    m = joint.max(axis=1)
    if not np.isfinite(m).all():
        raise PosteriorUndefinedError("posterior undefined at x: all densities underflow")
    w = np.exp(joint - m[:, None])
    post = w / w.sum(axis=1, keepdims=True)
    return post[0] if single else post


def pairwise_prob(post_i: np.ndarray, post_j: np.ndarray) -> float:
    """Probability that two points share a component, from their posteriors."""
    post_i = np.asarray(post_i, dtype=float)
    post_j = np.asarray(post_j, dtype=float)
    if post_i.shape != post_j.shape or post_i.ndim != 1:
        raise ValueError(f"posterior shapes differ: {post_i.shape} vs {post_j.shape}")
    return float(post_i @ post_j)


def pairwise_prob_matrix(post: np.ndarray) -> np.ndarray:
    """All same-component probabilities at once: ``post @ post.T``."""
    post = np.asarray(post, dtype=float)
    if post.ndim != 2:
        raise ValueError("expected a posterior matrix of shape (n, c)")
    return post @ post.T
