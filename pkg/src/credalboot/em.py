"""EM fitting for the three covariance families, with BIC model selection.

Each restart initializes responsibilities from seeded k-means++ (followed by
Lloyd iterations to an assignment fixpoint) and alternates E and M steps
until the relative log-likelihood change drops below ``rel_tol``. A restart
that produces an empty cluster or a degenerate covariance is aborted and the
next one tried; the best converged restart by final log-likelihood wins.

Model selection fits every candidate ``(c, tag)`` and keeps the highest
``bic = 2 * loglik - nu * log(n)`` (higher is better here); exact ties go to
the candidate with more free parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import make_rng, stage_seed
from .errors import (
    DegenerateCovarianceError,
    EmptyClusterError,
    FitFailedError,
    PosteriorUndefinedError,
)
from .gmm import MODEL_TAGS, Dataset, MixtureParams, component_log_pdf


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 500
    rel_tol: float = 1e-8
    n_restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1 or self.n_restarts < 1:
            raise ValueError("max_iter and n_restarts must be positive")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must be in (0, 1)")


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    log_likelihood: float
    n_iter: int
    converged: bool
    bic: float
    loglik_trace: np.ndarray = field(repr=False, compare=False, default=None)


def free_params(c: int, d: int, model_tag: str) -> int:
    """Number of free parameters: weights + means + covariance block."""
    base = (c - 1) + c * d
    if model_tag == "EII":
        return base + 1
    if model_tag == "EEE":
        return base + d * (d + 1) // 2
    if model_tag == "VVV":
        return base + c * d * (d + 1) // 2
    raise ValueError(f"unknown model tag {model_tag!r}")


def bic_score(log_likelihood: float, n_params: int, n: int) -> float:
    return 2.0 * log_likelihood - n_params * float(np.log(n))


def e_step(data: Dataset, params: MixtureParams) -> tuple[np.ndarray, float]:
    """Responsibilities and total log-likelihood under ``params``."""
    comp = component_log_pdf(data.rows, params)
    log_w = np.full(params.n_components, -np.inf)
    pos = params.weights > 0
    log_w[pos] = np.log(params.weights[pos])
    joint = comp + log_w
    m = joint.max(axis=1)
    if not np.isfinite(m).all():
        raise PosteriorUndefinedError("posterior undefined at x: all densities underflow")
    w = np.exp(joint - m[:, None])
    norm = w.sum(axis=1)
    resp = w / norm[:, None]
    loglik = float((m + np.log(norm)).sum())
    return resp, loglik


def m_step(data: Dataset, resp: np.ndarray, model_tag: str) -> MixtureParams:
    """Weighted maximum-likelihood update under the family constraint."""
    x = data.rows
    n, d = x.shape
    resp = np.asarray(resp, dtype=float)
    if resp.shape[0] != n or resp.ndim != 2:
        raise ValueError("responsibilities must have shape (n, c)")
    c = resp.shape[1]
    nk = resp.sum(axis=0)
    if (nk <= n * 1e-10).any():
        raise EmptyClusterError(f"empty cluster, column sums {nk}")
    weights = nk / n
    means = (resp.T @ x) / nk[:, None]

    if model_tag == "EII":
        lam = 0.0
        for k in range(c):
            diff = x - means[k]
            lam += float(resp[:, k] @ np.einsum("ij,ij->i", diff, diff))
        lam /= n * d
        cov = lam * np.eye(d)
        covs = np.repeat(cov[None], c, axis=0)
    elif model_tag == "EEE":
        pooled = np.zeros((d, d))
        for k in range(c):
            diff = x - means[k]
            pooled += (resp[:, k, None] * diff).T @ diff
        pooled /= n
        covs = np.repeat(pooled[None], c, axis=0)
    elif model_tag == "VVV":
        covs = np.empty((c, d, d))
        for k in range(c):
            diff = x - means[k]
            covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k]
    else:
        raise ValueError(f"unknown model tag {model_tag!r}")

    return MixtureParams(weights, means, covs, model_tag)


def _kmeans_pp_responsibilities(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    """Hard one-hot responsibilities from k-means++ seeding plus Lloyd passes."""
    n = x.shape[0]
    centers = np.empty((c, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.einsum("ij,ij->i", x - centers[0], x - centers[0])
    for k in range(1, c):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[k] = x[idx]
        cand = np.einsum("ij,ij->i", x - centers[k], x - centers[k])
        d2 = np.minimum(d2, cand)

    labels = np.full(n, -1)
    for _ in range(50):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if (new_labels == labels).all():
            break
        labels = new_labels
        for k in range(c):
            members = labels == k
            if members.any():
                centers[k] = x[members].mean(axis=0)

    resp = np.zeros((n, c))
    resp[np.arange(n), labels] = 1.0
    return resp


def _fit_once(data: Dataset, c: int, model_tag: str, config: FitConfig,
              rng: np.random.Generator) -> FitResult:
    resp = _kmeans_pp_responsibilities(data.rows, c, rng)
    params = m_step(data, resp, model_tag)
    resp, loglik = e_step(data, params)
    trace = [loglik]
    converged = False
    n_iter = config.max_iter
    for it in range(1, config.max_iter + 1):
        params = m_step(data, resp, model_tag)
        resp, new_loglik = e_step(data, params)
        trace.append(new_loglik)
        done = abs(new_loglik - loglik) / (abs(loglik) + 1.0) < config.rel_tol
        loglik = new_loglik
        if done:
            converged = True
            n_iter = it
            break
    bic = bic_score(loglik, free_params(c, data.d, model_tag), data.n)
    return FitResult(params, loglik, n_iter, converged, bic, np.array(trace))


def fit_em(data: Dataset, c: int, model_tag: str, config: FitConfig | None = None) -> FitResult:
    """Best-of-``n_restarts`` EM fit; deterministic for a given seed."""
    if config is None:
        config = FitConfig()
    if model_tag not in MODEL_TAGS:
        raise ValueError(f"unknown model tag {model_tag!r}")
    if not 1 <= c <= data.n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={data.n}")
    best = None
    diagnostics = []
    for r in range(config.n_restarts):
        rng = make_rng(stage_seed(config.seed, "em-restart", r))
        try:
            result = _fit_once(data, c, model_tag, config, rng)
        except (EmptyClusterError, DegenerateCovarianceError, PosteriorUndefinedError) as exc:
            diagnostics.append(f"restart {r}: {type(exc).__name__}: {exc}")
            continue
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    if best is None:
        raise FitFailedError(
            f"all {config.n_restarts} restarts failed for c={c} {model_tag}", diagnostics
        )
    return best


@dataclass(frozen=True)
class CandidateRow:
    c: int
    model_tag: str
    bic: float | None
    log_likelihood: float | None
    n_params: int
    converged: bool | None
    error: str | None = None


@dataclass(frozen=True)
class SelectionResult:
    best: FitResult
    best_candidate: tuple[int, str]
    table: list[CandidateRow]


def _prefer_candidate(current: tuple[float, int], challenger: tuple[float, int]) -> int:
    """0 to keep current, 1 to take challenger; keys are (bic, n_params)."""
    if challenger[0] != current[0]:
        return 1 if challenger[0] > current[0] else 0
    return 1 if challenger[1] > current[1] else 0


def select_model(data: Dataset, candidates, config: FitConfig | None = None) -> SelectionResult:
    """Fit every candidate (c, tag) and keep the best BIC."""
    if config is None:
        config = FitConfig()
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    best = None
    best_cand = None
    best_key = None
    table = []
    for c, tag in candidates:
        nu = free_params(c, data.d, tag)
        try:
            result = fit_em(data, c, tag, config)
        except (FitFailedError, ValueError) as exc:
            table.append(CandidateRow(c, tag, None, None, nu, None, str(exc)))
            continue
        table.append(
            CandidateRow(c, tag, result.bic, result.log_likelihood, nu, result.converged)
        )
        key = (result.bic, nu)
        if best is None or _prefer_candidate(best_key, key):
            best, best_cand, best_key = result, (c, tag), key
    if best is None:
        raise FitFailedError("every candidate model failed to fit", [r.error for r in table])
    return SelectionResult(best, best_cand, table)
