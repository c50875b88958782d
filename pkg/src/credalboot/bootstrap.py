"""Bootstrap percentile confidence intervals for same-cluster probabilities.

For each of B replicates the data is resampled with replacement, a mixture
is refit on the resample, and the same-cluster probability of every pair of
*original* points is evaluated under the replicate parameters. Sorting each
pair's B values and reading the interpolated order statistics at alpha/2 and
1 - alpha/2 gives the interval; the point column comes from the full-data
fit. Replicate work is index-seeded, so results do not depend on how many
workers process the replicate list.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._util import make_rng, stage_seed
from .em import FitConfig, fit_em
from .errors import (
    BootstrapReplicateError,
    DegenerateCovarianceError,
    EmptyClusterError,
    FitFailedError,
    PosteriorUndefinedError,
)
from .gmm import Dataset, MixtureParams, pairwise_prob_matrix, posterior


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 200
    alpha: float = 0.10
    max_redraws_per_replicate: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.max_redraws_per_replicate < 0:
            raise ValueError("max_redraws_per_replicate must be nonnegative")


def resample_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform draws from 0..n-1 with replacement; advances ``rng``."""
    if n < 1:
        raise ValueError("n must be positive")
    return rng.integers(0, n, size=n)


def percentile(values: np.ndarray, p: float) -> float:
    """Interpolated order statistic at h = (len - 1) * p on the sorted values."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a nonempty vector")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    s = np.sort(values)
    h = (s.size - 1) * p
    lo = int(np.floor(h))
    if lo + 1 >= s.size:
        return float(s[-1])
    frac = h - lo
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


def _column_percentile(sorted_cols: np.ndarray, p: float) -> np.ndarray:
    """Same rule as :func:`percentile`, applied to pre-sorted columns."""
    b = sorted_cols.shape[0]
    h = (b - 1) * p
    lo = int(np.floor(h))
    if lo + 1 >= b:
        return sorted_cols[-1].copy()
    frac = h - lo
    return sorted_cols[lo] + frac * (sorted_cols[lo + 1] - sorted_cols[lo])


@dataclass(frozen=True)
class PairwiseIntervalMatrix:
    """Point estimates and interval bounds for every pair i < j.

    The three matrices are strictly upper triangular; ``replicates`` (kept on
    request) holds the raw B x npairs value matrix, pairs in lexicographic
    order.
    """

    n: int
    alpha: float
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    replicates: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("point", "lower", "upper"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape != (self.n, self.n):
                raise ValueError(f"{name} must be {self.n} x {self.n}")
            if np.abs(np.tril(mat)).max() > 0.0:
                raise ValueError(f"{name} must be strictly upper triangular")
            object.__setattr__(self, name, mat)
        iu, ju = np.triu_indices(self.n, k=1)
        lo, hi, pt = self.lower[iu, ju], self.upper[iu, ju], self.point[iu, ju]
        if lo.size:
            if lo.min() < 0.0 or hi.max() > 1.0 or pt.min() < 0.0 or pt.max() > 1.0:
                raise ValueError("interval values must lie in [0, 1]")
            if (lo > hi).any():
                raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_flat(cls, n, point, lower, upper, alpha, replicates=None):
        iu, ju = np.triu_indices(n, k=1)
        mats = []
        for flat in (point, lower, upper):
            mat = np.zeros((n, n))
            mat[iu, ju] = flat
            mats.append(mat)
        return cls(n, alpha, mats[0], mats[1], mats[2], replicates)

    def _flat(self, mat: np.ndarray) -> np.ndarray:
        iu, ju = np.triu_indices(self.n, k=1)
        return mat[iu, ju]

    def flat_point(self) -> np.ndarray:
        return self._flat(self.point)

    def flat_lower(self) -> np.ndarray:
        return self._flat(self.lower)

    def flat_upper(self) -> np.ndarray:
        return self._flat(self.upper)

    def pair(self, i: int, j: int) -> tuple[float, float, float]:
        if not 0 <= i < j < self.n:
            raise ValueError(f"need 0 <= i < j < n, got ({i}, {j})")
        return float(self.point[i, j]), float(self.lower[i, j]), float(self.upper[i, j])


_FIT_ERRORS = (FitFailedError, PosteriorUndefinedError, DegenerateCovarianceError,
               EmptyClusterError)


def _one_replicate(b, rows, c, model_tag, boot_seed, max_redraws, fit_config, fit_fn):
    """Flat same-cluster probabilities of all original pairs for replicate b."""
    rng = make_rng(stage_seed(boot_seed, "bootstrap-replicate", b))
    last_error = "no attempt made"
    for _ in range(1 + max_redraws):
        idx = resample_indices(rows.shape[0], rng)
        fit_seed = int(rng.integers(2**62))
        try:
            result = fit_fn(Dataset(rows[idx]), c, model_tag, replace(fit_config, seed=fit_seed))
            post = posterior(rows, result.params)
        except _FIT_ERRORS as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            continue
        pmat = pairwise_prob_matrix(post)
        iu, ju = np.triu_indices(rows.shape[0], k=1)
        return np.clip(pmat[iu, ju], 0.0, 1.0)
    raise BootstrapReplicateError(
        f"replicate {b} failed after {max_redraws} redraws ({last_error})", b
    )


def _worker(args):
    return _one_replicate(*args, fit_fn=fit_em)


def bootstrap_pairwise_ci(
    data: Dataset,
    c: int,
    model_tag: str,
    config: BootstrapConfig | None = None,
    fit_config: FitConfig | None = None,
    point_params: MixtureParams | None = None,
    fit_fn=None,
    keep_replicates: bool = False,
    n_workers: int = 1,
) -> PairwiseIntervalMatrix:
    """Percentile intervals for all pairwise same-cluster probabilities.

    ``point_params`` short-circuits the full-data fit when the caller already
    has one. ``fit_fn`` replaces the replicate fitting routine (serial path
    only; used for testing); the default refits with :func:`fit_em`.
    """
    if config is None:
        config = BootstrapConfig()
    if fit_config is None:
        fit_config = FitConfig()
    rows = data.rows
    n = data.n
    npairs = n * (n - 1) // 2

    if point_params is None:
        point_seed = stage_seed(config.seed, "bootstrap-point")
        point_params = fit_em(data, c, model_tag, replace(fit_config, seed=point_seed)).params
    point_full = pairwise_prob_matrix(posterior(rows, point_params))
    iu, ju = np.triu_indices(n, k=1)
    point = np.clip(point_full[iu, ju], 0.0, 1.0)

    b_total = config.n_replicates
    reps = np.empty((b_total, npairs))
    max_redraws = config.max_redraws_per_replicate
    if fit_fn is not None or n_workers <= 1:
        actual_fit = fit_fn if fit_fn is not None else fit_em
        for b in range(b_total):
            reps[b] = _one_replicate(
                b, rows, c, model_tag, config.seed, max_redraws, fit_config, actual_fit
            )
    else:
        args = [
            (b, rows, c, model_tag, config.seed, max_redraws, fit_config)
            for b in range(b_total)
        ]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for b, flat in enumerate(pool.map(_worker, args)):
                reps[b] = flat

    sorted_cols = np.sort(reps, axis=0)
    lower = _column_percentile(sorted_cols, config.alpha / 2.0)
    upper = _column_percentile(sorted_cols, 1.0 - config.alpha / 2.0)
    return PairwiseIntervalMatrix.from_flat(
        n, point, lower, upper, config.alpha, replicates=reps if keep_replicates else None
    )


def dump_replicates(path, replicates: np.ndarray) -> None:
    """Raw binary dump: little-endian float64, row = replicate, column = pair."""
    arr = np.ascontiguousarray(np.asarray(replicates, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())


def intervals_at_level(intervals: PairwiseIntervalMatrix,
                       alpha: float) -> PairwiseIntervalMatrix:
    """Recompute the bounds at another level from stored replicates.

    Requires the source matrix to have been produced with
    ``keep_replicates=True``; the point estimates are reused unchanged.
    """
    if intervals.replicates is None:
        raise ValueError("interval matrix carries no replicate values")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")
    sorted_cols = np.sort(intervals.replicates, axis=0)
    lower = _column_percentile(sorted_cols, alpha / 2.0)
    upper = _column_percentile(sorted_cols, 1.0 - alpha / 2.0)
    return PairwiseIntervalMatrix.from_flat(
        intervals.n,
        intervals.flat_point(),
        np.clip(lower, 0.0, 1.0),
        np.clip(upper, 0.0, 1.0),
        alpha,
        replicates=intervals.replicates,
    )
