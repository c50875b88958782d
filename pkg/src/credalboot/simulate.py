"""Simulation harness: mixture presets, sampling, ARI, coverage experiments.

The coverage experiment measures how often the pairwise confidence
intervals and the fitted belief/plausibility intervals contain the true
same-cluster probability, computed exactly from the generating parameters
at the sampled points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._util import fmt_float, make_rng, stage_seed
from .bootstrap import BootstrapConfig, bootstrap_pairwise_ci, intervals_at_level
from .credal import relational_representation
from .em import MODEL_TAGS, FitConfig, fit_em, select_model
from .errors import CredalbootError, SimulationError
from .focal import build_family
from .gmm import Dataset, MixtureParams, pairwise_prob_matrix, posterior
from .irqp import IrqpConfig, irqp_fit, targets_from_intervals

__all__ = [
    "MIXTURE_NAMES",
    "MixtureSpec",
    "mixture_preset",
    "sample_mixture",
    "adjusted_rand_index",
    "CoverageReport",
    "coverage_experiment",
    "write_coverage_csv",
]

MIXTURE_NAMES = ("Mixture1", "Mixture2", "Mixture3")


@dataclass(frozen=True)
class MixtureSpec:
    """Named ground-truth parameters for data generation."""

    name: str
    params: MixtureParams


def mixture_preset(name: str) -> MixtureSpec:
    """The three built-in two-dimensional benchmark mixtures (c = 3)."""
    third = np.full(3, 1.0 / 3.0)
    if name == "Mixture1":
        means = np.array([[0.0, 0.0], [0.0, 3.0], [3.0, 0.0]])
        covs = np.stack([np.eye(2)] * 3)
        return MixtureSpec(name, MixtureParams(third, means, covs, "EII"))
    if name == "Mixture2":
        means = np.array([[0.0, 0.0], [0.0, 2.5], [2.5, 0.0]])
        shared = np.array([[1.0, 0.5], [0.5, 1.0]])
        return MixtureSpec(name, MixtureParams(third, means, np.stack([shared] * 3), "EEE"))
    if name == "Mixture3":
        means = np.array([[0.0, 0.0], [0.0, 3.0], [3.0, 0.0]])
        covs = np.stack(
            [
                np.array([[1.0, 0.5], [0.5, 1.0]]),
                1.5 * np.array([[1.0, -0.5], [-0.5, 1.0]]),
                np.eye(2),
            ]
        )
        return MixtureSpec(name, MixtureParams(third, means, covs, "VVV"))
    raise ValueError(f"unknown mixture preset {name!r}, expected one of {MIXTURE_NAMES}")


def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Draw ``n`` i.i.d. points; returns the dataset and 1-based component labels.

    Components come from a categorical draw on the weights; observations are
    the component mean plus the Cholesky factor of its covariance applied to
    standard normal draws.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    params = spec.params
    rng = make_rng(seed)
    comp = rng.choice(params.n_components, size=n, p=params.weights)
    eps = rng.standard_normal((n, params.d))
    chol = np.stack([np.linalg.cholesky(cov) for cov in params.covariances])
    rows = params.means[comp] + np.einsum("nij,nj->ni", chol[comp], eps)
    return Dataset(rows), comp + 1


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement between two labelings."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n == 0:
        raise ValueError("label vectors are empty")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(contingency, (ai, bi), 1.0)
    sum_cells = _comb2(contingency).sum()
    sum_rows = _comb2(contingency.sum(axis=1)).sum()
    sum_cols = _comb2(contingency.sum(axis=0)).sum()
    total = _comb2(np.array([n]))[0]
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # both partitions degenerate in the same way; identical by convention
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


@dataclass(frozen=True, eq=False)
class CoverageReport:
    """Across-dataset coverage and length summaries, one entry per level.

    Arrays are indexed by level (same order as ``levels``); partition
    columns hold NaN when the run skipped the evidential fitting stage.
    """

    true_model: str
    assumed: str
    levels: tuple[float, ...]
    n: int
    n_datasets: int
    n_replicates: int
    ci_coverage: np.ndarray
    ci_coverage_sd: np.ndarray
    ci_length: np.ndarray
    ci_length_sd: np.ndarray
    belpl_coverage: np.ndarray
    belpl_coverage_sd: np.ndarray
    belpl_length: np.ndarray
    belpl_length_sd: np.ndarray
    details: dict | None = field(default=None, repr=False)


def _aggregate(per_dataset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = per_dataset.mean(axis=0)
    if per_dataset.shape[0] > 1:
        sd = per_dataset.std(axis=0, ddof=1)
    else:
        sd = np.zeros_like(mean)
    return mean, sd


def coverage_experiment(
    spec: MixtureSpec,
    assumed: str,
    n: int,
    n_datasets: int,
    bootstrap_config: BootstrapConfig | None = None,
    alphas: Sequence[float] | None = None,
    seed: int = 0,
    point_fit_config: FitConfig | None = None,
    replicate_fit_config: FitConfig | None = None,
    family_mode: str = "pairs",
    knn_k: int = 2,
    irqp_config: IrqpConfig | None = None,
    include_partition: bool = True,
    keep_details: bool = False,
    n_workers: int = 1,
    fit_fn=None,
) -> CoverageReport:
    """Sample datasets, run the pipeline on each, and score interval coverage.

    The config arguments act as templates: their seeds are replaced by
    per-dataset values derived from ``seed``, so the whole experiment is a
    pure function of its arguments.  All levels share one set of bootstrap
    replicates per dataset.  ``assumed`` is a model tag or ``"auto"``, in
    which case the tag is selected once per dataset by BIC and reused for
    every replicate.
    """
    if n_datasets < 1:
        raise ValueError(f"need n_datasets >= 1, got {n_datasets}")
    auto = assumed.lower() == "auto"
    if not auto and assumed not in MODEL_TAGS:
        raise ValueError(f"assumed must be one of {MODEL_TAGS} or 'auto', got {assumed!r}")
    if bootstrap_config is None:
        bootstrap_config = BootstrapConfig()
    if point_fit_config is None:
        point_fit_config = FitConfig()
    if replicate_fit_config is None:
        replicate_fit_config = FitConfig(n_restarts=2)
    if irqp_config is None:
        irqp_config = IrqpConfig()
    if alphas is None:
        alphas = (bootstrap_config.alpha,)
    alphas = tuple(float(a) for a in alphas)
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {a}")

    c = spec.params.n_components
    n_levels = len(alphas)
    npairs = n * (n - 1) // 2
    ci_cov = np.zeros((n_datasets, n_levels))
    ci_len = np.zeros((n_datasets, n_levels))
    bp_cov = np.full((n_datasets, n_levels), np.nan)
    bp_len = np.full((n_datasets, n_levels), np.nan)
    details: dict[str, object] | None = None
    if keep_details:
        details = {
            "p_true": np.zeros((n_datasets, npairs)),
            "point": np.zeros((n_datasets, npairs)),
            "ci_lower": np.zeros((n_datasets, n_levels, npairs)),
            "ci_upper": np.zeros((n_datasets, n_levels, npairs)),
            "bel": np.full((n_datasets, n_levels, npairs), np.nan),
            "pl": np.full((n_datasets, n_levels, npairs), np.nan),
            "tags": [],
        }

    for t in range(n_datasets):
        try:
            data, _ = sample_mixture(spec, n, stage_seed(seed, "sim-data", t))
            iu, ju = np.triu_indices(n, k=1)
            p_true = pairwise_prob_matrix(posterior(data.rows, spec.params))[iu, ju]

            fit_cfg = replace(point_fit_config, seed=stage_seed(seed, "sim-fit", t))
            if auto:
                sel = select_model(data, [(c, tag) for tag in MODEL_TAGS], fit_cfg)
                tag = sel.best_candidate[1]
                point = sel.best
            else:
                tag = assumed
                point = fit_em(data, c, tag, fit_cfg)

            boot_cfg = replace(
                bootstrap_config,
                alpha=alphas[0],
                seed=stage_seed(seed, "sim-boot", t),
            )
            base = bootstrap_pairwise_ci(
                data, c, tag, boot_cfg,
                fit_config=replicate_fit_config,
                point_params=point.params,
                fit_fn=fit_fn,
                keep_replicates=True,
                n_workers=n_workers,
            )
            family = None
            if include_partition:
                family = build_family(
                    c, family_mode, posterior=posterior(data.rows, point.params),
                    k=knn_k,
                )

            for lv, alpha in enumerate(alphas):
                ints = base if alpha == alphas[0] else intervals_at_level(base, alpha)
                lower, upper = ints.flat_lower(), ints.flat_upper()
                ci_cov[t, lv] = ((lower <= p_true) & (p_true <= upper)).mean()
                ci_len[t, lv] = (upper - lower).mean()
                if keep_details:
                    details["ci_lower"][t, lv] = lower
                    details["ci_upper"][t, lv] = upper
                if include_partition:
                    result = irqp_fit(
                        targets_from_intervals(ints),
                        family,
                        replace(
                            irqp_config,
                            seed=stage_seed(seed, "sim-irqp", t * n_levels + lv),
                        ),
                    )
                    rel = relational_representation(result.partition)
                    bp_cov[t, lv] = ((rel.bel <= p_true) & (p_true <= rel.pl)).mean()
                    bp_len[t, lv] = (rel.pl - rel.bel).mean()
                    if keep_details:
                        details["bel"][t, lv] = rel.bel
                        details["pl"][t, lv] = rel.pl
            if keep_details:
                details["p_true"][t] = p_true
                details["point"][t] = base.flat_point()
                details["tags"].append(tag)
        except CredalbootError as exc:
            raise SimulationError(f"dataset {t}: {exc}", t) from exc

    ci_cov_m, ci_cov_s = _aggregate(ci_cov)
    ci_len_m, ci_len_s = _aggregate(ci_len)
    bp_cov_m, bp_cov_s = _aggregate(bp_cov)
    bp_len_m, bp_len_s = _aggregate(bp_len)
    return CoverageReport(
        true_model=spec.name,
        assumed="Auto" if auto else assumed,
        levels=tuple(1.0 - a for a in alphas),
        n=n,
        n_datasets=n_datasets,
        n_replicates=bootstrap_config.n_replicates,
        ci_coverage=ci_cov_m,
        ci_coverage_sd=ci_cov_s,
        ci_length=ci_len_m,
        ci_length_sd=ci_len_s,
        belpl_coverage=bp_cov_m,
        belpl_coverage_sd=bp_cov_s,
        belpl_length=bp_len_m,
        belpl_length_sd=bp_len_s,
        details=details,
    )


_METRICS = (
    "ci_coverage", "ci_coverage_sd", "ci_length", "ci_length_sd",
    "belpl_coverage", "belpl_coverage_sd", "belpl_length", "belpl_length_sd",
)


def write_coverage_csv(path, reports: Sequence[CoverageReport]) -> None:
    """Table layout: one row per (true model, level), one column block per
    assumed model with CI and belief/plausibility coverage and length."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    seen = set()
    for r in reports:
        key = (r.true_model, r.assumed)
        if key in seen:
            raise ValueError(f"duplicate report for true model/assumed pair {key}")
        seen.add(key)

    assumed_order = []
    for r in reports:
        if r.assumed not in assumed_order:
            assumed_order.append(r.assumed)
    row_keys = []
    for r in reports:
        for level in r.levels:
            key = (r.true_model, level)
            if key not in row_keys:
                row_keys.append(key)

    header = ["true_model", "level"]
    for a in assumed_order:
        header.extend(f"{a}_{name}" for name in _METRICS)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for true_model, level in row_keys:
            row = [true_model, repr(level)]
            for a in assumed_order:
                match = [
                    r for r in reports
                    if r.true_model == true_model and r.assumed == a
                    and level in r.levels
                ]
                if not match:
                    row.extend([""] * len(_METRICS))
                    continue
                r = match[0]
                lv = r.levels.index(level)
                for name in _METRICS:
                    row.append(fmt_float(getattr(r, name)[lv]))
            writer.writerow(row)
