"""Command-line pipeline: fit, bootstrap intervals, credal assignment, summaries.

The monolithic ``run`` command and the per-stage subcommands share the same
stage functions and the same per-stage seed derivation, so composing
``fit`` -> ``bootstrap`` -> ``credal`` -> ``summarize`` over one output
directory with one master seed yields byte-identical artifacts to a single
``run``.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from ._util import stage_seed
from .bootstrap import BootstrapConfig, bootstrap_pairwise_ci
from .credal import relational_representation, rough_summary
from .em import MODEL_TAGS, FitConfig, fit_em, select_model
from .errors import CredalbootError
from .focal import FAMILY_MODES, build_family
from .gmm import posterior
from .io import (
    load_csv,
    read_credal_json,
    read_fit_json,
    read_intervals_csv,
    read_trace_csv,
    write_calibration_csv,
    write_credal_json,
    write_dataset_csv,
    write_fit_json,
    write_intervals_csv,
    write_relational_csv,
    write_rough_json,
    write_trace_csv,
)
from .irqp import IrqpConfig, irqp_fit, targets_from_intervals
from .plots import render_figures
from .simulate import (
    MIXTURE_NAMES,
    coverage_experiment,
    mixture_preset,
    sample_mixture,
    write_coverage_csv,
)

__all__ = ["PipelineConfig", "run_pipeline", "build_parser", "main"]

_MODEL_CHOICES = ("eii", "eee", "vvv", "auto")
_PAPER_SCALE = {"n": 300, "n_datasets": 100, "n_replicates": 1000,
                "alphas": (0.10, 0.05)}


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for one end-to-end pipeline invocation."""

    input_path: str
    out_dir: str
    c: int
    model: str = "auto"
    n_replicates: int = 200
    alpha: float = 0.10
    focal_mode: str = "pairs"
    knn_k: int = 2
    epsilon: float = 1e-6
    max_sweeps: int = 200
    n_restarts: int = 5
    replicate_restarts: int = 2
    seed: int = 0
    threads: int = 1
    dump_replicates: bool = False
    figures: bool = True

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"cluster count must be at least 1, got {self.c}")
        if self.model != "auto" and self.model not in MODEL_TAGS:
            raise ValueError(
                f"model must be one of {MODEL_TAGS} or 'auto', got {self.model!r}"
            )
        if self.n_replicates < 2:
            raise ValueError(
                f"need at least 2 bootstrap replicates, got {self.n_replicates}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(
                f"alpha must lie strictly between 0 and 1, got {self.alpha}"
            )
        if self.focal_mode not in FAMILY_MODES:
            raise ValueError(
                f"focal mode must be one of {FAMILY_MODES}, got {self.focal_mode!r}"
            )
        if self.knn_k < 1:
            raise ValueError(f"neighbour count must be at least 1, got {self.knn_k}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_sweeps < 1:
            raise ValueError(f"max sweeps must be at least 1, got {self.max_sweeps}")
        if self.n_restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {self.n_restarts}")
        if self.replicate_restarts < 1:
            raise ValueError(
                f"replicate restarts must be at least 1, got {self.replicate_restarts}"
            )
        if self.threads < 1:
            raise ValueError(f"thread count must be at least 1, got {self.threads}")


class _StageError(Exception):
    def __init__(self, stage: str, cause: CredalbootError):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    try:
        yield
    except CredalbootError as exc:
        raise _StageError(name, exc) from exc


def _fit_stage(data, config: PipelineConfig):
    fit_config = FitConfig(n_restarts=config.n_restarts,
                           seed=stage_seed(config.seed, "pipeline-fit"))
    if config.model == "auto":
        selection = select_model(
            data, [(config.c, tag) for tag in MODEL_TAGS], fit_config
        )
        return selection.best, selection.table
    return fit_em(data, config.c, config.model, fit_config), None


def _bootstrap_stage(data, params, config: PipelineConfig):
    boot_config = BootstrapConfig(
        n_replicates=config.n_replicates, alpha=config.alpha,
        seed=stage_seed(config.seed, "pipeline-bootstrap"),
    )
    fit_config = FitConfig(n_restarts=config.replicate_restarts)
    return bootstrap_pairwise_ci(
        data, params.n_components, params.model_tag, boot_config,
        fit_config=fit_config, point_params=params,
        keep_replicates=config.dump_replicates, n_workers=config.threads,
    )


def _credal_stage(data, params, intervals, config: PipelineConfig):
    if config.focal_mode == "knn":
        family = build_family(params.n_components, "knn",
                              posterior=posterior(data.rows, params),
                              k=config.knn_k)
    else:
        family = build_family(params.n_components, config.focal_mode)
    irqp_config = IrqpConfig(epsilon=config.epsilon, max_sweeps=config.max_sweeps,
                             seed=stage_seed(config.seed, "pipeline-credal"))
    return irqp_fit(targets_from_intervals(intervals), family, irqp_config)


def _summarize_stage(out: Path, partition, *, intervals=None, data=None,
                     trace_values=None, figures=True) -> dict[str, Path]:
    written: dict[str, Path] = {}
    summary = rough_summary(partition)
    rel = relational_representation(partition)
    written["rough"] = out / "rough.json"
    write_rough_json(written["rough"], summary)
    written["relational"] = out / "relational.csv"
    write_relational_csv(written["relational"], rel)
    if intervals is not None:
        written["calibration"] = out / "calibration.csv"
        write_calibration_csv(written["calibration"], intervals, rel)
    if figures:
        for path in render_figures(out, intervals=intervals, rel=rel, data=data,
                                   partition=partition, trace=trace_values):
            written[path.stem] = path
    return written


def _dump_replicates(path: Path, intervals) -> None:
    # raw little-endian float64, C order: one row of n(n-1)/2 pairwise
    # probabilities per bootstrap replicate
    intervals.replicates.astype("<f8").tofile(path)


def run_pipeline(config: PipelineConfig) -> dict[str, Path]:
    """Run load -> fit -> bootstrap -> credal -> summarize, returning the
    paths of every artifact written into ``config.out_dir``."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    with _stage("load"):
        data = load_csv(config.input_path)
    with _stage("fit"):
        fit, selection = _fit_stage(data, config)
        artifacts["fit"] = out / "fit.json"
        write_fit_json(artifacts["fit"], fit, data.n, selection)
    with _stage("bootstrap"):
        intervals = _bootstrap_stage(data, fit.params, config)
        artifacts["intervals"] = out / "intervals.csv"
        write_intervals_csv(artifacts["intervals"], intervals)
        if config.dump_replicates:
            artifacts["replicates"] = out / "replicates.bin"
            _dump_replicates(artifacts["replicates"], intervals)
    with _stage("credal"):
        result = _credal_stage(data, fit.params, intervals, config)
        artifacts["credal"] = out / "credal.json"
        write_credal_json(artifacts["credal"], result.partition)
        artifacts["trace"] = out / "irqp_trace.csv"
        write_trace_csv(artifacts["trace"], result.trace)
    with _stage("summarize"):
        artifacts.update(_summarize_stage(
            out, result.partition, intervals=intervals, data=data,
            trace_values=result.trace.j_values, figures=config.figures,
        ))
    return artifacts


def _resolve_seed(args) -> int:
    env = os.environ.get("CREDALBOOT_SEED")
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"CREDALBOOT_SEED must be an integer, got {env!r}") from None


def _norm_model(name: str) -> str:
    return "auto" if name.lower() == "auto" else name.upper()


def _mixture_name(name: str) -> str:
    if name in ("1", "2", "3"):
        name = f"Mixture{name}"
    normalized = name.capitalize()
    if normalized not in MIXTURE_NAMES:
        raise ValueError(f"mixture must be one of {MIXTURE_NAMES}, got {name!r}")
    return normalized


def _parse_alphas(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"cannot parse alpha list {text!r}") from None
    for a in values:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must lie strictly between 0 and 1, got {a}")
    if not values:
        raise ValueError("need at least one alpha")
    return values


def _config_from_args(args) -> PipelineConfig:
    def get(name, default):
        return getattr(args, name, default)

    return PipelineConfig(
        input_path=get("input", None) or "",
        out_dir=args.out_dir,
        c=get("clusters", 1),
        model=_norm_model(get("model", "auto")),
        n_replicates=get("bootstrap", 200),
        alpha=get("alpha", 0.10),
        focal_mode=get("focal", "pairs"),
        knn_k=get("knn", 2),
        epsilon=get("epsilon", 1e-6),
        max_sweeps=get("max_sweeps", 200),
        n_restarts=get("restarts", 5),
        replicate_restarts=get("replicate_restarts", 2),
        seed=_resolve_seed(args),
        threads=get("threads", 1),
        dump_replicates=get("dump_replicates", False),
        figures=not get("no_figures", False),
    )


def _mkdir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _artifact_path(explicit, out: Path, name: str) -> Path:
    return Path(explicit) if explicit else out / name


def _optional_artifact(explicit, out: Path, name: str) -> Path | None:
    if explicit:
        return Path(explicit)
    candidate = out / name
    return candidate if candidate.exists() else None


def _cmd_run(args) -> None:
    run_pipeline(_config_from_args(args))


def _cmd_fit(args) -> None:
    config = _config_from_args(args)
    out = _mkdir(config.out_dir)
    with _stage("load"):
        data = load_csv(config.input_path)
    with _stage("fit"):
        fit, selection = _fit_stage(data, config)
        write_fit_json(out / "fit.json", fit, data.n, selection)


def _cmd_bootstrap(args) -> None:
    config = _config_from_args(args)
    out = _mkdir(config.out_dir)
    with _stage("load"):
        data = load_csv(config.input_path)
        params, _ = read_fit_json(_artifact_path(args.fit, out, "fit.json"))
    with _stage("bootstrap"):
        intervals = _bootstrap_stage(data, params, config)
        write_intervals_csv(out / "intervals.csv", intervals)
        if config.dump_replicates:
            _dump_replicates(out / "replicates.bin", intervals)


def _cmd_credal(args) -> None:
    config = _config_from_args(args)
    if config.focal_mode == "knn" and not config.input_path:
        raise ValueError("focal mode 'knn' needs --input to recover the posterior")
    out = _mkdir(config.out_dir)
    with _stage("load"):
        params, _ = read_fit_json(_artifact_path(args.fit, out, "fit.json"))
        intervals = read_intervals_csv(
            _artifact_path(args.intervals, out, "intervals.csv"), config.alpha
        )
        data = load_csv(config.input_path) if config.input_path else None
    with _stage("credal"):
        result = _credal_stage(data, params, intervals, config)
        write_credal_json(out / "credal.json", result.partition)
        write_trace_csv(out / "irqp_trace.csv", result.trace)


def _cmd_summarize(args) -> None:
    config = _config_from_args(args)
    out = _mkdir(config.out_dir)
    with _stage("load"):
        partition = read_credal_json(_artifact_path(args.credal, out, "credal.json"))
        intervals = None
        intervals_path = _optional_artifact(args.intervals, out, "intervals.csv")
        if intervals_path is not None:
            intervals = read_intervals_csv(intervals_path, config.alpha)
        data = load_csv(config.input_path) if config.input_path else None
        trace_values = None
        trace_path = _optional_artifact(args.trace, out, "irqp_trace.csv")
        if trace_path is not None:
            trace_values = read_trace_csv(trace_path)[0]
    with _stage("summarize"):
        _summarize_stage(out, partition, intervals=intervals, data=data,
                         trace_values=trace_values, figures=config.figures)


def _cmd_simulate(args) -> None:
    seed = _resolve_seed(args)
    if args.n < 1:
        raise ValueError(f"sample size must be positive, got {args.n}")
    out = _mkdir(args.out_dir)
    spec = mixture_preset(_mixture_name(args.mixture))
    with _stage("simulate"):
        data, labels = sample_mixture(spec, args.n, seed)
        write_dataset_csv(out / "dataset.csv", data)
        with open(out / "labels.csv", "w", newline="") as fh:
            fh.write("label\n")
            for value in labels:
                fh.write(f"{int(value)}\n")


def _cmd_coverage(args) -> None:
    seed = _resolve_seed(args)
    out = _mkdir(args.out_dir)
    if args.paper_scale:
        grid = [(m, a) for m in MIXTURE_NAMES for a in ("EII", "EEE", "VVV", "auto")]
        n, n_datasets = _PAPER_SCALE["n"], _PAPER_SCALE["n_datasets"]
        n_replicates, alphas = _PAPER_SCALE["n_replicates"], _PAPER_SCALE["alphas"]
    else:
        if args.mixture is None:
            raise ValueError("--mixture is required unless --paper-scale is given")
        grid = [(_mixture_name(args.mixture), _norm_model(args.assumed))]
        n, n_datasets = args.n, args.datasets
        n_replicates, alphas = args.bootstrap, _parse_alphas(args.alphas)
    reports = []
    with _stage("coverage"):
        for mixture, assumed in grid:
            reports.append(coverage_experiment(
                mixture_preset(mixture), assumed, n, n_datasets,
                bootstrap_config=BootstrapConfig(n_replicates=n_replicates),
                alphas=alphas, seed=seed,
                point_fit_config=FitConfig(n_restarts=args.restarts),
                replicate_fit_config=FitConfig(n_restarts=args.replicate_restarts),
                family_mode=args.focal, knn_k=args.knn,
                irqp_config=IrqpConfig(epsilon=args.epsilon,
                                       max_sweeps=args.max_sweeps),
                include_partition=not args.ci_only,
                n_workers=args.threads,
            ))
        write_coverage_csv(out / "coverage.csv", reports)


def _opt_input(p, required=True):
    p.add_argument("--input", required=required, default=None,
                   help="CSV of numeric feature rows (header optional)")


def _opt_clusters(p):
    p.add_argument("--clusters", type=int, required=True,
                   help="number of mixture components")


def _opt_model(p):
    p.add_argument("--model", type=str.lower, choices=_MODEL_CHOICES,
                   default="auto",
                   help="covariance structure; 'auto' picks by BIC")


def _opt_seed(p):
    p.add_argument("--seed", type=int, default=0,
                   help="master seed (the CREDALBOOT_SEED variable overrides it)")


def _opt_out(p):
    p.add_argument("--out-dir", required=True, help="directory for artifacts")


def _opt_restarts(p):
    p.add_argument("--restarts", type=int, default=5,
                   help="random initializations for the point fit")


def _opt_boot(p):
    p.add_argument("--bootstrap", type=int, default=200,
                   help="number of bootstrap replicates")
    p.add_argument("--alpha", type=float, default=0.10,
                   help="miscoverage level of the percentile intervals")
    p.add_argument("--replicate-restarts", type=int, default=2,
                   help="random initializations per replicate fit")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for replicate fitting")
    p.add_argument("--dump-replicates", action="store_true",
                   help="also write the raw replicate matrix (replicates.bin)")


def _opt_credal(p):
    p.add_argument("--focal", type=str.lower, choices=FAMILY_MODES,
                   default="pairs", help="focal-set family")
    p.add_argument("--knn", type=int, default=2,
                   help="neighbour count for the knn family")
    p.add_argument("--epsilon", type=float, default=1e-6,
                   help="stopping threshold for the row-wise solver")
    p.add_argument("--max-sweeps", type=int, default=200,
                   help="sweep budget for the row-wise solver")


def _opt_figures(p):
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="credalboot",
        description=("calibrated evidential clustering: Gaussian mixture fit, "
                     "bootstrap intervals for pairwise co-clustering, and a "
                     "credal partition matched to those intervals"),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline in one call")
    _opt_input(p)
    _opt_clusters(p)
    _opt_model(p)
    _opt_restarts(p)
    _opt_boot(p)
    _opt_credal(p)
    _opt_seed(p)
    _opt_out(p)
    _opt_figures(p)
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("fit", help="fit the mixture model and write fit.json")
    _opt_input(p)
    _opt_clusters(p)
    _opt_model(p)
    _opt_restarts(p)
    _opt_seed(p)
    _opt_out(p)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("bootstrap",
                       help="bootstrap pairwise intervals from a saved fit")
    _opt_input(p)
    p.add_argument("--fit", default=None,
                   help="fit.json path (default: <out-dir>/fit.json)")
    _opt_boot(p)
    _opt_seed(p)
    _opt_out(p)
    p.set_defaults(handler=_cmd_bootstrap)

    p = sub.add_parser("credal",
                       help="fit the credal partition to saved intervals")
    _opt_input(p, required=False)
    p.add_argument("--fit", default=None,
                   help="fit.json path (default: <out-dir>/fit.json)")
    p.add_argument("--intervals", default=None,
                   help="intervals.csv path (default: <out-dir>/intervals.csv)")
    p.add_argument("--alpha", type=float, default=0.10,
                   help="level to record on the loaded intervals")
    _opt_credal(p)
    _opt_seed(p)
    _opt_out(p)
    p.set_defaults(handler=_cmd_credal)

    p = sub.add_parser("summarize",
                       help="rough summary, relational table, calibration "
                            "table and figures from saved artifacts")
    p.add_argument("--credal", default=None,
                   help="credal.json path (default: <out-dir>/credal.json)")
    p.add_argument("--intervals", default=None,
                   help="intervals.csv path (default: <out-dir>/intervals.csv "
                        "when present)")
    p.add_argument("--trace", default=None,
                   help="irqp_trace.csv path (default: <out-dir>/irqp_trace.csv "
                        "when present)")
    p.add_argument("--alpha", type=float, default=0.10,
                   help="level to record on the loaded intervals")
    _opt_input(p, required=False)
    _opt_seed(p)
    _opt_out(p)
    _opt_figures(p)
    p.set_defaults(handler=_cmd_summarize)

    p = sub.add_parser("simulate", help="draw a dataset from a mixture preset")
    p.add_argument("--mixture", required=True,
                   help="preset name (Mixture1/Mixture2/Mixture3 or 1/2/3)")
    p.add_argument("--n", type=int, default=300, help="sample size")
    _opt_seed(p)
    _opt_out(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("coverage",
                       help="frequentist coverage experiment over simulated "
                            "datasets")
    p.add_argument("--mixture", default=None,
                   help="preset name (Mixture1/Mixture2/Mixture3 or 1/2/3)")
    p.add_argument("--assumed", type=str.lower, choices=_MODEL_CHOICES,
                   default="eii", help="model assumed when fitting")
    p.add_argument("--n", type=int, default=300, help="sample size per dataset")
    p.add_argument("--datasets", type=int, default=20,
                   help="number of simulated datasets")
    p.add_argument("--bootstrap", type=int, default=200,
                   help="bootstrap replicates per dataset")
    p.add_argument("--alphas", default="0.1",
                   help="comma-separated miscoverage levels")
    _opt_restarts(p)
    p.add_argument("--replicate-restarts", type=int, default=2,
                   help="random initializations per replicate fit")
    p.add_argument("--focal", type=str.lower, choices=FAMILY_MODES,
                   default="pairs", help="focal-set family")
    p.add_argument("--knn", type=int, default=2,
                   help="neighbour count for the knn family")
    p.add_argument("--epsilon", type=float, default=1e-6,
                   help="stopping threshold for the row-wise solver")
    p.add_argument("--max-sweeps", type=int, default=200,
                   help="sweep budget for the row-wise solver")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for replicate fitting")
    p.add_argument("--ci-only", action="store_true",
                   help="skip the credal stage; report interval coverage only")
    p.add_argument("--paper-scale", action="store_true",
                   help="full protocol: every mixture and assumed model, "
                        "100 datasets of n=300, 1000 replicates, levels "
                        "0.90 and 0.95")
    _opt_seed(p)
    _opt_out(p)
    p.set_defaults(handler=_cmd_coverage)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except _StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except CredalbootError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
