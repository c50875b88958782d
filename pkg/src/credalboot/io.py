"""Dataset ingestion and on-disk artifact formats.

CSV conventions: comma separator, decimal point, pair rows in lexicographic
(i, j) order with 1-based indices, floats written with 17 significant
digits so every file round-trips exactly.  JSON artifacts carry a
``schema_version`` field.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources

import numpy as np

from ._util import fmt_float, pair_list
from .bootstrap import PairwiseIntervalMatrix
from .credal import CredalPartition, RelationalRepresentation, RoughSummary
from .em import FitResult
from .errors import ParseError
from .gmm import Dataset, MixtureParams

__all__ = [
    "load_csv",
    "load_dataset",
    "write_fit_json",
    "read_fit_json",
    "write_intervals_csv",
    "read_intervals_csv",
    "write_credal_json",
    "read_credal_json",
    "write_rough_json",
    "read_rough_json",
    "write_relational_csv",
    "read_relational_csv",
    "write_calibration_csv",
    "write_trace_csv",
    "read_trace_csv",
    "write_dataset_csv",
]

_FIXTURES = {"iris": True, "example30": False}  # name -> has label column


def _parse_row(cells: list[str], line_no: int, width: int | None) -> list[float]:
    if width is not None and len(cells) != width:
        raise ParseError(
            f"line {line_no}: expected {width} values, got {len(cells)}"
        )
    values = []
    for cell in cells:
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"line {line_no}: non-numeric value {cell!r}") from None
        if not math.isfinite(v):
            raise ParseError(f"line {line_no}: non-finite value {cell!r}")
        values.append(v)
    return values


def _load_table(path) -> np.ndarray:
    """Numeric rows from a comma-separated file, header auto-detected."""
    try:
        with open(path, newline="") as fh:
            raw = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not raw:
        raise ParseError("line 1: empty file")

    start = 0
    width = len(raw[0])
    try:
        first = _parse_row(raw[0], 1, None)
    except ParseError:
        start = 1  # header row: first line fails numeric parse
    rows = [] if start else [first]
    for k, cells in enumerate(raw[1:], start=2):
        rows.append(_parse_row(cells, k, width))
    if not rows:
        raise ParseError(f"line {len(raw) + 1}: no data rows")
    return np.asarray(rows, dtype=float)


def load_csv(path) -> Dataset:
    """Read a numeric table into a dataset (rows kept in file order)."""
    return Dataset(_load_table(path))


def load_dataset(name: str) -> tuple[Dataset, np.ndarray | None]:
    """A bundled fixture by name; returns (data, labels) with labels taken
    from the last column when the fixture carries them."""
    if name not in _FIXTURES:
        raise ValueError(f"unknown bundled dataset {name!r}, have {sorted(_FIXTURES)}")
    ref = resources.files("credalboot").joinpath(f"data/{name}.csv")
    with resources.as_file(ref) as path:
        table = _load_table(path)
    if _FIXTURES[name]:
        return Dataset(table[:, :-1]), table[:, -1].astype(int)
    return Dataset(table), None


def write_dataset_csv(path, data: Dataset, labels: np.ndarray | None = None) -> None:
    """Feature table with generated column names; labels get a final column."""
    d = data.d
    header = [f"x{k + 1}" for k in range(d)]
    if labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx, row in enumerate(data.rows):
            out = [fmt_float(v) for v in row]
            if labels is not None:
                out.append(str(int(labels[idx])))
            writer.writerow(out)


def write_fit_json(path, fit: FitResult, n: int, selection=None) -> None:
    """Mixture parameters plus fit metadata; ``selection`` optionally embeds
    the per-candidate BIC table from automatic model choice."""
    params = fit.params
    payload = {
        "schema_version": 1,
        "model_tag": params.model_tag,
        "n": int(n),
        "c": params.n_components,
        "d": params.d,
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "covariances": params.covariances.tolist(),
        "log_likelihood": fit.log_likelihood,
        "bic": fit.bic,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
    }
    if selection is not None:
        payload["selection"] = [
            {
                "c": row.c,
                "model_tag": row.model_tag,
                "bic": row.bic,
                "log_likelihood": row.log_likelihood,
                "n_params": row.n_params,
                "converged": row.converged,
                "error": row.error,
            }
            for row in selection
        ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_fit_json(path) -> tuple[MixtureParams, dict]:
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("schema_version") != 1:
        raise ParseError(f"unsupported fit schema_version {raw.get('schema_version')!r}")
    params = MixtureParams(
        np.asarray(raw["weights"], dtype=float),
        np.asarray(raw["means"], dtype=float),
        np.asarray(raw["covariances"], dtype=float),
        raw["model_tag"],
    )
    meta = {k: raw[k] for k in ("n", "c", "d", "log_likelihood", "bic", "n_iter", "converged")}
    if "selection" in raw:
        meta["selection"] = raw["selection"]
    return params, meta


def _write_pair_csv(path, header: list[str], n: int, columns: list[np.ndarray]) -> None:
    pairs = pair_list(n)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, (i, j) in enumerate(pairs):
            writer.writerow(
                [str(i + 1), str(j + 1)] + [fmt_float(col[k]) for col in columns]
            )


def _read_pair_csv(path, header: list[str]) -> tuple[int, list[np.ndarray]]:
    try:
        with open(path, newline="") as fh:
            raw = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not raw:
        raise ParseError("line 1: empty file")
    if raw[0] != header:
        raise ParseError(f"line 1: expected header {','.join(header)!r}")
    body = raw[1:]
    npairs = len(body)
    # npairs = n(n-1)/2 must invert to an integer n
    n = int(round((1 + math.sqrt(1 + 8 * npairs)) / 2))
    if npairs == 0 or n * (n - 1) // 2 != npairs:
        raise ParseError(f"{npairs} pair rows do not form a full i<j enumeration")
    pairs = pair_list(n)
    columns = [np.empty(npairs) for _ in header[2:]]
    for k, cells in enumerate(body):
        line_no = k + 2
        values = _parse_row(cells, line_no, len(header))
        if int(values[0]) != pairs[k, 0] + 1 or int(values[1]) != pairs[k, 1] + 1:
            raise ParseError(
                f"line {line_no}: expected pair "
                f"({pairs[k, 0] + 1}, {pairs[k, 1] + 1}), got "
                f"({int(values[0])}, {int(values[1])})"
            )
        for col, v in zip(columns, values[2:]):
            col[k] = v
    return n, columns


def write_intervals_csv(path, intervals: PairwiseIntervalMatrix) -> None:
    _write_pair_csv(
        path,
        ["i", "j", "point", "lower", "upper"],
        intervals.n,
        [intervals.flat_point(), intervals.flat_lower(), intervals.flat_upper()],
    )


def read_intervals_csv(path, alpha: float) -> PairwiseIntervalMatrix:
    """The level is not stored in the file and must be supplied."""
    n, (point, lower, upper) = _read_pair_csv(
        path, ["i", "j", "point", "lower", "upper"]
    )
    return PairwiseIntervalMatrix.from_flat(n, point, lower, upper, alpha)


def write_credal_json(path, partition: CredalPartition) -> None:
    with open(path, "w") as fh:
        json.dump(partition.to_dict(), fh, indent=2)
        fh.write("\n")


def read_credal_json(path) -> CredalPartition:
    with open(path) as fh:
        return CredalPartition.from_dict(json.load(fh))


def write_rough_json(path, summary: RoughSummary) -> None:
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
        fh.write("\n")


def read_rough_json(path) -> RoughSummary:
    with open(path) as fh:
        return RoughSummary.from_dict(json.load(fh))


def write_relational_csv(path, rel: RelationalRepresentation) -> None:
    _write_pair_csv(
        path,
        ["i", "j", "m_same", "m_diff", "m_theta", "bel", "pl"],
        rel.n,
        [rel.m_same, rel.m_diff, rel.m_theta, rel.bel, rel.pl],
    )


def read_relational_csv(path) -> RelationalRepresentation:
    n, (same, diff, theta, bel, pl) = _read_pair_csv(
        path, ["i", "j", "m_same", "m_diff", "m_theta", "bel", "pl"]
    )
    rel = RelationalRepresentation(n, same, diff, theta)
    if np.abs(rel.bel - bel).max() > 1e-12 or np.abs(rel.pl - pl).max() > 1e-12:
        raise ParseError("bel/pl columns disagree with the mass columns")
    return rel


def write_calibration_csv(path, intervals: PairwiseIntervalMatrix,
                          rel: RelationalRepresentation) -> None:
    """Tidy per-pair table for the bound-vs-mass calibration scatters."""
    if intervals.n != rel.n:
        raise ValueError(
            f"intervals cover n={intervals.n} objects, relational n={rel.n}"
        )
    _write_pair_csv(
        path,
        ["i", "j", "point", "lower", "upper", "bel", "pl"],
        intervals.n,
        [
            intervals.flat_point(),
            intervals.flat_lower(),
            intervals.flat_upper(),
            rel.bel,
            rel.pl,
        ],
    )


def write_trace_csv(path, trace) -> None:
    """Objective per sweep; the stop measure starts at sweep 1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "objective", "stop_measure"])
        for t, j in enumerate(trace.j_values):
            e = "" if t == 0 else fmt_float(trace.e_values[t - 1])
            writer.writerow([str(t), fmt_float(j), e])


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return the (objective, stop measure) series written by write_trace_csv."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sweep", "objective", "stop_measure"]:
        raise ParseError(f"{path}: not an optimization trace file")
    j_values, e_values = [], []
    for t, row in enumerate(rows[1:]):
        if len(row) != 3 or row[0] != str(t):
            raise ParseError(f"{path}: unexpected row {t + 2}")
        j_values.append(float(row[1]))
        if t > 0:
            e_values.append(float(row[2]))
    return np.asarray(j_values), np.asarray(e_values)
