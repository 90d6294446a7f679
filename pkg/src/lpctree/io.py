"""CSV ingestion, case-study dataset preparation and report writing."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import DataError, Dataset, EmptyDataset, validate_dataset
from .experiments import CaseStudyResult, SuiteReport

MONTHS = {m: i + 1 for i, m in enumerate(
    ("jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec")
)}


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class CsvSchema:
    """Columns to read. ``ordinal`` maps a column name to its token -> number table."""

    features: tuple[str, ...]
    response: str
    ordinal: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    binary: Optional[bool] = None

    def __post_init__(self) -> None:
        if not self.response:
            raise SchemaError("schema needs a response column")
        if self.response in self.features:
            raise SchemaError(f"response {self.response!r} is also listed as a feature")


def _parse(token: str, column: str, line: int, table: Optional[Mapping[str, float]]) -> float:
    tok = token.strip()
    if table is not None:
        key = tok.lower()
        if key not in table:
            raise DataError(f"line {line}, column {column!r}: unknown category {token!r}")
        return float(table[key])
    try:
        return float(tok)
    except ValueError:
        raise DataError(f"line {line}, column {column!r}: cannot parse {token!r} as a number") from None


def read_table(path, schema: CsvSchema) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Parse the schema's columns from a headed CSV file."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        header = [h.strip() for h in header]
        wanted = (*schema.features, schema.response)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(repr(m) for m in missing)}")
        pos = {c: header.index(c) for c in wanted}
        values: dict[str, list[float]] = {c: [] for c in wanted}
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, found {len(row)}")
            for c in wanted:
                values[c].append(_parse(row[pos[c]], c, line, schema.ordinal.get(c)))
    if not values[schema.response]:
        raise EmptyDataset(f"{path} has a header but no data rows")
    cols = {c: np.asarray(values[c]) for c in schema.features}
    return cols, np.asarray(values[schema.response])


def load_csv(path, schema: CsvSchema) -> Dataset:
    cols, y = read_table(path, schema)
    return validate_dataset(cols, y, binary=schema.binary)


def write_dataset_csv(dataset: Dataset, path, response: str = "y") -> Path:
    """Write features and response with round-trip exact float text."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.feature_names, response])
        for row, y in zip(dataset.X, dataset.y):
            w.writerow([*(repr(float(v)) for v in row), repr(float(y))])
    return path


# -- case-study datasets -----------------------------------------------------------

PIMA_FEATURES = (
    "Pregnancies",
    "Glucose",
    "BloodPressure",
    "SkinThickness",
    "Insulin",
    "BMI",
    "DiabetesPedigreeFunction",
    "Age",
)
PIMA_SCHEMA = CsvSchema(PIMA_FEATURES, "Outcome", binary=True)
PIMA_ROWS = 768
PIMA_POSITIVE_RATE = 0.349

FOREST_FEATURES = ("X", "Y", "month", "FFMC", "DMC", "DC", "ISI", "temp", "RH", "wind", "rain")
FOREST_SCHEMA = CsvSchema(FOREST_FEATURES, "area", ordinal={"month": MONTHS}, binary=False)
FOREST_ROWS = 517
FOREST_AREA_CUTOFF = 5.0


def _shape_problem(msg: str, strict: bool) -> None:
    if strict:
        raise DataError(msg)
    warnings.warn(msg, stacklevel=3)


def prepare_pima(raw: Dataset, strict: bool = True) -> Dataset:
    """Check the diabetes table; values are kept raw (zeros are not imputed)."""
    if raw.n_features != len(PIMA_FEATURES):
        raise DataError(f"expected {len(PIMA_FEATURES)} features, found {raw.n_features}")
    if not raw.binary:
        raise DataError("Outcome must be 0/1")
    if raw.n_rows != PIMA_ROWS:
        _shape_problem(f"expected {PIMA_ROWS} rows, found {raw.n_rows}", strict)
    elif abs(raw.y.mean() - PIMA_POSITIVE_RATE) > 0.001:
        _shape_problem(f"positive rate {raw.y.mean():.4f} differs from {PIMA_POSITIVE_RATE}", strict)
    return raw


def prepare_forestfire(columns: Mapping[str, Sequence[float]], area: Sequence[float], strict: bool = True) -> Dataset:
    """Label rows with burnt area strictly above 5 as 1.

    ``columns`` holds the eleven features (month already ordinal); ``day`` is not used.
    """
    missing = [c for c in FOREST_FEATURES if c not in columns]
    if missing:
        raise SchemaError(f"missing column(s) {', '.join(missing)}")
    area = np.asarray(area, dtype=float)
    if np.any(~np.isfinite(area)):
        raise DataError("non-finite value in column 'area'")
    if area.size != FOREST_ROWS:
        _shape_problem(f"expected {FOREST_ROWS} rows, found {area.size}", strict)
    y = (area > FOREST_AREA_CUTOFF).astype(float)
    return validate_dataset({c: columns[c] for c in FOREST_FEATURES}, y, binary=True)


def load_pima(path, strict: bool = True) -> Dataset:
    return prepare_pima(load_csv(path, PIMA_SCHEMA), strict)


def load_forestfire(path, strict: bool = True) -> Dataset:
    # area is unbounded, so it is read as a plain column and labelled afterwards
    cols, area = read_table(path, FOREST_SCHEMA)
    return prepare_forestfire(cols, area, strict)


CASE_LOADERS = {"pima": load_pima, "forestfire": load_forestfire}


# -- reports -----------------------------------------------------------------------


def _num(x: float, digits: int) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


SUITE_COLUMNS = (
    "dgp", "c", "max_depth", "min_leaf_fraction", "n", "replicates", "method",
    "mr_mean", "mr_std", "failed_replicates",
)


def suite_rows(report: SuiteReport) -> list[list[str]]:
    rows = []
    for r in report.results:
        s = r.setting
        for m in s.methods:
            vals = np.asarray(r.mr[m], dtype=float)
            rows.append([
                s.dgp, repr(s.c), str(s.max_depth), repr(s.min_leaf_fraction), str(s.n),
                str(s.replicates), m, _num(r.mean(m), 6), _num(r.std(m), 6),
                str(int(np.count_nonzero(~np.isfinite(vals)))),
            ])
    return rows


def markdown_table(rows, methods: Sequence[str]) -> str:
    head = "| DGP | c | " + " | ".join(methods) + " |"
    sep = "|---|---|" + "---|" * len(methods)
    lines = [head, sep]
    for row in rows:
        cells = [
            f"{_num(row.mean[m], 1)} ({_num(row.std[m], 1)})" if m in row.mean else "-"
            for m in methods
        ]
        lines.append(f"| {row.dgp} | {row.c} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def suite_markdown(report: SuiteReport) -> str:
    methods = report.methods
    parts = ["# Simulation results", "", f"Settings: {len(report.results)}", ""]
    if report.win_rates:
        parts += ["## Win rates (strictly lower mean MR)", "", "| method | baseline | win rate |", "|---|---|---|"]
        for (a, b), rate in report.win_rates.items():
            parts.append(f"| {a} | {b} | {100 * rate:.2f}% |")
        parts.append("")
    parts += [
        "## Mean MR in percent (std), configuration chosen by CART",
        "",
        markdown_table(report.table_joint, methods),
        "",
        "## Mean MR in percent (std), best configuration per method",
        "",
        markdown_table(report.table_per_method, methods),
        "",
    ]
    return "\n".join(parts)


def _write_text(path: Path, text: str) -> Path:
    try:
        with path.open("w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _out_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    return out


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_suite_report(report: SuiteReport, out_dir) -> list[Path]:
    out = _out_dir(out_dir)
    paths = [
        _write_text(out / "results.csv", _csv_text(SUITE_COLUMNS, suite_rows(report))),
        _write_text(out / "report.md", suite_markdown(report)),
    ]
    diags = report.diagnostics
    paths.append(_write_text(out / "diagnostics.log", "".join(d + "\n" for d in diags)))
    return paths


def _slug(method: str) -> str:
    return method.lower().replace("-", "_")


POLICY_COLUMNS = ("method", "value", "samples", "predicate")


def case_study_markdown(result: CaseStudyResult) -> str:
    lines = [f"# Case study: {result.name} (c = {result.c}, depth {result.depth})", ""]
    for m, rep in result.policies.items():
        lines += [
            f"## {m}",
            "",
            "```",
            result.text(m),
            "```",
            "",
            f"Targeted share of sample: {rep.cost:.3f} ({sum(t.samples for t in rep.targeted_leaves)}/{rep.n})",
            "",
            "| value | samples | subgroup |",
            "|---|---|---|",
        ]
        lines += [f"| {t.value:.3f} | {t.samples} | {t.predicate} |" for t in rep.targeted_leaves]
        lines.append("")
    return "\n".join(lines)


def write_case_study(result: CaseStudyResult, out_dir) -> list[Path]:
    out = _out_dir(out_dir)
    paths = []
    for m in result.trees:
        paths.append(_write_text(out / f"{result.name}_{_slug(m)}.txt", result.text(m) + "\n"))
    rows = [
        [m, f"{t.value:.3f}", str(t.samples), t.predicate]
        for m, rep in result.policies.items()
        for t in rep.targeted_leaves
    ]
    paths.append(_write_text(out / f"{result.name}_policies.csv", _csv_text(POLICY_COLUMNS, rows)))
    paths.append(_write_text(out / f"{result.name}_report.md", case_study_markdown(result)))
    return paths


def write_report(report, out_dir) -> list[Path]:
    """Write a suite report or a case-study result; returns the files written."""
    if isinstance(report, SuiteReport):
        return write_suite_report(report, out_dir)
    if isinstance(report, CaseStudyResult):
        return write_case_study(report, out_dir)
    raise TypeError(f"cannot write a report for {type(report).__name__}")


THEORY_COLUMNS = ("s", "mu_L", "mu_R", "risk", "g_cart", "g_pfs", "g_star")


def theory_csv(rows) -> str:
    body = [[repr(float(getattr(r, h))) for h in THEORY_COLUMNS] for r in rows]
    return _csv_text(THEORY_COLUMNS, body)


def write_theory_csv(rows, path) -> Path:
    return _write_text(Path(path), theory_csv(rows))
