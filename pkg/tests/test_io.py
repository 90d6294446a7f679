from __future__ import annotations

import csv
import warnings

import numpy as np
import pytest
from conftest import PIMA_CSV

from lpctree.data import DataError, EmptyDataset, validate_dataset
from lpctree.experiments import ExperimentSetting, run_case_study, run_suite, summarize
from lpctree.io import (
    FOREST_FEATURES,
    MONTHS,
    PIMA_SCHEMA,
    CsvSchema,
    SchemaError,
    load_csv,
    load_forestfire,
    load_pima,
    prepare_pima,
    write_dataset_csv,
    write_report,
)

SCHEMA = CsvSchema(("a", "b"), "y")


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_three_row_file(tmp_path):
    ds = load_csv(_write(tmp_path / "t.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,1\n"), SCHEMA)
    assert ds.n_rows == 3 and ds.feature_names == ("a", "b") and ds.binary


def test_missing_response_column(tmp_path):
    with pytest.raises(SchemaError, match="'y'"):
        load_csv(_write(tmp_path / "t.csv", "a,b\n1,2\n"), SCHEMA)


def test_unparseable_cell_reports_location(tmp_path):
    with pytest.raises(DataError, match=r"line 3, column 'b'.*'abc'"):
        load_csv(_write(tmp_path / "t.csv", "a,b,y\n1,2,0\n3,abc,1\n"), SCHEMA)


def test_empty_file_and_header_only(tmp_path):
    with pytest.raises(EmptyDataset):
        load_csv(_write(tmp_path / "e.csv", ""), SCHEMA)
    with pytest.raises(EmptyDataset):
        load_csv(_write(tmp_path / "h.csv", "a,b,y\n"), SCHEMA)


def test_ragged_row_and_missing_file(tmp_path):
    with pytest.raises(DataError, match="line 2"):
        load_csv(_write(tmp_path / "r.csv", "a,b,y\n1,2\n"), SCHEMA)
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "absent.csv", SCHEMA)


def test_schema_validation():
    with pytest.raises(SchemaError):
        CsvSchema(("a", "y"), "y")


def test_round_trip(tmp_path, rng):
    X = rng.random((50, 3)) * 1e3
    ds = validate_dataset({"a": X[:, 0], "b": X[:, 1], "c": X[:, 2]}, (rng.random(50) < 0.5).astype(float))
    path = write_dataset_csv(ds, tmp_path / "d.csv")
    back = load_csv(path, CsvSchema(("a", "b", "c"), "y"))
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)


# -- Pima ----------------------------------------------------------------------------


def test_pima_canonical(pima):
    assert pima.n_rows == 768 and pima.n_features == 8
    assert pima.y.mean() == pytest.approx(0.349, abs=0.001)


def _pima_subset(tmp_path, rows, extra=False):
    lines = PIMA_CSV.read_text().splitlines()
    head, body = lines[0], lines[1 : rows + 1]
    if extra:
        head += ",Extra"
        body = [b + ",0" for b in body]
    return _write(tmp_path / "p.csv", "\n".join([head, *body]) + "\n")


def test_pima_truncated_strict_and_lenient(tmp_path):
    path = _pima_subset(tmp_path, 700)
    with pytest.raises(DataError, match="768"):
        load_pima(path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_pima(path, strict=False)
    assert ds.n_rows == 700 and any("768" in str(w.message) for w in caught)


def test_pima_nine_features(pima):
    cols = {n: pima.column(n) for n in pima.feature_names}
    cols["Extra"] = np.zeros(pima.n_rows)
    with pytest.raises(DataError, match="9"):
        prepare_pima(validate_dataset(cols, pima.y))


# -- forest fires (synthetic fixture with the public file's layout) ------------------


HEADER = ["X", "Y", "month", "day", "FFMC", "DMC", "DC", "ISI", "temp", "RH", "wind", "rain", "area"]


def _forest_file(tmp_path, n=517, months=None, areas=None):
    rng = np.random.default_rng(0)
    names = list(MONTHS)
    path = tmp_path / "forestfires.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for i in range(n):
            month = months[i] if months else names[i % 12]
            area = areas[i] if areas else float(np.round(rng.exponential(8), 2))
            w.writerow([1 + i % 9, 2 + i % 7, month, "fri", 86.2, 26.2, 94.3, 5.1, 8.2, 51, 6.7, 0.0, area])
    return path


def test_forestfire_shape_and_labels(tmp_path):
    areas = [5.0, 5.01, 0.0] + [1.0] * 514
    months = ["aug", "MAR", "dec"] + ["jan"] * 514
    ds = load_forestfire(_forest_file(tmp_path, months=months, areas=areas))
    assert ds.n_rows == 517 and ds.feature_names == FOREST_FEATURES
    assert list(ds.y[:3]) == [0.0, 1.0, 0.0]
    assert list(ds.column("month")[:3]) == [8.0, 3.0, 12.0]


def test_forestfire_unknown_month(tmp_path):
    months = ["aug", "smarch"] + ["jan"] * 515
    with pytest.raises(DataError, match="smarch"):
        load_forestfire(_forest_file(tmp_path, months=months))


def test_forestfire_row_count(tmp_path):
    path = _forest_file(tmp_path, n=40)
    with pytest.raises(DataError, match="517"):
        load_forestfire(path)
    with pytest.warns(UserWarning):
        assert load_forestfire(path, strict=False).n_rows == 40


def test_month_table_is_fixed():
    assert MONTHS["jan"] == 1 and MONTHS["aug"] == 8 and MONTHS["dec"] == 12 and len(MONTHS) == 12


# -- reports -------------------------------------------------------------------------


def test_empty_suite_gives_header_only_csv(tmp_path):
    paths = write_report(summarize([]), tmp_path)
    text = (tmp_path / "results.csv").read_text()
    assert text.count("\n") == 1 and text.startswith("dgp,c,")
    assert tmp_path / "report.md" in paths


def test_one_setting_suite_rows(tmp_path):
    s = ExperimentSetting("Ball", 0.6, 4, 0.02, n=300, replicates=2, methods=("CART", "MDFS", "wEFS"))
    write_report(run_suite([s]), tmp_path)
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 4 and [l.split(",")[6] for l in lines[1:]] == ["CART", "MDFS", "wEFS"]
    assert "\r" not in (tmp_path / "results.csv").read_text()
    md = (tmp_path / "report.md").read_text()
    assert "| Ball | 0.6 |" in md


def test_case_study_files_match_render(tmp_path, pima):
    res = run_case_study("pima", pima, 0.6, teacher_trees=10)
    write_report(res, tmp_path)
    for m, slug in (("CART", "cart"), ("MDFS", "mdfs"), ("RF-CART", "rf_cart"), ("RF-MDFS", "rf_mdfs")):
        assert (tmp_path / f"pima_{slug}.txt").read_bytes() == (res.text(m) + "\n").encode()
    policies = list(csv.reader((tmp_path / "pima_policies.csv").open()))
    assert policies[0] == ["method", "value", "samples", "predicate"]
    assert ["MDFS", "0.739", "188"] in [row[:3] for row in policies]


def test_write_report_rejects_unknown(tmp_path):
    with pytest.raises(TypeError):
        write_report(object(), tmp_path)


def test_pima_schema_response():
    assert PIMA_SCHEMA.response == "Outcome"
