import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from conftest import random_locations

from sfkrig.basis import BasisDescriptor, FunctionalDataset, design_matrix, smooth
from sfkrig.dataio import LongitudinalTable
from sfkrig.errors import DataError
from sfkrig.report import (WeightDistanceTable, curve_rows, svg_bar_chart,
                           svg_box_chart, svg_line_chart,
                           weight_distance_table, write_curves_csv,
                           write_weight_distance_csv)

BS10 = BasisDescriptor("bspline", 10, (0.0, 1.0), order=4)


def test_table_matches_direct_quantiles(rng):
    weights = rng.standard_normal(200)
    weights[rng.choice(200, 40, replace=False)] = 0.0
    distances = rng.uniform(0.0, 3.0, 200)
    table = weight_distance_table(weights, distances, n_bins=6)
    edges = np.linspace(0.0, distances.max(), 7)
    k = 0
    for b in range(6):
        in_bin = ((distances > edges[b]) | (b == 0)) & (distances <= edges[b + 1])
        w = weights[in_bin]
        if len(w) == 0:
            continue
        assert table.count[k] == len(w)
        assert table.zero_fraction[k] == pytest.approx(np.mean(w == 0.0))
        assert table.q_min[k] == w.min()
        assert table.q25[k] == pytest.approx(np.quantile(w, 0.25))
        assert table.median[k] == pytest.approx(np.median(w))
        assert table.q75[k] == pytest.approx(np.quantile(w, 0.75))
        assert table.q_max[k] == w.max()
        k += 1
    assert k == len(table.count)
    assert int(table.count.sum()) == 200


def test_single_site_single_bin():
    table = weight_distance_table([1.0], [0.0], n_bins=10)
    assert len(table.count) == 1
    assert table.count[0] == 1
    assert table.zero_fraction[0] == 0.0
    assert table.median[0] == 1.0


def test_all_nonzero_weights_zero_fraction():
    table = weight_distance_table([0.2, 0.3, 0.5], [0.1, 0.2, 0.3], n_bins=2)
    assert np.all(table.zero_fraction == 0.0)


def test_table_validation():
    with pytest.raises(DataError):
        weight_distance_table([1.0, 2.0], [0.1], n_bins=2)
    with pytest.raises(DataError):
        weight_distance_table([], [], n_bins=2)
    with pytest.raises(DataError):
        weight_distance_table([1.0], [-0.5], n_bins=2)
    with pytest.raises(ValueError):
        weight_distance_table([1.0], [0.5], n_bins=0)


def test_weight_distance_csv_round_trip(tmp_path, rng):
    weights = rng.standard_normal(50)
    distances = rng.uniform(0, 1, 50)
    table = weight_distance_table(weights, distances, n_bins=4)
    p = tmp_path / "weight_distance.csv"
    write_weight_distance_csv(p, table)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == WeightDistanceTable.HEADER
    assert len(rows) == 1 + len(table.count)
    got_counts = [int(r[2]) for r in rows[1:]]
    assert got_counts == list(table.count)


def test_curve_rows_exact_fit_matches_observations(rng):
    # noiseless observations: the smoothed column reproduces the observed one
    loc = random_locations(rng, 2)
    ts = np.linspace(0, 1, 31)
    B = design_matrix(BS10, ts)
    vals = [B @ rng.standard_normal(10) for _ in range(2)]
    table = LongitudinalTable(loc, [ts, ts], vals)
    ds = smooth(table, BS10)
    rows = curve_rows(ds, table.times, table.values)
    assert len(rows) == 62
    for sid, t, obs, fit in rows:
        assert float(obs) == pytest.approx(float(fit), abs=1e-7)


def test_write_curves_csv_header(tmp_path, rng):
    loc = random_locations(rng, 1)
    ts = np.linspace(0, 1, 31)
    table = LongitudinalTable(loc, [ts], [np.sin(ts)])
    ds = smooth(table, BS10)
    p = tmp_path / "curves.csv"
    write_curves_csv(p, ds, table.times, table.values)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["site_id", "t", "observed", "smoothed"]
    assert len(rows) == 32


def _assert_valid_svg(doc: str):
    root = ET.fromstring(doc)
    assert root.tag.endswith("svg")
    assert len(list(root.iter())) > 5


def test_svg_charts_parse(rng):
    xs = np.linspace(0, 1, 20)
    doc = svg_line_chart([(xs, np.sin(xs), "steelblue"),
                          (xs, np.cos(xs), "firebrick")],
                         "title", "t", "value")
    _assert_valid_svg(doc)
    assert "title" in doc

    weights = rng.standard_normal(100)
    distances = rng.uniform(0, 1, 100)
    table = weight_distance_table(weights, distances, n_bins=5)
    _assert_valid_svg(svg_box_chart(table, "box", "distance", "weight"))

    _assert_valid_svg(svg_bar_chart([0.0, 0.5], [0.5, 1.0], [0.2, 0.8],
                                    "bars", "distance", "fraction"))
