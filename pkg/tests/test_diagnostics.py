import csv
import io
import math

import numpy as np
import pytest

from conftest import random_dataset
from graphcal import diagnostics
from graphcal.data import Dataset
from graphcal.errors import UnknownColumn
from graphcal.graph import build_graph
from graphcal.kernels import softmax_rows
from graphcal.trainer import NodeMask


def test_relative_confidence():
    g = build_graph([(0, 1), (0, 2)], 4)
    probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.6, 0.4], [0.7, 0.3]])
    d = diagnostics.relative_confidence(probs, g)
    assert d[0] == pytest.approx(0.2)
    assert d[3] == 0.0
    assert (diagnostics.relative_confidence(np.full((4, 2), 0.5), g) == 0).all()


def hand_dataset():
    g = build_graph([(0, 1)], 4)
    probs = np.array([[0.95, 0.05], [0.95, 0.05], [0.65, 0.35], [0.5, 0.5]])
    ds = Dataset(g, np.log(probs), np.array([0, 1, 0, 0]), NodeMask([3], [], [0, 1, 2]))
    return ds, probs


def test_factor_report_hand_case():
    ds, probs = hand_dataset()
    rep = diagnostics.factor_report(ds, probs)
    np.testing.assert_allclose(rep.nce, [0.45, 0.45, 0.35])
    assert rep.dist_train.tolist() == [math.inf] * 3
    assert len(rep) == 3
    with pytest.raises(UnknownColumn):
        rep.column("nope")


def test_train_nodes_have_zero_distance_and_one_hot_entropy():
    ds = random_dataset(0, n=30)
    probs = np.eye(3)[np.argmax(ds.logits, axis=1)]
    rep = diagnostics.factor_report(ds, probs, nodes=ds.mask.train)
    assert (rep.dist_train == 0).all()
    assert (rep.entropy == 0).all()


def star_dataset():
    g = build_graph([(0, j) for j in range(1, 8)], 8)
    z = np.random.default_rng(0).standard_normal((8, 3))
    return Dataset(g, z, np.zeros(8, int), NodeMask([0], [1], list(range(2, 8))))


def test_distance_curve_on_star():
    ds = star_dataset()
    rep = diagnostics.factor_report(ds, softmax_rows(ds.logits), nodes=np.arange(8))
    rows = diagnostics.binned_factor_curve(rep, "dist_train", "conf")
    assert [r.center for r in rows] == [0.0, 1.0]
    assert sum(r.count for r in rows) == 8


def test_constant_value_curve_and_partition():
    ds = random_dataset(3, n=60)
    probs = np.full((60, 3), 1 / 3)
    rep = diagnostics.factor_report(ds, probs, nodes=np.arange(60))
    rows = diagnostics.binned_factor_curve(rep, "delta_conf", "conf")
    assert all(r.mean == pytest.approx(1 / 3) for r in rows if r.count)
    probs = softmax_rows(ds.logits)
    rep = diagnostics.factor_report(ds, probs, nodes=np.arange(60))
    for f in diagnostics.FACTORS:
        rows = diagnostics.binned_factor_curve(rep, f, "nce")
        finite = np.isfinite(rep.column(f)).sum()
        assert sum(r.count for r in rows) == finite
    rows = diagnostics.binned_factor_curve(rep, "homophily", "nce", bins=[-5.0, 0.0, 5.0])
    assert len(rows) == 2


def test_reliability_curve_rows():
    probs = np.tile([1.0, 0.0], (4, 1))
    rows = diagnostics.reliability_curve(probs, np.zeros(4, int), np.arange(4))
    filled = [r for r in rows if r.count]
    assert len(rows) == 15 and [(r.center, r.mean, r.count) for r in filled] == [(1.0, 1.0, 4)]
    ds, p = hand_dataset()
    filled = [r for r in diagnostics.reliability_curve(p, ds.labels, [0, 1, 2]) if r.count]
    assert [(round(r.center, 12), r.mean, r.count) for r in filled] == [(0.65, 1.0, 1), (0.95, 0.5, 2)]
    one = diagnostics.reliability_curve(p, ds.labels, [0, 1, 2], num_bins=1)
    assert len(one) == 1 and one[0].mean == pytest.approx(2 / 3)


def test_write_diagnostics_is_deterministic(tmp_path):
    ds = random_dataset(5, n=80)
    probs = softmax_rows(ds.logits)
    a = diagnostics.write_diagnostics(tmp_path / "a", ds, probs)
    b = diagnostics.write_diagnostics(tmp_path / "b", ds, probs)
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    rows = list(csv.DictReader(io.StringIO((tmp_path / "a" / "factors.csv").read_text())))
    assert len(rows) == ds.mask.test.size
    assert list(rows[0]) == list(diagnostics.COLUMNS)
    rel = (tmp_path / "a" / "reliability.csv").read_text().splitlines()
    assert rel[0] == "conf,acc,count" and len(rel) == 1 + 15


def test_factor_correlations_shape():
    ds = random_dataset(6, n=100, p_edge=0.08)
    rep = diagnostics.factor_report(ds, softmax_rows(ds.logits), nodes=np.arange(100))
    corr = diagnostics.factor_correlations(rep)
    assert len(corr) == 6
    assert all(math.isnan(r) or -1 <= r <= 1 for _, _, r, _ in corr)


def test_relative_confidence_sums_to_zero_on_cycles():
    for n in (3, 7, 20):
        g = build_graph([(i, (i + 1) % n) for i in range(n)], n)
        probs = softmax_rows(np.random.default_rng(n).standard_normal((n, 3)))
        assert abs(diagnostics.relative_confidence(probs, g).sum()) < 1e-12


def test_factor_report_is_pure():
    ds = random_dataset(8, n=50)
    probs = softmax_rows(ds.logits)
    assert diagnostics.factor_report(ds, probs).to_csv() == diagnostics.factor_report(ds, probs).to_csv()
