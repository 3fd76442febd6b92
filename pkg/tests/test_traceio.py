import csv
import json
import math

import numpy as np
import pytest

from modnet.mh import ChainRecord, flip_proposal, run_chain
from modnet.reference_models import chain3_network
from modnet.traceio import (
    CSV_SCHEMA_VERSION,
    TraceAccumulator,
    TraceWriter,
    _Moments,
    format_cell,
    site_column_names,
    summary_document,
    write_summary,
)


def _chain3_records(seed, iterations=120):
    net = chain3_network()
    rng = np.random.default_rng(seed)
    net.initialize(rng)
    records = []
    run_chain(net, [flip_proposal(1), flip_proposal(2)], iterations, rng,
              sink=records.append, scan="random")
    return net, records


# -- cell formatting --------------------------------------------------------------

def test_format_cell_is_typed_and_round_trippable():
    assert format_cell(True) == "1" and format_cell(False) == "0"
    assert format_cell(7) == "7" and format_cell(-3) == "-3"
    assert format_cell(0.1) == "0.1"
    assert format_cell(-70.33438459994356) == "-70.33438459994356"
    assert float(format_cell(1 / 3)) == 1 / 3
    assert format_cell(-math.inf) == "-inf"
    assert format_cell((1, 0, 1)) == "1;0;1"
    assert format_cell((0.5, -1.25)) == "0.5;-1.25"
    for bad in ("text", None, [1, 2], {}):
        with pytest.raises(TypeError):
            format_cell(bad)


def test_site_columns_fall_back_to_qualified_names():
    net = chain3_network()
    assert site_column_names(net, {1: "z"}) == {1: "z"}
    assert site_column_names(net, {1: "z", 2: "z"}) == {1: "z_X1", 2: "z_X2"}


# -- CSV writing --------------------------------------------------------------------

def test_writer_emits_the_pinned_header_and_faithful_rows(tmp_path):
    net, records = _chain3_records(1)
    path = tmp_path / "trace.csv"
    with TraceWriter(path, net, {1: "z", 2: "z"}) as sink:
        for rec in records:
            sink(rec)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "z_X1", "z_X2", "lw_X1", "lw_X2", "lw_X3",
                       "total_lw", "accepted"]
    assert len(rows) == 1 + len(records)
    for row, rec in zip(rows[1:], records):
        assert int(row[0]) == rec.iteration
        assert int(row[1]) == rec.site_values[1]
        assert int(row[2]) == rec.site_values[2]
        assert [float(c) for c in row[3:6]] == [rec.log_weights[i]
                                                for i in (1, 2, 3)]
        assert float(row[6]) == rec.total_log_weight
        assert row[7] == ("1" if rec.accepted else "0")


def test_identical_runs_write_identical_bytes(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        net, records = _chain3_records(33)
        path = tmp_path / name
        with TraceWriter(path, net, {1: "z", 2: "z"}) as sink:
            for rec in records:
                sink(rec)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


# -- moments ---------------------------------------------------------------------------

def test_moments_match_numpy():
    xs = [0.3, -1.2, 5.5, 0.3, 2.0, -0.7]
    m = _Moments()
    for x in xs:
        m.add(x)
    assert m.count == len(xs)
    assert m.mean == pytest.approx(np.mean(xs), rel=1e-14)
    assert m.variance == pytest.approx(np.var(xs), rel=1e-14)
    assert math.isnan(_Moments().variance)


def test_moments_merge_equals_single_pass():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=300).tolist()
    whole = _Moments()
    for x in xs:
        whole.add(x)
    left, right = _Moments(), _Moments()
    for x in xs[:117]:
        left.add(x)
    for x in xs[117:]:
        right.add(x)
    left.merge(right)
    assert left.count == whole.count
    assert left.mean == pytest.approx(whole.mean, rel=1e-12)
    assert left.variance == pytest.approx(whole.variance, rel=1e-12)


# -- accumulator -------------------------------------------------------------------------

def _rec(iteration, site, proposed, accepted, neg_inf, values, lws):
    total = -math.inf if -math.inf in lws.values() else sum(lws.values())
    return ChainRecord(iteration=iteration, site=site, proposed_value=proposed,
                       accepted=accepted, neg_inf_proposal=neg_inf,
                       site_values=values, log_weights=lws,
                       total_log_weight=total)


def test_accumulator_counts_by_hand():
    acc = TraceAccumulator(node_names={1: "A", 2: "B", 3: "C"})
    acc(_rec(0, 1, 1, True, False, {1: 1, 2: 0},
             {1: -0.5, 2: -1.0, 3: -2.0}))
    acc(_rec(1, 1, 0, False, True, {1: 1, 2: 0},
             {1: -0.7, 2: -math.inf, 3: -2.0}))
    doc = acc.to_jsonable()
    assert doc["iterations"] == 2
    assert doc["neg_inf_proposals"] == 1
    assert doc["value_counts"] == {"A": {"1": 2}, "B": {"0": 2}}
    assert doc["value_rates"] == {"A": {"1": 1.0}, "B": {"0": 1.0}}
    assert doc["acceptance_rates"] == {"A": 0.5}
    by_val = doc["lw_variance_by_value"]["A"]
    # the rejected row groups under its proposed value, not the kept one
    assert set(by_val) == {"1", "0"}
    assert set(by_val["1"]) == {"lw_A", "lw_B", "lw_C", "total"}
    # -inf entries are counted, never averaged
    assert set(by_val["0"]) == {"lw_A", "lw_C"}
    assert by_val["0"]["lw_A"] == 0.0
    assert doc["lw_variance_by_value"]["B"]["0"]["lw_B"] == pytest.approx(
        np.var([-1.0]), abs=0.0)


def _walk_close(a, b, path=""):
    assert type(a) is type(b), path
    if isinstance(a, dict):
        assert sorted(a) == sorted(b), path
        for k in a:
            _walk_close(a[k], b[k], f"{path}/{k}")
    elif isinstance(a, float):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12), path
    else:
        assert a == b, path


def test_merged_chains_equal_one_long_pass():
    _, records = _chain3_records(17, iterations=200)
    names = {1: "X1", 2: "X2", 3: "X3"}
    whole = TraceAccumulator(node_names=dict(names))
    for rec in records:
        whole(rec)
    left = TraceAccumulator(node_names=dict(names))
    right = TraceAccumulator(node_names=dict(names))
    for rec in records[:90]:
        left(rec)
    for rec in records[90:]:
        right(rec)
    left.merge(right)
    _walk_close(left.to_jsonable(), whole.to_jsonable())


# -- summary documents ----------------------------------------------------------------------

def test_summary_document_shape_and_combination():
    names = {1: "X1", 2: "X2", 3: "X3"}
    accs = []
    for seed in (3, 4):
        _, records = _chain3_records(seed, iterations=80)
        acc = TraceAccumulator(node_names=dict(names))
        for rec in records:
            acc(rec)
        accs.append(acc)
    doc = summary_document(accs)
    assert doc["csv_schema_version"] == CSV_SCHEMA_VERSION == 1
    assert len(doc["chains"]) == 2
    assert doc["combined"]["iterations"] == 160
    counts = doc["combined"]["value_counts"]["X1"]
    want = {}
    for chain in doc["chains"]:
        for k, n in chain["value_counts"]["X1"].items():
            want[k] = want.get(k, 0) + n
    assert counts == want


def test_write_summary_is_deterministic_and_sorted(tmp_path):
    doc = {"b": 1, "a": {"z": 2.5, "m": [1, 2]}}
    p1, p2 = tmp_path / "s1.json", tmp_path / "s2.json"
    write_summary(p1, doc)
    write_summary(p2, doc)
    b1 = p1.read_bytes()
    assert b1 == p2.read_bytes()
    assert b1.endswith(b"\n")
    text = b1.decode()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == doc
