import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixdro.dataio import (DataError, DataWarning, EncodeOptions, Encoding, dataset_hash, encode, fit_encoding,
                           kfold_indices, load_csv, load_dataset, load_split_manifest, save_split_manifest,
                           sorted_levels, split, split_indices, write_csv, write_schema)


def _write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def small(tmp_path):
    return _write(tmp_path / "small.csv", "size,colour,label\n1.5,b,yes\n2.0,a,no\n0.5,c,yes\n")


def test_kinds_are_inferred(small):
    t = load_csv(small)
    assert t.columns == ("size", "colour", "label")
    assert t.kinds == ("numeric", "categorical", "output")
    assert t.task == "classification" and t.levels["colour"] == ("a", "b", "c")


def test_drop_first_one_hot(small):
    data = encode(load_csv(small))
    assert data.Z.tolist() == [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]  # b -> (1,0); reference a -> (0,0)
    assert data.X.ravel().tolist() == [1.5, 2.0, 0.5]
    assert data.y.tolist() == [1.0, -1.0, 1.0]  # sorted levels: no -> -1, yes -> +1
    data.schema.check(data.Z)


def test_ragged_row_names_the_line(tmp_path):
    path = _write(tmp_path / "bad.csv", "a,b,y\n1,2,3\n4,5\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(path)


def test_undeclared_level(tmp_path, small):
    schema = {"groups": [{"name": "colour", "levels": ["a", "b"]}], "continuous": ["size"],
              "output": {"name": "label", "task": "classification"}}
    with pytest.raises(DataError, match="column 'colour': level 'c'"):
        load_csv(small, schema)
    schema["groups"][0]["levels"] = ["c", "b", "a"]  # declared order is kept
    data = encode(load_csv(small, schema))
    assert data.schema.levels == (("c", "b", "a"),)
    assert data.Z.tolist() == [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]


def test_schema_errors(tmp_path, small):
    schema = {"groups": [], "continuous": ["weight"], "output": {"name": "label", "task": "classification"}}
    with pytest.raises(DataError, match="weight"):
        load_csv(small, schema)
    with pytest.raises(DataError, match="output column"):
        load_csv(small, output="price")
    bad = _write(tmp_path / "s.json", "{not json")
    with pytest.raises(DataError):
        load_csv(small, bad)
    with pytest.raises(DataError):
        load_csv(str(tmp_path / "absent.csv"))


def test_regression_scaling(tmp_path):
    path = _write(tmp_path / "r.csv", "x,y\n0,0\n1,5\n2,10\n3,2.5\n")
    data = encode(load_csv(path))
    assert data.task == "regression"
    assert data.y.tolist() == [-1.0, 0.0, 1.0, -0.5]
    assert np.allclose(data.encoding.decode_y(data.y), [0, 5, 10, 2.5], atol=1e-12)
    other = encode(load_csv(path), EncodeOptions(regression_scale_to=(0.0, 1.0)))
    assert other.y.tolist() == [0.0, 0.5, 1.0, 0.25]


def test_encode_errors(tmp_path):
    with pytest.raises(DataError, match="constant"):
        encode(load_csv(_write(tmp_path / "c.csv", "x,y\n1,3\n2,3\n3,3\n"), task="regression"))
    with pytest.raises(DataError, match="single level"):
        encode(load_csv(_write(tmp_path / "s.csv", "g,y\nu,1\nu,2\nu,3\n")))
    multi = load_csv(_write(tmp_path / "m.csv", "x,y\n1,L\n2,B\n3,R\n"))
    with pytest.raises(DataError, match="3 levels"):
        encode(multi)
    data = encode(multi, EncodeOptions(positive=("L",)))
    assert data.y.tolist() == [1.0, -1.0, -1.0]
    data = encode(multi, EncodeOptions(y_mapping={"L": 1, "B": -1, "R": -1}))
    assert data.y.tolist() == [1.0, -1.0, -1.0]
    with pytest.raises(DataError):
        encode(multi, EncodeOptions(y_mapping={"L": 1, "B": -1}))


def test_missing_rows_are_dropped_with_a_count(tmp_path):
    path = _write(tmp_path / "m.csv", "x,g,y\n1,a,1\n?,b,0\n2,NA,1\n3,b,0\n")
    with pytest.warns(DataWarning, match="dropped 2 of 4"):
        t = load_csv(path)
    assert t.n_rows == 2 and t.dropped == 2


def test_numeric_levels_sort_numerically():
    assert sorted_levels(["10", "9", "1"]) == ("1", "9", "10")
    assert sorted_levels(["b", "10", "a"]) == ("10", "a", "b")


def test_unseen_level_at_transform(tmp_path, small):
    enc = fit_encoding(load_csv(small))
    other = load_csv(_write(tmp_path / "o.csv", "size,colour,label\n1,d,yes\n2,a,no\n"))
    with pytest.raises(DataError, match="'d'"):
        enc.transform(other)


def test_encoding_round_trip(small):
    data = encode(load_csv(small), EncodeOptions(minmax_x=True))
    enc = data.encoding
    back = Encoding.from_dict(json.loads(json.dumps(enc.to_dict())))
    assert back == enc
    assert back.schema_hash() == enc.schema_hash()
    assert np.allclose(data.X.ravel(), [2 / 3, 1.0, 0.0])
    assert list(enc.decode_y(data.y)) == ["yes", "no", "yes"]


def test_write_and_reload(tmp_path, small):
    data = encode(load_csv(small))
    write_csv(data, tmp_path / "out.csv")
    write_schema(data, tmp_path / "out.json")
    again = load_dataset(str(tmp_path / "out.csv"), str(tmp_path / "out.json"))
    assert np.array_equal(again.Z, data.Z) and np.array_equal(again.X, data.X) and np.array_equal(again.y, data.y)
    assert dataset_hash(again) == dataset_hash(data)


@settings(max_examples=50)
@given(st.lists(st.sampled_from("abcde"), min_size=2, max_size=30), st.integers(0, 1000))
def test_levels_round_trip_and_simplex(cells, seed):
    if len(set(cells)) < 2:
        cells = cells + ["z"]
    rng = np.random.default_rng(seed)
    y = rng.choice(["p", "q"], size=len(cells))
    y[0], y[-1] = "p", "q"
    from mixdro.dataio import RawTable

    t = RawTable(("g", "y"), ("categorical", "output"), tuple(zip(cells, y)),
                 {"g": sorted_levels(cells), "y": ("p", "q")}, "classification")
    data = encode(t)
    data.schema.check(data.Z)
    lv = data.schema.to_levels(data.Z)[:, 0]
    assert [data.schema.levels[0][i] for i in lv] == list(cells)


def test_split_examples():
    tr, te = split_indices(10, 0.8, 5)
    assert tr.size == 8 and te.size == 2 and not set(tr) & set(te)
    assert all(np.array_equal(a, b) for a, b in zip(split_indices(10, 0.8, 5), (tr, te)))
    distinct = {tuple(split_indices(10, 0.8, s)[1]) for s in range(100)}
    assert len(distinct) > 20
    with pytest.raises(DataError):
        split_indices(1)
    with pytest.raises(DataError):
        split_indices(10, 1.0)


@settings(max_examples=50)
@given(st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_split_partitions(N, fraction, seed):
    if int(fraction * N) < 1:
        return
    tr, te = split_indices(N, fraction, seed)
    assert tr.size == int(np.floor(fraction * N))
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(N))


def test_split_datasets_and_kfold(small):
    data = encode(load_csv(small))
    a, b = split(data, 0.67, 0)
    assert a.N + b.N == data.N
    folds = kfold_indices(10, 5, 1)
    assert len(folds) == 5
    assert np.array_equal(np.sort(np.concatenate([v for _, v in folds])), np.arange(10))
    with pytest.raises(DataError):
        kfold_indices(3, 5)


def test_split_manifest(tmp_path, small):
    data = encode(load_csv(small))
    tr, te = split_indices(data.N, 0.67, 3)
    save_split_manifest(tmp_path / "m.json", data, 0.67, 3, tr, te)
    a, b = load_split_manifest(tmp_path / "m.json", data)
    assert np.array_equal(a, tr) and np.array_equal(b, te)
    with pytest.raises(DataError):
        load_split_manifest(tmp_path / "m.json", data.with_y(-data.y))


def test_feature_only_table(tmp_path):
    path = _write(tmp_path / "f.csv", "size,colour\n1,a\n")
    t = load_csv(path, output="label", require_output=False)
    assert t.output is None
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_csv(path, output="label", require_output=False)
