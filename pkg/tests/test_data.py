"""Dataset containers, binary/CSV I/O, splitting, synthesis, patches."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maln.data import (MultimodalDataset, SynthConfig, ViewConfig,
                       denormalize, extract_patches, generate_synthetic,
                       load_binary, load_csv, normalize_minmax,
                       raster_to_features, save_binary, stratified_split)
from maln.errors import ConfigError, DataError, ParseError


def _tiny_dataset():
    return MultimodalDataset(
        {"A": [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0], [9.0, 10.0, 11.0]],
         "B": [[0.5], [1.5], [2.5], [3.5]]},
        [0, 1, 0, 1])


# -- container basics ----------------------------------------------------------


def test_dataset_shape_accessors():
    ds = _tiny_dataset()
    assert ds.n_samples == 4
    assert ds.n_classes == 2
    assert ds.sensor_ids == ["A", "B"]
    assert ds.dim("A") == 3 and ds.dim("B") == 1
    with pytest.raises(DataError, match="unknown sensor"):
        ds.matrix("C")


def test_dataset_validation():
    with pytest.raises(DataError):
        MultimodalDataset({}, [])
    with pytest.raises(DataError, match="disagree"):
        MultimodalDataset({"A": np.zeros((3, 2)), "B": np.zeros((4, 2))}, [0, 1, 0])
    with pytest.raises(DataError):
        MultimodalDataset({"A": np.zeros((3, 2))}, [0, 1])
    with pytest.raises(DataError, match="negative"):
        MultimodalDataset({"A": np.zeros((2, 2))}, [0, -1])
    with pytest.raises(DataError, match="non-finite"):
        MultimodalDataset({"A": [[np.nan, 0.0]]}, [0])
    with pytest.raises(DataError, match="class names"):
        MultimodalDataset({"A": np.zeros((2, 2))}, [0, 3], class_names=["a", "b"])


def test_split_required_before_masked_access():
    ds = _tiny_dataset()
    with pytest.raises(ConfigError, match="split"):
        ds.train_arrays("A")
    with pytest.raises(ConfigError, match="split"):
        _ = ds.test_labels
    ds.split(0.5, seed=0)
    assert len(ds.train_labels) + len(ds.test_labels) == 4


def test_subset_keeps_alignment():
    ds = _tiny_dataset()
    sub = ds.subset([True, False, True, False])
    assert sub.n_samples == 2
    np.testing.assert_array_equal(sub.labels, [0, 0])
    np.testing.assert_array_equal(sub.matrix("B"), [[0.5], [2.5]])


# -- binary round trip -----------------------------------------------------------


def test_binary_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(5)
    ds = MultimodalDataset(
        {"HSI": rng.uniform(0, 1, (10, 7)), "SAR": rng.uniform(0, 1, (10, 3))},
        rng.integers(0, 4, 10))
    path = tmp_path / "ds.mmds"
    save_binary(ds, path)
    back = load_binary(path)
    assert back.sensor_ids == ["HSI", "SAR"]
    np.testing.assert_array_equal(back.labels, ds.labels)
    for sid in ds.sensor_ids:
        # construction quantizes to f32, so the trip is exact
        np.testing.assert_array_equal(back.matrix(sid), ds.matrix(sid))
    save_binary(back, tmp_path / "again.mmds")
    assert (tmp_path / "again.mmds").read_bytes() == path.read_bytes()


def test_binary_layout_hand_decoded(tmp_path):
    ds = MultimodalDataset({"X": [[1.0, 2.0], [3.0, 4.0]]}, [1, 0],
                           class_names=["a", "b"])
    path = tmp_path / "d.mmds"
    save_binary(ds, path)
    raw = path.read_bytes()
    assert raw[:5] == b"MMDS1"
    assert struct.unpack_from("<I", raw, 5) == (1,)
    assert struct.unpack_from("<H", raw, 9) == (1,)
    assert raw[11:12] == b"X"
    assert struct.unpack_from("<I", raw, 12) == (2,)       # dim
    assert struct.unpack_from("<II", raw, 16) == (2, 2)    # n, classes
    assert struct.unpack_from("<II", raw, 24) == (1, 0)    # labels
    vals = struct.unpack_from("<4f", raw, 32)
    assert vals == (1.0, 2.0, 3.0, 4.0)
    assert len(raw) == 48


def test_binary_parse_errors(tmp_path):
    good = tmp_path / "good.mmds"
    save_binary(_tiny_dataset(), good)
    blob = good.read_bytes()

    bad = tmp_path / "magic.mmds"
    bad.write_bytes(b"XXXXX" + blob[5:])
    with pytest.raises(ParseError, match="magic"):
        load_binary(bad)

    trunc = tmp_path / "trunc.mmds"
    trunc.write_bytes(blob[:-7])
    with pytest.raises(ParseError, match="truncated"):
        load_binary(trunc)

    trail = tmp_path / "trail.mmds"
    trail.write_bytes(blob + b"\x00\x00")
    with pytest.raises(ParseError, match="trailing"):
        load_binary(trail)


def test_binary_label_range_check(tmp_path):
    ds = MultimodalDataset({"A": [[0.0], [1.0]]}, [0, 1])
    path = tmp_path / "d.mmds"
    save_binary(ds, path)
    blob = bytearray(path.read_bytes())
    # labels start right after magic(5) + count(4) + id len(2) + id(1) + dim(4) + n/classes(8)
    struct.pack_into("<I", blob, 24, 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="out of range"):
        load_binary(path)


# -- CSV ingestion -----------------------------------------------------------------


def test_load_csv_happy_path(tmp_path):
    (tmp_path / "a.csv").write_text("1.0,2.0\n3.0,4.0\n\n5.0,6.0\n")
    (tmp_path / "labels.txt").write_text("0\n1\n\n0\n")
    ds = load_csv({"A": tmp_path / "a.csv"}, tmp_path / "labels.txt")
    assert ds.n_samples == 3
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])
    np.testing.assert_allclose(ds.matrix("A"), [[1, 2], [3, 4], [5, 6]])


def test_load_csv_error_positions(tmp_path):
    (tmp_path / "bad.csv").write_text("1.0,2.0\n3.0,oops\n")
    (tmp_path / "labels.txt").write_text("0\n1\n")
    with pytest.raises(ParseError, match=r"row 1, column 1"):
        load_csv({"A": tmp_path / "bad.csv"}, tmp_path / "labels.txt")

    (tmp_path / "ragged.csv").write_text("1.0,2.0\n3.0\n")
    with pytest.raises(ParseError, match="row widths"):
        load_csv({"A": tmp_path / "ragged.csv"}, tmp_path / "labels.txt")

    (tmp_path / "ok.csv").write_text("1.0\n2.0\n")
    (tmp_path / "badlab.txt").write_text("0\nx\n")
    with pytest.raises(ParseError, match="row 1"):
        load_csv({"A": tmp_path / "ok.csv"}, tmp_path / "badlab.txt")

    (tmp_path / "short.txt").write_text("0\n")
    with pytest.raises(DataError, match="row counts"):
        load_csv({"A": tmp_path / "ok.csv"}, tmp_path / "short.txt")


# -- normalization ------------------------------------------------------------------


def test_normalize_minmax_hand_values():
    ds = MultimodalDataset({"A": [[2.0], [4.0], [6.0]]}, [0, 1, 0])
    out = normalize_minmax(ds)
    np.testing.assert_allclose(out.matrix("A")[:, 0], [0.0, 0.5, 1.0])
    assert out.normalized
    mins, ranges = out.norm_params["A"]
    np.testing.assert_allclose(denormalize((mins, ranges), out.matrix("A")),
                               ds.matrix("A"))


def test_normalize_constant_channel_and_idempotence():
    ds = MultimodalDataset({"A": [[5.0, 1.0], [5.0, 3.0]]}, [0, 1])
    out = normalize_minmax(ds)
    np.testing.assert_allclose(out.matrix("A")[:, 0], [0.0, 0.0])
    np.testing.assert_allclose(out.matrix("A")[:, 1], [0.0, 1.0])
    twice = normalize_minmax(out)
    np.testing.assert_allclose(twice.matrix("A"), out.matrix("A"))


def test_normalize_preserves_split_masks():
    ds = _tiny_dataset()
    ds.split(0.5, seed=1)
    out = normalize_minmax(ds)
    np.testing.assert_array_equal(out.train_mask, ds.train_mask)


# -- stratified split ------------------------------------------------------------------


def test_stratified_split_hand_counts():
    labels = np.array([0] * 10 + [1] * 10)
    train, test = stratified_split(labels, 0.4, seed=0)
    assert train.sum() == 8 and test.sum() == 12
    for cls in (0, 1):
        assert (train & (labels == cls)).sum() == 4
        assert (test & (labels == cls)).sum() == 6


def test_stratified_split_clamps_tiny_classes():
    labels = np.array([0, 0, 1, 1, 1])
    train, _ = stratified_split(labels, 0.05, seed=0)
    # every class with >= 2 samples keeps at least one row per side
    assert (train & (labels == 0)).sum() == 1
    assert (train & (labels == 1)).sum() == 1


def test_stratified_split_single_sample_class_warns():
    labels = np.array([0, 0, 0, 7])
    with pytest.warns(UserWarning, match="single sample"):
        train, test = stratified_split(labels, 0.5, seed=3)
    assert train[3] and not test[3]


def test_stratified_split_validates_fraction():
    with pytest.raises(ConfigError):
        stratified_split([0, 1], 0.0, seed=0)
    with pytest.raises(ConfigError):
        stratified_split([0, 1], 1.0, seed=0)


@settings(deadline=None, max_examples=40)
@given(sizes=st.lists(st.integers(2, 40), min_size=1, max_size=5),
       fraction=st.floats(0.05, 0.95), seed=st.integers(0, 2**31))
def test_stratified_split_properties(sizes, fraction, seed):
    labels = np.concatenate([np.full(s, i) for i, s in enumerate(sizes)])
    train, test = stratified_split(labels, fraction, seed)
    assert not np.any(train & test)
    assert np.all(train | test)
    assert np.array_equal(train, stratified_split(labels, fraction, seed)[0])
    for cls, size in enumerate(sizes):
        n_train = (train & (labels == cls)).sum()
        want = int(np.floor(fraction * size + 0.5))
        assert n_train == min(max(want, 1), size - 1)


# -- synthetic generation -----------------------------------------------------------


def test_generate_synthetic_shapes_and_determinism():
    cfg = SynthConfig(n_classes=3, samples_per_class=30, truth_dim=4,
                      views={"A": ViewConfig(10), "B": ViewConfig(5, depth=2)},
                      seed=12)
    ds = generate_synthetic(cfg)
    assert ds.n_samples == 90
    assert ds.dim("A") == 10 and ds.dim("B") == 5
    assert ds.normalized
    np.testing.assert_array_equal(np.bincount(ds.labels), [30, 30, 30])
    again = generate_synthetic(cfg)
    for sid in ds.sensor_ids:
        np.testing.assert_array_equal(again.matrix(sid), ds.matrix(sid))
    other = generate_synthetic(SynthConfig(3, 30, 4, cfg.views, seed=13))
    assert not np.array_equal(other.matrix("A"), ds.matrix("A"))


def test_identity_views_with_zero_noise_agree():
    cfg = SynthConfig(n_classes=2, samples_per_class=10, truth_dim=3,
                      views={"A": ViewConfig(3, depth=0, noise=0.0),
                             "B": ViewConfig(3, depth=0, noise=0.0)},
                      seed=4)
    ds = generate_synthetic(cfg)
    # both sensors see the same truth, so after shared min-max they match
    np.testing.assert_allclose(ds.matrix("A"), ds.matrix("B"), atol=1e-12)


def test_generate_synthetic_validation():
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(n_classes=1))
    with pytest.raises(ConfigError, match="identity"):
        generate_synthetic(SynthConfig(
            views={"A": ViewConfig(5, depth=0)}, truth_dim=4))
    with pytest.raises(ConfigError):
        generate_synthetic(SynthConfig(views={"A": ViewConfig(0)}))


def test_synthetic_classes_separable_by_raw_knn():
    from maln.inference import KnnClassAvg
    ds = generate_synthetic(SynthConfig(seed=11))
    ds.split(0.4, seed=11)
    knn = KnnClassAvg(k=5, n_classes=ds.n_classes)
    knn.fit(ds.train_arrays("A"), ds.train_labels)
    acc = (knn.predict(ds.test_arrays("A")) == ds.test_labels).mean()
    assert acc >= 0.8


def test_channel_dropout_zeroes_columns():
    cfg = SynthConfig(n_classes=2, samples_per_class=20, truth_dim=3,
                      views={"A": ViewConfig(12, channel_dropout=0.5)}, seed=2)
    ds = generate_synthetic(cfg)
    col_span = ds.matrix("A").max(axis=0) - ds.matrix("A").min(axis=0)
    assert (col_span == 0.0).any()


# -- raster patches ---------------------------------------------------------------


def test_extract_patches_center_pixel_and_order():
    raster = np.arange(24, dtype=float).reshape(3, 4, 2)
    patches = extract_patches(raster, 3)
    assert patches.shape == (12, 18)
    # patch for pixel (1, 1): rows 0..2, cols 0..2, channels fastest
    want = raster[0:3, 0:3, :].reshape(-1)
    np.testing.assert_array_equal(patches[1 * 4 + 1], want)
    # size-1 patches are just the pixel vectors
    np.testing.assert_array_equal(extract_patches(raster, 1),
                                  raster.reshape(12, 2))


def test_extract_patches_edge_padding():
    raster = np.arange(9, dtype=float).reshape(3, 3)
    patches = extract_patches(raster, 3)
    corner = patches[0].reshape(3, 3)
    np.testing.assert_array_equal(corner, [[0, 0, 1], [0, 0, 1], [3, 3, 4]])


def test_extract_patches_validation():
    with pytest.raises(ConfigError, match="odd"):
        extract_patches(np.zeros((3, 3)), 2)
    with pytest.raises(DataError):
        extract_patches(np.zeros((2, 2, 2, 2)), 3)


def test_raster_to_features_is_normalized():
    rng = np.random.default_rng(8)
    feats = raster_to_features(rng.uniform(10, 50, (5, 6, 3)), 3)
    assert feats.min() >= 0.0 and feats.max() <= 1.0
    assert feats.shape == (30, 27)
