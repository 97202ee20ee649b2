"""Manifest scanning, the published split table, sampling arms, image IO."""

import numpy as np
import pytest
from PIL import Image

from mobiderm import data as data_mod

import oracles

# per-class image counts of the reference clinical corpus, alphabetical
TABLE_COUNTS = {
    "acne": 805,
    "chickenpox": 314,
    "eczema": 599,
    "pityriasis_rosea": 347,
    "psoriasis": 633,
    "tinea_corporis": 385,
    "vitiligo": 323,
}
TABLE_SPLITS = {
    "acne": (644, 161),
    "chickenpox": (251, 63),
    "eczema": (479, 120),
    "pityriasis_rosea": (278, 69),
    "psoriasis": (506, 127),
    "tinea_corporis": (308, 77),
    "vitiligo": (258, 65),
}


def synthetic_manifest(counts: dict) -> data_mod.DatasetManifest:
    """In-memory manifest with fake paths; no files needed for split logic."""
    classes = sorted(counts)
    items = []
    for idx, name in enumerate(classes):
        items.extend((f"{name}/img_{i:04d}.jpg", idx) for i in range(counts[name]))
    return data_mod.DatasetManifest(classes=classes, items=items,
                                    counts=[counts[c] for c in classes])


@pytest.fixture()
def table_plan():
    return data_mod.stratified_split(synthetic_manifest(TABLE_COUNTS), 0.8, seed=0)


class TestScanDataset:
    def test_counts_and_alpha_order(self, tmp_path):
        for name, n in [("b_class", 3), ("a_class", 2)]:
            d = tmp_path / name
            d.mkdir()
            for i in range(n):
                Image.new("RGB", (4, 4), (10 * i, 0, 0)).save(d / f"{i}.png")
        manifest = data_mod.scan_dataset(tmp_path)
        assert manifest.classes == ["a_class", "b_class"]
        assert manifest.counts == [2, 3]
        assert manifest.total == 5
        assert manifest.items == sorted(manifest.items)

    def test_single_class_single_image(self, tmp_path):
        d = tmp_path / "only"
        d.mkdir()
        Image.new("RGB", (4, 4)).save(d / "one.jpg")
        manifest = data_mod.scan_dataset(tmp_path)
        assert manifest.counts == [1]

    def test_empty_root_errors(self, tmp_path):
        with pytest.raises(data_mod.DatasetError, match="no class directories"):
            data_mod.scan_dataset(tmp_path)

    def test_empty_class_dir_names_the_class(self, tmp_path):
        good = tmp_path / "good"
        good.mkdir()
        Image.new("RGB", (4, 4)).save(good / "a.png")
        (tmp_path / "hollow").mkdir()
        with pytest.raises(data_mod.DatasetError, match="hollow"):
            data_mod.scan_dataset(tmp_path)

    def test_non_image_files_skipped_with_count(self, tmp_path):
        d = tmp_path / "c"
        d.mkdir()
        Image.new("RGB", (4, 4)).save(d / "a.png")
        (d / "notes.txt").write_text("not an image")
        manifest = data_mod.scan_dataset(tmp_path)
        assert manifest.counts == [1]
        assert manifest.skipped == 1

    def test_reference_corpus_counts_total_3406(self, tmp_path):
        # scanning indexes by extension without decoding, so placeholder
        # files are enough to exercise the full reference-table layout
        for name, count in TABLE_COUNTS.items():
            d = tmp_path / name
            d.mkdir()
            for i in range(count):
                (d / f"img_{i:04d}.jpg").touch()
        manifest = data_mod.scan_dataset(tmp_path)
        assert manifest.total == 3406
        assert manifest.counts == [TABLE_COUNTS[c] for c in manifest.classes]


class TestStratifiedSplit:
    def test_reproduces_every_published_row(self, table_plan):
        train_counts = table_plan.per_class_counts("train")
        test_counts = table_plan.per_class_counts("test")
        for idx, name in enumerate(table_plan.classes):
            want_train, want_test = TABLE_SPLITS[name]
            assert train_counts[idx] == want_train, name
            assert test_counts[idx] == want_test, name
        assert sum(train_counts) == 2724
        assert sum(test_counts) == 682

    def test_round_half_up_on_fractional_class(self):
        plan = data_mod.stratified_split(synthetic_manifest({"pityriasis_rosea": 347}), 0.8, 0)
        assert plan.per_class_counts("train") == [278]  # 277.6 rounds up
        assert plan.per_class_counts("test") == [69]

    def test_ten_items(self):
        plan = data_mod.stratified_split(synthetic_manifest({"x": 10}), 0.8, 0)
        assert plan.per_class_counts("train") == [8]
        assert plan.per_class_counts("test") == [2]

    def test_train_test_disjoint(self, table_plan):
        assert not set(p for p, _ in table_plan.train) & set(p for p, _ in table_plan.test)

    def test_same_seed_identical(self):
        m = synthetic_manifest(TABLE_COUNTS)
        a = data_mod.stratified_split(m, 0.8, seed=7)
        b = data_mod.stratified_split(m, 0.8, seed=7)
        assert a.train == b.train and a.test == b.test and a.validation == b.validation

    def test_different_seed_permutes_membership_not_counts(self):
        m = synthetic_manifest(TABLE_COUNTS)
        a = data_mod.stratified_split(m, 0.8, seed=1)
        b = data_mod.stratified_split(m, 0.8, seed=2)
        assert a.train != b.train
        assert a.per_class_counts("train") == b.per_class_counts("train")

    def test_validation_defaults_to_test_copy(self, table_plan):
        assert table_plan.validation == table_plan.test

    def test_validation_from_train_sized_like_test(self):
        m = synthetic_manifest(TABLE_COUNTS)
        plan = data_mod.stratified_split(m, 0.8, seed=0, validation_source="train")
        assert plan.per_class_counts("validation") == plan.per_class_counts("test")
        train_paths = set(p for p, _ in plan.train)
        assert all(p in train_paths for p, _ in plan.validation)

    def test_class_below_two_items_errors(self):
        with pytest.raises(data_mod.DatasetError, match="at least 2"):
            data_mod.stratified_split(synthetic_manifest({"tiny": 1}), 0.8, 0)

    def test_json_round_trip(self, table_plan):
        doc = table_plan.to_json()
        back = data_mod.SplitPlan.from_json(doc)
        assert back.train == table_plan.train
        assert back.test == table_plan.test
        assert back.seed == table_plan.seed


class TestApplySampling:
    def test_oversample_matches_published_table(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "oversample", seed=0)
        assert plan.per_class_counts("train") == [644] * 7
        assert plan.per_class_counts("test") == [161] * 7
        assert len(plan.train) == 4508
        assert len(plan.test) == 1127
        assert plan.per_class_counts("validation") == [161] * 7

    def test_oversample_can_leave_test_untouched(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "oversample", seed=0, resample_test=False)
        assert plan.per_class_counts("train") == [644] * 7
        assert plan.test == table_plan.test

    def test_undersample_to_minimum_train_count(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "undersample", seed=0)
        assert plan.per_class_counts("train") == [251] * 7  # min of the table rows
        assert plan.test == table_plan.test

    def test_imbalanced_unchanged(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "imbalanced", seed=0)
        assert plan.train == table_plan.train
        assert plan.test == table_plan.test

    def test_already_balanced_unchanged_under_both_modes(self):
        m = synthetic_manifest({"a": 50, "b": 50, "c": 50})
        base = data_mod.stratified_split(m, 0.8, seed=0)
        for mode in ("undersample", "oversample"):
            plan = data_mod.apply_sampling(base, mode, seed=0)
            assert sorted(plan.train) == sorted(base.train), mode

    def test_no_cross_side_leakage_after_oversample(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "oversample", seed=0)
        assert not set(p for p, _ in plan.train) & set(p for p, _ in plan.test)

    def test_oversample_duplicates_come_from_same_class(self, table_plan):
        plan = data_mod.apply_sampling(table_plan, "oversample", seed=3)
        for idx, name in enumerate(plan.classes):
            members = [p for p, i in plan.train if i == idx]
            assert all(p.startswith(name) for p in members)

    def test_unknown_mode_rejected(self, table_plan):
        with pytest.raises(ValueError, match="unknown sampling mode"):
            data_mod.apply_sampling(table_plan, "smote")


class TestLoadImage:
    def test_solid_color_constant_tensor(self, tmp_path):
        path = tmp_path / "solid.png"
        Image.new("RGB", (10, 10), (200, 100, 50)).save(path)
        img = data_mod.load_image(path, 10)
        assert img.shape == (10, 10, 3)
        np.testing.assert_array_equal(img[0, 0], [200.0, 100.0, 50.0])
        assert np.all(img == img[0, 0])

    def test_checkerboard_upscale_matches_scalar_oracle(self, tmp_path):
        board = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        rgb = np.stack([board] * 3, axis=-1)
        path = tmp_path / "board.png"
        Image.fromarray(rgb).save(path)
        img = data_mod.load_image(path, 4)
        want = oracles.resize_bilinear_scalar(rgb.astype(np.float64), 4, 4)
        np.testing.assert_allclose(img, want, atol=1e-4)

    def test_resize_identity_when_size_matches(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)
        path = tmp_path / "big.png"
        Image.fromarray(raw).save(path)
        img = data_mod.load_image(path, 224)
        np.testing.assert_array_equal(img, raw.astype(np.float32))

    def test_decode_failure_carries_path(self, tmp_path):
        path = tmp_path / "broken.jpg"
        path.write_bytes(b"this is not a jpeg")
        with pytest.raises(data_mod.ImageDecodeError, match="broken.jpg"):
            data_mod.load_image(path, 8)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_downscale_matches_scalar_oracle(self, seed, tmp_path):
        rng = np.random.default_rng(800 + seed)
        raw = rng.integers(0, 256, (9, 7, 3), dtype=np.uint8)
        path = tmp_path / "r.png"
        Image.fromarray(raw).save(path)
        img = data_mod.load_image(path, (5, 4))
        want = oracles.resize_bilinear_scalar(raw.astype(np.float64), 5, 4)
        np.testing.assert_allclose(img, want, atol=1e-4)


class TestPreprocess:
    @pytest.mark.parametrize("value,want", [(255.0, 1.0), (0.0, -1.0), (127.5, 0.0)])
    def test_default_maps_to_unit_range(self, value, want):
        out = data_mod.default_preprocess(np.array([value], np.float32))
        assert out[0] == pytest.approx(want, abs=1e-7)

    def test_rescale_maps_to_zero_one(self):
        out = data_mod.rescale_preprocess(np.array([0.0, 127.5, 255.0], np.float32))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
