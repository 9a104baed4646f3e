import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedvision.data import (
    generate_dataset,
    load_dataset,
    manifest_digest,
    partition_iid,
    save_dataset,
    split_dataset,
)
from fedvision.netpbm import read_netpbm, write_netpbm
from fedvision.types import DatasetSplit, RasterImage, Sample

from conftest import make_image, make_samples


def fake_samples(n):
    """Cheap samples sharing one image; split/partition only look at ids."""
    image = make_image(32)
    return [Sample(f"f{i:06d}", image) for i in range(n)]


class TestGenerate:
    def test_zero_object_sample(self):
        # seed chosen so the first draw yields an empty sample at max_objects=1
        sample = generate_dataset(1, 64, 1, seed=0)[0]
        assert sample.annotations == []
        assert sample.image.pixels.shape == (64, 64, 1)

    def test_determinism(self):
        a = generate_dataset(40, 64, 3, seed=42)
        b = generate_dataset(40, 64, 3, seed=42)
        for s, t in zip(a, b):
            assert s.id == t.id
            assert s.annotations == t.annotations
            assert np.array_equal(s.image.pixels, t.image.pixels)

    def test_prefix_stability(self):
        long = generate_dataset(20, 64, 3, seed=9)
        short = generate_dataset(5, 64, 3, seed=9)
        for s, t in zip(short, long):
            assert np.array_equal(s.image.pixels, t.image.pixels)
            assert s.annotations == t.annotations

    def test_class_balance(self):
        # frozen from this generator at seed=1: 706 vs 768 of 1474 shapes,
        # inside the 6-sigma binomial band around half the total
        samples = generate_dataset(1000, 64, 3, seed=1)
        counts = [0, 0]
        for s in samples:
            for a in s.annotations:
                counts[a.class_id] += 1
        assert counts == [706, 768]
        total = sum(counts)
        band = 6 * np.sqrt(total * 0.25)
        for c in counts:
            assert abs(c - total / 2) <= band

    def test_boxes_cover_detectability_floor(self):
        samples = generate_dataset(120, 64, 3, seed=3)
        for s in samples:
            for a in s.annotations:
                area_px = (a.box.w * 64) * (a.box.h * 64)
                assert area_px >= 16
                x0, y0, x1, y1 = a.box.corners()
                assert 0.0 <= x0 and x1 <= 1.0 and 0.0 <= y0 and y1 <= 1.0

    def test_shapes_contrast_with_background(self):
        samples = generate_dataset(60, 64, 2, seed=5)
        for s in samples:
            img = s.image.pixels[:, :, 0].astype(int)
            for a in s.annotations:
                cx, cy = int(a.box.cx * 64), int(a.box.cy * 64)
                # shape interior vs the corner background patch
                assert abs(int(img[cy, cx]) - int(img[0, 0])) >= 60

    def test_annotation_count_bounded(self):
        samples = generate_dataset(200, 64, 3, seed=8)
        assert all(0 <= len(s.annotations) <= 3 for s in samples)
        assert any(len(s.annotations) == 0 for s in samples)
        assert any(len(s.annotations) == 3 for s in samples)

    def test_rejects_small_images(self):
        with pytest.raises(ValueError):
            generate_dataset(1, 16, 1, seed=0)

    def test_rejects_bad_count(self):
        with pytest.raises(ValueError):
            generate_dataset(0, 64, 1, seed=0)


class TestSplit:
    def test_paper_scale_sizes(self):
        split = split_dataset(fake_samples(29690), (0.488, 0.130, 0.382), seed=1)
        assert (len(split.train), len(split.val), len(split.test)) == (14489, 3860, 11341)

    def test_exact_fractions(self):
        split = split_dataset(fake_samples(10), (0.5, 0.2, 0.3), seed=0)
        assert (len(split.train), len(split.val), len(split.test)) == (5, 2, 3)

    def test_rejects_degenerate_ratios(self):
        with pytest.raises(ValueError):
            split_dataset(fake_samples(10), (1.0, 0.0, 0.0), seed=0)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            split_dataset(fake_samples(10), (0.5, 0.2, 0.2), seed=0)

    def test_disjoint_and_complete(self):
        samples = fake_samples(101)
        split = split_dataset(samples, (0.488, 0.130, 0.382), seed=7)
        ids = [s.id for part in (split.train, split.val, split.test) for s in part]
        assert len(ids) == len(samples)
        assert set(ids) == {s.id for s in samples}

    def test_deterministic(self):
        samples = fake_samples(50)
        a = split_dataset(samples, (0.5, 0.2, 0.3), seed=3)
        b = split_dataset(samples, (0.5, 0.2, 0.3), seed=3)
        assert [s.id for s in a.train] == [s.id for s in b.train]


class TestPartition:
    def test_exact_division(self):
        part = partition_iid(fake_samples(9), 3, seed=0)
        assert [len(s) for s in part.shards] == [3, 3, 3]
        ids = [s.id for shard in part.shards for s in shard]
        assert len(set(ids)) == 9

    def test_remainder_rule(self):
        part = partition_iid(fake_samples(10), 3, seed=0)
        assert sorted(len(s) for s in part.shards) == [3, 3, 4]

    def test_paper_scale_shards(self):
        train = fake_samples(14489)
        part = partition_iid(train, 3, seed=1)
        sizes = sorted((len(s) for s in part.shards), reverse=True)
        assert sizes == [4830, 4830, 4829]
        shard_ids = [set(s.id for s in shard) for shard in part.shards]
        assert shard_ids[0] & shard_ids[1] == set()
        assert shard_ids[0] & shard_ids[2] == set()
        assert shard_ids[1] & shard_ids[2] == set()
        assert shard_ids[0] | shard_ids[1] | shard_ids[2] == {s.id for s in train}

    def test_rejects_more_participants_than_samples(self):
        with pytest.raises(ValueError):
            partition_iid(fake_samples(2), 3, seed=0)

    @settings(max_examples=25, deadline=None)
    @given(
        count=st.integers(min_value=6, max_value=300),
        participants=st.integers(min_value=1, max_value=6),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_split_then_partition_set_algebra(self, count, participants, seed):
        samples = fake_samples(count)
        split = split_dataset(samples, (0.488, 0.130, 0.382), seed=seed)
        if len(split.train) < participants:
            return
        part = partition_iid(split.train, participants, seed=seed)
        sizes = [len(s) for s in part.shards]
        assert max(sizes) - min(sizes) <= 1
        ids = [s.id for shard in part.shards for s in shard]
        assert len(ids) == len(set(ids)) == len(split.train)
        assert set(ids) == {s.id for s in split.train}


class TestNetpbm:
    def test_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        image = make_image(48, rng)
        path = tmp_path / "img.pgm"
        write_netpbm(image, path)
        back = read_netpbm(path)
        assert back.channels == 1
        assert np.array_equal(back.pixels, image.pixels)

    def test_ppm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 256, size=(20, 30, 3)).astype(np.uint8)
        image = RasterImage(30, 20, 3, pixels)
        path = tmp_path / "img.ppm"
        write_netpbm(image, path)
        back = read_netpbm(path)
        assert back.channels == 3
        assert (back.width, back.height) == (30, 20)
        assert np.array_equal(back.pixels, image.pixels)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        raster = bytes(range(6))
        path.write_bytes(b"P5\n# a comment\n3 2\n255\n" + raster)
        image = read_netpbm(path)
        assert image.pixels.reshape(-1).tolist() == list(range(6))

    def test_rejects_unknown_magic(self, tmp_path):
        path = tmp_path / "bad.pbm"
        path.write_bytes(b"P4\n1 1\n255\nx")
        with pytest.raises(ValueError):
            read_netpbm(path)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        samples = generate_dataset(24, 64, 2, seed=4)
        split = split_dataset(samples, (0.5, 0.25, 0.25), seed=0)
        save_dataset(split, tmp_path)
        back = load_dataset(tmp_path)
        assert [s.id for s in back.train] == [s.id for s in split.train]
        for orig, loaded in zip(split.test, back.test):
            assert np.array_equal(orig.image.pixels, loaded.image.pixels)
            assert len(orig.annotations) == len(loaded.annotations)
            for a, b in zip(orig.annotations, loaded.annotations):
                assert a.class_id == b.class_id
                # label files carry six fractional digits (half-ulp at the 6th place)
                assert abs(a.box.cx - b.box.cx) <= 1e-6
                assert abs(a.box.w - b.box.w) <= 1e-6

    def test_manifest_lists_split_membership(self, tmp_path):
        samples = generate_dataset(12, 64, 2, seed=4)
        split = split_dataset(samples, (0.5, 0.25, 0.25), seed=0)
        manifest_path = save_dataset(split, tmp_path)
        manifest = json.loads(manifest_path.read_text())
        assert manifest["splits"]["train"] == [s.id for s in split.train]
        assert manifest["image_size"] == 64

    def test_manifest_digest_deterministic(self, tmp_path):
        samples = generate_dataset(12, 64, 2, seed=4)
        split = split_dataset(samples, (0.5, 0.25, 0.25), seed=0)
        save_dataset(split, tmp_path / "a")
        save_dataset(split, tmp_path / "b")
        assert manifest_digest(tmp_path / "a") == manifest_digest(tmp_path / "b")
