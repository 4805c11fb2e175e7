import numpy as np
import pytest

from eihi.errors import ConfigError, PpmParseError, ShiftConfigError, IngestionError
from eihi.ppm import read_pgm, read_ppm, write_pgm, write_ppm
from eihi.synthdata import (
    DatasetSpec,
    ShiftConfig,
    generate_dataset,
    load_dataset,
    load_image_folder,
    split_domains,
    split_mixed,
    write_dataset,
)


def tiny_spec(**kw):
    base = dict(num_classes=2, num_domains=2, samples_per_cell=3,
                height=16, width=16, noise_sigma=0.0, seed=42)
    base.update(kw)
    return DatasetSpec(**base)


class TestGenerate:
    def test_counts_per_cell(self):
        ds = generate_dataset(tiny_spec())
        assert len(ds) == 2 * 2 * 3
        for c in range(2):
            for d in range(2):
                cell = [s for s in ds if s.class_label == c and s.domain_label == d]
                assert len(cell) == 3

    def test_seed_determinism_bit_identical(self):
        a = generate_dataset(tiny_spec(noise_sigma=0.05))
        b = generate_dataset(tiny_spec(noise_sigma=0.05))
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
            assert sa.background_factor == sb.background_factor

    def test_different_seed_changes_images(self):
        a = generate_dataset(tiny_spec())
        b = generate_dataset(tiny_spec(seed=43))
        assert any(not np.array_equal(sa.image, sb.image) for sa, sb in zip(a, b))

    def test_background_contrast_between_first_domains(self):
        spec = DatasetSpec(num_classes=3, num_domains=10, samples_per_cell=5,
                           height=24, width=24, noise_sigma=0.02, seed=3)
        ds = generate_dataset(spec)

        def bg_mean(dm):
            return np.mean([
                s.image[:, ~s.foreground_mask].mean() for s in ds if s.domain_label == dm
            ])

        assert abs(bg_mean(0) - bg_mean(1)) >= spec.background_contrast

    def test_class_signal_sufficiency_nearest_centroid(self):
        spec = DatasetSpec(num_classes=8, num_domains=4, samples_per_cell=8,
                           height=24, width=24, noise_sigma=0.0, seed=1)
        ds = generate_dataset(spec)
        masks = np.stack([s.foreground_mask.astype(float).ravel() for s in ds])
        labels = np.array([s.class_label for s in ds])
        cents = np.stack([masks[labels == c].mean(0) for c in range(8)])
        pred = np.argmin(((masks[:, None, :] - cents[None, :, :]) ** 2).sum(-1), axis=1)
        assert (pred == labels).mean() >= 0.95

    def test_background_factor_tracks_domain(self):
        ds = generate_dataset(tiny_spec(num_domains=4, samples_per_cell=10))
        for dm in range(4):
            bfs = [s.background_factor for s in ds if s.domain_label == dm]
            assert max(bfs) - min(bfs) < 1.0 / 4  # jitter stays inside the domain slot
            assert all(0.0 <= bf <= 1.0 for bf in bfs)

    def test_small_raster_rejected(self):
        with pytest.raises(ConfigError, match="16"):
            tiny_spec(height=12)

    def test_values_in_unit_range(self):
        ds = generate_dataset(tiny_spec(noise_sigma=0.1))
        for s in ds:
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0


class TestSplitDomains:
    def make(self, per_cell=10, domains=10, classes=3, seed=0):
        return generate_dataset(DatasetSpec(
            num_classes=classes, num_domains=domains, samples_per_cell=per_cell,
            height=16, width=16, noise_sigma=0.0, seed=seed))

    def test_targets_go_to_test(self):
        ds = self.make()
        shift = ShiftConfig.make(range(8), {8, 9})
        split = split_domains(ds, shift)
        assert {s.domain_label for s in split.test} == {8, 9}
        assert len(split.test) == 2 * 3 * 10
        assert all(s.domain_label < 8 for s in split.train + split.validation)

    def test_partition_no_duplicates_no_ratio(self):
        ds = self.make()
        split = split_domains(ds, ShiftConfig.make(range(8), {8, 9}))
        ids = [s.sample_id for s in split.train + split.validation + split.test]
        assert len(ids) == len(set(ids)) == len(ds)

    def test_correlation_ratio_exact(self):
        ds = self.make(per_cell=50)
        shift = ShiftConfig.make(range(8), {8, 9}, primary=0, ratio="1/5")
        split = split_domains(ds, shift)
        kept = split.train + split.validation
        for c in range(3):
            for dm in range(1, 8):
                count = sum(1 for s in kept if s.class_label == c and s.domain_label == dm)
                assert count == 10  # floor(50 * 1/5)
            primary = sum(1 for s in kept if s.class_label == c and s.domain_label == 0)
            assert primary == 50

    def test_ratio_five_to_one_per_spec_example(self):
        ds = self.make(per_cell=50)
        shift = ShiftConfig.make(range(8), {8, 9}, primary=2, ratio="1/5")
        split = split_domains(ds, shift)
        kept = split.train + split.validation
        counts = {dm: sum(1 for s in kept if s.domain_label == dm and s.class_label == 0)
                  for dm in range(8)}
        assert counts[2] == 50 and all(counts[dm] == 10 for dm in range(8) if dm != 2)

    def test_empty_target_rejected(self):
        with pytest.raises(ShiftConfigError):
            ShiftConfig.make(range(10), set())

    def test_overlap_rejected(self):
        with pytest.raises(ShiftConfigError):
            ShiftConfig.make({0, 1}, {1, 2})

    def test_ratio_requires_primary_in_source(self):
        with pytest.raises(ShiftConfigError):
            ShiftConfig.make({0, 1}, {2}, primary=2, ratio="1/5")

    def test_domain_cover_mismatch(self):
        ds = self.make(domains=4)
        with pytest.raises(ShiftConfigError):
            split_domains(ds, ShiftConfig.make({0, 1}, {2}))  # domain 3 unaccounted

    def test_subsample_to_zero_names_cell(self):
        ds = self.make(per_cell=4)
        shift = ShiftConfig.make(range(8), {8, 9}, primary=0, ratio="1/5")
        with pytest.raises(ShiftConfigError, match="class"):
            split_domains(ds, shift)

    def test_split_deterministic(self):
        ds = self.make()
        shift = ShiftConfig.make(range(8), {8, 9})
        a = split_domains(ds, shift, seed=5)
        b = split_domains(ds, shift, seed=5)
        assert [s.sample_id for s in a.train] == [s.sample_id for s in b.train]
        c = split_domains(ds, shift, seed=6)
        assert [s.sample_id for s in a.train] != [s.sample_id for s in c.train]


class TestSplitMixed:
    def test_partition_and_fraction(self):
        ds = generate_dataset(DatasetSpec(num_classes=3, num_domains=10,
                                          samples_per_cell=10, height=16, width=16,
                                          noise_sigma=0.0, seed=0))
        split = split_mixed(ds, test_fraction=0.2)
        assert len(split.test) == 3 * 10 * 2
        assert {s.domain_label for s in split.test} == set(range(10))
        ids = [s.sample_id for s in split.train + split.validation + split.test]
        assert len(ids) == len(set(ids)) == len(ds)


class TestPpm:
    def test_ppm_round_trip(self, tmp_path):
        img = np.linspace(0, 1, 3 * 4 * 5).reshape(3, 4, 5)
        p = tmp_path / "x.ppm"
        write_ppm(p, img)
        back = read_ppm(p)
        assert back.shape == (3, 4, 5)
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_pgm_binary_round_trip_exact(self, tmp_path):
        mask = (np.arange(12).reshape(3, 4) % 2 * 255).astype(np.uint8)
        p = tmp_path / "m.pgm"
        write_pgm(p, mask)
        assert np.array_equal(read_pgm(p), mask)

    def test_truncated_payload_names_requirement(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(11))  # 12 bytes required
        with pytest.raises(PpmParseError, match="12"):
            read_ppm(p)

    def test_all_white_scales_to_one(self, tmp_path):
        p = tmp_path / "w.ppm"
        p.write_bytes(b"P6\n4 4\n255\n" + b"\xff" * 48)
        assert np.array_equal(read_ppm(p), np.ones((3, 4, 4)))

    def test_wrong_maxval_rejected(self, tmp_path):
        p = tmp_path / "m.ppm"
        p.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(PpmParseError, match="maxval"):
            read_ppm(p)

    def test_comment_handling(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n2 1 255\n" + bytes(6))
        assert read_ppm(p).shape == (3, 1, 2)


class TestFolderIngestion:
    def build_folder(self, root, classes=("ant", "bee"), domains=("grass", "snow")):
        rng = np.random.default_rng(0)
        for c in classes:
            for d in domains:
                p = root / c / d
                p.mkdir(parents=True)
                write_ppm(p / "img0.ppm", rng.random((3, 8, 8)))

    def test_labels_by_sorted_order(self, tmp_path):
        self.build_folder(tmp_path)
        samples = load_image_folder(tmp_path, 16, 16)
        assert len(samples) == 4
        assert {(s.class_label, s.domain_label) for s in samples} == {(0, 0), (0, 1), (1, 0), (1, 1)}
        assert all(s.background_factor is None for s in samples)
        assert all(s.image.shape == (3, 16, 16) for s in samples)

    def test_empty_class_dir_rejected(self, tmp_path):
        (tmp_path / "onlyclass").mkdir()
        with pytest.raises(IngestionError):
            load_image_folder(tmp_path, 16, 16)

    def test_parse_error_carries_path(self, tmp_path):
        d = tmp_path / "c" / "d"
        d.mkdir(parents=True)
        (d / "broken.ppm").write_bytes(b"P6\n2 2\n255\n" + bytes(3))
        with pytest.raises(PpmParseError, match="broken.ppm"):
            load_image_folder(tmp_path, 16, 16)


class TestManifest:
    def test_round_trip(self, tmp_path):
        spec = tiny_spec()
        ds = generate_dataset(spec)
        write_dataset(tmp_path, spec, ds)
        spec2, ds2 = load_dataset(tmp_path)
        assert spec2 == spec
        assert len(ds2) == len(ds)
        for a, b in zip(ds, ds2):
            assert a.sample_id == b.sample_id
            assert a.class_label == b.class_label
            assert a.domain_label == b.domain_label
            assert a.background_factor == pytest.approx(b.background_factor)
            assert np.max(np.abs(a.image - b.image)) <= 0.5 / 255 + 1e-12
