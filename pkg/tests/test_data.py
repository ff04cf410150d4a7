# -*- coding: utf-8 -*-

import numpy as np
import pytest

from context import ladgpy  # noqa: F401

from ladgpy.compactness import mixing_entropy
from ladgpy.data import (
    TabularSchema,
    dump_tabular,
    gen_rotated_moons,
    gen_shifted_gaussians,
    load_tabular,
    read_feature_csv,
    rotation,
    write_feature_csv,
)
from ladgpy.errors import (
    ConfigurationError,
    DataParseError,
    EmptySplitError,
    SchemaError,
)


def write_text(path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestRotatedMoons:
    def test_same_seed_same_arrays(self):
        first = gen_rotated_moons(n_per_domain=20, seed=4)
        second = gen_rotated_moons(n_per_domain=20, seed=4)
        np.testing.assert_array_equal(first.inputs, second.inputs)
        np.testing.assert_array_equal(first.splits, second.splits)
        other = gen_rotated_moons(n_per_domain=20, seed=5)
        assert not np.array_equal(first.inputs, other.inputs)

    def test_layout(self, moons):
        assert len(moons) == 5 * 40
        assert moons.n_features == 2
        assert moons.n_classes == 2
        assert moons.train_domains == [0, 1, 2, 3]
        assert moons.ood_domains == [4]
        assert set(moons.splits[moons.domain_ids == 4]) == {"ood"}
        # floor(40 * 0.2) rows of every train domain are validation
        for domain in moons.train_domains:
            assert (moons.splits[moons.domain_rows(domain, "val")] == "val").all()
            assert len(moons.domain_rows(domain, "val")) == 8

    def test_noise_free_domains_are_rotations(self):
        dataset = gen_rotated_moons(
            n_per_domain=10, domain_angles=(0.0, 30.0, 90.0), noise_sd=0.0
        )
        base = dataset.inputs[dataset.domain_ids == 0]
        turned = dataset.inputs[dataset.domain_ids == 2]
        np.testing.assert_allclose(turned, base @ rotation(90.0).T, atol=1e-12)

    def test_half_turn_mirrors_the_train_domain(self):
        dataset = gen_rotated_moons(
            n_per_domain=12, domain_angles=(0.0, 45.0, 180.0), noise_sd=0.0
        )
        train = dataset.inputs[dataset.domain_ids == 0]
        ood = dataset.inputs[dataset.domain_ids == 2]
        np.testing.assert_allclose(ood, -train, atol=1e-12)
        np.testing.assert_array_equal(
            dataset.task_labels[dataset.domain_ids == 2],
            dataset.task_labels[dataset.domain_ids == 0],
        )
        assert dataset.ood_domains == [2]

    def test_repeated_angle_duplicates_the_domain(self):
        dataset = gen_rotated_moons(
            n_per_domain=10, domain_angles=(30.0, 30.0, 90.0), noise_sd=0.0
        )
        np.testing.assert_array_equal(
            dataset.inputs[dataset.domain_ids == 0],
            dataset.inputs[dataset.domain_ids == 1],
        )

    def test_classes_are_balanced_in_every_domain(self, moons):
        for domain in moons.train_domains + moons.ood_domains:
            labels = moons.task_labels[moons.domain_ids == domain]
            _, counts = np.unique(labels, return_counts=True)
            np.testing.assert_array_equal(counts, [20, 20])

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"domain_angles": (0.0, 10.0)},
            {"n_per_domain": 7},
            {"noise_sd": -1.0},
            {"n_ood": 0},
            {"val_fraction": 1.0},
        ],
    )
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ConfigurationError):
            gen_rotated_moons(**kwargs)


class TestShiftedGaussians:
    def test_same_seed_same_arrays(self):
        first = gen_shifted_gaussians(n_per_domain=12, seed=2)
        second = gen_shifted_gaussians(n_per_domain=12, seed=2)
        np.testing.assert_array_equal(first.inputs, second.inputs)

    def test_layout(self, gaussians):
        assert gaussians.n_features == 3
        assert gaussians.n_classes == 3
        assert gaussians.train_domains == [0, 1, 2, 3]
        assert gaussians.ood_domains == [4]
        assert not set(gaussians.train_domains) & set(gaussians.ood_domains)

    def test_collapsed_pairs_repeat_samples(self):
        dataset = gen_shifted_gaussians(n_per_domain=9, collapsed_pairs=True)
        for copy, source in ((1, 0), (3, 2)):
            np.testing.assert_array_equal(
                dataset.inputs[dataset.domain_ids == copy],
                dataset.inputs[dataset.domain_ids == source],
            )
        assert not np.array_equal(
            dataset.inputs[dataset.domain_ids == 0],
            dataset.inputs[dataset.domain_ids == 2],
        )

    def test_regression_targets(self):
        dataset = gen_shifted_gaussians(n_per_domain=10, task_kind="regression")
        assert dataset.task_labels.dtype == np.float64
        assert dataset.n_classes == 1

    def test_unshifted_domains_mix_in_every_neighborhood(self):
        mixed = gen_shifted_gaussians(
            n_per_domain=100, domain_shift_scale=0.0, n_ood_domains=0, seed=1
        )
        separated = gen_shifted_gaussians(
            n_per_domain=100, domain_shift_scale=8.0, n_ood_domains=0, seed=1
        )
        entropy = mixing_entropy(mixed.inputs, mixed.domain_ids, k=30)
        assert entropy > 0.9 * np.log(4.0)
        assert entropy <= np.log(4.0)
        assert entropy > mixing_entropy(
            separated.inputs, separated.domain_ids, k=30
        )

    def test_invalid_parameters(self):
        with pytest.raises(ConfigurationError) as info:
            gen_shifted_gaussians(
                n_per_domain=0, n_features=1, collapsed_pairs=True, n_domains=3
            )
        assert len(info.value.problems) == 3

    def test_empty_split(self):
        dataset = gen_shifted_gaussians(n_per_domain=6, n_ood_domains=0)
        with pytest.raises(EmptySplitError):
            dataset.subset("ood")


class TestTabular:
    def test_dump_and_load_are_exact(self, moons, tmp_path):
        path = str(tmp_path / "moons.csv")
        dump_tabular(moons, path)
        loaded = load_tabular(path)
        np.testing.assert_array_equal(loaded.inputs, moons.inputs)
        np.testing.assert_array_equal(loaded.task_labels, moons.task_labels)
        np.testing.assert_array_equal(loaded.domain_ids, moons.domain_ids)
        assert loaded.splits.tolist() == moons.splits.tolist()

    def test_split_column_is_optional(self, tmp_path):
        path = write_text(
            tmp_path / "plain.csv", "f0,f1,label,domain\n1,2,0,0\n3,4,1,1\n"
        )
        dataset = load_tabular(path)
        assert dataset.splits.tolist() == ["train", "train"]
        assert dataset.train_domains == [0, 1]

    def test_missing_columns(self, tmp_path):
        path = write_text(tmp_path / "bad.csv", "f0,label\n1,0\n")
        with pytest.raises(SchemaError, match="domain"):
            load_tabular(path)

    def test_header_only(self, tmp_path):
        path = write_text(tmp_path / "empty.csv", "f0,label,domain\n")
        with pytest.raises(SchemaError):
            load_tabular(path)

    @pytest.mark.parametrize(
        "row",
        ["abc,0,0", "1.0,0.5,0", "1.0,0,-1", "nan,0,0", "1.0,0"],
    )
    def test_bad_rows_report_their_line(self, tmp_path, row):
        path = write_text(
            tmp_path / "rows.csv", f"f0,label,domain\n1.0,0,0\n{row}\n"
        )
        with pytest.raises(DataParseError) as info:
            load_tabular(path)
        assert info.value.line == 3

    def test_unknown_split_tag(self, tmp_path):
        path = write_text(
            tmp_path / "split.csv", "f0,label,domain,split\n1.0,0,0,test\n"
        )
        with pytest.raises(DataParseError):
            load_tabular(path)

    def test_regression_labels(self, tmp_path):
        path = write_text(
            tmp_path / "reg.csv", "f0,label,domain\n1.0,0.25,0\n2.0,-3.5,1\n"
        )
        dataset = load_tabular(path, TabularSchema(task_kind="regression"))
        np.testing.assert_array_equal(dataset.task_labels, [0.25, -3.5])

    def test_ood_domain_in_train_rejected(self, tmp_path):
        path = write_text(
            tmp_path / "overlap.csv",
            "f0,label,domain,split\n1.0,0,0,train\n2.0,0,0,ood\n",
        )
        with pytest.raises(SchemaError):
            load_tabular(path)


class TestFeatureCsv:
    def test_write_and_read(self, rng, tmp_path):
        path = str(tmp_path / "features.csv")
        features = rng.normal(size=(6, 3))
        write_feature_csv(path, features, np.arange(6) % 2, np.arange(6) % 3)
        read, labels, domains = read_feature_csv(path)
        np.testing.assert_array_equal(read, features)
        np.testing.assert_array_equal(labels, np.arange(6) % 2)
        np.testing.assert_array_equal(domains, np.arange(6) % 3)

    def test_optional_columns(self, tmp_path):
        path = write_text(tmp_path / "bare.csv", "f0,f1\n1,2\n3,4\n")
        features, labels, domains = read_feature_csv(path)
        assert features.shape == (2, 2)
        assert labels is None and domains is None

    def test_no_feature_columns(self, tmp_path):
        path = write_text(tmp_path / "none.csv", "x,y\n1,2\n")
        with pytest.raises(SchemaError):
            read_feature_csv(path)
