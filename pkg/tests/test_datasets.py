import math

import numpy as np
import pytest

from bridgecap import datasets as ds
from bridgecap.corpus import LabeledImage
from bridgecap.errors import ConfigError, DomainError
from bridgecap.synth import gen_labeled_corpus

# Published per-class design-load counts the synthetic corpus reproduces.
COLUMN_A = {1: 928, 2: 4674, 3: 1913, 4: 460, 5: 3991, 6: 491,
            7: 3, 8: 56, 9: 585, 10: 310, 11: 22, 12: 107}

LR5 = ds.BinningScheme(name="LR5", edges=(0, 15, 30))
LR7 = ds.BinningScheme(name="LR7", edges=(0, 20, 40))


@pytest.fixture(scope="module")
def column_a_corpus():
    return gen_labeled_corpus(COLUMN_A)


def make_items(counts, prefix="img"):
    items = []
    for cls, n in counts.items():
        for i in range(n):
            items.append(ds.DatasetItem(image_path=f"{prefix}/c{cls}_{i:05d}", cls=cls))
    return items


class TestBinning:
    def test_interval_convention(self):
        assert ds.bin_load_rating(12.0, LR5) == 1
        assert ds.bin_load_rating(15.0, LR5) == 2  # boundary goes right
        assert ds.bin_load_rating(41.0, LR7) == 3

    def test_labels(self):
        assert LR5.labels == ("0-15 tons", "15-30 tons", ">30 tons")

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            ds.bin_load_rating(-1.0, LR5)

    def test_totality(self):
        rng = np.random.default_rng(8)
        for tons in rng.uniform(0, 120, 500):
            cls = ds.bin_load_rating(float(tons), LR5)
            assert 1 <= cls <= LR5.bin_count

    def test_edges_must_start_at_zero_and_increase(self):
        with pytest.raises(ConfigError):
            ds.BinningScheme(name="bad", edges=(5, 10))
        with pytest.raises(ConfigError):
            ds.BinningScheme(name="bad", edges=(0, 10, 10))


class TestMergeSmallClasses:
    def test_low_bin_merges_upward(self):
        scheme = ds.BinningScheme(name="lr", edges=(0, 5, 10, 15))
        merged = ds.merge_small_classes([12, 900, 400, 300], scheme, threshold=50)
        assert merged.edges == (0.0, 10.0, 15.0)
        assert merged.labels[0] == "0-10 tons"

    def test_fixed_point(self):
        scheme = ds.BinningScheme(name="lr", edges=(0, 10, 20))
        assert ds.merge_small_classes([60, 70, 80], scheme, threshold=50) is scheme

    def test_exhaustive_merge(self):
        scheme = ds.BinningScheme(name="lr", edges=(0, 10, 20))
        merged = ds.merge_small_classes([10, 10, 10], scheme, threshold=50)
        assert merged.bin_count == 1

    def test_last_bin_merges_downward(self):
        scheme = ds.BinningScheme(name="lr", edges=(0, 10, 20))
        merged = ds.merge_small_classes([100, 90, 5], scheme, threshold=50)
        assert merged.edges == (0.0, 10.0)


class TestClassMap:
    def test_drop(self):
        spec = ds.load_preset("DL1").label_source
        assert ds.map_design_load(7, spec) is None

    def test_merge_lands_with_group(self):
        spec = ds.load_preset("DL5").label_source
        assert ds.map_design_load(9, spec) == ds.map_design_load(5, spec) == 5

    def test_passthrough(self):
        spec = ds.load_preset("DL1").label_source
        assert ds.map_design_load(2, spec) == 2

    def test_out_of_range(self):
        spec = ds.load_preset("DL1").label_source
        with pytest.raises(DomainError):
            ds.map_design_load(13, spec)

    def test_output_indices_contiguous(self):
        for name in ("DL1", "DL3", "DL5", "DL7"):
            spec = ds.load_preset(name).label_source
            outputs = sorted(
                {ds.map_design_load(c, spec) for c in range(1, 13)} - {None}
            )
            assert outputs == list(range(1, spec.output_count + 1))

    def test_partition_enforced(self):
        with pytest.raises(ConfigError):
            ds.ClassMapSpec(name="bad", passthrough=(1, 2), drop=frozenset({2, 3}))


class TestDownsample:
    def test_exact_published_counts(self):
        items = make_items(dict(zip(range(1, 9), [928, 4674, 1913, 460, 3991, 491, 585, 310])))
        kept = ds.downsample(items, {2: 1000, 3: 1000, 5: 1000}, seed=1)
        counts = {}
        for item in kept:
            counts[item.cls] = counts.get(item.cls, 0) + 1
        assert counts == {1: 928, 2: 1000, 3: 1000, 4: 460, 5: 1000, 6: 491, 7: 585, 8: 310}
        assert len(kept) == 5774

    def test_cap_saturates_at_availability(self):
        items = make_items({4: 287})
        kept = ds.downsample(items, {4: 300}, seed=0)
        assert len(kept) == 287

    def test_identity_when_caps_cover(self):
        items = make_items({1: 10, 2: 20})
        assert sorted(i.image_path for i in ds.downsample(items, {1: 10, 2: 25}, seed=3)) == sorted(
            i.image_path for i in items
        )

    def test_subset_and_determinism(self):
        items = make_items({1: 50, 2: 80})
        a = ds.downsample(items, {1: 20, 2: 30}, seed=9)
        b = ds.downsample(items, {1: 20, 2: 30}, seed=9)
        assert a == b
        assert set(i.image_path for i in a) <= set(i.image_path for i in items)
        c = ds.downsample(items, {1: 20, 2: 30}, seed=10)
        assert c != a  # different seed draws a different subset


class TestSplit:
    def test_floor_rule(self):
        split = ds.split_dataset(make_items({1: 100}), split_fraction=0.8, seed=0)
        assert len(split.train) == 80 and len(split.test) == 20

    def test_small_class_floor(self):
        split = ds.split_dataset(make_items({1: 5, 2: 5}), split_fraction=0.8, seed=0)
        assert split.class_counts("train") == {1: 4, 2: 4}
        assert split.class_counts("test") == {1: 1, 2: 1}

    def test_determinism(self):
        items = make_items({1: 30, 2: 12})
        a = ds.split_dataset(items, seed=5)
        b = ds.split_dataset(items, seed=5)
        assert a == b
        assert a != ds.split_dataset(items, seed=6)

    def test_partition_property(self):
        items = make_items({1: 37, 2: 11, 3: 8})
        split = ds.split_dataset(items, split_fraction=0.7, seed=2)
        got = sorted(i.image_path for i in split.train + split.test)
        assert got == sorted(i.image_path for i in items)
        for cls, n in ((1, 37), (2, 11), (3, 8)):
            assert split.class_counts("train")[cls] == math.floor(0.7 * n)

    def test_test_classes_subset_of_train(self):
        split = ds.split_dataset(make_items({1: 9, 2: 2, 3: 3}), seed=0)
        assert set(split.class_counts("test")) <= set(split.class_counts("train"))

    def test_single_image_class_errors_with_name(self):
        with pytest.raises(DomainError, match="class 2"):
            ds.split_dataset(make_items({1: 10, 2: 1}), seed=0)

    def test_plain_random_mode(self):
        split = ds.split_dataset(make_items({1: 10, 2: 10}), seed=3, stratified=False)
        assert len(split.train) == 16 and len(split.test) == 4

    def test_bridge_level_keeps_bridges_whole(self):
        items = []
        for cls in (1, 2):
            for b in range(6):
                for i in range(4):
                    items.append(
                        ds.DatasetItem(
                            image_path=f"c{cls}b{b}i{i}",
                            cls=cls,
                            bridge_key=("01", f"B{cls}{b}"),
                        )
                    )
        split = ds.split_dataset(items, seed=1, group_split="bridge_level")
        train_bridges = {i.bridge_key for i in split.train}
        test_bridges = {i.bridge_key for i in split.test}
        assert train_bridges.isdisjoint(test_bridges)
        assert len(split.train) + len(split.test) == len(items)


class TestVariants:
    def test_dl2_published_counts(self, column_a_corpus):
        result = ds.build_variant("DL2", column_a_corpus, seed=11)
        assert result.class_counts == {1: 928, 2: 1000, 3: 1000, 4: 460,
                                       5: 1000, 6: 491, 7: 585, 8: 310}
        assert result.total == 5774

    def test_dl3_merged_class(self, column_a_corpus):
        result = ds.build_variant("DL3", column_a_corpus, seed=11)
        assert result.class_counts[9] == 188  # 3 + 56 + 22 + 107
        assert result.total == 13540

    def test_dl4_total(self, column_a_corpus):
        assert ds.build_variant("DL4", column_a_corpus, seed=11).total == 5962

    def test_dl5_merged_groups(self, column_a_corpus):
        result = ds.build_variant("DL5", column_a_corpus, seed=11)
        assert result.class_counts[5] == 5067  # 3991 + 491 + 585
        assert result.class_counts[6] == 332  # 310 + 22
        assert result.class_counts[7] == 166  # 3 + 56 + 107
        assert result.total == 13540

    def test_match_min_balances(self):
        corpus = []
        for cls, tons, n in ((1, 5.0, 40), (2, 20.0, 25), (3, 80.0, 70)):
            for i in range(n):
                corpus.append(
                    LabeledImage(
                        image_path=f"r{cls}_{i}", state="01", structure=f"S{cls}{i}",
                        load_rating_tons=tons,
                    )
                )
        result = ds.build_variant("LR6", corpus, seed=1)
        assert result.class_counts == {1: 25, 2: 25, 3: 25}

    def test_min_class_size_merges_scheme(self):
        corpus = []
        for cls, tons, n in ((0, 2.0, 3), (1, 7.0, 50), (2, 20.0, 60)):
            for i in range(n):
                corpus.append(
                    LabeledImage(
                        image_path=f"m{cls}_{i}", state="01", structure=f"T{cls}{i}",
                        load_rating_tons=tons,
                    )
                )
        spec = ds.DatasetSpec(
            name="custom",
            label_source=ds.BinningScheme(name="fine", edges=(0, 5, 10)),
            min_class_size=10,
        )
        result = ds.build_variant(spec, corpus, seed=0)
        assert result.class_labels == ("0-10 tons", ">10 tons")
        assert result.class_counts == {1: 53, 2: 60}

    def test_completion_filter(self, column_a_corpus):
        # column-A corpus is all complete, so partial-only variants starve
        with pytest.raises(DomainError):
            ds.build_variant("DL16", column_a_corpus, seed=0)

    def test_missing_labels_error(self):
        corpus = [LabeledImage(image_path="x", state="01", structure="S1",
                               load_rating_tons=12.0)]
        with pytest.raises(DomainError, match="design-load"):
            ds.build_variant("DL1", corpus, seed=0)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            ds.load_preset("DL99")

    def test_variant_determinism(self, column_a_corpus):
        a = ds.build_variant("DL6", column_a_corpus, seed=21)
        b = ds.build_variant("DL6", column_a_corpus, seed=21)
        assert ds.write_split_csv(a.split) == ds.write_split_csv(b.split)

    def test_split_csv_round_trip(self, column_a_corpus):
        result = ds.build_variant("DL2", column_a_corpus, seed=3)
        text = ds.write_split_csv(result.split)
        again = ds.read_split_csv(text)
        assert [i.image_path for i in again.train] == [i.image_path for i in result.split.train]
        assert [i.cls for i in again.test] == [i.cls for i in result.split.test]

    def test_all_presets_instantiate(self):
        for name in ds.preset_names():
            spec = ds.load_preset(name)
            assert spec.name == name
