import math
import random

import pytest

from driftfilter import features
from driftfilter.features import (
    CorpusCounts, FeatureCounts, FeatureError, FeatureSet, ScoredFeature,
    baseline_score, count_stats, load_feature_set, save_feature_set,
    select_top_n, select_top_n_scored, selection_rank_weight, tfdcr_weight,
    update_feature_set, vectorize,
)

import oracles
from conftest import make_corpus, make_doc, random_corpus


def _as_pairs(corpus_):
    return [
        ("spam" if d.label.value == "spam" else "legit", list(d.tokens))
        for d in corpus_.documents
    ]


class TestCountStats:
    def test_single_spam_doc(self):
        c = make_corpus([("spam", ["a", "a", "b"])])
        stats = count_stats(c)
        assert stats.counts["a"] == FeatureCounts("a", tf_spam=2, df_spam=1)
        assert stats.counts["b"] == FeatureCounts("b", tf_spam=1, df_spam=1)

    def test_duplicated_doc(self):
        c = make_corpus([("spam", ["a", "a", "b"]), ("spam", ["a", "a", "b"])])
        stats = count_stats(c)
        assert stats.counts["a"] == FeatureCounts("a", tf_spam=4, df_spam=2)

    def test_matches_naive_recount(self):
        rng = random.Random(77)
        for _ in range(25):
            c = random_corpus(rng)
            stats = count_stats(c)
            per_term, n_s, n_l = oracles.naive_stats(_as_pairs(c))
            assert stats.n_spam == n_s
            assert stats.n_legit == n_l
            assert set(stats.counts) == set(per_term)
            for term, (tf_s, tf_l, df_s, df_l) in per_term.items():
                fc = stats.counts[term]
                assert (fc.tf_spam, fc.tf_legit, fc.df_spam, fc.df_legit) == (
                    tf_s, tf_l, df_s, df_l,
                )

    def test_unlabeled_error(self):
        from driftfilter.corpus import LabeledCorpus, Label
        c = LabeledCorpus((make_doc(0, Label.UNLABELED, ["x"]),))
        with pytest.raises(FeatureError):
            count_stats(c)


class TestTfdcrWeight:
    def test_hand_example(self):
        fc = FeatureCounts("x", tf_spam=5, tf_legit=1, df_spam=2, df_legit=1)
        assert tfdcr_weight(fc, 2, 2) == 8.0

    def test_equal_frequencies_zero(self):
        fc = FeatureCounts("x", tf_spam=3, tf_legit=3, df_spam=2, df_legit=1)
        assert tfdcr_weight(fc, 4, 4) == 0.0

    def test_smoothed_exclusive(self):
        fc = FeatureCounts("x", tf_spam=4, tf_legit=0, df_spam=2, df_legit=0)
        assert tfdcr_weight(fc, 2, 2) == 16.0

    def test_nonnegative_and_product_at_least_one_when_unsmoothed(self):
        rng = random.Random(5)
        for _ in range(300):
            ns, nl = rng.randint(1, 30), rng.randint(1, 30)
            df_s, df_l = rng.randint(1, ns), rng.randint(1, nl)
            tf_s = rng.randint(df_s, df_s * 5)
            tf_l = rng.randint(df_l, df_l * 5)
            fc = FeatureCounts("x", tf_s, tf_l, df_s, df_l)
            weight = tfdcr_weight(fc, ns, nl)
            assert weight >= 0.0
            delta = abs(tf_s - tf_l)
            if delta:
                # both document frequencies positive: the branch picks the
                # ratio >= 1 side, so weight >= |tf difference|
                assert weight >= delta - 1e-12

    def test_exclusive_features_ordered_by_tf_difference(self):
        # equal ratios, zero df on the other side: ordering by tf delta
        weights = []
        for tf in (2, 5, 9):
            fc = FeatureCounts("x", tf_spam=tf, tf_legit=0, df_spam=2, df_legit=0)
            weights.append(tfdcr_weight(fc, 4, 4))
        assert weights == sorted(weights)


class TestSelectTopN:
    def test_tie_break_lexicographic(self):
        counts = CorpusCounts(
            counts={
                "bb": FeatureCounts("bb", 5, 1, 2, 1),
                "aa": FeatureCounts("aa", 5, 1, 2, 1),
                "cc": FeatureCounts("cc", 3, 3, 1, 1),
            },
            n_spam=2, n_legit=2,
        )
        fs = select_top_n(counts, 3)
        assert [sf.term for sf in fs.features] == ["aa", "bb", "cc"]
        assert fs.features[2].weight == 0.0

    def test_single_top(self):
        counts = CorpusCounts(
            counts={
                "aa": FeatureCounts("aa", 9, 0, 2, 0),
                "bb": FeatureCounts("bb", 1, 1, 1, 1),
            },
            n_spam=2, n_legit=2,
        )
        fs = select_top_n(counts, 1)
        assert [sf.term for sf in fs.features] == ["aa"]

    def test_vocabulary_smaller_than_n(self):
        counts = CorpusCounts(
            counts={"aa": FeatureCounts("aa", 2, 1, 1, 1)}, n_spam=1, n_legit=1
        )
        fs = select_top_n(counts, 50)
        assert len(fs) == 1

    def test_matches_naive_sort_oracle(self):
        rng = random.Random(123)
        for _ in range(20):
            c = random_corpus(rng, max_docs=40, max_terms=200)
            fs = select_top_n(count_stats(c), 50)
            expected = oracles.naive_top_n(_as_pairs(c), 50)
            assert [sf.term for sf in fs.features] == [t for t, _ in expected]
            for sf, (_, weight) in zip(fs.features, expected):
                assert abs(sf.weight - weight) <= 1e-12

    def test_duplication_ranking_invariance(self):
        # every term occurs in both classes, so no smoothing is involved and
        # concatenating the corpus with itself scales every weight by k
        rng = random.Random(9)
        base = [
            ("spam", ["alpha", "beta", "beta", "gamma"]),
            ("legit", ["alpha", "gamma", "gamma", "delta"]),
            ("spam", ["delta", "beta", "alpha"]),
            ("legit", ["beta", "delta", "alpha", "alpha"]),
        ]
        for k in (2, 3):
            single = make_corpus(base)
            repeated = make_corpus(base * k)
            fs1 = select_top_n(count_stats(single), 4)
            fsk = select_top_n(count_stats(repeated), 4)
            assert [sf.term for sf in fs1.features] == [
                sf.term for sf in fsk.features
            ]
            for sf1, sfk in zip(fs1.features, fsk.features):
                if sf1.weight:
                    assert abs(sfk.weight / sf1.weight - k) <= 1e-12


class TestSelectionRankWeight:
    def test_zero_when_frequencies_equal(self):
        fc = FeatureCounts("x", tf_spam=4, tf_legit=4, df_spam=3, df_legit=1)
        assert selection_rank_weight(fc, 4, 4) == 0.0

    def test_spam_only(self):
        fc = FeatureCounts("x", tf_spam=7, tf_legit=0, df_spam=3, df_legit=0)
        assert selection_rank_weight(fc, 4, 4) == 0.75

    def test_mixed(self):
        fc = FeatureCounts("x", tf_spam=6, tf_legit=2, df_spam=2, df_legit=1)
        assert selection_rank_weight(fc, 4, 4) == 0.125

    def test_bounds_and_symmetry(self):
        rng = random.Random(8)
        for _ in range(300):
            ns, nl = rng.randint(1, 20), rng.randint(1, 20)
            df_s, df_l = rng.randint(0, ns), rng.randint(0, nl)
            tf_s = rng.randint(df_s, df_s * 4) if df_s else 0
            tf_l = rng.randint(df_l, df_l * 4) if df_l else 0
            if tf_s + tf_l == 0:
                continue
            fc = FeatureCounts("x", tf_s, tf_l, df_s, df_l)
            swapped = FeatureCounts("x", tf_l, tf_s, df_l, df_s)
            value = selection_rank_weight(fc, ns, nl)
            assert 0.0 <= value <= 1.0
            assert value == selection_rank_weight(swapped, nl, ns)


class TestBaselines:
    def test_perfect_association_maximal_chi(self):
        c = make_corpus([
            ("spam", ["win", "cash"]), ("spam", ["win", "prize"]),
            ("legit", ["meeting", "cash"]), ("legit", ["meeting", "notes"]),
        ])
        scores = baseline_score("chi", count_stats(c))
        assert scores["win"] == max(scores.values())
        assert scores["meeting"] == scores["win"]  # equally perfect, other class

    def test_identical_distribution_zero_ig(self):
        c = make_corpus([
            ("spam", ["both", "s1"]), ("spam", ["s2"]),
            ("legit", ["both", "l1"]), ("legit", ["l2"]),
        ])
        scores = baseline_score("ig", count_stats(c))
        assert abs(scores["both"]) <= 1e-15

    @pytest.mark.parametrize("method", features.BASELINE_METHODS)
    def test_matches_contingency_oracle(self, method):
        rng = random.Random(sum(map(ord, method)))
        for _ in range(20):
            c = random_corpus(rng, max_docs=20, max_terms=30)
            scores = baseline_score(method, count_stats(c))
            pairs = _as_pairs(c)
            for term, score in scores.items():
                expected = oracles.naive_baseline(pairs, term, method)
                assert abs(score - expected) <= 1e-9

    def test_unsupported_method(self):
        c = make_corpus([("spam", ["a1"]), ("legit", ["b1"])])
        with pytest.raises(FeatureError, match="unsupported"):
            baseline_score("mrmr", count_stats(c))

    def test_ig_single_class_error(self):
        c = make_corpus([("spam", ["a1"]), ("spam", ["b1"])])
        with pytest.raises(FeatureError, match="both classes"):
            baseline_score("ig", count_stats(c))


class TestVectorize:
    def _fs(self, *terms):
        return FeatureSet(tuple(ScoredFeature(t, 1.0) for t in terms))

    def test_weights(self):
        fs = self._fs("a", "b")
        doc = make_doc(0, "spam", ["a", "a", "b"])
        vec = vectorize(doc, fs)
        norm = math.sqrt(5)
        assert vec.entries == ((0, 2 / norm), (1, 1 / norm))

    def test_no_selected_terms(self):
        fs = self._fs("a", "b")
        doc = make_doc(0, "spam", ["zz", "yy"])
        assert vectorize(doc, fs).entries == ()

    def test_unit_norm_property(self):
        rng = random.Random(4)
        fs = self._fs(*(f"t{i}" for i in range(20)))
        for i in range(100):
            tokens = [f"t{rng.randint(0, 30)}" for _ in range(rng.randint(1, 40))]
            vec = vectorize(make_doc(i, "spam", tokens), fs)
            if vec.entries:
                assert abs(vec.l2_norm() - 1.0) <= 1e-12

    def test_positions_strictly_increasing(self):
        fs = self._fs("c", "a", "b")
        doc = make_doc(0, "spam", ["b", "c", "a", "b"])
        positions = [p for p, _ in vectorize(doc, fs).entries]
        assert positions == sorted(set(positions))

    def test_deterministic(self):
        fs = self._fs("a", "b")
        doc = make_doc(0, "spam", ["a", "b", "a"])
        assert vectorize(doc, fs) == vectorize(doc, fs)


class TestUpdateFeatureSet:
    def _fs_from(self, corpus_, n):
        return select_top_n(count_stats(corpus_), n)

    def test_equal_rank_weights_no_replacement(self):
        # two newcomers with identical selection rank weights: neither
        # strictly exceeds the mean
        old = make_corpus([
            ("spam", ["olds1", "olds2"]), ("legit", ["oldl1", "oldl2"]),
        ])
        fs = self._fs_from(old, 4)
        retrain = make_corpus([
            ("spam", ["olds1", "olds2", "new1", "new2"]),
            ("legit", ["oldl1", "oldl2"]),
        ])
        fs_new, replaced = update_feature_set(fs, retrain, 6)
        assert replaced == 0
        assert set(fs_new.index) == set(fs.index)

    def test_hand_trace(self):
        # newcomer rank weights 0.75 and 0.125; mean 0.4375 admits only the
        # first, evicting the single lowest-weight incumbent
        old = make_corpus([
            ("spam", ["olds1", "olds1", "olds2"]),
            ("legit", ["oldl1", "oldl1", "oldl2"]),
        ])
        fs = self._fs_from(old, 4)
        assert set(fs.index) == {"olds1", "olds2", "oldl1", "oldl2"}
        retrain = make_corpus([
            ("spam", ["new1", "new1", "new1", "new2", "new2", "new2", "olds1"]),
            ("spam", ["new1", "new1", "new2", "new2", "new2", "olds2"]),
            ("spam", ["new1", "new1", "olds1"]),
            ("spam", ["olds1", "olds1"]),
            ("legit", ["new2", "new2", "oldl1"]),
            ("legit", ["oldl1", "oldl2"]),
            ("legit", ["oldl2", "oldl2"]),
            ("legit", ["oldl1"]),
        ])
        stats = count_stats(retrain)
        assert selection_rank_weight(stats.counts["new1"], 4, 4) == 0.75
        assert selection_rank_weight(stats.counts["new2"], 4, 4) == 0.125
        # candidate pool wide enough to surface both newcomers
        fs_new, replaced = update_feature_set(fs, retrain, 6)
        assert replaced == 1
        assert "new1" in fs_new.index
        assert "new2" not in fs_new.index
        assert len(fs_new) == len(fs)
        # the evicted incumbent is the one with the lowest refreshed weight
        incumbents = {
            term: tfdcr_weight(stats.counts[term], 4, 4)
            for term in ("olds1", "olds2", "oldl1", "oldl2")
        }
        evicted = set(fs.index) - set(fs_new.index)
        assert evicted == {min(incumbents, key=lambda t: (incumbents[t], t))}

    def test_dimension_preserved_no_duplicates(self):
        rng = random.Random(31)
        for _ in range(10):
            old = random_corpus(rng, max_docs=20, max_terms=40)
            retrain = random_corpus(rng, max_docs=20, max_terms=60)
            n = 10
            try:
                fs = self._fs_from(old, n)
            except FeatureError:
                continue
            fs_new, replaced = update_feature_set(fs, retrain, len(fs))
            assert len(fs_new) == len(fs)
            terms = [sf.term for sf in fs_new.features]
            assert len(terms) == len(set(terms))
            assert replaced == len(set(terms) - set(fs.index))

    def test_empty_dnfs_refreshes_weights(self):
        old = make_corpus([
            ("spam", ["aa", "bb"]), ("legit", ["cc", "dd"]),
        ])
        fs = self._fs_from(old, 4)
        retrain = make_corpus([
            ("spam", ["aa", "aa", "bb"]), ("legit", ["cc", "dd", "dd"]),
        ])
        fs_new, replaced = update_feature_set(fs, retrain, 4)
        assert replaced == 0
        assert set(fs_new.index) == set(fs.index)
        stats = count_stats(retrain)
        for sf in fs_new.features:
            assert sf.weight == tfdcr_weight(stats.counts[sf.term], 2, 2)


class TestFeatureSetSerialization:
    def test_round_trip(self, tmp_path):
        fs = FeatureSet((
            ScoredFeature("viagra", 12.5),
            ScoredFeature("offer", 1.0 / 3.0),
            ScoredFeature("meeting", 0.0),
        ))
        path = tmp_path / "features.tsv"
        save_feature_set(fs, path)
        loaded = load_feature_set(path)
        assert loaded == fs
        text = path.read_text(encoding="utf-8")
        assert "viagra\t12.5\n" in text

    def test_duplicate_terms_rejected(self):
        with pytest.raises(FeatureError, match="duplicate"):
            FeatureSet((ScoredFeature("a", 1.0), ScoredFeature("a", 2.0)))


class TestSelectTopNScored:
    def test_orders_by_score(self):
        fs = select_top_n_scored({"a": 0.5, "b": 2.0, "c": 1.0}, 2)
        assert [sf.term for sf in fs.features] == ["b", "c"]
