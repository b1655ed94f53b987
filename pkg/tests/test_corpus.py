import math
import random

import pytest

from driftfilter import corpus
from driftfilter.corpus import (
    CorpusError, Document, Label, LabeledCorpus, load_ecml, load_enron,
    load_pu, partition_stream, preprocess_text, remove_stopwords, stem,
    stopwords, synth_drift, tokenize, write_enron_layout,
)

from conftest import make_doc, make_corpus


class TestTokenize:
    def test_basic(self):
        assert tokenize("Buy VIAGRA now!!") == ["buy", "viagra", "now"]

    def test_empty(self):
        assert tokenize("") == []

    def test_digit_tokens_dropped(self):
        assert tokenize("123 456") == []

    def test_short_tokens_dropped(self):
        assert tokenize("a I x offer") == ["offer"]

    def test_mixed_alnum_kept(self):
        assert tokenize("v1agra 4u") == ["v1agra", "4u"]

    def test_separators(self):
        assert tokenize("free--money,now!cash") == ["free", "money", "now", "cash"]

    def test_no_uppercase_in_output(self):
        rng = random.Random(1)
        for _ in range(50):
            text = "".join(rng.choice("AbC dE!7.") for _ in range(80))
            for token in tokenize(text):
                assert token == token.lower()


class TestStopwords:
    def test_filter(self):
        assert remove_stopwords(["the", "cat"], {"the"}) == ["cat"]

    def test_empty(self):
        assert remove_stopwords([], {"the"}) == []

    def test_shipped_list(self):
        assert remove_stopwords(["a", "an", "offer"]) == ["offer"]

    def test_shipped_list_is_lowercase(self):
        for word in stopwords():
            assert word == word.lower()
            assert word


class TestStem:
    def test_examples(self):
        assert stem("caresses") == "caress"
        assert stem("ponies") == "poni"
        assert stem("cat") == "cat"


class TestPreprocess:
    def test_pipeline(self):
        out = preprocess_text("The ponies were RUNNING faster!!")
        assert out == ["poni", "run", "faster"]

    def test_idempotent_on_adversarial_words(self):
        # agreed restems (agre -> agr), ones stems onto a stopword, ies
        # stems below the length floor; the pipeline must absorb all three.
        text = "agreed ones ies caresses offer 123 the"
        first = preprocess_text(text)
        second = preprocess_text(" ".join(first))
        assert first == second

    def test_idempotent_random(self):
        rng = random.Random(42)
        words = [
            "agreed", "agree", "ones", "ies", "running", "viagra", "offer",
            "the", "money", "123", "a", "classes", "sses", "dying", "sky",
            "feudalism", "hopefulness", "...", "x9", "caresses",
        ]
        for _ in range(100):
            text = " ".join(rng.choice(words) for _ in range(rng.randint(0, 40)))
            first = preprocess_text(text)
            second = preprocess_text(" ".join(first))
            assert first == second

    def test_output_clean(self):
        out = preprocess_text("The THE tHe spammy offer now 99")
        stop = stopwords()
        for token in out:
            assert token == token.lower()
            assert token not in stop
            assert len(token) >= 2


class TestLabeledCorpus:
    def test_requires_sorted(self):
        docs = (make_doc(1, "spam", ["aa"]), make_doc(0, "legit", ["bb"]))
        with pytest.raises(CorpusError):
            LabeledCorpus(docs)

    def test_requires_unique_arrival(self):
        docs = (make_doc(0, "spam", ["aa"]), make_doc(0, "legit", ["bb"]))
        with pytest.raises(CorpusError):
            LabeledCorpus(docs)

    def test_counts(self):
        c = make_corpus([("spam", ["aa"]), ("legit", ["bb"]), ("legit", ["cc"])])
        assert c.n_spam == 1
        assert c.n_legit == 2


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


class TestLoadEnron:
    def test_counts_and_labels(self, tmp_path):
        _write(tmp_path / "ham" / "0001.txt", "hello meeting tomorrow")
        _write(tmp_path / "ham" / "0003.txt", "lunch plans friday")
        _write(tmp_path / "spam" / "0002.txt", "buy viagra now")
        c = load_enron(tmp_path)
        assert c.n_legit == 2
        assert c.n_spam == 1
        # merged filename sort: 0001(ham), 0002(spam), 0003(ham)
        assert [d.label for d in c.documents] == [
            Label.LEGITIMATE, Label.SPAM, Label.LEGITIMATE,
        ]
        assert [d.arrival_index for d in c.documents] == [0, 1, 2]

    def test_empty_spam_dir(self, tmp_path):
        (tmp_path / "spam").mkdir()
        _write(tmp_path / "ham" / "0001.txt", "hello world")
        c = load_enron(tmp_path)
        assert c.n_spam == 0
        assert c.n_legit == 1

    def test_scaled_proportions(self, tmp_path):
        # 1:100 scale of a 1500/3672 spam/ham folder
        for i in range(15):
            _write(tmp_path / "spam" / f"{i:04d}.s.txt", f"offer cash win{i}")
        for i in range(37):
            _write(tmp_path / "ham" / f"{i:04d}.h.txt", f"meeting notes item{i}")
        c = load_enron(tmp_path)
        assert c.n_spam == 15
        assert c.n_legit == 37

    def test_missing_dir(self, tmp_path):
        missing = tmp_path / "nope"
        with pytest.raises(CorpusError, match="nope"):
            load_enron(missing)

    def test_preprocessing_applied(self, tmp_path):
        _write(tmp_path / "spam" / "0001.txt", "The PONIES are RUNNING!!")
        c = load_enron(tmp_path)
        assert c.documents[0].tokens == ("poni", "run")

    def test_invalid_bytes_decoded_lossily(self, tmp_path):
        path = tmp_path / "spam" / "0001.txt"
        path.parent.mkdir(parents=True)
        path.write_bytes(b"\xff\xfe buy viagra \x80 now")
        c = load_enron(tmp_path)
        assert c.skipped_files == 0
        assert "viagra" in c.documents[0].tokens


class TestLoadPu:
    def test_patterns(self, tmp_path):
        _write(tmp_path / "part1" / "spmsg001.txt", "buy pills")
        _write(tmp_path / "part1" / "3-1msg1.txt", "project update")
        _write(tmp_path / "part2" / "spmsg002.txt", "cheap offer")
        c = load_pu(tmp_path)
        assert c.n_spam == 2
        assert c.n_legit == 1
        assert c.skipped_files == 0

    def test_single_spam_file(self, tmp_path):
        _write(tmp_path / "part1" / "spmsg001.txt", "win money")
        c = load_pu(tmp_path)
        assert c.n_spam == 1

    def test_unmatched_filename_skipped(self, tmp_path):
        _write(tmp_path / "part1" / "spmsg001.txt", "win money")
        _write(tmp_path / "part1" / "readme.weird", "not a message")
        c = load_pu(tmp_path, legit_pattern=r"\dmsg")
        assert c.skipped_files == 1
        assert len(c.documents) == 1


class TestLoadEcml:
    def test_line_expansion(self, tmp_path):
        path = tmp_path / "train.dat"
        path.write_text("1 12:3 47:1\n-1\n", encoding="utf-8")
        c = load_ecml(path)
        assert c.documents[0].tokens == ("12", "12", "12", "47")
        assert c.documents[0].label is Label.SPAM
        assert c.documents[1].tokens == ()
        assert c.documents[1].label is Label.LEGITIMATE

    def test_malformed_count(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("1 12:x\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="bad.dat:1"):
            load_ecml(path)

    def test_negative_count(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("1 12:3\n-1 5:-2\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="bad.dat:2"):
            load_ecml(path)

    def test_bad_label(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("2 12:3\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="label"):
            load_ecml(path)


def _numbered_corpus(n):
    return make_corpus([
        ("spam" if i % 2 == 0 else "legit", [f"tok{i % 7}"]) for i in range(n)
    ])


class TestPartitionStream:
    def test_thirty_docs(self):
        part = partition_stream(_numbered_corpus(30), 1 / 3, 10)
        assert len(part.training) == 10
        assert [len(b) for b in part.test_batches] == [2] * 10

    def test_ten_docs_half(self):
        part = partition_stream(_numbered_corpus(10), 0.5, 1)
        assert len(part.training) == 5
        assert len(part.test_batches[0]) == 5

    def test_enron_sized(self):
        part = partition_stream(_numbered_corpus(5172), 1 / 3, 10)
        assert len(part.training) == math.ceil(5172 / 3) == 1724
        sizes = [len(b) for b in part.test_batches]
        assert sizes == [345] * 8 + [344] * 2

    def test_conservation(self):
        for n in (7, 30, 101):
            c = _numbered_corpus(n)
            part = partition_stream(c, 0.4, 3)
            total = len(part.training) + sum(len(b) for b in part.test_batches)
            assert total == len(c)

    def test_chronological_precedence(self):
        part = partition_stream(_numbered_corpus(30), 1 / 3, 5)
        max_train = max(d.arrival_index for d in part.training.documents)
        min_test = min(
            d.arrival_index for b in part.test_batches for d in b.documents
        )
        assert max_train < min_test

    def test_shuffled_deterministic(self):
        c = _numbered_corpus(40)
        p1 = partition_stream(c, 0.5, 4, chronological=False, seed=9)
        p2 = partition_stream(c, 0.5, 4, chronological=False, seed=9)
        assert [d.id for d in p1.training.documents] == [
            d.id for d in p2.training.documents
        ]
        p3 = partition_stream(c, 0.5, 4, chronological=False, seed=10)
        assert [d.id for d in p1.training.documents] != [
            d.id for d in p3.training.documents
        ]

    def test_too_many_batches(self):
        with pytest.raises(CorpusError, match="n_batches"):
            partition_stream(_numbered_corpus(10), 0.5, 6)

    def test_batches_sorted(self):
        part = partition_stream(_numbered_corpus(30), 1 / 3, 5)
        for batch in part.test_batches:
            indices = [d.arrival_index for d in batch.documents]
            assert indices == sorted(indices)


def _phase_exclusive_vocab(stream, lo, hi):
    spam_tokens, legit_tokens = set(), set()
    for doc in stream.documents[lo:hi]:
        if doc.label is Label.SPAM:
            spam_tokens.update(doc.tokens)
        else:
            legit_tokens.update(doc.tokens)
    return spam_tokens - legit_tokens


class TestSynthDrift:
    def test_deterministic(self):
        a = synth_drift(5, vocab_size=120, docs_per_phase=40)
        b = synth_drift(5, vocab_size=120, docs_per_phase=40)
        assert a == b

    def test_overlap_one_keeps_spam_vocab(self):
        stream = synth_drift(3, vocab_size=120, docs_per_phase=100, overlap=1.0)
        first = _phase_exclusive_vocab(stream, 0, 100)
        second = _phase_exclusive_vocab(stream, 100, 200)
        assert first == second

    def test_overlap_zero_disjoint_spam_vocab(self):
        stream = synth_drift(3, vocab_size=120, docs_per_phase=100, overlap=0.0)
        first = _phase_exclusive_vocab(stream, 0, 100)
        second = _phase_exclusive_vocab(stream, 100, 200)
        assert first
        assert second
        assert not first & second

    def test_overlap_out_of_range(self):
        with pytest.raises(CorpusError, match="overlap"):
            synth_drift(1, overlap=1.5)

    def test_labels_balanced(self):
        stream = synth_drift(2, vocab_size=120, docs_per_phase=50)
        assert stream.n_spam == stream.n_legit == 50


class TestEnronRoundTrip:
    def test_dump_and_reload(self, tmp_path):
        stream = synth_drift(11, vocab_size=120, docs_per_phase=30)
        write_enron_layout(stream, tmp_path / "dump")
        reloaded = load_enron(tmp_path / "dump")
        original = [(d.label, d.tokens) for d in stream.documents]
        loaded = [(d.label, d.tokens) for d in reloaded.documents]
        assert original == loaded
