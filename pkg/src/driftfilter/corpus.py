"""Dataset loading, text preprocessing, stream partitioning, synthetic drift."""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from . import porter

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")
_ALL_DIGITS = re.compile(r"^[0-9]+$")

# Per-document token count used by the synthetic generator; spam documents
# draw half their tokens from the legitimate pool so that a vocabulary shift
# in the spam pool actually degrades a stale model.
_SYNTH_DOC_LEN = 20


class CorpusError(Exception):
    """Raised for unloadable datasets and invalid partition requests."""


class Label(Enum):
    SPAM = "spam"
    LEGITIMATE = "legitimate"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Document:
    """One e-mail: label plus its post-preprocessing token sequence.

    Tokens are kept (rather than a fixed vector) so the document can be
    re-vectorized under any later feature set.
    """

    id: str
    label: Label
    tokens: tuple[str, ...]
    arrival_index: int


@dataclass(frozen=True)
class LabeledCorpus:
    documents: tuple[Document, ...]
    skipped_files: int = 0

    def __post_init__(self):
        indices = [d.arrival_index for d in self.documents]
        if indices != sorted(indices):
            raise CorpusError("documents must be sorted by arrival_index")
        if len(set(indices)) != len(indices):
            raise CorpusError("arrival_index values must be unique")

    @property
    def n_spam(self) -> int:
        return sum(1 for d in self.documents if d.label is Label.SPAM)

    @property
    def n_legit(self) -> int:
        return sum(1 for d in self.documents if d.label is Label.LEGITIMATE)

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class StreamPartition:
    training: LabeledCorpus
    test_batches: tuple[LabeledCorpus, ...]


def _make_corpus(docs, skipped=0) -> LabeledCorpus:
    return LabeledCorpus(
        tuple(sorted(docs, key=lambda d: d.arrival_index)), skipped
    )


_STOPWORDS: frozenset[str] | None = None


def stopwords() -> frozenset[str]:
    """The stop-word list shipped with the package (lowercase, one per line)."""
    global _STOPWORDS
    if _STOPWORDS is None:
        text = (
            resources.files("driftfilter").joinpath("data/stopwords.txt")
            .read_text(encoding="utf-8")
        )
        _STOPWORDS = frozenset(w for w in text.split("\n") if w)
    return _STOPWORDS


def tokenize(raw_text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumerics (ASCII).

    Pure-digit tokens and tokens shorter than two characters are dropped.
    Empty input yields an empty list.
    """
    tokens = _TOKEN_SPLIT.split(raw_text.lower())
    return [t for t in tokens if len(t) >= 2 and not _ALL_DIGITS.match(t)]


def remove_stopwords(tokens, stoplist=None) -> list[str]:
    """Filter stop-list members, preserving the order of survivors."""
    if stoplist is None:
        stoplist = stopwords()
    return [t for t in tokens if t not in stoplist]


def stem(token: str) -> str:
    """Porter stem of a single lowercase token."""
    return porter.stem(token)


def _stem_fixpoint(token: str) -> str:
    # A single Porter pass is not idempotent (agreed -> agre -> agr), so the
    # pipeline iterates to a fixed point; rewrites never grow the token, and
    # the only length-preserving rule (y -> i) cannot cycle.
    while True:
        out = porter.stem(token)
        if out == token:
            return out
        token = out


def preprocess_text(raw_text: str, stoplist=None) -> list[str]:
    """Full pipeline: tokenize, drop stopwords, stem.

    Stems are filtered again against the stop list and the minimum length,
    which together with fixed-point stemming makes the pipeline idempotent:
    re-running it over its own output changes nothing.
    """
    if stoplist is None:
        stoplist = stopwords()
    stems = (_stem_fixpoint(t) for t in remove_stopwords(tokenize(raw_text), stoplist))
    return [s for s in stems if len(s) >= 2 and s not in stoplist]


def _read_lossy(path: Path) -> str:
    return path.read_text(encoding="utf-8", errors="replace")


def load_enron(dir_path) -> LabeledCorpus:
    """Load an Enron-layout directory: `spam/` and `ham/` of plain-text files.

    Labels come from the subdirectory; arrival order from the merged filename
    sort (Enron filenames sort chronologically). Unreadable files are skipped
    and counted in `skipped_files`.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise CorpusError(f"dataset directory not found: {root}")
    entries = []
    for subdir, label in (("spam", Label.SPAM), ("ham", Label.LEGITIMATE)):
        sub = root / subdir
        if not sub.is_dir():
            logger.warning("missing %s/ under %s, treating as empty", subdir, root)
            continue
        for path in sub.iterdir():
            if path.is_file():
                entries.append((path.name, subdir, label, path))
    entries.sort(key=lambda e: (e[0], e[1]))
    docs, skipped = [], 0
    for arrival, (name, subdir, label, path) in enumerate(entries):
        try:
            text = _read_lossy(path)
        except OSError as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            skipped += 1
            continue
        docs.append(Document(
            id=f"{subdir}/{name}",
            label=label,
            tokens=tuple(preprocess_text(text)),
            arrival_index=arrival,
        ))
    return _make_corpus(_reindex(docs), skipped)


def _reindex(docs):
    # Skipped files leave holes; arrival_index is the rank among kept docs.
    return [
        Document(d.id, d.label, d.tokens, i)
        for i, d in enumerate(sorted(docs, key=lambda d: d.arrival_index))
    ]


def load_pu(dir_path, spam_pattern: str = "spmsg", legit_pattern: str = "msg") -> LabeledCorpus:
    """Load a PU-layout directory: fold subdirectories of message files.

    Class membership is encoded in filenames: `spam_pattern` is tried first,
    then `legit_pattern` (both regex searches); unmatched files are skipped
    with a warning. Arrival order is a plain (fold, filename) sort; these
    corpora carry no chronology.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise CorpusError(f"dataset directory not found: {root}")
    spam_re = re.compile(spam_pattern)
    legit_re = re.compile(legit_pattern)
    folds = sorted(p for p in root.iterdir() if p.is_dir())
    if not folds:
        folds = [root]
    entries = []
    for fold in folds:
        for path in sorted(fold.iterdir()):
            if path.is_file():
                entries.append((fold.name if fold != root else "", path))
    docs, skipped = [], 0
    arrival = 0
    for fold_name, path in entries:
        if spam_re.search(path.name):
            label = Label.SPAM
        elif legit_re.search(path.name):
            label = Label.LEGITIMATE
        else:
            logger.warning("skipping file with unrecognized name: %s", path)
            skipped += 1
            continue
        try:
            text = _read_lossy(path)
        except OSError as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            skipped += 1
            continue
        docs.append(Document(
            id=f"{fold_name}/{path.name}" if fold_name else path.name,
            label=label,
            tokens=tuple(preprocess_text(text)),
            arrival_index=arrival,
        ))
        arrival += 1
    return _make_corpus(docs, skipped)


def load_ecml(file_path) -> LabeledCorpus:
    """Load a token-id dataset: one e-mail per line, `label id:count ...`.

    The label marker is 1 (spam) or -1 (legitimate). Tokens are the id
    strings repeated `count` times; the preprocessing pipeline is skipped
    because the data is already tokenized.
    """
    path = Path(file_path)
    if not path.is_file():
        raise CorpusError(f"dataset file not found: {path}")
    docs = []
    arrival = 0
    with open(path, encoding="utf-8", errors="replace") as handle:
        for line_no, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "1":
                label = Label.SPAM
            elif parts[0] == "-1":
                label = Label.LEGITIMATE
            else:
                raise CorpusError(f"{path}:{line_no}: bad label marker {parts[0]!r}")
            tokens = []
            for pair in parts[1:]:
                token_id, sep, count_text = pair.partition(":")
                if not sep or not token_id:
                    raise CorpusError(f"{path}:{line_no}: malformed pair {pair!r}")
                try:
                    count = int(count_text)
                except ValueError:
                    raise CorpusError(
                        f"{path}:{line_no}: malformed count in {pair!r}"
                    ) from None
                if count < 0:
                    raise CorpusError(f"{path}:{line_no}: negative count in {pair!r}")
                tokens.extend([token_id] * count)
            docs.append(Document(
                id=f"{path.stem}:line{line_no}",
                label=label,
                tokens=tuple(tokens),
                arrival_index=arrival,
            ))
            arrival += 1
    return _make_corpus(docs)


def partition_stream(
    corpus: LabeledCorpus,
    train_fraction: float,
    n_batches: int,
    chronological: bool = True,
    seed: int = 0,
) -> StreamPartition:
    """Split a corpus into a training prefix and near-equal test batches.

    The first ceil(train_fraction * n) documents form the training set, taken
    in arrival order when `chronological` else under a seeded shuffle. The
    remainder is cut into `n_batches` contiguous batches whose sizes differ
    by at most one.
    """
    if not 0 < train_fraction < 1:
        raise CorpusError(f"train_fraction must be in (0,1), got {train_fraction}")
    if n_batches < 1:
        raise CorpusError(f"n_batches must be >= 1, got {n_batches}")
    if not corpus.documents:
        raise CorpusError("cannot partition an empty corpus")
    order = list(corpus.documents)
    if not chronological:
        random.Random(seed).shuffle(order)
    n_train = math.ceil(train_fraction * len(order))
    test = order[n_train:]
    batches = split_batches(test, n_batches)
    return StreamPartition(_make_corpus(order[:n_train]), batches)


def split_batches(documents, n_batches: int) -> tuple[LabeledCorpus, ...]:
    """Cut a document sequence into contiguous batches differing by <= 1 in size."""
    documents = list(documents)
    if n_batches > len(documents):
        raise CorpusError(
            f"n_batches={n_batches} exceeds test size {len(documents)}"
        )
    base, extra = divmod(len(documents), n_batches)
    batches = []
    pos = 0
    for i in range(n_batches):
        size = base + (1 if i < extra else 0)
        batches.append(_make_corpus(documents[pos:pos + size]))
        pos += size
    return tuple(batches)


def synth_drift(
    seed: int,
    vocab_size: int = 400,
    docs_per_phase: int = 1000,
    drift_point: int | None = None,
    overlap: float = 0.2,
) -> LabeledCorpus:
    """Generate a two-phase stream whose spam vocabulary shifts mid-stream.

    Phase 1 draws spam from one token pool and legitimate mail from a
    disjoint pool; from `drift_point` on, the spam pool is replaced by a
    fresh pool sharing an `overlap` fraction of its tokens with the old one.
    Spam documents always mix in legitimate-pool tokens, so post-drift spam
    resembles legitimate mail to a model trained on phase 1. Labels
    alternate, keeping both phases balanced. Same seed, same corpus.
    """
    if not 0.0 <= overlap <= 1.0:
        raise CorpusError(f"overlap must be in [0,1], got {overlap}")
    total = docs_per_phase * 2
    if drift_point is None:
        drift_point = docs_per_phase
    if not 0 < drift_point < total:
        raise CorpusError(f"drift_point must be in (0,{total}), got {drift_point}")
    n_legit = vocab_size // 2
    n_spam = vocab_size // 4
    n_reserve = vocab_size - n_legit - n_spam
    if n_spam < 1 or n_reserve < n_spam:
        raise CorpusError(f"vocab_size={vocab_size} too small to carve pools")
    rng = random.Random(seed)
    legit_pool = [f"lg{i:04d}" for i in range(n_legit)]
    spam_pool = [f"sp{i:04d}" for i in range(n_spam)]
    reserve = [f"dr{i:04d}" for i in range(n_reserve)]
    kept = round(overlap * n_spam)
    if kept == n_spam:
        drifted_pool = list(spam_pool)
    else:
        drifted_pool = sorted(rng.sample(spam_pool, kept)) + reserve[: n_spam - kept]
    half = _SYNTH_DOC_LEN // 2
    docs = []
    for arrival in range(total):
        pool = spam_pool if arrival < drift_point else drifted_pool
        if arrival % 2 == 0:
            label = Label.SPAM
            tokens = [rng.choice(pool) for _ in range(half)]
            tokens += [rng.choice(legit_pool) for _ in range(_SYNTH_DOC_LEN - half)]
            rng.shuffle(tokens)
        else:
            label = Label.LEGITIMATE
            tokens = [rng.choice(legit_pool) for _ in range(_SYNTH_DOC_LEN)]
        docs.append(Document(
            id=f"synth{arrival:05d}",
            label=label,
            tokens=tuple(tokens),
            arrival_index=arrival,
        ))
    return _make_corpus(docs)


def write_enron_layout(corpus: LabeledCorpus, dir_path) -> None:
    """Dump a corpus to disk in the Enron layout (spam/ and ham/ text files).

    Filenames are zero-padded arrival indices so a reload preserves order;
    tokens are space-joined, and generator tokens are preprocessing fixed
    points, so a round trip through load_enron is lossless.
    """
    root = Path(dir_path)
    for sub in ("spam", "ham"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for doc in corpus.documents:
        if doc.label is Label.SPAM:
            sub = "spam"
        elif doc.label is Label.LEGITIMATE:
            sub = "ham"
        else:
            continue
        path = root / sub / f"{doc.arrival_index:05d}.txt"
        path.write_text(" ".join(doc.tokens) + "\n", encoding="utf-8")
