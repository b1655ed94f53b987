"""Feature statistics, discriminative-weight scoring, selection and update.

The primary scorer weights a term by its raw occurrence difference between
classes times a category-ratio product; five classic document-frequency
selectors (ig, chi, gini, igr, cfs) are provided for comparison runs.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import LabeledCorpus, Document, Label

logger = logging.getLogger(__name__)

BASELINE_METHODS = ("ig", "chi", "gini", "igr", "cfs")
SELECTORS = ("tfdcr",) + BASELINE_METHODS


class FeatureError(Exception):
    """Raised for degenerate inputs to scoring or selection."""


@dataclass(frozen=True)
class FeatureCounts:
    """Raw per-term class statistics: total occurrences and document counts."""

    term: str
    tf_spam: int = 0
    tf_legit: int = 0
    df_spam: int = 0
    df_legit: int = 0


@dataclass(frozen=True)
class CorpusCounts:
    counts: dict[str, FeatureCounts]
    n_spam: int
    n_legit: int


@dataclass(frozen=True)
class ScoredFeature:
    term: str
    weight: float  # discriminative weight (or baseline score)


@dataclass(frozen=True)
class FeatureSet:
    """Ordered selected features with a term -> position lookup."""

    features: tuple[ScoredFeature, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)
    tag: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {sf.term: i for i, sf in enumerate(self.features)}
        if len(index) != len(self.features):
            raise FeatureError("duplicate terms in feature set")
        digest = hashlib.sha1(
            "\n".join(sf.term for sf in self.features).encode("utf-8")
        ).hexdigest()
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "tag", digest)

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, term: str) -> bool:
        return term in self.index


@dataclass(frozen=True)
class SparseVector:
    """L2-normalized sparse document vector over a feature set.

    Entries are (position, weight) pairs with strictly increasing positions
    and no stored zeros; `feature_tag` identifies the feature set the
    positions refer to.
    """

    entries: tuple[tuple[int, float], ...]
    feature_tag: str | None = None

    def __post_init__(self):
        positions = [p for p, _ in self.entries]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise FeatureError("entry positions must be strictly increasing")
        if any(w == 0.0 for _, w in self.entries):
            raise FeatureError("zero weights must not be stored")

    def l2_norm(self) -> float:
        return math.sqrt(sum(w * w for _, w in self.entries))


def count_stats(corpus: LabeledCorpus) -> CorpusCounts:
    """Exact term and document occurrence counts per class.

    Unlabeled documents are excluded; a corpus without any labeled document
    is an error.
    """
    n_spam = corpus.n_spam
    n_legit = corpus.n_legit
    if n_spam + n_legit == 0:
        raise FeatureError("corpus has no labeled documents")
    tf_spam: Counter[str] = Counter()
    tf_legit: Counter[str] = Counter()
    df_spam: Counter[str] = Counter()
    df_legit: Counter[str] = Counter()
    for doc in corpus.documents:
        if doc.label is Label.SPAM:
            tf, df = tf_spam, df_spam
        elif doc.label is Label.LEGITIMATE:
            tf, df = tf_legit, df_legit
        else:
            continue
        occurrences = Counter(doc.tokens)
        tf.update(occurrences)
        df.update(occurrences.keys())
    counts = {}
    for term in set(tf_spam) | set(tf_legit):
        counts[term] = FeatureCounts(
            term=term,
            tf_spam=tf_spam[term],
            tf_legit=tf_legit[term],
            df_spam=df_spam[term],
            df_legit=df_legit[term],
        )
    return CorpusCounts(counts=counts, n_spam=n_spam, n_legit=n_legit)


def tfdcr_weight(fc: FeatureCounts, n_spam: int, n_legit: int) -> float:
    """Discriminative weight: |tf difference| times the category-ratio product.

    The product divides the larger of the two document-frequency ratios by
    the smaller, expressed as (df/N of the dominant class) * (N/df of the
    other class); a zero document frequency appearing in a denominator is
    replaced by 0.5 so class-exclusive terms get a large finite weight
    ordered by their occurrence difference.
    """
    delta = abs(fc.tf_spam - fc.tf_legit)
    if fc.df_spam / n_spam > fc.df_legit / n_legit:
        denom = fc.df_legit if fc.df_legit > 0 else 0.5
        product = (fc.df_spam / n_spam) * (n_legit / denom)
    else:
        denom = fc.df_spam if fc.df_spam > 0 else 0.5
        product = (fc.df_legit / n_legit) * (n_spam / denom)
    return delta * product


def selection_rank_weight(fc: FeatureCounts, n_spam: int, n_legit: int) -> float:
    """Category-ratio difference times normalized occurrence difference.

    Ranks candidate features during an incremental update; always in [0, 1]
    and symmetric in the two class roles.
    """
    ratio_diff = abs(fc.df_spam / n_spam - fc.df_legit / n_legit)
    tf_total = fc.tf_spam + fc.tf_legit
    return ratio_diff * abs(fc.tf_spam - fc.tf_legit) / tf_total


def _build_feature_set(scored, n: int) -> FeatureSet:
    ordered = sorted(scored, key=lambda sf: (-sf.weight, sf.term))
    if len(ordered) < n:
        logger.info(
            "vocabulary %d smaller than requested dimensionality %d",
            len(ordered), n,
        )
    return FeatureSet(tuple(ordered[:n]))


def select_top_n(counts: CorpusCounts, n: int) -> FeatureSet:
    """Top-n features by discriminative weight, ties broken by term.

    When the vocabulary is smaller than n the feature set takes the
    vocabulary size as its dimensionality.
    """
    if n < 1:
        raise FeatureError(f"n must be >= 1, got {n}")
    if counts.n_spam == 0 or counts.n_legit == 0:
        raise FeatureError("discriminative weights require both classes present")
    scored = [
        ScoredFeature(term, tfdcr_weight(fc, counts.n_spam, counts.n_legit))
        for term, fc in counts.counts.items()
    ]
    return _build_feature_set(scored, n)


def select_top_n_scored(scores: dict[str, float], n: int) -> FeatureSet:
    """Top-n features from an arbitrary score map (baseline selectors)."""
    if n < 1:
        raise FeatureError(f"n must be >= 1, got {n}")
    scored = [ScoredFeature(term, score) for term, score in scores.items()]
    return _build_feature_set(scored, n)


def _entropy(probabilities) -> float:
    return -sum(p * math.log2(p) for p in probabilities if p > 0)


def _mutual_information(a, b, c, d, total) -> float:
    # a..d are the present/absent x spam/legit document contingency cells.
    info = 0.0
    for joint, row, col in (
        (a, a + b, a + c),
        (b, a + b, b + d),
        (c, c + d, a + c),
        (d, c + d, b + d),
    ):
        if joint > 0:
            info += (joint / total) * math.log2(joint * total / (row * col))
    return info


def baseline_score(method: str, counts: CorpusCounts) -> dict[str, float]:
    """Score every term with one of the classic selectors.

    All five use the document-frequency contingency table
    (a=df_spam, b=df_legit, c=n_spam-a, d=n_legit-b, N=n_spam+n_legit):

    - ig:   information gain, the mutual information between term presence
            and the class, sum over cells of P(e,c)*log2(P(e,c)/(P(e)P(c)))
    - chi:  chi-square statistic N*(ad-cb)^2 / ((a+b)(c+d)(a+c)(b+d))
    - gini: gini index P(t|s)^2*P(s|t)^2 + P(t|l)^2*P(l|t)^2
    - igr:  ig divided by the split entropy of term presence
    - cfs:  symmetrical uncertainty 2*ig / (H(class) + H(presence))

    Zero denominators score 0.
    """
    if method not in BASELINE_METHODS:
        raise FeatureError(f"unsupported selection method: {method!r}")
    ns, nl = counts.n_spam, counts.n_legit
    if method in ("ig", "igr") and (ns == 0 or nl == 0):
        raise FeatureError(f"{method} requires both classes present")
    total = ns + nl
    h_class = _entropy((ns / total, nl / total))
    scores = {}
    for term, fc in counts.counts.items():
        a, b = fc.df_spam, fc.df_legit
        c, d = ns - a, nl - b
        if method == "chi":
            denom = (a + b) * (c + d) * (a + c) * (b + d)
            scores[term] = total * (a * d - c * b) ** 2 / denom if denom else 0.0
        elif method == "gini":
            present = a + b
            p_s = (a / ns) ** 2 * (a / present) ** 2 if ns else 0.0
            p_l = (b / nl) ** 2 * (b / present) ** 2 if nl else 0.0
            scores[term] = p_s + p_l
        else:
            ig = _mutual_information(a, b, c, d, total)
            if method == "ig":
                scores[term] = ig
            else:
                h_term = _entropy(((a + b) / total, (c + d) / total))
                if method == "igr":
                    scores[term] = ig / h_term if h_term > 0 else 0.0
                else:  # cfs
                    denom = h_class + h_term
                    scores[term] = 2.0 * ig / denom if denom > 0 else 0.0
    return scores


def vectorize(doc: Document, fs: FeatureSet) -> SparseVector:
    """Raw term-frequency vector over the feature set, L2-normalized.

    Documents containing no selected feature yield the empty vector.
    """
    if not fs.features:
        raise FeatureError("cannot vectorize against an empty feature set")
    counts: Counter[int] = Counter()
    for token in doc.tokens:
        position = fs.index.get(token)
        if position is not None:
            counts[position] += 1
    if not counts:
        return SparseVector((), fs.tag)
    norm = math.sqrt(sum(c * c for c in counts.values()))
    entries = tuple(
        (position, counts[position] / norm) for position in sorted(counts)
    )
    return SparseVector(entries, fs.tag)


def update_feature_set(
    fs_prev: FeatureSet, retrain_corpus: LabeledCorpus, n: int
) -> tuple[FeatureSet, int]:
    """Swap weak incumbents for strong newcomers found in the retraining set.

    Candidates are the top-n discriminative features of the retraining
    corpus; of the candidates not already present, those whose selection
    rank weight strictly exceeds the candidates' mean are added, and an
    equal number of incumbents with the lowest (recomputed) discriminative
    weight is removed. Dimensionality is preserved exactly; all weights in
    the result are on the retraining-corpus scale.
    """
    counts = count_stats(retrain_corpus)
    ns, nl = counts.n_spam, counts.n_legit

    def refreshed_weight(term: str) -> float:
        fc = counts.counts.get(term)
        # Terms absent from the retraining corpus carry no discriminating
        # evidence there; their refreshed weight is zero.
        return tfdcr_weight(fc, ns, nl) if fc is not None else 0.0

    incumbents = [
        ScoredFeature(sf.term, refreshed_weight(sf.term)) for sf in fs_prev.features
    ]
    candidates = select_top_n(counts, n)
    newcomers = [sf for sf in candidates.features if sf.term not in fs_prev.index]
    if not newcomers:
        return _build_feature_set(incumbents, len(incumbents)), 0
    rank = {
        sf.term: selection_rank_weight(counts.counts[sf.term], ns, nl)
        for sf in newcomers
    }
    mean_rank = sum(rank.values()) / len(rank)
    additions = [sf for sf in newcomers if rank[sf.term] > mean_rank]
    additions.sort(key=lambda sf: (-rank[sf.term], sf.term))
    replaced = min(len(additions), len(incumbents))
    additions = additions[:replaced]
    if replaced == 0:
        return _build_feature_set(incumbents, len(incumbents)), 0
    survivors = sorted(incumbents, key=lambda sf: (sf.weight, sf.term))[replaced:]
    merged = survivors + additions
    return _build_feature_set(merged, len(merged)), replaced


def save_feature_set(fs: FeatureSet, path) -> None:
    """Write `term<TAB>weight` lines (UTF-8, LF, shortest-round-trip floats)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for sf in fs.features:
            handle.write(f"{sf.term}\t{sf.weight!r}\n")


def load_feature_set(path) -> FeatureSet:
    features = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            term, _, weight = line.partition("\t")
            features.append(ScoredFeature(term, float(weight)))
    return FeatureSet(tuple(features))
