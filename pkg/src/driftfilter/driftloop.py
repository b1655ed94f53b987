"""Streamed filtering with validation triggers and incremental retraining.

Pass I trains a batch model over the training prefix; Pass II classifies
test batches until a validation criterion fires (accuracy at or below the
threshold, or a false-positive-rate increase); Pass III rebuilds the
feature set from the retraining set (misclassified mail + support vectors
+ the violating batch) and retrains the model on it, then testing resumes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum

from . import features, metrics, svm
from .corpus import Document, Label, LabeledCorpus, StreamPartition

logger = logging.getLogger(__name__)


class DriftLoopError(Exception):
    """Raised for invalid session inputs."""


class SessionHalted(DriftLoopError):
    """Raised when a retraining set degenerates to a single class."""


class FprTrigger(Enum):
    PREV_BATCH = "prev_batch"
    SINCE_RETRAIN = "since_retrain"


class TriggerCause(Enum):
    NONE = "none"
    ACCURACY_BELOW_RHO = "accuracy_below_rho"
    FPR_INCREASED = "fpr_increased"


class SessionMode(Enum):
    BATCH = "batch"
    INCREMENTAL = "incremental"


@dataclass(frozen=True)
class DriftConfig:
    rho: float = 0.9
    fpr_trigger: FprTrigger = FprTrigger.PREV_BATCH
    feature_dim: int = 500
    train_config: svm.TrainConfig = field(default_factory=svm.TrainConfig)
    selector: str = "tfdcr"

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise DriftLoopError(f"rho must be in (0,1), got {self.rho}")
        if self.feature_dim < 1:
            raise DriftLoopError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.selector not in features.SELECTORS:
            raise DriftLoopError(f"unknown selector: {self.selector!r}")


@dataclass(frozen=True)
class TriggerDecision:
    fired: bool
    cause: TriggerCause
    batch_index: int


@dataclass(frozen=True)
class BatchResult:
    index: int
    cm: metrics.ConfusionMatrix
    accuracy: float
    fpr: float | None
    fnr: float | None
    scores: tuple[float, ...]
    truths: tuple[int, ...]


@dataclass
class FilterState:
    """The mutable filtering unit: current features, model, and bookkeeping."""

    generation: int
    feature_set: features.FeatureSet
    model: svm.SvmModel
    sv_documents: tuple[Document, ...]
    misclassified: list[Document] = field(default_factory=list)
    batch_history: list[tuple[float, float | None]] = field(default_factory=list)


@dataclass(frozen=True)
class RetrainEvent:
    batch_index: int
    generation: int
    cause: TriggerCause
    replaced_features: int
    retrain_size: int
    cumulative_seen: int
    pre_accuracy: float
    post_accuracy: float


def _label_to_int(label: Label) -> int:
    if label is Label.SPAM:
        return 1
    if label is Label.LEGITIMATE:
        return -1
    raise DriftLoopError("evaluation requires labeled documents")


def build_feature_set(training: LabeledCorpus, config: DriftConfig) -> features.FeatureSet:
    """Top-N feature set of the training corpus under the configured selector."""
    counts = features.count_stats(training)
    if config.selector == "tfdcr":
        return features.select_top_n(counts, config.feature_dim)
    scores = features.baseline_score(config.selector, counts)
    return features.select_top_n_scored(scores, config.feature_dim)


def _train_on(docs, fs: features.FeatureSet, config: DriftConfig) -> svm.SvmModel:
    vectors = [features.vectorize(d, fs) for d in docs]
    labels = [_label_to_int(d.label) for d in docs]
    return svm.train_smo(
        vectors, labels, config.train_config, doc_ids=[d.id for d in docs]
    )


def _sv_documents(model: svm.SvmModel, docs) -> tuple[Document, ...]:
    by_id = {d.id: d for d in docs}
    return tuple(by_id[doc_id] for doc_id in model.sv_doc_ids)


def run_batch_phase(training: LabeledCorpus, config: DriftConfig) -> FilterState:
    """Pass I: select features over the training corpus and train the model."""
    fs = build_feature_set(training, config)
    model = _train_on(training.documents, fs, config)
    return FilterState(
        generation=0,
        feature_set=fs,
        model=model,
        sv_documents=_sv_documents(model, training.documents),
    )


def evaluate_batch(state: FilterState, batch: LabeledCorpus):
    """Classify one batch; returns its result and the misclassified documents.

    Misclassified documents are handed back with their true labels attached,
    standing in for the user feedback the retraining pass relies on.
    """
    if not batch.documents:
        raise DriftLoopError("cannot evaluate an empty batch")
    vectors = [features.vectorize(d, state.feature_set) for d in batch.documents]
    scores = svm.decision_scores(state.model, vectors)
    predictions = [1 if s > 0 else -1 for s in scores]
    truths = [_label_to_int(d.label) for d in batch.documents]
    cm = metrics.confusion(predictions, truths)
    accuracy, fpr, fnr = metrics.rates(cm)
    misclassified = [
        doc for doc, pred, truth in zip(batch.documents, predictions, truths)
        if pred != truth
    ]
    result = BatchResult(
        index=batch.documents[0].arrival_index,
        cm=cm,
        accuracy=accuracy,
        fpr=fpr,
        fnr=fnr,
        scores=tuple(scores),
        truths=tuple(truths),
    )
    return result, misclassified


def check_validation(history, config: DriftConfig, batch_index: int = -1) -> TriggerDecision:
    """Decide whether the latest batch violates a validation criterion.

    `history` holds (accuracy, fpr) pairs since the last retrain. Accuracy
    at or below rho fires first; otherwise an FPR strictly above the
    reference (previous batch, or the first batch since retraining) fires.
    The FPR cause never fires while only one batch has been seen since the
    last retrain: there is no reference yet.
    """
    if not history:
        raise DriftLoopError("check_validation requires at least one batch")
    accuracy, fpr = history[-1]
    if accuracy <= config.rho:
        return TriggerDecision(True, TriggerCause.ACCURACY_BELOW_RHO, batch_index)
    if len(history) >= 2 and fpr is not None:
        if config.fpr_trigger is FprTrigger.PREV_BATCH:
            reference = history[-2][1]
        else:
            reference = history[0][1]
        if reference is not None and fpr > reference:
            return TriggerDecision(True, TriggerCause.FPR_INCREASED, batch_index)
    return TriggerDecision(False, TriggerCause.NONE, batch_index)


def build_retraining_set(state: FilterState, violating_batch: LabeledCorpus) -> LabeledCorpus:
    """Union (by document id) of misclassified mail, SV carriers, and the batch."""
    merged: dict[str, Document] = {}
    for doc in list(state.misclassified) + list(state.sv_documents) + list(
        violating_batch.documents
    ):
        merged[doc.id] = doc
    docs = sorted(merged.values(), key=lambda d: d.arrival_index)
    return LabeledCorpus(tuple(docs))


def incremental_retrain(
    state: FilterState,
    trigger: TriggerDecision,
    violating_batch: LabeledCorpus,
    config: DriftConfig,
) -> FilterState:
    """Pass III: update the feature set and retrain on the retraining set.

    The solver restarts cold on the (small) retraining set because the
    feature space changes between generations, which invalidates previous
    kernel values; the saving comes from the retraining set's size.
    """
    if not trigger.fired:
        raise DriftLoopError("incremental_retrain requires a fired trigger")
    rtrem = build_retraining_set(state, violating_batch)
    if rtrem.n_spam == 0 or rtrem.n_legit == 0:
        raise SessionHalted(
            f"retraining set at batch {trigger.batch_index} contains a single class "
            f"({rtrem.n_spam} spam / {rtrem.n_legit} legitimate)"
        )
    fs_new, replaced = features.update_feature_set(
        state.feature_set, rtrem, len(state.feature_set)
    )
    model = _train_on(rtrem.documents, fs_new, config)
    logger.info(
        "retrained at batch %d: generation %d, %d features replaced, %d documents",
        trigger.batch_index, state.generation + 1, replaced, len(rtrem),
    )
    return FilterState(
        generation=state.generation + 1,
        feature_set=fs_new,
        model=model,
        sv_documents=_sv_documents(model, rtrem.documents),
        misclassified=[],
        batch_history=list(state.batch_history),
    )


@dataclass(frozen=True)
class BatchRecord:
    index: int
    size: int
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    fpr: float | None
    fnr: float | None


@dataclass(frozen=True)
class SessionReport:
    mode: str
    selector: str
    batches: tuple[BatchRecord, ...]
    events: tuple[RetrainEvent, ...]
    final: metrics.MetricsReport
    avg_fpr: float | None
    avg_fnr: float | None
    partition_checksum: str
    halted: str | None
    scores: tuple[float, ...]
    truths: tuple[int, ...]

    def to_json(self) -> str:
        payload = {
            "format": "driftfilter-session-1",
            "mode": self.mode,
            "selector": self.selector,
            "batches": [
                {
                    "index": b.index, "size": b.size,
                    "tp": b.tp, "tn": b.tn, "fp": b.fp, "fn": b.fn,
                    "accuracy": b.accuracy, "fpr": b.fpr, "fnr": b.fnr,
                }
                for b in self.batches
            ],
            "events": [
                {
                    "batch_index": e.batch_index,
                    "generation": e.generation,
                    "cause": e.cause.value,
                    "replaced_features": e.replaced_features,
                    "retrain_size": e.retrain_size,
                    "cumulative_seen": e.cumulative_seen,
                    "pre_accuracy": e.pre_accuracy,
                    "post_accuracy": e.post_accuracy,
                }
                for e in self.events
            ],
            "final": json.loads(self.final.to_json()),
            "avg_fpr": self.avg_fpr,
            "avg_fnr": self.avg_fnr,
            "partition_checksum": self.partition_checksum,
            "halted": self.halted,
            "scores": list(self.scores),
            "truths": list(self.truths),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SessionReport":
        payload = json.loads(text)
        if payload.get("format") != "driftfilter-session-1":
            raise DriftLoopError(
                f"unrecognized session format: {payload.get('format')!r}"
            )
        final = metrics.MetricsReport(**payload["final"])
        return cls(
            mode=payload["mode"],
            selector=payload["selector"],
            batches=tuple(BatchRecord(**b) for b in payload["batches"]),
            events=tuple(
                RetrainEvent(
                    batch_index=e["batch_index"],
                    generation=e["generation"],
                    cause=TriggerCause(e["cause"]),
                    replaced_features=e["replaced_features"],
                    retrain_size=e["retrain_size"],
                    cumulative_seen=e["cumulative_seen"],
                    pre_accuracy=e["pre_accuracy"],
                    post_accuracy=e["post_accuracy"],
                )
                for e in payload["events"]
            ),
            final=final,
            avg_fpr=payload["avg_fpr"],
            avg_fnr=payload["avg_fnr"],
            partition_checksum=payload["partition_checksum"],
            halted=payload["halted"],
            scores=tuple(payload["scores"]),
            truths=tuple(payload["truths"]),
        )


def partition_checksum(partition: StreamPartition) -> str:
    """Stable digest of the partition's document ids, labels, and boundaries."""
    digest = hashlib.sha256()
    for doc in partition.training.documents:
        digest.update(f"T {doc.id} {doc.label.value}\n".encode("utf-8"))
    for k, batch in enumerate(partition.test_batches):
        for doc in batch.documents:
            digest.update(f"B{k} {doc.id} {doc.label.value}\n".encode("utf-8"))
    return digest.hexdigest()


def _mean_or_none(values) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def run_session(
    partition: StreamPartition, config: DriftConfig, mode: SessionMode
) -> SessionReport:
    """Run one full session: Pass I, then the test stream.

    Batch mode never consults the validation triggers; incremental mode
    retrains whenever one fires, consuming the violating batch as training
    data and continuing with the next batch. A single-class retraining set
    halts the session gracefully, recorded in the report.
    """
    return run_session_with_state(partition, config, mode)[0]


def run_session_with_state(
    partition: StreamPartition, config: DriftConfig, mode: SessionMode
) -> tuple[SessionReport, FilterState]:
    """run_session plus the final filter state, for checkpointing."""
    state = run_batch_phase(partition.training, config)
    records: list[BatchRecord] = []
    events: list[RetrainEvent] = []
    all_scores: list[float] = []
    all_truths: list[int] = []
    cumulative = metrics.ConfusionMatrix()
    seen = len(partition.training.documents)
    window_start = 0
    halted = None
    for k, batch in enumerate(partition.test_batches):
        result, misclassified = evaluate_batch(state, batch)
        seen += len(batch.documents)
        state.batch_history.append((result.accuracy, result.fpr))
        state.misclassified.extend(misclassified)
        records.append(BatchRecord(
            index=k,
            size=len(batch.documents),
            tp=result.cm.tp, tn=result.cm.tn, fp=result.cm.fp, fn=result.cm.fn,
            accuracy=result.accuracy, fpr=result.fpr, fnr=result.fnr,
        ))
        cumulative = cumulative + result.cm
        all_scores.extend(result.scores)
        all_truths.extend(result.truths)
        if mode is SessionMode.INCREMENTAL:
            decision = check_validation(
                state.batch_history[window_start:], config, batch_index=k
            )
            if decision.fired:
                rtrem = build_retraining_set(state, batch)
                previous_terms = set(state.feature_set.index)
                try:
                    state = incremental_retrain(state, decision, batch, config)
                except SessionHalted as exc:
                    halted = str(exc)
                    logger.warning("session halted: %s", exc)
                    break
                window_start = len(state.batch_history)
                post_result, _ = evaluate_batch(state, batch)
                replaced = len(set(state.feature_set.index) - previous_terms)
                events.append(RetrainEvent(
                    batch_index=k,
                    generation=state.generation,
                    cause=decision.cause,
                    replaced_features=replaced,
                    retrain_size=len(rtrem.documents),
                    cumulative_seen=seen,
                    pre_accuracy=result.accuracy,
                    post_accuracy=post_result.accuracy,
                ))
    final = metrics.MetricsReport.from_confusion(cumulative)
    report = SessionReport(
        mode=mode.value,
        selector=config.selector,
        batches=tuple(records),
        events=tuple(events),
        final=final,
        avg_fpr=_mean_or_none([r.fpr for r in records]),
        avg_fnr=_mean_or_none([r.fnr for r in records]),
        partition_checksum=partition_checksum(partition),
        halted=halted,
        scores=tuple(all_scores),
        truths=tuple(all_truths),
    )
    return report, state


def save_checkpoint(state: FilterState, path) -> None:
    """Persist a filter state: features, model, and bookkeeping ids."""
    payload = {
        "format": "driftfilter-checkpoint-1",
        "generation": state.generation,
        "features": [[sf.term, sf.weight] for sf in state.feature_set.features],
        "model": json.loads(svm.model_to_json(state.model)),
        "misclassified_ids": [d.id for d in state.misclassified],
        "sv_doc_ids": list(state.model.sv_doc_ids),
        "batch_history": [list(entry) for entry in state.batch_history],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_checkpoint(path, documents_by_id: dict[str, Document]) -> FilterState:
    """Rehydrate a filter state; documents are looked up by id."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != "driftfilter-checkpoint-1":
        raise DriftLoopError(
            f"unrecognized checkpoint format: {payload.get('format')!r}"
        )
    fs = features.FeatureSet(tuple(
        features.ScoredFeature(term, weight) for term, weight in payload["features"]
    ))
    model = svm.model_from_json(json.dumps(payload["model"]))
    return FilterState(
        generation=payload["generation"],
        feature_set=fs,
        model=model,
        sv_documents=tuple(
            documents_by_id[doc_id] for doc_id in payload["sv_doc_ids"]
        ),
        misclassified=[documents_by_id[i] for i in payload["misclassified_ids"]],
        batch_history=[
            (accuracy, fpr) for accuracy, fpr in payload["batch_history"]
        ],
    )
