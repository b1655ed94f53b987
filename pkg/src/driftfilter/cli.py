"""Command-line entry point: configuration, experiment drivers, reports.

Subcommands:
  run          run the configured experiment and write result files
  config dump  print the merged, validated configuration
  synth        write a synthetic drift corpus to disk (Enron layout)
  report       re-render result files from a saved session

Configuration is a plain `key = value` file with `#` comments; command-line
flags override file values. All outputs are deterministic for a fixed
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import corpus, driftloop, features, metrics, svm

logger = logging.getLogger(__name__)

FORMATS = ("enron", "pu", "ecml", "synth")
MODES = ("batch", "incremental")
KERNELS = ("linear", "rbf")
EXPERIMENTS = ("single", "1", "2")


class CliError(Exception):
    """Raised for invalid configuration or unusable inputs."""


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    format: str = "synth"
    selector: str = "tfdcr"
    n: int = 500
    rho: float = 0.9
    c: float = 1.0
    kernel: str = "linear"
    gamma: float | None = None
    mode: str = "batch"
    seed: int = 0
    output_dir: str = "out"
    train_fraction: float = 1.0 / 3.0
    n_batches: int = 10
    chronological: bool = True
    experiment: str = "single"
    fpr_trigger: str = "prev_batch"
    manifest: str | None = None
    test_path: str | None = None
    synth_vocab: int = 400
    synth_docs_per_phase: int = 1000
    synth_drift_point: int | None = None
    synth_overlap: float = 0.2

    def validate(self) -> "RunConfig":
        if self.format not in FORMATS:
            raise CliError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.selector not in features.SELECTORS:
            raise CliError(
                f"selector must be one of {features.SELECTORS}, got {self.selector!r}"
            )
        if self.mode not in MODES:
            raise CliError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kernel not in KERNELS:
            raise CliError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.experiment not in EXPERIMENTS:
            raise CliError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if not 0.0 < self.rho < 1.0:
            raise CliError(f"rho must be in (0,1), got {self.rho}")
        if self.c <= 0:
            raise CliError(f"c must be > 0, got {self.c}")
        if self.n < 1:
            raise CliError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.train_fraction < 1.0:
            raise CliError(
                f"train_fraction must be in (0,1), got {self.train_fraction}"
            )
        if self.n_batches < 1:
            raise CliError(f"n_batches must be >= 1, got {self.n_batches}")
        if self.kernel == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise CliError("kernel rbf requires gamma > 0")
        if not 0.0 <= self.synth_overlap <= 1.0:
            raise CliError(f"synth_overlap must be in [0,1], got {self.synth_overlap}")
        if self.fpr_trigger not in ("prev_batch", "since_retrain"):
            raise CliError(
                f"fpr_trigger must be prev_batch or since_retrain, got {self.fpr_trigger!r}"
            )
        if self.format != "synth" and not self.dataset and not self.manifest:
            raise CliError("dataset path is required (or provide a manifest)")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_KEYS = {"chronological"}
_INT_KEYS = {"n", "seed", "n_batches", "synth_vocab", "synth_docs_per_phase",
             "synth_drift_point"}
_FLOAT_KEYS = {"rho", "c", "gamma", "train_fraction", "synth_overlap"}


def _coerce(key: str, raw: str):
    if key in _BOOL_KEYS:
        value = raw.strip().lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise CliError(f"{key} must be true or false, got {raw!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise CliError(f"{key} has a malformed value: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Parse a `key = value` file; unknown keys are an error listing them."""
    values = {}
    unknown = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            key, sep, raw = stripped.partition("=")
            if not sep:
                raise CliError(f"{path}:{line_no}: expected `key = value`")
            key = key.strip()
            raw = raw.strip()
            if key not in _FIELD_TYPES:
                unknown.append(key)
                continue
            values[key] = _coerce(key, raw)
    if unknown:
        raise CliError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return values


def parse_config(file_path=None, overrides=None) -> RunConfig:
    """Merge file values and flag overrides into a validated RunConfig."""
    values = read_config_file(file_path) if file_path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise CliError(f"unknown configuration key: {key}")
        values[key] = value
    return RunConfig(**values).validate()


def dump_config(config: RunConfig) -> str:
    """Canonical `key = value` rendering; omitted keys are unset options."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def _drift_config(config: RunConfig, selector: str | None = None) -> driftloop.DriftConfig:
    return driftloop.DriftConfig(
        rho=config.rho,
        fpr_trigger=driftloop.FprTrigger(config.fpr_trigger),
        feature_dim=config.n,
        train_config=svm.TrainConfig(
            C=config.c, kernel=config.kernel, gamma=config.gamma
        ),
        selector=selector or config.selector,
    )


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    format: str
    path: str | None
    test_path: str | None = None


def read_manifest(path) -> list[DatasetEntry]:
    """Read dataset entries: `name format path [test_path]` per line."""
    base = Path(path).parent
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) not in (3, 4):
                raise CliError(
                    f"{path}:{line_no}: expected `name format path [test_path]`"
                )
            name, fmt, data_path = parts[:3]
            if fmt not in FORMATS:
                raise CliError(f"{path}:{line_no}: unknown format {fmt!r}")
            test_path = parts[3] if len(parts) == 4 else None
            entries.append(DatasetEntry(
                name=name,
                format=fmt,
                path=str(base / data_path),
                test_path=str(base / test_path) if test_path else None,
            ))
    if not entries:
        raise CliError(f"manifest {path} lists no datasets")
    return entries


def _dataset_entries(config: RunConfig) -> list[DatasetEntry]:
    if config.manifest:
        return read_manifest(config.manifest)
    if config.format == "synth":
        return [DatasetEntry(name="synth", format="synth", path=None,
                             test_path=config.test_path)]
    name = Path(config.dataset).stem or Path(config.dataset).name
    return [DatasetEntry(name=name, format=config.format, path=config.dataset,
                         test_path=config.test_path)]


def _load_corpus(entry: DatasetEntry, config: RunConfig) -> corpus.LabeledCorpus:
    if entry.format == "synth":
        return corpus.synth_drift(
            config.seed,
            vocab_size=config.synth_vocab,
            docs_per_phase=config.synth_docs_per_phase,
            drift_point=config.synth_drift_point,
            overlap=config.synth_overlap,
        )
    if entry.format == "enron":
        return corpus.load_enron(entry.path)
    if entry.format == "pu":
        return corpus.load_pu(entry.path)
    return corpus.load_ecml(entry.path)


def _shift_arrivals(docs, offset: int):
    return [
        corpus.Document(d.id, d.label, d.tokens, d.arrival_index + offset)
        for d in docs
    ]


def build_partition(entry: DatasetEntry, config: RunConfig) -> corpus.StreamPartition:
    """Training/test split for one dataset entry.

    With a bound test file (two-file datasets) the first corpus trains and
    the second is batched; otherwise the configured fraction splits one
    corpus, chronologically when the format preserves arrival order.
    """
    training = _load_corpus(entry, config)
    if entry.test_path:
        if entry.format != "ecml":
            raise CliError("test_path binding is supported for the ecml format")
        test = corpus.load_ecml(entry.test_path)
        offset = len(training.documents)
        batches = corpus.split_batches(
            _shift_arrivals(test.documents, offset), config.n_batches
        )
        return corpus.StreamPartition(training, batches)
    chronological = config.chronological and entry.format in ("enron", "synth")
    return corpus.partition_stream(
        training,
        config.train_fraction,
        config.n_batches,
        chronological=chronological,
        seed=config.seed,
    )


TABLE_COLUMNS = (
    "dataset", "selector", "mode", "accuracy", "mcc", "micro_f1", "macro_f1",
    "avg_fpr", "avg_fnr", "retrains", "halted", "partition_checksum",
)


@dataclass(frozen=True)
class ExperimentTable:
    rows: tuple[dict, ...]

    def csv_text(self) -> str:
        lines = [",".join(TABLE_COLUMNS)]
        for row in self.rows:
            cells = []
            for column in TABLE_COLUMNS:
                value = row[column]
                if value is None:
                    cells.append("")
                elif isinstance(value, float):
                    cells.append(repr(value))
                else:
                    cells.append(str(value))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def json_text(self) -> str:
        return json.dumps(
            [{column: row[column] for column in TABLE_COLUMNS} for row in self.rows],
            sort_keys=True, indent=2,
        ) + "\n"


def _table_row(name: str, selector: str, report: driftloop.SessionReport) -> dict:
    return {
        "dataset": name,
        "selector": selector,
        "mode": report.mode,
        "accuracy": report.final.accuracy,
        "mcc": report.final.mcc,
        "micro_f1": report.final.micro_f1,
        "macro_f1": report.final.macro_f1,
        "avg_fpr": report.avg_fpr,
        "avg_fnr": report.avg_fnr,
        "retrains": len(report.events),
        "halted": report.halted,
        "partition_checksum": report.partition_checksum,
    }


def _emit_session_files(name, selector, report, out_dir: Path, state=None) -> None:
    stem = f"{name}_{selector}_{report.mode}"
    (out_dir / f"{stem}.session.json").write_text(
        report.to_json() + "\n", encoding="utf-8"
    )
    if state is not None:
        driftloop.save_checkpoint(state, out_dir / f"{stem}.checkpoint.json")
    truths = set(report.truths)
    if len(truths) == 2:
        points = metrics.roc_points(report.scores, report.truths)
        metrics.write_roc_tsv(points, out_dir / f"{stem}.roc.tsv")
    else:
        logger.warning("skipping ROC for %s: single-class truths", stem)


def _run_one(entry, config, selector, mode, out_dir) -> dict:
    partition = build_partition(entry, config)
    report, state = driftloop.run_session_with_state(
        partition, _drift_config(config, selector), driftloop.SessionMode(mode)
    )
    _emit_session_files(entry.name, selector, report, out_dir, state)
    return _table_row(entry.name, selector, report)


def run_experiment1(config: RunConfig, out_dir: Path) -> ExperimentTable:
    """Batch-mode comparison of all six selectors on each dataset."""
    if config.mode != "batch":
        raise CliError("experiment 1 requires mode = batch")
    rows = []
    for entry in _dataset_entries(config):
        partition = build_partition(entry, config)
        for selector in features.SELECTORS:
            report = driftloop.run_session(
                partition, _drift_config(config, selector), driftloop.SessionMode.BATCH
            )
            _emit_session_files(entry.name, selector, report, out_dir)
            rows.append(_table_row(entry.name, selector, report))
    return ExperimentTable(tuple(rows))


def run_experiment2(config: RunConfig, out_dir: Path) -> ExperimentTable:
    """Paired batch and incremental sessions on the identical partition."""
    rows = []
    for entry in _dataset_entries(config):
        partition = build_partition(entry, config)
        reports = {}
        for mode in (driftloop.SessionMode.BATCH, driftloop.SessionMode.INCREMENTAL):
            report = driftloop.run_session(
                partition, _drift_config(config), mode
            )
            reports[mode] = report
            _emit_session_files(entry.name, config.selector, report, out_dir)
            rows.append(_table_row(entry.name, config.selector, report))
        batch_sum = reports[driftloop.SessionMode.BATCH].partition_checksum
        incr_sum = reports[driftloop.SessionMode.INCREMENTAL].partition_checksum
        if batch_sum != incr_sum:
            raise CliError(
                f"paired sessions consumed different partitions for {entry.name}"
            )
    return ExperimentTable(tuple(rows))


def run_single(config: RunConfig, out_dir: Path) -> ExperimentTable:
    rows = [
        _run_one(entry, config, config.selector, config.mode, out_dir)
        for entry in _dataset_entries(config)
    ]
    return ExperimentTable(tuple(rows))


def emit_report(table: ExperimentTable, out_dir: Path) -> None:
    """Write results.csv and results.json with identical values."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(table.csv_text(), encoding="utf-8")
    (out_dir / "results.json").write_text(table.json_text(), encoding="utf-8")


def _overrides_from_args(args) -> dict:
    keys = (
        "dataset", "format", "selector", "n", "rho", "c", "kernel", "gamma",
        "mode", "seed", "output_dir", "train_fraction", "n_batches",
        "chronological", "experiment", "fpr_trigger", "manifest", "test_path",
        "synth_vocab", "synth_docs_per_phase", "synth_drift_point",
        "synth_overlap",
    )
    return {key: getattr(args, key, None) for key in keys}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--dataset")
    parser.add_argument("--format", choices=FORMATS)
    parser.add_argument("--selector", choices=features.SELECTORS)
    parser.add_argument("--n", type=int)
    parser.add_argument("--rho", type=float)
    parser.add_argument("--c", type=float, dest="c")
    parser.add_argument("--kernel", choices=KERNELS)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--train-fraction", type=float, dest="train_fraction")
    parser.add_argument("--n-batches", type=int, dest="n_batches")
    parser.add_argument("--chronological", action="store_true", default=None)
    parser.add_argument(
        "--no-chronological", action="store_false", dest="chronological",
        default=None,
    )
    parser.add_argument("--experiment", choices=EXPERIMENTS)
    parser.add_argument(
        "--fpr-trigger", choices=("prev_batch", "since_retrain"),
        dest="fpr_trigger",
    )
    parser.add_argument("--manifest")
    parser.add_argument("--test-path", dest="test_path")
    parser.add_argument("--synth-vocab", type=int, dest="synth_vocab")
    parser.add_argument(
        "--synth-docs-per-phase", type=int, dest="synth_docs_per_phase"
    )
    parser.add_argument("--synth-drift-point", type=int, dest="synth_drift_point")
    parser.add_argument("--synth-overlap", type=float, dest="synth_overlap")


def _cmd_run(args) -> int:
    config = parse_config(args.config, _overrides_from_args(args))
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.experiment == "1":
        table = run_experiment1(config, out_dir)
    elif config.experiment == "2":
        table = run_experiment2(config, out_dir)
    else:
        table = run_single(config, out_dir)
    emit_report(table, out_dir)
    print(f"wrote {len(table.rows)} result rows to {out_dir}")
    return 0


def _cmd_config(args) -> int:
    if args.action != "dump":
        raise CliError(f"unknown config action: {args.action!r}")
    config = parse_config(args.config, _overrides_from_args(args))
    sys.stdout.write(dump_config(config))
    return 0


def _cmd_synth(args) -> int:
    stream = corpus.synth_drift(
        args.seed,
        vocab_size=args.synth_vocab if args.synth_vocab is not None else 400,
        docs_per_phase=(
            args.synth_docs_per_phase
            if args.synth_docs_per_phase is not None else 1000
        ),
        drift_point=args.synth_drift_point,
        overlap=args.synth_overlap if args.synth_overlap is not None else 0.2,
    )
    corpus.write_enron_layout(stream, args.out)
    print(f"wrote {len(stream.documents)} documents to {args.out}")
    return 0


def _cmd_report(args) -> int:
    text = Path(args.session).read_text(encoding="utf-8")
    report = driftloop.SessionReport.from_json(text)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = args.name or Path(args.session).name.removesuffix(".json").removesuffix(".session")
    suffix = f"_{report.selector}_{report.mode}"
    dataset = stem.removesuffix(suffix)
    table = ExperimentTable((_table_row(dataset, report.selector, report),))
    emit_report(table, out_dir)
    if len(set(report.truths)) == 2:
        points = metrics.roc_points(report.scores, report.truths)
        metrics.write_roc_tsv(points, out_dir / f"{dataset}{suffix}.roc.tsv")
    print(f"re-rendered {args.session} into {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftfilter",
        description="Spam filter experiments: batch and incremental sessions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run the configured experiment")
    _add_config_flags(run_parser)
    run_parser.set_defaults(func=_cmd_run)

    config_parser = sub.add_parser("config", help="configuration utilities")
    config_parser.add_argument("action", choices=("dump",))
    _add_config_flags(config_parser)
    config_parser.set_defaults(func=_cmd_config)

    synth_parser = sub.add_parser("synth", help="emit a synthetic corpus")
    synth_parser.add_argument("--seed", type=int, default=0)
    synth_parser.add_argument("--out", required=True)
    synth_parser.add_argument("--synth-vocab", type=int, dest="synth_vocab")
    synth_parser.add_argument(
        "--synth-docs-per-phase", type=int, dest="synth_docs_per_phase"
    )
    synth_parser.add_argument(
        "--synth-drift-point", type=int, dest="synth_drift_point"
    )
    synth_parser.add_argument("--synth-overlap", type=float, dest="synth_overlap")
    synth_parser.set_defaults(func=_cmd_synth)

    report_parser = sub.add_parser("report", help="re-render a saved session")
    report_parser.add_argument("--session", required=True)
    report_parser.add_argument("--out", required=True)
    report_parser.add_argument("--name")
    report_parser.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, corpus.CorpusError, features.FeatureError, svm.SvmError,
            driftloop.DriftLoopError, metrics.MetricsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
