"""Pipeline stages, the end-to-end run and the report printers used by the CLI.

Every stage reads and writes files so it can be replayed on its own from
the manifest of a previous run.
"""

import json
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

from .analysis import (
    coverage_rate,
    export_first_layer_filters,
    rank_features,
    value_subset_report,
)
from .classifiers import (
    config_for,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
    train_model,
)
from .config import PipelineConfig
from .dataset import (
    TYPE_FIELDS,
    DatasetSplit,
    Sample,
    TypeTable,
    annotate,
    balance_and_split,
    build_samples,
    build_type_table,
    class_counts,
    feature_fields,
    remap_types,
    training_type_table,
)
from .errors import ConfigError, DataError, FuzzlabError, InapplicableAnalysis
from .formatters import get_formatter
from .fuzz import EMPTY_PLAN, FuzzPlan, select_fields
from .metrics import (
    DEFAULT_THRESHOLDS,
    compute_metrics,
    confusion_from_labels,
    session_fractions,
    threshold_sweep,
)
from .models import (
    Confusion,
    CoverageReport,
    FieldCoverage,
    FieldTrial,
    GenerationSummary,
    ImportanceRow,
    Metrics,
    ThresholdRow,
    ValueSubsetRow,
)
from .scenarios import get_scenario, run_scenario, scenario_oracle
from .session import MALICIOUS, MODES, LabeledSession, Session
from .traces import (
    file_sha256,
    read_dataset,
    read_plan,
    read_traces,
    write_dataset,
    write_plan,
    write_traces,
)

MANIFEST_FORMAT = 1
TOP_FEATURES = 5


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag errors escaping a block with the stage they came from."""
    try:
        yield
    except FuzzlabError as e:
        if not getattr(e, "stage", None):
            e.stage = name
        raise


def write_json(path: Path, doc: Any, sort_keys: bool = True) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=sort_keys) + "\n")


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e.msg}") from None


# generation


def summarize(sessions: Sequence[Session]) -> list[GenerationSummary]:
    """Per (scenario, mode) counts of a capture, in first-seen order."""
    groups: dict[tuple[str, str], list[Session]] = {}
    for s in sessions:
        groups.setdefault((s.scenario, s.mode), []).append(s)
    out = []
    for (scenario, mode), members in groups.items():
        successes = sum(s.success for s in members)
        out.append(
            GenerationSummary(
                scenario,
                mode,
                len(members),
                successes,
                sum(len(s.packets) for s in members),
                successes / len(members),
            )
        )
    return out


def generate(
    kind: str,
    modes: Sequence[str],
    iterations: int,
    plan: FuzzPlan,
    seed: int,
    path: Path,
    include_responses: bool = False,
    workers: int = 1,
    verbose: bool = False,
) -> list[Session]:
    """Simulate sessions for each mode and write them to one trace file."""
    sessions: list[Session] = []
    for mode in modes:
        sessions += run_scenario(kind, mode, iterations, plan, seed, workers=workers, verbose=verbose)
    count = write_traces(path, sessions, include_responses)
    if verbose:
        print(f"Wrote {count} packet records to {path}")
    return sessions


def select_plan(
    kind: str,
    trials: int,
    seed: int,
    threshold: float,
    workers: int = 1,
    verbose: bool = False,
) -> tuple[FuzzPlan, list[FieldTrial]]:
    history: list[FieldTrial] = []
    info = get_scenario(kind)
    if verbose:
        print(f"\nSelecting fields for {kind} from {len(info.alist)} candidates...")
    plan = select_fields(
        info.alist,
        scenario_oracle(kind),
        trials=trials,
        threshold=threshold,
        seed=seed,
        workers=workers,
        history=history,
        verbose=verbose,
    )
    return plan, history


# datasets


def _representation(labeled: Sequence[LabeledSession]) -> tuple[str, str]:
    if not labeled:
        raise DataError("trace file holds no usable sessions")
    kind = labeled[0].session.scenario
    return kind, get_scenario(kind).representation


def table_to_json(table: TypeTable) -> list:
    return [[list(key), value] for key, value in table.items()]


def table_from_json(rows: list) -> TypeTable:
    return {tuple(key): value for key, value in rows}


def build_dataset(
    traces_path: Path,
    out_path: Path,
    window: int,
    step: int,
    k: int,
    ratio: float,
    seed: int,
    verbose: bool = False,
) -> tuple[DatasetSplit, dict]:
    """Turn a trace file into a deduplicated, split dataset file.

    The sidecar records the split indices, so train and eval read the same
    halves without re-drawing them.
    """
    if verbose:
        print(f"\nBuilding dataset from {traces_path}...")
    labeled = read_traces(traces_path)
    kind, representation = _representation(labeled)
    table = build_type_table(labeled) if representation == "typeseq" else None
    samples = build_samples(labeled, representation, window, step, k, type_table=table)
    split = balance_and_split(samples, ratio, seed)
    if table is not None:
        # types never seen in training become 0
        table, mapping = training_type_table(table, split.train)
        samples = remap_types(samples, mapping)
        split = DatasetSplit(
            [samples[i] for i in split.train_index],
            [samples[i] for i in split.test_index],
            seed,
            split.train_index,
            split.test_index,
        )
    meta = {
        "scenario": kind,
        "representation": representation,
        "window": window,
        "step": step,
        "k": k,
        "ratio": ratio,
        "seed": seed,
        "counts": dict(class_counts(samples)),
        "train_index": split.train_index,
        "test_index": split.test_index,
        "source_sha256": file_sha256(Path(traces_path)),
    }
    if table is not None:
        meta["type_fields"] = list(TYPE_FIELDS)
        meta["type_table"] = table_to_json(table)
    write_dataset(out_path, samples, meta)
    if verbose:
        print(f"  {len(samples)} samples, {len(split.train)} train / {len(split.test)} test")
    return split, meta


def load_split(path: Path) -> tuple[DatasetSplit, dict]:
    """Dataset file plus the split stored in its sidecar."""
    samples, meta = read_dataset(path)
    if "train_index" not in meta:
        raise DataError(f"{path} has no stored split")
    train_index, test_index = meta["train_index"], meta["test_index"]
    if any(not 0 <= i < len(samples) for i in (*train_index, *test_index)):
        raise DataError(f"{path}: split index outside {len(samples)} samples")
    split = DatasetSplit(
        [samples[i] for i in train_index],
        [samples[i] for i in test_index],
        meta.get("seed", 0),
        train_index,
        test_index,
    )
    return split, meta


# training and evaluation


def train(
    dataset_path: Path,
    model_path: Path,
    seed: int,
    family: Optional[str] = None,
    epochs: int = 300,
    learning_rate: float = 0.05,
    batch_size: int = 64,
    verbose: bool = False,
):
    split, meta = load_split(dataset_path)
    if not split.train:
        raise DataError(f"{dataset_path} has no training samples")
    shape = _input_shape(split.train[0])
    vocab = len(meta.get("type_table", [])) + 1
    config = config_for(
        meta["representation"],
        shape,
        family,
        vocab=vocab,
        seed=seed,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
    )
    if verbose:
        print(f"\nTraining {config.family} on {len(split.train)} samples of shape {shape}...")
    weights = train_model(config, split, verbose)
    save_checkpoint(model_path, weights)
    return weights


def _input_shape(sample: Sample) -> tuple[int, ...]:
    if sample.repr == "bytemat":
        return (len(sample.x), len(sample.x[0]))
    return (len(sample.x),)


def evaluate(model_path: Path, dataset_path: Path) -> Metrics:
    """Metrics of a checkpoint on the test half of a dataset."""
    weights = load_checkpoint(model_path)
    split, _ = load_split(dataset_path)
    if not split.test:
        raise DataError(f"{dataset_path} has no test samples")
    _, labels = predict_batch(weights, split.test)
    return compute_metrics(confusion_from_labels([s.y for s in split.test], labels))


def metrics_from_json(doc: dict) -> Metrics:
    return Metrics(**{**doc, "confusion": Confusion(**doc["confusion"])})


def sessions_eval(
    model_path: Path,
    traces_path: Path,
    dataset_path: Path,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> list[ThresholdRow]:
    """Session-level detection of the malicious sessions in a trace file.

    Samples are built with the dataset's window settings and frozen type
    table, without deduplication. A session scores the fraction of its
    malicious-labeled samples the model flags; benign packets of a hijacked
    session do not dilute it.
    """
    weights = load_checkpoint(model_path)
    _, meta = read_dataset(dataset_path)
    labeled = [ls for ls in read_traces(traces_path) if ls.session.mode == MALICIOUS]
    if not labeled:
        raise DataError(f"{traces_path} holds no successful malicious sessions")
    table = table_from_json(meta["type_table"]) if "type_table" in meta else None
    samples = build_samples(
        labeled,
        meta["representation"],
        meta["window"],
        meta["step"],
        meta["k"],
        type_table=table,
        dedup=False,
    )
    samples = [s for s in samples if s.y == 1]
    if not samples:
        raise DataError("sessions are too short for one sample")
    _, labels = predict_batch(weights, samples)
    fractions = session_fractions([s.session for s in samples], labels)
    return threshold_sweep(fractions, thresholds)


# analysis


def importance(
    model_path: Path,
    dataset_path: Path,
    traces_path: Optional[Path],
    repeats: int,
    seed: int,
    verbose: bool = False,
) -> list[ImportanceRow]:
    """Permutation importance of every feature on the test half.

    With a trace file, each feature is named by the packet fields it is
    read from.
    """
    weights = load_checkpoint(model_path)
    split, meta = load_split(dataset_path)
    names = {}
    if traces_path is not None and meta["representation"] != "typeseq":
        labeled = read_traces(traces_path)
        names = feature_fields(annotate(labeled, meta["representation"], meta["k"], meta["step"]))
    if verbose:
        print(f"\nShuffling {weights.config.n_features} features x {repeats} repeats...")
    return rank_features(weights, split.test, repeats, seed, names)


def coverage(
    real_path: Path,
    fuzzed_path: Path,
    plan: FuzzPlan,
    k: int,
    step: int,
    scenario: Optional[str] = None,
) -> CoverageReport:
    """Coverage of the real capture's malicious samples by the fuzzed capture.

    Raises:
        ConfigError: the traces are not of the expected scenario
        NoFuzzedElements: the representation has no field-derived elements
    """
    real = read_traces(real_path)
    fuzzed = read_traces(fuzzed_path)
    kind, representation = _representation(fuzzed)
    expected = scenario or kind
    for path, labeled in ((real_path, real), (fuzzed_path, fuzzed)):
        found = {ls.session.scenario for ls in labeled}
        if found - {expected}:
            raise ConfigError(f"{path} holds {', '.join(sorted(found))} traces, expected {expected}")
    s1 = annotate(real, representation, k, step)
    s2 = annotate(fuzzed, representation, k, step)
    return coverage_rate(s1, s2, plan)


def coverage_from_json(doc: dict) -> CoverageReport:
    return CoverageReport(doc["x"], doc["y"], doc["rate"], [FieldCoverage(**f) for f in doc["per_field"]])


def value_subsets(real_path: Path, fuzzed_path: Path, plan: FuzzPlan) -> list[ValueSubsetRow]:
    def packets(path):
        return [p.packet for ls in read_traces(path) for p, lab in zip(ls.session.packets, ls.labels)
                if lab == MALICIOUS]

    return value_subset_report(packets(real_path), packets(fuzzed_path), plan.blist)


# end to end


def run_pipeline(config: PipelineConfig, verbose: bool = False) -> Path:
    """Run every stage into config.out_dir and write manifest.json.

    Returns:
        The artifact directory
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    info = get_scenario(config.scenario)
    manifest: dict[str, Any] = {
        "format": MANIFEST_FORMAT,
        "config": asdict(config),
        "stages": {},
    }

    def record(name: str, inputs: Sequence[Path], outputs: Sequence[Path], **params) -> None:
        manifest["stages"][name] = {
            "seed": config.stage_seed(name),
            "params": params,
            "inputs": {p.name: file_sha256(p) for p in inputs},
            "outputs": {str(p.relative_to(out)): file_sha256(p) for p in outputs},
        }

    plan_path = out / "plan.json"
    with stage("select"):
        if config.plan_file:
            source = Path(config.plan_file)
            plan = read_plan(source)
            history: list[FieldTrial] = []
            write_plan(plan_path, plan)
            record("select", [source], [plan_path], source=str(source))
        else:
            plan, history = select_plan(
                config.scenario,
                config.trials,
                config.stage_seed("select"),
                config.threshold,
                config.workers,
                verbose,
            )
            write_plan(plan_path, plan)
            write_json(out / "field_trials.json", [asdict(t) for t in history])
            record("select", [], [plan_path, out / "field_trials.json"], trials=config.trials,
                   threshold=config.threshold)

    traces = out / "traces.jsonl"
    with stage("gen"):
        sessions = generate(
            config.scenario,
            MODES,
            config.iterations,
            plan,
            config.stage_seed("gen"),
            traces,
            config.include_responses,
            config.workers,
            verbose,
        )
        record("gen", [plan_path], [traces], iterations=config.iterations,
               include_responses=config.include_responses)

    real = out / "real_traces.jsonl"
    with stage("real"):
        real_sessions = generate(
            config.scenario,
            (MALICIOUS,),
            config.real_iterations,
            EMPTY_PLAN,
            config.stage_seed("real"),
            real,
            config.include_responses,
            config.workers,
            verbose,
        )
        record("real", [], [real], iterations=config.real_iterations)
    write_json(out / "generation.json", [asdict(s) for s in summarize(sessions + real_sessions)])

    dataset = out / "dataset.jsonl"
    with stage("split"):
        build_dataset(traces, dataset, config.window, config.step, config.k, config.ratio,
                      config.stage_seed("split"), verbose)
        record("split", [traces], [dataset, out / "dataset.meta.json"], window=config.window,
               step=config.step, k=config.k, ratio=config.ratio)

    model = out / "model.json"
    with stage("train"):
        train(dataset, model, config.stage_seed("train"), config.family or info.family,
              config.epochs, config.learning_rate, config.batch_size, verbose)
        record("train", [dataset], [model], family=config.family or info.family,
               epochs=config.epochs, learning_rate=config.learning_rate, batch_size=config.batch_size)

    metrics_path = out / "metrics.json"
    with stage("eval"):
        metrics = evaluate(model, dataset)
        write_json(metrics_path, asdict(metrics))
        record("eval", [model, dataset], [metrics_path])

    analysis = out / "analysis"
    with stage("importance"):
        rows = importance(model, dataset, traces, config.repeats, config.stage_seed("importance"), verbose)
        write_json(analysis / "importance.json", [asdict(r) for r in rows])
        record("importance", [model, dataset, traces], [analysis / "importance.json"],
               repeats=config.repeats)

    with stage("coverage"):
        outputs = [analysis / "coverage.json"]
        try:
            report = coverage(real, traces, plan, config.k, config.step, config.scenario)
            write_json(outputs[0], {"applicable": True, **asdict(report)})
        except InapplicableAnalysis as e:
            write_json(outputs[0], {"applicable": False, "reason": str(e)})
            subsets = value_subsets(real, traces, plan)
            outputs.append(analysis / "value_subsets.json")
            write_json(outputs[1], [asdict(r) for r in subsets])
        record("coverage", [real, traces, plan_path], outputs)

    if info.representation != "bytemat":
        with stage("sessions-eval"):
            sweep = sessions_eval(model, real, dataset)
            write_json(analysis / "thresholds.json", [asdict(r) for r in sweep])
            record("sessions-eval", [model, real, dataset], [analysis / "thresholds.json"],
                   thresholds=list(DEFAULT_THRESHOLDS))

    if (config.family or info.family) == "cnn":
        with stage("filters"):
            paths = export_first_layer_filters(load_checkpoint(model), analysis / "filters")
            record("filters", [model], paths)

    # stages keep run order
    write_json(out / "manifest.json", manifest, sort_keys=False)
    if verbose:
        print(f"\nArtifacts written to {out}")
    return out


# printers


def print_generation(sessions: Sequence[Session], output_format: str = "table") -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_generation(summarize(sessions)))


def print_field_trials(history: Sequence[FieldTrial], output_format: str = "table") -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_field_trials(history))


def print_metrics(metrics: Metrics, output_format: str = "table") -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_metrics(metrics))


def print_thresholds(rows: Sequence[ThresholdRow], output_format: str = "table") -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_thresholds(rows))


def print_importance(rows: Sequence[ImportanceRow], output_format: str = "table", top: int = 0) -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_importance(rows[:top] if top else rows))


def print_coverage(report: CoverageReport, output_format: str = "table") -> None:
    formatter = get_formatter(output_format)
    print(formatter.format_coverage(report))


def print_report(artifacts: Path, output_format: str = "table", verbose: bool = False) -> None:
    """Print the results stored in an artifact directory.

    Args:
        artifacts: Directory written by run_pipeline
        output_format: Output format - 'table', 'json', or 'csv' (default 'table')
        verbose: If True, also print the stage seeds
    """
    artifacts = Path(artifacts)
    manifest_path = artifacts / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{artifacts} has no manifest.json")
    manifest = read_json(manifest_path)
    docs = {"manifest": manifest}
    for name, rel in (
        ("generation", "generation.json"),
        ("metrics", "metrics.json"),
        ("importance", "analysis/importance.json"),
        ("coverage", "analysis/coverage.json"),
        ("value_subsets", "analysis/value_subsets.json"),
        ("thresholds", "analysis/thresholds.json"),
    ):
        if (artifacts / rel).exists():
            docs[name] = read_json(artifacts / rel)

    if output_format == "json":
        print(json.dumps(docs, indent=2, sort_keys=True))
        return

    formatter = get_formatter(output_format)
    print(f"Scenario: {manifest['config']['scenario']}  seed: {manifest['config']['seed']}")
    if verbose:
        for name, entry in manifest["stages"].items():
            print(f"  {name:<14} seed={entry['seed']}")
    if "generation" in docs:
        print(formatter.format_generation([GenerationSummary(**s) for s in docs["generation"]]))
    if "metrics" in docs:
        print(formatter.format_metrics(metrics_from_json(docs["metrics"])))
    if "coverage" in docs:
        cov = docs["coverage"]
        if cov["applicable"]:
            print(formatter.format_coverage(coverage_from_json(cov)))
        else:
            print(f"Coverage not applicable: {cov['reason']}")
    if "value_subsets" in docs:
        print(formatter.format_value_subsets([ValueSubsetRow(**r) for r in docs["value_subsets"]]))
    if "importance" in docs:
        rows = [ImportanceRow(**{**r, "fields": tuple(r["fields"])}) for r in docs["importance"]]
        print(formatter.format_importance(rows[:TOP_FEATURES]))
    if "thresholds" in docs:
        print(formatter.format_thresholds([ThresholdRow(**r) for r in docs["thresholds"]]))

