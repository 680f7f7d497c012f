import json
from dataclasses import asdict
from enum import Enum
from pathlib import Path
from typing import NoReturn, Optional

import typer

from .analysis import export_first_layer_filters
from .classifiers import FAMILIES, load_checkpoint
from .config import load_config
from .dataset import DEFAULT_K, DEFAULT_STEP, DEFAULT_WINDOW
from .errors import ConfigError, FuzzlabError
from .fuzz import DEFAULT_THRESHOLD, DEFAULT_TRIALS, EMPTY_PLAN
from .metrics import DEFAULT_THRESHOLDS
from .pipeline import (
    build_dataset,
    coverage,
    evaluate,
    generate,
    importance,
    print_coverage,
    print_field_trials,
    print_generation,
    print_importance,
    print_metrics,
    print_report,
    print_thresholds,
    run_pipeline,
    select_plan,
    sessions_eval,
    train,
    write_json,
)
from .schemas import dump_schemas
from .session import MODES
from .traces import read_plan, write_plan

app = typer.Typer(help="Protocol fuzzing attack-dataset lab", no_args_is_help=True)


class OutputFormat(str, Enum):
    """Output format options."""

    table = "table"
    json = "json"
    csv = "csv"


class Mode(str, Enum):
    benign = "benign"
    malicious = "malicious"
    both = "both"


def _fail(doing: str, err: FuzzlabError) -> NoReturn:
    where = getattr(err, "stage", None) or doing
    print(f"Error in {where}: {err}")
    raise typer.Exit(code=err.exit_code)


def _verbose(ctx: typer.Context) -> bool:
    return ctx.obj.get("verbose") if ctx.obj else False


@app.command()
def schemas():
    """
    Dump every layer's field schemas as JSON.
    """
    print(json.dumps(dump_schemas(), indent=2))


@app.command()
def gen(
    ctx: typer.Context,
    scenario: str = typer.Option(..., "--scenario", "-s", help="pth, arp, dns or telnet."),
    seed: int = typer.Option(..., "--seed", help="Global seed."),
    mode: Mode = typer.Option(Mode.both, "--mode", "-m", help="Traffic to generate."),
    iterations: int = typer.Option(1000, "--iterations", "-n", help="Sessions per mode."),
    plan_file: Optional[Path] = typer.Option(
        None, "--plan", "-p", help="Fuzz plan file. Without it nothing is fuzzed."
    ),
    out: Path = typer.Option(Path("traces.jsonl"), "--out", "-o", help="Trace file to write."),
    include_responses: bool = typer.Option(
        False, "--include-responses", help="Keep TELNET server responses in the labels."
    ),
    workers: int = typer.Option(1, "--workers", "-w", help="Simulation threads."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Simulate scenario sessions and write them as a trace file.
    """
    verbose = _verbose(ctx)
    modes = MODES if mode is Mode.both else (mode.value,)
    try:
        plan = read_plan(plan_file) if plan_file else EMPTY_PLAN
        sessions = generate(
            scenario, modes, iterations, plan, seed, out, include_responses, workers, verbose
        )
        print_generation(sessions, output_format=output_format.value)
    except FuzzlabError as e:
        _fail("gen", e)


@app.command(name="select-fields")
def select_fields_cmd(
    ctx: typer.Context,
    scenario: str = typer.Option(..., "--scenario", "-s", help="pth, arp, dns or telnet."),
    seed: int = typer.Option(..., "--seed", help="Seed for the trial generators."),
    trials: int = typer.Option(DEFAULT_TRIALS, "--trials", "-t", help="Attacks per candidate field."),
    threshold: float = typer.Option(
        DEFAULT_THRESHOLD, "--threshold", help="Success rate a field must exceed."
    ),
    out: Path = typer.Option(Path("plan.json"), "--out", "-o", help="Plan file to write."),
    workers: int = typer.Option(1, "--workers", "-w", help="Trial threads."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Choose the fields that can be fuzzed while the attack keeps working.
    """
    try:
        plan, history = select_plan(scenario, trials, seed, threshold, workers, _verbose(ctx))
        write_plan(out, plan)
        print_field_trials(history, output_format=output_format.value)
    except FuzzlabError as e:
        _fail("select-fields", e)


@app.command()
def dataset(
    ctx: typer.Context,
    traces: Path = typer.Option(..., "--traces", help="Trace file."),
    seed: int = typer.Option(..., "--seed", help="Seed for balancing and splitting."),
    out: Path = typer.Option(Path("dataset.jsonl"), "--out", "-o", help="Dataset file to write."),
    window: int = typer.Option(DEFAULT_WINDOW, "--window", help="Type-sequence window length."),
    step: int = typer.Option(DEFAULT_STEP, "--step", help="Stride between windows."),
    k: int = typer.Option(DEFAULT_K, "--k", help="Rows per DNS matrix."),
    ratio: float = typer.Option(0.8, "--ratio", help="Training share of each class."),
):
    """
    Build a balanced, split dataset from a trace file.
    """
    try:
        split, meta = build_dataset(traces, out, window, step, k, ratio, seed, _verbose(ctx))
        counts = meta["counts"]
        print(
            f"{meta['representation']}: {counts['benign']} benign / {counts['malicious']} malicious "
            f"samples, {len(split.train)} train / {len(split.test)} test"
        )
    except FuzzlabError as e:
        _fail("dataset", e)


@app.command(name="train")
def train_cmd(
    ctx: typer.Context,
    dataset_file: Path = typer.Option(..., "--dataset", "-d", help="Dataset file."),
    seed: int = typer.Option(..., "--seed", help="Seed for initialization and batch order."),
    out: Path = typer.Option(Path("model.json"), "--out", "-o", help="Checkpoint to write."),
    family: Optional[str] = typer.Option(
        None, "--family", help=f"One of {', '.join(FAMILIES)}; defaults per representation."
    ),
    epochs: int = typer.Option(300, "--epochs", help="Training epochs."),
    learning_rate: float = typer.Option(0.05, "--learning-rate", help="SGD step size."),
    batch_size: int = typer.Option(64, "--batch-size", help="Mini-batch size."),
):
    """
    Train a classifier on the training half of a dataset.
    """
    try:
        weights = train(dataset_file, out, seed, family, epochs, learning_rate, batch_size, _verbose(ctx))
        curve = weights.loss_curve
        print(f"Trained {weights.config.family}: loss {curve[0]:.5f} -> {curve[-1]:.5f}")
    except FuzzlabError as e:
        _fail("train", e)


@app.command(name="eval")
def eval_cmd(
    model: Path = typer.Option(..., "--model", help="Checkpoint file."),
    dataset_file: Path = typer.Option(..., "--dataset", "-d", help="Dataset file."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Also write metrics JSON here."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Evaluate a checkpoint on the test half of a dataset.
    """
    try:
        metrics = evaluate(model, dataset_file)
        if out:
            write_json(out, asdict(metrics))
        print_metrics(metrics, output_format=output_format.value)
    except FuzzlabError as e:
        _fail("eval", e)


@app.command(name="sessions-eval")
def sessions_eval_cmd(
    model: Path = typer.Option(..., "--model", help="Checkpoint file."),
    traces: Path = typer.Option(..., "--traces", help="Trace file with attack sessions."),
    dataset_file: Path = typer.Option(
        ..., "--dataset", "-d", help="Dataset whose window settings and type table to reuse."
    ),
    thresholds: Optional[list[float]] = typer.Option(
        None, "--threshold", help="Session threshold; repeat for a sweep."
    ),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Detect attack sessions by the share of their samples flagged malicious.
    """
    try:
        rows = sessions_eval(model, traces, dataset_file, tuple(thresholds or DEFAULT_THRESHOLDS))
        print_thresholds(rows, output_format=output_format.value)
    except FuzzlabError as e:
        _fail("sessions-eval", e)


@app.command(name="importance")
def importance_cmd(
    ctx: typer.Context,
    model: Path = typer.Option(..., "--model", help="Checkpoint file."),
    dataset_file: Path = typer.Option(..., "--dataset", "-d", help="Dataset file."),
    seed: int = typer.Option(..., "--seed", help="Seed for the shuffles."),
    traces: Optional[Path] = typer.Option(
        None, "--traces", help="Trace file the dataset came from, to name features by field."
    ),
    repeats: int = typer.Option(10, "--repeats", "-r", help="Shuffles per feature."),
    top: int = typer.Option(0, "--top", help="Show only the N most important features."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Rank features by permutation importance on the test half.
    """
    try:
        rows = importance(model, dataset_file, traces, repeats, seed, _verbose(ctx))
        print_importance(rows, output_format=output_format.value, top=top)
    except FuzzlabError as e:
        _fail("importance", e)


@app.command(name="coverage")
def coverage_cmd(
    real: Path = typer.Option(..., "--real", help="Trace file of fixed-parameter attacks."),
    traces: Path = typer.Option(..., "--traces", help="Fuzzed trace file."),
    plan_file: Path = typer.Option(..., "--plan", "-p", help="Fuzz plan used for the traces."),
    scenario: Optional[str] = typer.Option(
        None, "--scenario", "-s", help="Expected scenario; read from the traces when omitted."
    ),
    k: int = typer.Option(DEFAULT_K, "--k", help="Rows per DNS matrix."),
    step: int = typer.Option(DEFAULT_STEP, "--step", help="Stride between matrices."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Measure how much of real attack traffic the fuzzed traffic covers.
    """
    try:
        report = coverage(real, traces, read_plan(plan_file), k, step, scenario)
        print_coverage(report, output_format=output_format.value)
    except FuzzlabError as e:
        _fail("coverage", e)


@app.command()
def filters(
    model: Path = typer.Option(..., "--model", help="CNN checkpoint file."),
    out: Path = typer.Option(Path("filters"), "--out", "-o", help="Directory to write."),
):
    """
    Export the first convolutional layer's filters as JSON and PGM images.
    """
    try:
        paths = export_first_layer_filters(load_checkpoint(model), out)
        print(f"Wrote {len(paths) - 1} filters to {out}")
    except FuzzlabError as e:
        _fail("filters", e)


@app.command()
def report(
    ctx: typer.Context,
    artifacts: Path = typer.Option(Path("artifacts"), "--artifacts", "-a", help="Artifact directory."),
    output_format: OutputFormat = typer.Option(
        OutputFormat.table, "--format", "-f", help="Output format."
    ),
):
    """
    Summarize an artifact directory written by the pipeline command.
    """
    try:
        print_report(artifacts, output_format=output_format.value, verbose=_verbose(ctx))
    except FuzzlabError as e:
        _fail("report", e)


@app.command()
def pipeline(
    ctx: typer.Context,
    config_file: Optional[Path] = typer.Option(
        None, "--config", "-c", help="key=value config file; flags override it."
    ),
    scenario: Optional[str] = typer.Option(None, "--scenario", "-s", help="pth, arp, dns or telnet."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Global seed."),
    iterations: Optional[int] = typer.Option(None, "--iterations", "-n", help="Sessions per mode."),
    plan_file: Optional[str] = typer.Option(
        None, "--plan", "-p", help="Fuzz plan file; selects fields when absent."
    ),
    family: Optional[str] = typer.Option(None, "--family", help="Model family."),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs."),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Simulation threads."),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Artifact directory."),
):
    """
    Run every stage end to end and write an artifact directory.
    """
    verbose = _verbose(ctx)
    try:
        config = load_config(
            config_file,
            {
                "scenario": scenario,
                "seed": seed,
                "iterations": iterations,
                "plan_file": plan_file,
                "family": family,
                "epochs": epochs,
                "workers": workers,
                "out_dir": out,
            },
        )
        artifacts = run_pipeline(config, verbose)
        print_report(artifacts, verbose=verbose)
    except ConfigError as e:
        _fail("config", e)
    except FuzzlabError as e:
        _fail("pipeline", e)


@app.callback()
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Show detailed status messages during execution."
    ),
):
    """
    Protocol fuzzing attack-dataset lab
    """
    ctx.obj = {"verbose": verbose}
