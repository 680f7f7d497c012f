import json

import pytest

from fuzzlab.config import STAGES, PipelineConfig
from fuzzlab.errors import DataError, InvalidPlanForScenario
from fuzzlab.fuzz import FuzzPlan
from fuzzlab.pipeline import (
    build_dataset,
    evaluate,
    generate,
    load_split,
    print_report,
    run_pipeline,
    sessions_eval,
    summarize,
    train,
)
from fuzzlab.session import MODES
from fuzzlab.traces import write_plan


def small_config(tmp_path, scenario, name="run", **changes):
    values = dict(
        scenario=scenario,
        seed=11,
        iterations=6,
        real_iterations=3,
        trials=8,
        epochs=3,
        repeats=1,
        out_dir=str(tmp_path / name),
    )
    values.update(changes)
    return PipelineConfig(**values)


def plan_file(tmp_path, *fields):
    path = tmp_path / "given_plan.json"
    write_plan(path, FuzzPlan(fields))
    return str(path)


def test_generate_and_summarize(tmp_path):
    path = tmp_path / "traces.jsonl"
    sessions = generate("arp", MODES, 3, FuzzPlan(), seed=1, path=path)
    rows = summarize(sessions)
    assert [(r.mode, r.sessions) for r in rows] == [("benign", 3), ("malicious", 3)]
    assert rows[1].success_rate == 1.0
    assert path.exists()


def test_stage_by_stage(tmp_path):
    """dataset, train and eval replay from files alone."""
    traces = tmp_path / "traces.jsonl"
    generate("telnet", MODES, 6, FuzzPlan(("IP.ttl",)), seed=2, path=traces)
    dataset = tmp_path / "dataset.jsonl"
    split, meta = build_dataset(traces, dataset, 8, 4, 8, 0.8, seed=3)
    assert meta["representation"] == "headervec"
    reloaded, _ = load_split(dataset)
    assert reloaded.train == split.train
    model = tmp_path / "model.json"
    train(dataset, model, seed=4, epochs=2)
    metrics = evaluate(model, dataset)
    assert metrics.confusion.total == len(split.test)


def test_load_split_requires_sidecar_split(tmp_path):
    dataset = tmp_path / "dataset.jsonl"
    dataset.write_text(json.dumps({"repr": "bytevec", "x": [1], "y": 0}) + "\n")
    with pytest.raises(DataError):
        load_split(dataset)


def test_arp_pipeline(tmp_path, capsys):
    out = run_pipeline(small_config(tmp_path, "arp"))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["format"] == 1
    assert list(manifest["stages"])[:4] == ["select", "gen", "real", "split"]
    assert "sessions-eval" in manifest["stages"]
    assert "filters" not in manifest["stages"]
    for name in ("plan.json", "field_trials.json", "metrics.json", "analysis/importance.json",
                 "analysis/coverage.json", "analysis/thresholds.json"):
        assert (out / name).exists(), name

    print_report(out)
    printed = capsys.readouterr().out
    assert "Scenario: arp  seed: 11" in printed


def test_pipeline_is_reproducible(tmp_path):
    """Same config and seed give byte-identical artifacts."""
    a = run_pipeline(small_config(tmp_path, "arp", "a"))
    b = run_pipeline(small_config(tmp_path, "arp", "b"))
    stages_a = json.loads((a / "manifest.json").read_text())["stages"]
    stages_b = json.loads((b / "manifest.json").read_text())["stages"]
    assert stages_a == stages_b


def test_dns_pipeline_exports_filters(tmp_path):
    config = small_config(tmp_path, "dns", iterations=12, plan_file=plan_file(tmp_path, "IP.ttl"), epochs=1)
    out = run_pipeline(config)
    stages = json.loads((out / "manifest.json").read_text())["stages"]
    assert "filters" in stages
    assert "sessions-eval" not in stages
    assert (out / "analysis" / "filters" / "filters.json").exists()
    assert not (out / "field_trials.json").exists()
    coverage = json.loads((out / "analysis" / "coverage.json").read_text())
    assert coverage["applicable"]


def test_pth_coverage_falls_back_to_value_subsets(tmp_path):
    """Type numbers carry no field provenance."""
    config = small_config(tmp_path, "pth", iterations=20, plan_file=plan_file(tmp_path, "AUTHP.flags"), epochs=1)
    out = run_pipeline(config)
    coverage = json.loads((out / "analysis" / "coverage.json").read_text())
    assert coverage["applicable"] is False
    subsets = json.loads((out / "analysis" / "value_subsets.json").read_text())
    assert [r["field"] for r in subsets] == ["AUTHP.flags"]


def test_pipeline_errors_name_their_stage(tmp_path):
    config = small_config(tmp_path, "arp", plan_file=plan_file(tmp_path, "DNS.id"))
    with pytest.raises(InvalidPlanForScenario) as exc:
        run_pipeline(config)
    assert exc.value.stage == "gen"


def test_report_needs_manifest(tmp_path):
    with pytest.raises(DataError):
        print_report(tmp_path)


def test_manifest_lists_stages_in_run_order(tmp_path):
    """manifest.json is not alphabetized: stages appear in the order they ran."""
    out = run_pipeline(small_config(tmp_path, "telnet"))
    listed = list(json.loads((out / "manifest.json").read_text())["stages"])
    assert listed == [s for s in STAGES if s in listed]
    assert listed[-1] == "sessions-eval"


def test_hijack_sessions_score_their_injected_packets(tmp_path, monkeypatch):
    """Client packets of a hijacked session do not dilute its score."""
    traces = tmp_path / "traces.jsonl"
    generate("telnet", MODES, 6, FuzzPlan(("IP.ttl",)), seed=2, path=traces)
    dataset = tmp_path / "dataset.jsonl"
    build_dataset(traces, dataset, 8, 4, 8, 0.8, seed=3)
    model = tmp_path / "model.json"
    train(dataset, model, seed=4, epochs=1)
    # flag exactly the injected packets
    monkeypatch.setattr(
        "fuzzlab.pipeline.predict_batch", lambda weights, samples: (None, [s.y for s in samples])
    )
    rows = sessions_eval(model, traces, dataset, thresholds=(0.3, 0.7))
    assert rows[0].sessions > 0
    assert [r.rate for r in rows] == [1.0, 1.0]
