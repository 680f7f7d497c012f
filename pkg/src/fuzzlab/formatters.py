"""Output formatters for different data formats."""

import csv
import json
from dataclasses import asdict
from io import StringIO
from typing import Optional, Protocol, Sequence

from .models import (
    CoverageReport,
    FieldTrial,
    GenerationSummary,
    ImportanceRow,
    Metrics,
    ThresholdRow,
    ValueSubsetRow,
)


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}%"


def _num(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


class FormatterProtocol(Protocol):
    """Protocol for report formatters."""

    def format_generation(self, summaries: Sequence[GenerationSummary]) -> str:
        """Format generation summaries."""
        ...

    def format_field_trials(self, trials: Sequence[FieldTrial]) -> str:
        """Format field selection trials."""
        ...

    def format_metrics(self, metrics: Metrics) -> str:
        """Format detection metrics."""
        ...

    def format_thresholds(self, rows: Sequence[ThresholdRow]) -> str:
        """Format session threshold sweep."""
        ...

    def format_importance(self, rows: Sequence[ImportanceRow]) -> str:
        """Format feature importance ranking."""
        ...

    def format_coverage(self, report: CoverageReport) -> str:
        """Format a coverage report."""
        ...

    def format_value_subsets(self, rows: Sequence[ValueSubsetRow]) -> str:
        """Format value subset comparison."""
        ...


class TableFormatter:
    """Format reports as aligned ASCII tables."""

    def format_generation(self, summaries: Sequence[GenerationSummary]) -> str:
        """Format generation summaries as table."""
        if not summaries:
            return "No sessions generated."
        lines = ["\n" + "=" * 64]
        lines.append(f"{'Scenario':<10} {'Mode':<10} {'Sessions':>9} {'Success':>9} {'Packets':>10} {'Rate':>10}")
        lines.append("-" * 64)
        for s in summaries:
            lines.append(
                f"{s.scenario:<10} {s.mode:<10} {s.sessions:>9} {s.successes:>9} "
                f"{s.packets:>10} {_pct(s.success_rate):>10}"
            )
        lines.append("=" * 64)
        return "\n".join(lines)

    def format_field_trials(self, trials: Sequence[FieldTrial]) -> str:
        """Format field selection trials as table."""
        if not trials:
            return "No candidate fields."
        lines = ["\n" + "=" * 64]
        lines.append(f"{'Field':<26} {'Trials':>8} {'Successes':>10} {'Rate':>8}  Result")
        lines.append("-" * 64)
        for t in trials:
            result = "accepted" if t.accepted else "rejected"
            lines.append(f"{t.field:<26} {t.trials:>8} {t.successes:>10} {t.rate:>8.3f}  {result}")
        lines.append("=" * 64)
        accepted = [t.field for t in trials if t.accepted]
        lines.append(f"Selected: {', '.join(accepted) if accepted else '(none)'}")
        return "\n".join(lines)

    def format_metrics(self, metrics: Metrics) -> str:
        """Format detection metrics as table."""
        c = metrics.confusion
        lines = ["\n" + "=" * 40]
        lines.append(f"{'':<16} {'pred benign':>11} {'pred malicious':>14}")
        lines.append(f"{'benign':<16} {c.tn:>11} {c.fp:>14}")
        lines.append(f"{'malicious':<16} {c.fn:>11} {c.tp:>14}")
        lines.append("-" * 40)
        for name in ("accuracy", "precision", "recall", "f1", "fpr_paper", "fpr_standard"):
            lines.append(f"{name:<16} {_num(getattr(metrics, name)):>23}")
        lines.append("=" * 40)
        return "\n".join(lines)

    def format_thresholds(self, rows: Sequence[ThresholdRow]) -> str:
        """Format session threshold sweep as table."""
        if not rows:
            return "No sessions evaluated."
        lines = ["\n" + "=" * 48]
        lines.append(f"{'Threshold':>10} {'Sessions':>10} {'Detected':>10} {'Rate':>12}")
        lines.append("-" * 48)
        for r in rows:
            lines.append(f"{r.threshold:>10.2f} {r.sessions:>10} {r.detected:>10} {_pct(r.rate):>12}")
        lines.append("=" * 48)
        return "\n".join(lines)

    def format_importance(self, rows: Sequence[ImportanceRow]) -> str:
        """Format feature importance ranking as table."""
        if not rows:
            return "No features ranked."
        lines = ["\n" + "=" * 80]
        lines.append(f"{'Rank':>4} {'Feature':>8} {'Importance':>11} {'Permuted F1':>12}  Fields")
        lines.append("-" * 80)
        for rank, r in enumerate(rows, start=1):
            fields = ", ".join(r.fields) if r.fields else "-"
            lines.append(f"{rank:>4} {r.feature:>8} {r.importance:>11.4f} {r.permuted_f1:>12.4f}  {fields}")
        lines.append("=" * 80)
        lines.append(f"Baseline F1: {rows[0].baseline_f1:.4f} ({rows[0].repeats} repeats)")
        return "\n".join(lines)

    def format_coverage(self, report: CoverageReport) -> str:
        """Format a coverage report as table."""
        lines = ["\n" + "=" * 52]
        lines.append(f"{'Field':<26} {'Covered':>12} {'Uncovered':>12}")
        lines.append("-" * 52)
        for f in report.per_field:
            lines.append(f"{f.field:<26} {f.covered:>12} {f.uncovered:>12}")
        lines.append("=" * 52)
        lines.append(f"Coverage rate: {_pct(report.rate)} (x={report.x}, y={report.y})")
        return "\n".join(lines)

    def format_value_subsets(self, rows: Sequence[ValueSubsetRow]) -> str:
        """Format value subset comparison as table."""
        if not rows:
            return "No fields compared."
        lines = ["\n" + "=" * 64]
        lines.append(f"{'Field':<26} {'Real':>8} {'Fuzzed':>8} {'Missing':>8}  Subset")
        lines.append("-" * 64)
        for r in rows:
            lines.append(
                f"{r.field:<26} {r.real_values:>8} {r.fuzzed_values:>8} {r.missing:>8}  "
                f"{'yes' if r.subset else 'no'}"
            )
        lines.append("=" * 64)
        return "\n".join(lines)


class JsonFormatter:
    """Format reports as JSON."""

    def format_generation(self, summaries: Sequence[GenerationSummary]) -> str:
        """Format generation summaries as JSON."""
        return json.dumps([asdict(s) for s in summaries], indent=2)

    def format_field_trials(self, trials: Sequence[FieldTrial]) -> str:
        """Format field selection trials as JSON."""
        return json.dumps([asdict(t) for t in trials], indent=2)

    def format_metrics(self, metrics: Metrics) -> str:
        """Format detection metrics as JSON."""
        return json.dumps(asdict(metrics), indent=2)

    def format_thresholds(self, rows: Sequence[ThresholdRow]) -> str:
        """Format session threshold sweep as JSON."""
        return json.dumps([asdict(r) for r in rows], indent=2)

    def format_importance(self, rows: Sequence[ImportanceRow]) -> str:
        """Format feature importance ranking as JSON."""
        return json.dumps([asdict(r) for r in rows], indent=2)

    def format_coverage(self, report: CoverageReport) -> str:
        """Format a coverage report as JSON."""
        return json.dumps(asdict(report), indent=2)

    def format_value_subsets(self, rows: Sequence[ValueSubsetRow]) -> str:
        """Format value subset comparison as JSON."""
        return json.dumps([asdict(r) for r in rows], indent=2)


def _csv(header: list[str], rows: list[list]) -> str:
    output = StringIO()
    writer = csv.writer(output)
    writer.writerow(header)
    writer.writerows(rows)
    return output.getvalue()


class CsvFormatter:
    """Format reports as CSV."""

    def format_generation(self, summaries: Sequence[GenerationSummary]) -> str:
        """Format generation summaries as CSV."""
        if not summaries:
            return ""
        return _csv(
            ["scenario", "mode", "sessions", "successes", "packets", "success_rate"],
            [[s.scenario, s.mode, s.sessions, s.successes, s.packets, s.success_rate] for s in summaries],
        )

    def format_field_trials(self, trials: Sequence[FieldTrial]) -> str:
        """Format field selection trials as CSV."""
        if not trials:
            return ""
        return _csv(
            ["field", "trials", "successes", "rate", "accepted"],
            [[t.field, t.trials, t.successes, t.rate, t.accepted] for t in trials],
        )

    def format_metrics(self, metrics: Metrics) -> str:
        """Format detection metrics as CSV."""
        c = metrics.confusion
        header = ["tn", "fp", "fn", "tp", "accuracy", "precision", "recall", "f1", "fpr_paper", "fpr_standard"]
        values = [c.tn, c.fp, c.fn, c.tp]
        values += [getattr(metrics, name) for name in header[4:]]
        return _csv(header, [["" if v is None else v for v in values]])

    def format_thresholds(self, rows: Sequence[ThresholdRow]) -> str:
        """Format session threshold sweep as CSV."""
        if not rows:
            return ""
        return _csv(
            ["threshold", "sessions", "detected", "rate"],
            [[r.threshold, r.sessions, r.detected, r.rate] for r in rows],
        )

    def format_importance(self, rows: Sequence[ImportanceRow]) -> str:
        """Format feature importance ranking as CSV."""
        if not rows:
            return ""
        return _csv(
            ["feature", "baseline_f1", "permuted_f1", "importance", "fields"],
            [[r.feature, r.baseline_f1, r.permuted_f1, r.importance, ";".join(r.fields)] for r in rows],
        )

    def format_coverage(self, report: CoverageReport) -> str:
        """Format a coverage report as CSV."""
        rows = [[f.field, f.covered, f.uncovered] for f in report.per_field]
        rows.append(["TOTAL", report.x, report.y])
        return _csv(["field", "covered", "uncovered"], rows)

    def format_value_subsets(self, rows: Sequence[ValueSubsetRow]) -> str:
        """Format value subset comparison as CSV."""
        if not rows:
            return ""
        return _csv(
            ["field", "real_values", "fuzzed_values", "missing", "subset"],
            [[r.field, r.real_values, r.fuzzed_values, r.missing, r.subset] for r in rows],
        )


def get_formatter(format_type: str) -> FormatterProtocol:
    """Get formatter instance by type.

    Args:
        format_type: One of 'table', 'json', or 'csv'

    Returns:
        Formatter instance. Defaults to TableFormatter for unknown types.
    """
    formatters = {
        "table": TableFormatter(),
        "json": JsonFormatter(),
        "csv": CsvFormatter(),
    }
    return formatters.get(format_type.lower(), TableFormatter())
