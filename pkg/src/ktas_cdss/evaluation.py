"""Evaluation harness: case loading, KTAS confusion matrices, triage metrics and score means.

All rates and means are :class:`fractions.Fraction`; decimals appear only in
emitted tables (4 places).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    FIVE_POINT_CATEGORIES,
    FIVE_POINT_VALUES,
    ONE_POINT_CATEGORIES,
    ONE_POINT_VALUES,
    CdssError,
    KtasLevel,
    KtasPrediction,
    PatientCase,
    RunMode,
    Urgency,
    compare_urgency,
)
from .records import CaseRunRecord

EXPERT_LEVELS = (1, 2, 3, 4, 5)


class SchemaError(CdssError, ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateId(SchemaError):
    pass


class EmptyDistribution(CdssError, ValueError):
    pass


class CaseSetMismatch(CdssError, ValueError):
    pass


def load_cases(path: str | Path) -> list[PatientCase]:
    """Read a JSON-lines case file; blank lines are skipped.

    Raises:
        SchemaError: malformed JSON or invalid fields, with the 1-based line number.
        DuplicateId: a ``case_id`` seen twice.
    """
    cases: list[PatientCase] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(data, dict):
                raise SchemaError("each line must be a JSON object", lineno)
            for key in ("case_id", "narrative"):
                if key not in data:
                    raise SchemaError(f"missing {key}", lineno)
            try:
                case = PatientCase.from_json(data)
            except (ValueError, TypeError) as exc:
                raise SchemaError(str(exc), lineno) from exc
            if case.case_id in seen:
                raise DuplicateId(f"duplicate case_id {case.case_id!r}", lineno)
            seen.add(case.case_id)
            cases.append(case)
    return cases


def dump_cases(cases: Iterable[PatientCase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# confusion matrix


@dataclass(frozen=True)
class ConfusionMatrix:
    row_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    columns: tuple[int, ...] = EXPERT_LEVELS

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def cell(self, row: str | int | KtasPrediction, expert: int | KtasLevel) -> int:
        label = row.label() if isinstance(row, KtasPrediction) else str(row)
        if label not in self.row_labels:
            return 0
        return self.counts[self.row_labels.index(label)][self.columns.index(int(expert))]

    def row_total(self, row: str) -> int:
        return sum(self.counts[self.row_labels.index(row)]) if row in self.row_labels else 0

    def to_json(self) -> dict[str, Any]:
        return {"columns": list(self.columns),
                "rows": {label: list(row) for label, row in zip(self.row_labels, self.counts)}}

    def to_markdown(self) -> str:
        head = "| Prediction \\ Expert | " + " | ".join(map(str, self.columns)) + " |"
        sep = "|---|" + "---|" * len(self.columns)
        body = [f"| {label} | " + " | ".join(map(str, row)) + " |"
                for label, row in zip(self.row_labels, self.counts)]
        return "\n".join([head, sep, *body])


_BASE_ROWS = tuple(KtasPrediction.from_label(str(i)) for i in EXPERT_LEVELS)


def confusion(records: Iterable[tuple[KtasPrediction, KtasLevel | int]]) -> ConfusionMatrix:
    """Count (prediction label, expert level) cells.

    Rows are exact levels 1..5, then any observed range labels and
    "Not applicable", ordered as they sort between exact levels.
    """
    pairs = [(p, int(e)) for p, e in records]
    rows = {p.label(): p for p in _BASE_ROWS}
    for p, _ in pairs:
        rows.setdefault(p.label(), p)
    ordered = sorted(rows.values(), key=lambda p: p.sort_key())
    labels = tuple(p.label() for p in ordered)
    grid = [[0] * len(EXPERT_LEVELS) for _ in labels]
    for p, e in pairs:
        grid[labels.index(p.label())][EXPERT_LEVELS.index(e)] += 1
    return ConfusionMatrix(labels, tuple(tuple(r) for r in grid))


# ---------------------------------------------------------------------------
# triage metrics


def _rate(count: int, n: int) -> Fraction:
    return Fraction(count, n) if n else Fraction(0)


def ratio_text(value: Fraction, n: int) -> str:
    """Render ``value`` over denominator ``n`` when exact (``30/42``), else reduced."""
    scaled = value * n
    if n and scaled.denominator == 1:
        return f"{scaled.numerator}/{n}"
    return str(value)


@dataclass(frozen=True)
class TriageMetrics:
    n: int
    exact_match: int
    over_triage: int
    under_triage: int
    indecisive: int

    def __post_init__(self) -> None:
        if self.exact_match + self.over_triage + self.under_triage + self.indecisive != self.n:
            raise ValueError("metric counts must partition n")

    @property
    def accuracy(self) -> Fraction:
        return _rate(self.exact_match, self.n)

    @property
    def over_rate(self) -> Fraction:
        return _rate(self.over_triage, self.n)

    @property
    def under_rate(self) -> Fraction:
        return _rate(self.under_triage, self.n)

    @property
    def decisiveness(self) -> Fraction:
        """Fraction of exact single-level predictions (the coherence proxy)."""
        return _rate(self.n - self.indecisive, self.n)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "n": self.n, "exact_match": self.exact_match, "over_triage": self.over_triage,
            "under_triage": self.under_triage, "indecisive": self.indecisive,
        }
        for name in ("accuracy", "over_rate", "under_rate", "decisiveness"):
            value = getattr(self, name)
            out[name] = {"ratio": ratio_text(value, self.n), "decimal": f"{float(value):.4f}"}
        return out


def triage_metrics(records: Iterable[tuple[KtasPrediction, KtasLevel | int]]) -> TriageMetrics:
    counts = {u: 0 for u in Urgency}
    n = 0
    for pred, expert in records:
        counts[compare_urgency(pred, expert)] += 1
        n += 1
    return TriageMetrics(n, counts[Urgency.EQUAL], counts[Urgency.MORE_URGENT],
                         counts[Urgency.LESS_URGENT], counts[Urgency.INCOMPARABLE])


# ---------------------------------------------------------------------------
# score summaries

FIVE_POINT = "five_point"
ONE_POINT = "one_point"
_SCALES = {
    FIVE_POINT: (FIVE_POINT_CATEGORIES, tuple(Fraction(v) for v in FIVE_POINT_VALUES)),
    ONE_POINT: (ONE_POINT_CATEGORIES, tuple(Fraction(str(v)) for v in ONE_POINT_VALUES)),
}


def _score_key(value: Any) -> Fraction:
    return Fraction(str(value))


def _fmt_score(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else str(float(value))


@dataclass(frozen=True)
class ScoreSummary:
    category: str
    scale: str
    distribution: tuple[tuple[Fraction, int], ...]
    mean: Fraction

    @property
    def n(self) -> int:
        return sum(c for _, c in self.distribution)

    def count(self, value: Any) -> int:
        key = _score_key(value)
        return next((c for v, c in self.distribution if v == key), 0)

    def to_json(self) -> dict[str, Any]:
        return {
            "scale": self.scale,
            "n": self.n,
            "distribution": {_fmt_score(v): c for v, c in self.distribution},
            "mean": {"ratio": ratio_text(self.mean, self.n), "decimal": f"{float(self.mean):.4f}"},
        }


def mean_scores(distributions: Mapping[str, Mapping[Any, int]],
                scale: str) -> dict[str, ScoreSummary]:
    """Exact mean per category from ``{category: {score value: count}}``.

    Raises:
        EmptyDistribution: a category with no ratings.
        ValueError: unknown scale, category or score value.
    """
    if scale not in _SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    categories, allowed = _SCALES[scale]
    out = {}
    for category, dist in distributions.items():
        if category not in categories:
            raise ValueError(f"{category!r} is not a {scale} category")
        counts = {v: 0 for v in allowed}
        for value, count in dist.items():
            key = _score_key(value)
            if key not in counts:
                raise ValueError(f"score {value!r} not allowed on the {scale} scale")
            if count < 0:
                raise ValueError("counts must be non-negative")
            counts[key] += count
        n = sum(counts.values())
        if n == 0:
            raise EmptyDistribution(f"no ratings for {category}")
        mean = sum((v * c for v, c in counts.items()), Fraction(0)) / n
        out[category] = ScoreSummary(category, scale, tuple(counts.items()), mean)
    return out


def score_distributions(cases: Iterable[PatientCase], mode: RunMode
                        ) -> dict[str, dict[str, dict[Fraction, int]]]:
    """Tally annotation scores per scale and category for one system mode."""
    out: dict[str, dict[str, dict[Fraction, int]]] = {FIVE_POINT: {}, ONE_POINT: {}}
    for case in cases:
        if case.annotation is None:
            continue
        five, one = case.annotation.scores_for(mode)
        for scale, scores in ((FIVE_POINT, five), (ONE_POINT, one)):
            for category, value in scores.items():
                bucket = out[scale].setdefault(category, {})
                key = _score_key(value)
                bucket[key] = bucket.get(key, 0) + 1
    return out


def load_score_tables(path: str | Path) -> dict[str, dict[str, dict[str, dict[Any, int]]]]:
    """Read aggregate score distributions: ``{mode: {scale: {category: {value: count}}}}``."""
    data = json.loads(Path(path).read_text("utf-8"))
    return {mode: data[mode] for mode in ("multi", "single") if mode in data}


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class EvalReport:
    mode: RunMode
    case_ids: tuple[str, ...]
    confusion: ConfusionMatrix
    metrics: TriageMetrics
    five_point: Mapping[str, ScoreSummary] = field(default_factory=dict)
    one_point: Mapping[str, ScoreSummary] = field(default_factory=dict)
    failed_cases: tuple[str, ...] = ()
    unlabeled_cases: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "n_cases": len(self.case_ids),
            "case_ids": list(self.case_ids),
            "failed_cases": list(self.failed_cases),
            "unlabeled_cases": list(self.unlabeled_cases),
            "confusion": self.confusion.to_json(),
            "triage": self.metrics.to_json(),
            "scores": {
                FIVE_POINT: {k: v.to_json() for k, v in self.five_point.items()},
                ONE_POINT: {k: v.to_json() for k, v in self.one_point.items()},
            },
        }

    def to_markdown(self) -> str:
        m = self.metrics
        parts = [
            f"## KTAS confusion matrix ({self.mode.value}-agent)",
            "",
            self.confusion.to_markdown(),
            "",
            "## Triage metrics",
            "",
            "| Metric | Count | Ratio | Decimal |",
            "|---|---|---|---|",
        ]
        for label, count, value in (
            ("Exact match (accuracy)", m.exact_match, m.accuracy),
            ("Over-triage", m.over_triage, m.over_rate),
            ("Under-triage", m.under_triage, m.under_rate),
            ("Decisiveness (coherence proxy)", m.n - m.indecisive, m.decisiveness),
        ):
            parts.append(f"| {label} | {count} | {ratio_text(value, m.n)} | {float(value):.4f} |")
        parts.append(f"| Indecisive (range / not applicable) | {m.indecisive} | | |")
        for title, summaries in (("5-point scale", self.five_point), ("1-point scale", self.one_point)):
            if not summaries:
                continue
            values = [v for v, _ in next(iter(summaries.values())).distribution]
            parts += ["", f"## {title}", "",
                      "| Category | " + " | ".join(_fmt_score(v) for v in values) + " | Mean |",
                      "|---|" + "---|" * (len(values) + 1)]
            for cat, s in summaries.items():
                parts.append(f"| {cat} | " + " | ".join(str(c) for _, c in s.distribution)
                             + f" | {ratio_text(s.mean, s.n)} ({float(s.mean):.4f}) |")
        return "\n".join(parts) + "\n"

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for label, counts in zip(self.confusion.row_labels, self.confusion.counts):
            for col, c in zip(self.confusion.columns, counts):
                rows.append(["confusion", self.mode.value, label, str(col), str(c)])
        for key, value in self.metrics.to_json().items():
            text = value["ratio"] if isinstance(value, dict) else str(value)
            rows.append(["triage", self.mode.value, key, "", text])
        for summaries in (self.five_point, self.one_point):
            for cat, s in summaries.items():
                for v, c in s.distribution:
                    rows.append([s.scale, self.mode.value, cat, _fmt_score(v), str(c)])
                rows.append([s.scale, self.mode.value, cat, "mean", ratio_text(s.mean, s.n)])
        return rows


def evaluate(records: Sequence[CaseRunRecord], cases: Sequence[PatientCase],
             mode: RunMode | None = None,
             score_tables: Mapping[str, Mapping[str, Mapping[Any, int]]] | None = None
             ) -> EvalReport:
    """Score completed runs against case annotations.

    Errored runs and cases without an expert KTAS level are left out of the
    triage metrics and listed separately. Score summaries come from
    ``score_tables`` (``{scale: {category: {value: count}}}``) when given,
    otherwise from the case annotations.
    """
    by_id = {c.case_id: c for c in cases}
    if mode is None:
        mode = records[0].mode if records else RunMode.MULTI_AGENT
    pairs, failed, unlabeled = [], [], []
    for rec in records:
        case = by_id.get(rec.case_id)
        if case is None:
            raise CaseSetMismatch(f"record for unknown case {rec.case_id!r}")
        if rec.error is not None:
            failed.append(rec.case_id)
            continue
        if case.annotation is None or case.annotation.ktas_level is None:
            unlabeled.append(rec.case_id)
            continue
        pairs.append((rec.ktas_prediction(), case.annotation.ktas_level))

    if score_tables is None:
        score_tables = score_distributions(cases, mode)
    five = {k: v for k, v in score_tables.get(FIVE_POINT, {}).items() if sum(v.values())}
    one = {k: v for k, v in score_tables.get(ONE_POINT, {}).items() if sum(v.values())}
    return EvalReport(
        mode=mode,
        case_ids=tuple(r.case_id for r in records),
        confusion=confusion(pairs),
        metrics=triage_metrics(pairs),
        five_point=mean_scores(five, FIVE_POINT),
        one_point=mean_scores(one, ONE_POINT),
        failed_cases=tuple(failed),
        unlabeled_cases=tuple(unlabeled),
    )


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    multi: Fraction
    single: Fraction
    n: int

    @property
    def delta(self) -> Fraction:
        return self.multi - self.single


@dataclass(frozen=True)
class ComparisonReport:
    """Multi-agent minus single-agent, per metric; positive favours multi-agent
    except for the over-/under-triage rates, where lower is better."""

    rows: tuple[ComparisonRow, ...]

    def row(self, metric: str) -> ComparisonRow:
        return next(r for r in self.rows if r.metric == metric)

    def to_json(self) -> dict[str, Any]:
        return {r.metric: {"multi": ratio_text(r.multi, r.n), "single": ratio_text(r.single, r.n),
                           "delta": ratio_text(r.delta, r.n),
                           "delta_decimal": f"{float(r.delta):.4f}"} for r in self.rows}

    def to_markdown(self) -> str:
        lines = ["## Multi-agent vs single-agent (delta = multi - single)", "",
                 "| Metric | Multi-agent | Single-agent | Delta | Delta (decimal) |",
                 "|---|---|---|---|---|"]
        for r in self.rows:
            lines.append(f"| {r.metric} | {ratio_text(r.multi, r.n)} | {ratio_text(r.single, r.n)}"
                         f" | {ratio_text(r.delta, r.n)} | {float(r.delta):+.4f} |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "multi", "single", "delta", "delta_decimal"])
        for r in self.rows:
            w.writerow([r.metric, ratio_text(r.multi, r.n), ratio_text(r.single, r.n),
                        ratio_text(r.delta, r.n), f"{float(r.delta):.4f}"])
        return buf.getvalue()


def compare_modes(multi: EvalReport, single: EvalReport) -> ComparisonReport:
    """Per-metric deltas between the two modes over the same case set.

    Raises:
        CaseSetMismatch: the reports cover different case ids.
    """
    if set(multi.case_ids) != set(single.case_ids):
        raise CaseSetMismatch("multi- and single-agent reports cover different cases")
    mm, sm = multi.metrics, single.metrics
    n = max(mm.n, sm.n)
    rows = [
        ComparisonRow("accuracy", mm.accuracy, sm.accuracy, n),
        ComparisonRow("decisiveness", mm.decisiveness, sm.decisiveness, n),
        ComparisonRow("over_triage_rate", mm.over_rate, sm.over_rate, n),
        ComparisonRow("under_triage_rate", mm.under_rate, sm.under_rate, n),
    ]
    for a, b in ((multi.five_point, single.five_point), (multi.one_point, single.one_point)):
        for cat in a:
            if cat in b:
                rows.append(ComparisonRow(f"mean_{cat}", a[cat].mean, b[cat].mean,
                                          max(a[cat].n, b[cat].n)))
    return ComparisonReport(tuple(rows))


# ---------------------------------------------------------------------------
# emission


def write_eval_outputs(report: EvalReport, run_dir: str | Path, *, figures: bool = True) -> dict[str, Path]:
    """Write ``metrics.json``, ``tables.md``, ``tables.csv`` and figures into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": run_dir / "metrics.json",
        "tables_md": run_dir / "tables.md",
        "tables_csv": run_dir / "tables.csv",
    }
    paths["metrics"].write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    paths["tables_md"].write_text(report.to_markdown())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "mode", "row", "column", "value"])
    w.writerows(report.csv_rows())
    paths["tables_csv"].write_text(buf.getvalue())
    if figures:
        from .figures import plot_confusion, plot_scores

        paths["confusion_png"] = plot_confusion(report.confusion, run_dir / "confusion.png",
                                                title=f"KTAS confusion ({report.mode.value}-agent)")
        if report.five_point or report.one_point:
            paths["scores_png"] = plot_scores(report, run_dir / "scores.png")
    return paths


def write_comparison_outputs(comparison: ComparisonReport, multi: EvalReport, single: EvalReport,
                             run_dir: str | Path, *, figures: bool = True) -> dict[str, Path]:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "comparison_md": run_dir / "comparison.md",
        "comparison_csv": run_dir / "comparison.csv",
        "metrics": run_dir / "metrics.json",
    }
    paths["comparison_md"].write_text(
        multi.to_markdown() + "\n" + single.to_markdown() + "\n" + comparison.to_markdown())
    paths["comparison_csv"].write_text(comparison.to_csv())
    paths["metrics"].write_text(json.dumps(
        {"multi": multi.to_json(), "single": single.to_json(), "comparison": comparison.to_json()},
        indent=2, sort_keys=True) + "\n")
    if figures:
        from .figures import plot_comparison

        paths["comparison_png"] = plot_comparison(multi, single, run_dir / "comparison.png")
    return paths
