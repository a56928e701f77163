"""Multi-label evaluation: micro/macro P/R/F1, per-label tables, label-count
breakdown and label-set confusion, aggregated over cross-validation folds.

All ratios with a zero denominator are defined as 0.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

LabelSets = Sequence[Iterable[str]]

BUCKETS = ("1", "2", ">=3")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LabelMetrics:
    label: str
    samples: int
    precision: float
    recall: float
    f1: float


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _check(gold: LabelSets, pred: LabelSets) -> None:
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} samples but pred has {len(pred)}")


def binarize(label_sets: LabelSets, classes: Sequence[str]) -> np.ndarray:
    idx = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(label_sets), len(classes)), dtype=bool)
    for row, labels in enumerate(label_sets):
        for label in labels:
            try:
                y[row, idx[label]] = True
            except KeyError:
                raise ValueError(f"label {label!r} not among the evaluated classes") from None
    return y


def _classes_of(gold: LabelSets, pred: LabelSets) -> list[str]:
    return sorted({label for labels in (*gold, *pred) for label in labels})


def _counts(gold: LabelSets, pred: LabelSets, classes: Sequence[str]):
    g, p = binarize(gold, classes), binarize(pred, classes)
    tp = (g & p).sum(axis=0)
    fp = (~g & p).sum(axis=0)
    fn = (g & ~p).sum(axis=0)
    return tp, fp, fn, g.sum(axis=0)


def prf_micro(gold: LabelSets, pred: LabelSets) -> PRF:
    """Micro average over every (sample, class) decision."""
    _check(gold, pred)
    tp, fp, fn, _ = _counts(gold, pred, _classes_of(gold, pred))
    p = _ratio(tp.sum(), tp.sum() + fp.sum())
    r = _ratio(tp.sum(), tp.sum() + fn.sum())
    return PRF(p, r, _f1(p, r))


def per_label_report(gold: LabelSets, pred: LabelSets, classes: Sequence[str]) -> list[LabelMetrics]:
    _check(gold, pred)
    tp, fp, fn, support = _counts(gold, pred, classes)
    out = []
    for i, c in enumerate(classes):
        p = _ratio(tp[i], tp[i] + fp[i])
        r = _ratio(tp[i], tp[i] + fn[i])
        out.append(LabelMetrics(c, int(support[i]), p, r, _f1(p, r)))
    return out


def prf_macro(
    gold: LabelSets, pred: LabelSets, classes: Sequence[str], exclude: Iterable[str] = ()
) -> PRF:
    """Unweighted mean of per-class P, R and F1.

    Every class in ``classes`` counts, including ones absent from both gold and
    pred (they contribute 0).  Macro-F1 is the mean of per-class F1, not the
    harmonic mean of macro-P and macro-R.
    """
    skip = set(exclude)
    rows = [m for m in per_label_report(gold, pred, classes) if m.label not in skip]
    if not rows:
        return PRF(0.0, 0.0, 0.0)
    return PRF(
        float(np.mean([m.precision for m in rows])),
        float(np.mean([m.recall for m in rows])),
        float(np.mean([m.f1 for m in rows])),
    )


def label_count_bucket(n: int) -> str:
    return ">=3" if n >= 3 else str(n)


def by_label_count_report(gold: LabelSets, pred: LabelSets) -> dict[str, tuple[int, PRF | None]]:
    """Micro P/R/F1 within groups of samples sharing a gold-set cardinality.

    Returns ``bucket -> (n_samples, PRF)``; an empty bucket maps to ``(0, None)``.
    """
    _check(gold, pred)
    groups: dict[str, tuple[list, list]] = {b: ([], []) for b in BUCKETS}
    for g, p in zip(gold, pred):
        g = set(g)
        if not g:
            continue
        bucket = groups[label_count_bucket(len(g))]
        bucket[0].append(g)
        bucket[1].append(set(p))
    return {
        b: (len(gs), prf_micro(gs, ps) if gs else None) for b, (gs, ps) in groups.items()
    }


def labelset_confusion(gold: LabelSets, pred: LabelSets) -> Counter:
    """Counts keyed by (gold label set, predicted label set) as frozensets."""
    _check(gold, pred)
    return Counter((frozenset(g), frozenset(p)) for g, p in zip(gold, pred))


# fold aggregation --------------------------------------------------------


@dataclass
class FoldMetrics:
    fold: int
    n_samples: int
    micro: PRF
    macro: PRF
    per_label: list[LabelMetrics]
    by_label_count: dict[str, tuple[int, PRF | None]]
    empty_predictions: int


def evaluate_fold(
    fold: int,
    gold: LabelSets,
    pred: LabelSets,
    classes: Sequence[str],
    macro_exclude: Iterable[str] = (),
) -> FoldMetrics:
    return FoldMetrics(
        fold=fold,
        n_samples=len(gold),
        micro=prf_micro(gold, pred),
        macro=prf_macro(gold, pred, classes, macro_exclude),
        per_label=per_label_report(gold, pred, classes),
        by_label_count=by_label_count_report(gold, pred),
        empty_predictions=sum(1 for p in pred if not set(p)),
    )


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    # population std over folds
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=0))


@dataclass
class EvaluationReport:
    classes: list[str]
    per_fold: list[FoldMetrics]
    aggregate: dict[str, tuple[float, float]] = field(default_factory=dict)
    per_label: list[dict] = field(default_factory=list)
    by_label_count: dict[str, dict] = field(default_factory=dict)
    labelset_confusion: Counter = field(default_factory=Counter)
    empty_predictions: int = 0

    @property
    def k(self) -> int:
        return len(self.per_fold)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "classes": self.classes,
            "aggregate": {m: {"mean": v[0], "std": v[1]} for m, v in self.aggregate.items()},
            "per_fold": [
                {
                    "fold": f.fold,
                    "n_samples": f.n_samples,
                    "micro": asdict(f.micro),
                    "macro": asdict(f.macro),
                    "empty_predictions": f.empty_predictions,
                }
                for f in self.per_fold
            ],
            "per_label": self.per_label,
            "by_label_count": self.by_label_count,
            "labelset_confusion": [
                {"gold": sorted(g), "pred": sorted(p), "count": n}
                for (g, p), n in sorted(
                    self.labelset_confusion.items(),
                    key=lambda kv: (-kv[1], sorted(kv[0][0]), sorted(kv[0][1])),
                )
            ],
            "empty_predictions": self.empty_predictions,
        }


def aggregate_folds(
    fold_outputs: Sequence[tuple[int, LabelSets, LabelSets]],
    classes: Sequence[str],
    macro_exclude: Iterable[str] = (),
) -> EvaluationReport:
    """Evaluate each fold and aggregate mean/std across folds.

    ``fold_outputs`` holds ``(fold, gold, pred)`` per fold.  Per-label sample
    counts and the confusion matrix are summed over folds; scores are fold
    means with population std.
    """
    macro_exclude = tuple(macro_exclude)
    folds = [evaluate_fold(f, g, p, classes, macro_exclude) for f, g, p in fold_outputs]
    if not folds:
        raise ValueError("no folds to aggregate")
    report = EvaluationReport(list(classes), folds)
    for avg in ("micro", "macro"):
        for part in ("precision", "recall", "f1"):
            report.aggregate[f"{avg}_{part}"] = _mean_std(
                [getattr(getattr(f, avg), part) for f in folds]
            )
    for i, c in enumerate(classes):
        rows = [f.per_label[i] for f in folds]
        f1_mean, f1_std = _mean_std([r.f1 for r in rows])
        report.per_label.append(
            {
                "label": c,
                "samples": sum(r.samples for r in rows),
                "f1": f1_mean,
                "f1_std": f1_std,
                "precision": _mean_std([r.precision for r in rows])[0],
                "recall": _mean_std([r.recall for r in rows])[0],
            }
        )
    for b in BUCKETS:
        present = [f.by_label_count[b] for f in folds if f.by_label_count[b][1] is not None]
        if not present:
            report.by_label_count[b] = {"samples": 0, "f1": None, "f1_std": None,
                                        "precision": None, "recall": None}
            continue
        f1_mean, f1_std = _mean_std([prf.f1 for _, prf in present])
        report.by_label_count[b] = {
            "samples": sum(n for n, _ in present),
            "f1": f1_mean,
            "f1_std": f1_std,
            "precision": _mean_std([prf.precision for _, prf in present])[0],
            "recall": _mean_std([prf.recall for _, prf in present])[0],
        }
    for _, g, p in fold_outputs:
        report.labelset_confusion.update(labelset_confusion(g, p))
    report.empty_predictions = sum(f.empty_predictions for f in folds)
    return report


# rendering ---------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.3f}"


def _setname(labels: Iterable[str], display) -> str:
    labels = sorted(labels)
    return "{" + ", ".join(display(x) for x in labels) + "}" if labels else "{}"


def render_markdown(
    report: EvaluationReport,
    title: str = "",
    confusion_floor: int = 1,
    display=lambda s: s[:1].upper() + s[1:],
) -> str:
    """Markdown tables: overall scores, per-label scores, label-set confusion."""
    a = report.aggregate
    lines = []
    if title:
        lines += [f"# {title}", ""]
    lines += [
        f"## Overall ({report.k}-fold mean, population std)",
        "",
        "| macro F1 (std) | macro P | macro R | micro F1 (std) | micro P | micro R |",
        "|---|---|---|---|---|---|",
        "| {:.3f} ±{:.3f} | {:.3f} | {:.3f} | {:.3f} ±{:.3f} | {:.3f} | {:.3f} |".format(
            a["macro_f1"][0], a["macro_f1"][1], a["macro_precision"][0], a["macro_recall"][0],
            a["micro_f1"][0], a["micro_f1"][1], a["micro_precision"][0], a["micro_recall"][0],
        ),
        "",
        f"Empty predictions: {report.empty_predictions}",
        "",
        "## Per label",
        "",
        "| Label | Samples | F1 (std) | P | R |",
        "|---|---|---|---|---|",
    ]
    for row in report.per_label:
        lines.append(
            f"| {display(row['label'])} | {row['samples']} | {row['f1']:.3f} ±{row['f1_std']:.3f} "
            f"| {row['precision']:.3f} | {row['recall']:.3f} |"
        )
    bucket_names = {"1": "1 label", "2": "2 labels", ">=3": "≥3 labels"}
    for b in BUCKETS:
        row = report.by_label_count[b]
        std = "" if row["f1_std"] is None else f" ±{row['f1_std']:.3f}"
        lines.append(
            f"| {bucket_names[b]} | {row['samples']} | {_fmt(row['f1'])}{std} "
            f"| {_fmt(row['precision'])} | {_fmt(row['recall'])} |"
        )

    gold_sets = Counter()
    for (g, _), n in report.labelset_confusion.items():
        gold_sets[g] += n
    rows = [g for g, n in gold_sets.most_common() if n >= confusion_floor]
    col_counts = Counter()
    for (g, p), n in report.labelset_confusion.items():
        if g in rows:
            col_counts[p] += n
    cols = [p for p, n in col_counts.most_common() if n >= confusion_floor]
    lines += [
        "",
        f"## Label-set confusion (gold rows, predicted columns, count >= {confusion_floor})",
        "",
        "| Gold \\ Pred | Samples | " + " | ".join(_setname(c, display) for c in cols) + " |",
        "|---|---|" + "---|" * len(cols),
    ]
    for g in rows:
        cells = [str(report.labelset_confusion.get((g, c), 0)) for c in cols]
        lines.append(f"| {_setname(g, display)} | {gold_sets[g]} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_report(report: EvaluationReport, out_dir: str | Path, title: str = "") -> None:
    """Write ``report.json``, ``report.md`` and one CSV per table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = report.to_json()
    (out_dir / "report.json").write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    (out_dir / "report.md").write_text(render_markdown(report, title), encoding="utf-8")

    with (out_dir / "overall.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std"])
        for m, (mean, std) in report.aggregate.items():
            w.writerow([m, f"{mean:.6f}", f"{std:.6f}"])
    with (out_dir / "per_label.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "samples", "f1", "f1_std", "precision", "recall"])
        for row in report.per_label:
            w.writerow([row[k] for k in ("label", "samples", "f1", "f1_std", "precision", "recall")])
        for b in BUCKETS:
            row = report.by_label_count[b]
            w.writerow([f"{b} labels", row["samples"], row["f1"], row["f1_std"],
                        row["precision"], row["recall"]])
    with (out_dir / "labelset_confusion.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gold", "pred", "count"])
        for cell in data["labelset_confusion"]:
            w.writerow(["|".join(cell["gold"]), "|".join(cell["pred"]), cell["count"]])

