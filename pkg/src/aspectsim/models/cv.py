"""k-fold cross-validation over a stratified fold assignment."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..dataset import FoldAssignment, SampleSet
from ..metrics import EvaluationReport, aggregate_folds
from .config import ModelConfig
from .training import PredictionRecord, predict, train

logger = logging.getLogger(__name__)


@dataclass
class FoldFailure:
    fold: int
    error: str


@dataclass
class CrossValidationResult:
    folds: FoldAssignment
    predictions: dict[int, list[PredictionRecord]] = field(default_factory=dict)
    failures: list[FoldFailure] = field(default_factory=list)

    @property
    def completed(self) -> list[int]:
        return sorted(self.predictions)


def predictions_path(output_dir: str | Path, fold: int) -> Path:
    return Path(output_dir) / f"fold_{fold}" / "predictions.jsonl"


def write_predictions(path: str | Path, records, samples: SampleSet, gold=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for i, r in enumerate(records):
            g = gold[i] if gold is not None else None
            fh.write(json.dumps(r.to_json(samples.vocab, g), ensure_ascii=False) + "\n")
    tmp.replace(path)


def read_predictions(path: str | Path, samples: SampleSet) -> list[PredictionRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [PredictionRecord.from_json(json.loads(x), samples.vocab) for x in lines if x]


def run_cross_validation(
    samples: SampleSet,
    folds: FoldAssignment,
    config: ModelConfig,
    output_dir: str | Path | None = None,
    resume: bool = False,
    train_fn=train,
    only_folds=None,
) -> CrossValidationResult:
    """Train on k-1 folds and predict the held-out one, for every fold.

    A fold whose training raises is recorded as a failure and the remaining
    folds still run.  With ``resume``, folds that already have a predictions
    file under ``output_dir`` are loaded instead of retrained.
    """
    if len(folds.assignment) != len(samples):
        raise ValueError(f"fold assignment covers {len(folds.assignment)} pairs, dataset has {len(samples)}")
    result = CrossValidationResult(folds)
    for fold in range(folds.k) if only_folds is None else only_folds:
        test_idx = folds.test_indices(fold)
        test = samples.subset(test_idx)
        path = predictions_path(output_dir, fold) if output_dir is not None else None
        if resume and path is not None and path.exists():
            logger.info("fold %d: reusing %s", fold, path)
            result.predictions[fold] = read_predictions(path, samples)
            continue
        train_set = samples.subset(folds.train_indices(fold))
        try:
            model = train_fn(config, train_set.pairs, samples.papers, samples.vocab)
            preds = predict(model, test.pairs, samples.papers)
        except Exception as exc:  # noqa: BLE001 - one bad fold must not sink the run
            logger.warning("fold %d failed: %s: %s", fold, type(exc).__name__, exc)
            result.failures.append(FoldFailure(fold, f"{type(exc).__name__}: {exc}"))
            continue
        if path is not None:
            write_predictions(path, preds, samples, [p.labels for p in test.pairs])
        result.predictions[fold] = preds
        logger.info("fold %d: %d predictions", fold, len(preds))
    return result


def evaluate_cross_validation(
    samples: SampleSet, result: CrossValidationResult, macro_exclude=()
) -> EvaluationReport:
    """Aggregate metrics over the completed folds."""
    outputs = []
    for fold in result.completed:
        idx = result.folds.test_indices(fold)
        preds = result.predictions[fold]
        if len(preds) != len(idx):
            raise ValueError(f"fold {fold} has {len(preds)} predictions for {len(idx)} pairs")
        gold = [samples.pairs[i].labels for i in idx]
        outputs.append((fold, gold, [p.labels for p in preds]))
    return aggregate_folds(outputs, samples.vocab.classes, macro_exclude)
